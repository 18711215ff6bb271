#include "mbd/dataset.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mbd/image_io.hpp"
#include "mbd/parallel.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace mbd {

namespace {

std::string sample_prefix(int id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", id);
  return buf;
}

SampleFiles files_for(int id, std::uint64_t seed) {
  const std::string p = sample_prefix(id);
  SampleFiles f;
  f.id = id;
  f.seed = seed;
  f.img_l = p + "_img_l.ppm";
  f.img_r1 = p + "_img_r1.ppm";
  f.img_r2 = p + "_img_r2.ppm";
  f.disp_small = p + "_disp_small.pfm";
  f.disp_wide = p + "_disp_wide.pfm";
  f.occl_wide = p + "_occl_wide.pgm";
  f.depth = p + "_depth.pfm";
  return f;
}

}  // namespace

std::vector<Sample> generate_samples(const CameraRig& rig, int count, std::uint64_t seed,
                                     int max_layers, TextureKind kind, float noise_sigma) {
  rig.validate();
  if (count < 0) throw DatasetError("sample count must be >= 0");
  if (noise_sigma < 0) throw DatasetError("noise_sigma must be >= 0");
  std::vector<Sample> out(static_cast<std::size_t>(count));
  parallel_for(count, [&](int i) {
    Sample& s = out[static_cast<std::size_t>(i)];
    s.id = i;
    s.seed = hash_mix(seed, kStreamScene, static_cast<std::uint64_t>(i));
    SceneSpec spec = random_scene(rig, s.seed, max_layers, kind);
    spec.noise_sigma = noise_sigma;
    s.data = generate_scene(rig, spec, s.seed);
  });
  return out;
}

Manifest write_dataset(const CameraRig& rig, const std::vector<Sample>& samples,
                       const std::string& dir) {
  rig.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DatasetError("cannot create dataset directory " + dir + ": " + ec.message());

  Manifest man;
  man.rig = rig;
  man.samples.reserve(samples.size());

  json jsamples = json::array();
  for (const Sample& s : samples) {
    const SampleFiles f = files_for(s.id, s.seed);
    const fs::path base(dir);
    write_ppm((base / f.img_l).string(), s.data.img_l);
    write_ppm((base / f.img_r1).string(), s.data.img_r1);
    write_ppm((base / f.img_r2).string(), s.data.img_r2);
    write_pfm((base / f.disp_small).string(), s.data.gt_disp_small);
    write_pfm((base / f.disp_wide).string(), s.data.gt_disp_wide);
    write_pgm((base / f.occl_wide).string(), s.data.gt_occl_wide);
    write_pfm((base / f.depth).string(), s.data.gt_depth);
    jsamples.push_back({{"id", f.id},
                        {"seed", f.seed},
                        {"img_l", f.img_l},
                        {"img_r1", f.img_r1},
                        {"img_r2", f.img_r2},
                        {"disp_small", f.disp_small},
                        {"disp_wide", f.disp_wide},
                        {"occl_wide", f.occl_wide},
                        {"depth", f.depth}});
    man.samples.push_back(f);
  }

  const json j = {{"version", man.version},
                  {"focal_px", rig.focal_px},
                  {"b_small", rig.baseline_small_m},
                  {"b_wide", rig.baseline_wide_m},
                  {"width", rig.width},
                  {"height", rig.height},
                  {"samples", jsamples}};
  std::ofstream out(fs::path(dir) / "manifest.json", std::ios::binary);
  out << j.dump(2) << '\n';
  if (!out) throw DatasetError("failed writing manifest.json in " + dir);
  return man;
}

Manifest read_manifest(const std::string& dir) {
  const fs::path path = fs::path(dir) / "manifest.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DatasetError(path.string() + ": " + e.what());
  }

  Manifest man;
  try {
    man.version = j.at("version").get<int>();
    if (man.version != 1) {
      throw DatasetError("unsupported manifest version " + std::to_string(man.version));
    }
    man.rig.focal_px = j.at("focal_px").get<float>();
    man.rig.baseline_small_m = j.at("b_small").get<float>();
    man.rig.baseline_wide_m = j.at("b_wide").get<float>();
    man.rig.width = j.at("width").get<int>();
    man.rig.height = j.at("height").get<int>();
    for (const json& js : j.at("samples")) {
      SampleFiles f;
      f.id = js.at("id").get<int>();
      f.seed = js.at("seed").get<std::uint64_t>();
      f.img_l = js.at("img_l").get<std::string>();
      f.img_r1 = js.at("img_r1").get<std::string>();
      f.img_r2 = js.at("img_r2").get<std::string>();
      f.disp_small = js.at("disp_small").get<std::string>();
      f.disp_wide = js.at("disp_wide").get<std::string>();
      f.occl_wide = js.at("occl_wide").get<std::string>();
      f.depth = js.at("depth").get<std::string>();
      man.samples.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw DatasetError(path.string() + ": " + e.what());
  }
  man.rig.validate();
  return man;
}

namespace {

Tensor load_map(const fs::path& dir, const std::string& name, int id, const CameraRig& rig,
                Tensor (*reader)(const std::string&)) {
  Tensor t;
  try {
    t = reader((dir / name).string());
  } catch (const Error& e) {
    throw DatasetError("sample " + std::to_string(id) + ": " + e.what());
  }
  const auto& sh = t.shape();
  if (sh[sh.size() - 2] != rig.height || sh[sh.size() - 1] != rig.width) {
    throw DatasetError("sample " + std::to_string(id) + ": " + name + " is " +
                       std::to_string(sh[sh.size() - 1]) + "x" + std::to_string(sh[sh.size() - 2]) +
                       ", manifest says " + std::to_string(rig.width) + "x" +
                       std::to_string(rig.height));
  }
  return t;
}

}  // namespace

Dataset read_dataset(const std::string& dir) {
  const Manifest man = read_manifest(dir);
  const fs::path base(dir);

  Dataset ds;
  ds.rig = man.rig;
  ds.samples.resize(man.samples.size());
  // Parallel across samples, like generation; file handles are per-task.
  parallel_for(static_cast<int>(man.samples.size()), [&](int i) {
    const SampleFiles& f = man.samples[static_cast<std::size_t>(i)];
    Sample& s = ds.samples[static_cast<std::size_t>(i)];
    s.id = f.id;
    s.seed = f.seed;
    s.data.img_l = load_map(base, f.img_l, f.id, man.rig, &read_ppm);
    s.data.img_r1 = load_map(base, f.img_r1, f.id, man.rig, &read_ppm);
    s.data.img_r2 = load_map(base, f.img_r2, f.id, man.rig, &read_ppm);
    s.data.gt_disp_small = load_map(base, f.disp_small, f.id, man.rig, &read_pfm);
    s.data.gt_disp_wide = load_map(base, f.disp_wide, f.id, man.rig, &read_pfm);
    s.data.gt_depth = load_map(base, f.depth, f.id, man.rig, &read_pfm);
    // The mask is binary, so 8-bit PGM is lossless: anything above half scale
    // reads back as occluded.
    Tensor occl = load_map(base, f.occl_wide, f.id, man.rig, &read_pgm);
    for (std::int64_t k = 0; k < occl.numel(); ++k) occl[k] = occl[k] > 0.5f ? 1.0f : 0.0f;
    s.data.gt_occl_wide = std::move(occl);
  });
  return ds;
}

}  // namespace mbd
