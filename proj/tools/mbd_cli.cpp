// mbd: one binary for the whole offline pipeline — dataset generation,
// training, decoder-3 inference, metric evaluation, the classical stereo
// oracle, and the finite-difference gradient suite. Each run writes a
// run.log next to its outputs with the resolved configuration, the build
// version, and the wall time, so results stay attributable.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "mbd/config.hpp"
#include "mbd/dataset.hpp"
#include "mbd/evaluation.hpp"
#include "mbd/gradcheck.hpp"
#include "mbd/image_io.hpp"
#include "mbd/stereo_oracle.hpp"
#include "mbd/trainer.hpp"
#include "mbd/version.hpp"

namespace fs = std::filesystem;
using namespace mbd;

namespace {

std::string version_string() { return std::string(kVersion) + "-g" + kGitRev; }

Config resolve_config(const std::string& config_path, const std::vector<std::string>& sets) {
  Config cfg;
  if (!config_path.empty()) cfg.parse_file(config_path);
  for (const std::string& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

void write_run_log(const std::string& dir, const std::string& cmdline, const Config& cfg,
                   double wall_seconds) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  const std::string path = (fs::path(dir) / "run.log").string();
  std::ofstream log(path, std::ios::binary);
  log << "version: " << version_string() << "\n"
      << "command: " << cmdline << "\n"
      << "wall_seconds: " << wall_seconds << "\n"
      << "config:\n";
  std::istringstream cfg_lines(cfg.serialize());
  std::string line;
  while (std::getline(cfg_lines, line)) log << "  " << line << "\n";
  if (!log) throw Error("failed writing " + path);
}

// Small blue->green->yellow->red ramp for quick visual checks of disparity
// maps; invalid pixels (negative) come out black.
void write_disp_ppm(const std::string& path, const Tensor& disp) {
  disp.require_shape({1, disp.shape()[1], disp.shape()[2]}, "disparity map");
  const int h = disp.shape()[1], w = disp.shape()[2];
  float dmax = 0.0f;
  for (std::int64_t i = 0; i < disp.numel(); ++i) dmax = std::max(dmax, disp[i]);
  if (dmax <= 0.0f) dmax = 1.0f;
  static const float stops[5][3] = {{0.05f, 0.03f, 0.35f},
                                    {0.12f, 0.42f, 0.75f},
                                    {0.20f, 0.72f, 0.32f},
                                    {0.95f, 0.85f, 0.15f},
                                    {0.90f, 0.15f, 0.10f}};
  Tensor rgb({3, h, w});
  for (std::int64_t i = 0; i < disp.numel(); ++i) {
    const float d = disp[i];
    if (d < 0.0f) continue;  // invalid -> black
    const float t = std::min(1.0f, d / dmax) * 4.0f;
    const int s = std::min(3, static_cast<int>(t));
    const float f = t - static_cast<float>(s);
    for (int c = 0; c < 3; ++c) {
      rgb[c * static_cast<std::int64_t>(h) * w + i] =
          stops[s][c] + f * (stops[s + 1][c] - stops[s][c]);
    }
  }
  write_ppm(path, rgb);
}

// Decoder-3 disparity for one {3,H,W} image, as a {1,H,W} map.
Tensor infer_one(const Params& params, const NetConfig& net, const Tensor& img) {
  img.require_shape({3, net.height, net.width}, "input image");
  Tensor batched({1, 3, net.height, net.width});
  std::memcpy(batched.data(), img.data(), sizeof(float) * static_cast<std::size_t>(img.numel()));
  Tape t;
  const ParamValues pv = lift_params(t, params);
  const DisparityPyramid pyr = infer(t, pv, t.constant(batched), net);
  const Tensor full = t.val(pyr.level[0]);  // {1,1,H,W}
  Tensor out({1, net.height, net.width});
  std::memcpy(out.data(), full.data(), sizeof(float) * static_cast<std::size_t>(out.numel()));
  return out;
}

std::string sample_stem(int id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", id);
  return buf;
}

void run_gen(const Config& cfg, const std::string& out_dir) {
  const CameraRig rig = cfg.rig();
  const SceneDefaults sc = cfg.scene();
  const std::vector<Sample> samples =
      generate_samples(rig, sc.count, sc.seed, sc.max_layers, sc.texture, sc.noise_sigma);
  write_dataset(rig, samples, out_dir);
  std::printf("wrote %zu samples to %s\n", samples.size(), out_dir.c_str());
}

void run_train(const Config& cfg, const std::string& data_dir, const std::string& out_dir,
               const std::string& resume) {
  const Dataset ds = read_dataset(data_dir);
  const NetConfig net = cfg.net();
  if (ds.rig.width != net.width || ds.rig.height != net.height) {
    throw Error("dataset images are " + std::to_string(ds.rig.width) + "x" +
                std::to_string(ds.rig.height) + " but config wants net.width=" +
                std::to_string(net.width) + " net.height=" + std::to_string(net.height));
  }
  const FitResult r = fit(ds, net, cfg.train(), out_dir, resume);
  std::printf("trained %d epochs (%lld optimizer steps)\n", r.epochs_done,
              static_cast<long long>(r.opt.step));
  if (!r.checkpoint_paths.empty()) {
    std::printf("final checkpoint: %s\n", r.checkpoint_paths.back().c_str());
  }
}

void run_infer(const Checkpoint& ck, const NetConfig& net, const std::string& image,
               const std::string& data_dir, const std::string& out_dir, bool pp) {
  const Params params = extract_params(ck, net);

  const auto raw = [&](const Tensor& im) { return infer_one(params, net, im); };
  const auto predict = [&](const Tensor& im) { return pp ? post_process(raw, im) : raw(im); };

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error("cannot create " + out_dir + ": " + ec.message());

  int n = 0;
  if (!image.empty()) {
    const Tensor pred = predict(read_ppm(image));
    const std::string stem = fs::path(image).stem().string();
    write_pfm((fs::path(out_dir) / (stem + "_disp.pfm")).string(), pred);
    write_disp_ppm((fs::path(out_dir) / (stem + "_disp.ppm")).string(), pred);
    n = 1;
  } else {
    const Dataset ds = read_dataset(data_dir);
    for (const Sample& s : ds.samples) {
      const Tensor pred = predict(s.data.img_l);
      const std::string stem = sample_stem(s.id);
      write_pfm((fs::path(out_dir) / (stem + "_disp.pfm")).string(), pred);
      write_disp_ppm((fs::path(out_dir) / (stem + "_disp.ppm")).string(), pred);
      ++n;
    }
  }
  std::printf("wrote %d disparity map%s to %s\n", n, n == 1 ? "" : "s", out_dir.c_str());
}

void run_eval(const Config& cfg, const std::string& pred_dir, const std::string& data_dir,
              const std::string& out_csv, const std::string& method) {
  const Dataset ds = read_dataset(data_dir);
  const float cap = cfg.number("eval.depth_cap");
  const float eps = cfg.number("eval.disp_eps");
  std::vector<Tensor> pred_depths, gt_depths;
  pred_depths.reserve(ds.samples.size());
  gt_depths.reserve(ds.samples.size());
  for (const Sample& s : ds.samples) {
    const std::string path = (fs::path(pred_dir) / (sample_stem(s.id) + "_disp.pfm")).string();
    if (!fs::exists(path)) {
      throw Error("no prediction for sample " + std::to_string(s.id) + " (expected " + path + ")");
    }
    const Tensor disp = read_pfm(path);
    disp.require_shape(s.data.gt_depth.shape(), ("prediction for sample " + std::to_string(s.id)).c_str());
    pred_depths.push_back(
        disparity_to_depth(disp, ds.rig.focal_px, ds.rig.baseline_wide_m, cap, eps));
    gt_depths.push_back(s.data.gt_depth);
  }
  const MetricsReport report = bucket_report(pred_depths, gt_depths, standard_buckets());
  const std::string csv = metrics_csv({{method, report}});
  if (const fs::path parent = fs::path(out_csv).parent_path(); !parent.empty()) {
    std::error_code ec;
    fs::create_directories(parent, ec);
  }
  std::ofstream out(out_csv, std::ios::binary);
  out << csv;
  if (!out) throw Error("failed writing " + out_csv);
  std::fputs(csv.c_str(), stdout);
}

void run_oracle(const Config& cfg, const std::string& data_dir, const std::string& out_dir) {
  const Dataset ds = read_dataset(data_dir);
  const int window = cfg.integer("oracle.window");
  const int steps = cfg.integer("oracle.steps");
  const float z_near = cfg.number("oracle.z_near");
  const float z_far = cfg.number("oracle.z_far");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error("cannot create " + out_dir + ": " + ec.message());

  std::string csv = "id,n_valid,n_total,mae,frac_within_1px\n";
  double mae_sum = 0.0, frac_sum = 0.0;
  for (const Sample& s : ds.samples) {
    const Tensor pred = sssd_multibaseline(s.data.img_l, s.data.img_r1, s.data.img_r2, ds.rig,
                                           steps, window, z_near, z_far);
    write_pfm((fs::path(out_dir) / (sample_stem(s.id) + "_oracle.pfm")).string(), pred);
    const OracleStats st = oracle_stats(pred, s.data.gt_disp_wide, s.data.gt_occl_wide);
    char line[160];
    std::snprintf(line, sizeof(line), "%d,%lld,%lld,%.6f,%.6f\n", s.id,
                  static_cast<long long>(st.n_valid), static_cast<long long>(st.n_total), st.mae,
                  st.frac_within_1px);
    csv += line;
    mae_sum += st.mae;
    frac_sum += st.frac_within_1px;
  }
  const double n = std::max<std::size_t>(ds.samples.size(), 1);
  char line[160];
  std::snprintf(line, sizeof(line), "mean,,,%.6f,%.6f\n", mae_sum / n, frac_sum / n);
  csv += line;
  const std::string csv_path = (fs::path(out_dir) / "oracle_stats.csv").string();
  std::ofstream out(csv_path, std::ios::binary);
  out << csv;
  if (!out) throw Error("failed writing " + csv_path);
  std::printf("oracle over %zu scenes: mean mae %.4f px, mean within-1px %.4f\n",
              ds.samples.size(), mae_sum / n, frac_sum / n);
}

int run_gradcheck(int seeds) {
  const std::vector<GradCheckCase> suite = gradcheck_suite();
  bool all_ok = true;
  for (const GradCheckCase& c : suite) {
    double worst = 0.0;
    for (int s = 0; s < seeds; ++s) {
      const GradCheckReport r = c.run(static_cast<std::uint64_t>(s));
      worst = std::max(worst, r.max_rel_err);
    }
    const bool ok = worst < c.tol;
    all_ok = all_ok && ok;
    std::printf("%-32s max_rel_err=%.3e tol=%.0e %s\n", c.name.c_str(), worst, c.tol,
                ok ? "ok" : "FAIL");
  }
  std::printf(all_ok ? "gradient checks passed (%d seeds each)\n"
                     : "gradient checks FAILED (%d seeds each)\n",
              seeds);
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-baseline self-supervised depth pipeline (" + version_string() + ")"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_path, ckpt, image, pred_dir, resume;
  std::string method = "pred";
  std::vector<std::string> sets;
  int count = -1, seeds = 20, window = -1;
  std::uint64_t seed = 0;
  bool seed_given = false, pp = false;

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--config", config_path, "config file");
  gen->add_option("--out", out_path, "output dataset directory")->required();
  gen->add_option("--count", count, "override data.count");
  gen->add_option("--seed", seed, "override data.seed")->each([&](const std::string&) { seed_given = true; });
  gen->add_option("--set", sets, "override key=value (repeatable)");

  CLI::App* train = app.add_subcommand("train", "train from a dataset directory");
  train->add_option("--config", config_path, "config file");
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", out_path, "checkpoint/log output directory")->required();
  train->add_option("--resume", resume, "resume from a training checkpoint");
  train->add_option("--set", sets, "override key=value (repeatable)");

  CLI::App* infer_cmd = app.add_subcommand("infer", "decoder-3 disparity inference");
  infer_cmd->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
  CLI::Option* img_opt = infer_cmd->add_option("--image", image, "one PPM image");
  CLI::Option* data_opt = infer_cmd->add_option("--data", data_dir, "dataset directory");
  img_opt->excludes(data_opt);
  infer_cmd->add_option("--out", out_path, "output directory")->required();
  infer_cmd->add_flag("--pp", pp, "flip-fuse post-processing");

  CLI::App* eval_cmd = app.add_subcommand("eval", "bucketed depth metrics against ground truth");
  eval_cmd->add_option("--config", config_path, "config file");
  eval_cmd->add_option("--pred", pred_dir, "directory of *_disp.pfm predictions")->required();
  eval_cmd->add_option("--data", data_dir, "dataset directory")->required();
  eval_cmd->add_option("--out", out_path, "output CSV path")->required();
  eval_cmd->add_option("--method", method, "method label for the CSV");
  eval_cmd->add_option("--set", sets, "override key=value (repeatable)");

  CLI::App* oracle_cmd = app.add_subcommand("oracle", "multi-baseline block-match oracle");
  oracle_cmd->add_option("--config", config_path, "config file");
  oracle_cmd->add_option("--data", data_dir, "dataset directory")->required();
  oracle_cmd->add_option("--out", out_path, "output directory")->required();
  oracle_cmd->add_option("--window", window, "override oracle.window");
  oracle_cmd->add_option("--set", sets, "override key=value (repeatable)");

  CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  grad->add_option("--seeds", seeds, "random draws per op");
  grad->add_option("--out", out_path, "run.log directory (default .)");

  CLI11_PARSE(app, argc, argv);

  std::string cmdline;
  for (int i = 0; i < argc; ++i) cmdline += std::string(i ? " " : "") + argv[i];

  const auto t0 = std::chrono::steady_clock::now();
  try {
    Config cfg = resolve_config(config_path, sets);
    if (gen->parsed()) {
      if (count >= 0) cfg.set("data.count", std::to_string(count));
      if (seed_given) cfg.set("data.seed", std::to_string(seed));
      run_gen(cfg, out_path);
    } else if (train->parsed()) {
      run_train(cfg, data_dir, out_path, resume);
    } else if (infer_cmd->parsed()) {
      if (image.empty() && data_dir.empty()) {
        throw Error("infer needs --image or --data");
      }
      // infer's network shape comes from the checkpoint; echo it in the log.
      const Checkpoint ck = load_checkpoint(ckpt);
      cfg.parse_text(ck.config_text, ckpt);
      run_infer(ck, cfg.net(), image, data_dir, out_path, pp);
    } else if (eval_cmd->parsed()) {
      run_eval(cfg, pred_dir, data_dir, out_path, method);
    } else if (oracle_cmd->parsed()) {
      if (window > 0) cfg.set("oracle.window", std::to_string(window));
      run_oracle(cfg, data_dir, out_path);
    } else if (grad->parsed()) {
      const int rc = run_gradcheck(seeds);
      if (rc != 0) return rc;
      if (out_path.empty()) out_path = ".";
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    // eval's --out is a file; every other command's is a directory.
    std::string log_dir = eval_cmd->parsed() ? fs::path(out_path).parent_path().string() : out_path;
    if (log_dir.empty()) log_dir = ".";
    write_run_log(log_dir, cmdline, cfg, wall);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
