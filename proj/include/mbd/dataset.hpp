#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mbd/synthetic.hpp"

namespace mbd {

class DatasetError : public Error {
 public:
  using Error::Error;
};

// A rendered scene plus the seed that produced it. `id` is the position in
// the manifest and the prefix of the sample's files on disk.
struct Sample {
  int id = 0;
  std::uint64_t seed = 0;
  ImageTriplet data;
};

// Manifest row: the seven files a sample owns, as paths relative to the
// dataset directory.
struct SampleFiles {
  int id = 0;
  std::uint64_t seed = 0;
  std::string img_l, img_r1, img_r2;
  std::string disp_small, disp_wide;
  std::string occl_wide, depth;
};

// On-disk index (manifest.json). Field names are fixed:
//   version, focal_px, b_small, b_wide, width, height,
//   samples: [{id, seed, img_l, img_r1, img_r2,
//              disp_small, disp_wide, occl_wide, depth}]
struct Manifest {
  int version = 1;
  CameraRig rig;
  std::vector<SampleFiles> samples;
};

struct Dataset {
  CameraRig rig;
  std::vector<Sample> samples;
};

// Renders `count` scenes from random_scene(rig, sample_seed) where
// sample_seed = hash_mix(seed, kStreamScene, id). Generation is parallel
// across samples; output order is by id regardless of thread schedule.
std::vector<Sample> generate_samples(const CameraRig& rig, int count, std::uint64_t seed,
                                     int max_layers = 4,
                                     TextureKind kind = TextureKind::kNoise,
                                     float noise_sigma = 0.0f);

// Writes the seven files per sample (PPM images, PFM float maps, PGM
// occlusion mask) plus manifest.json into `dir`, creating it if needed.
// Float maps round-trip bit-exactly; images are 8-bit quantized.
Manifest write_dataset(const CameraRig& rig, const std::vector<Sample>& samples,
                       const std::string& dir);

// Parses dir/manifest.json without touching the sample files.
Manifest read_manifest(const std::string& dir);

// Loads every sample into memory. Throws DatasetError naming the sample id
// if a file is missing or its shape disagrees with the manifest.
// gt_disp_wide_right is not stored, so loaded triplets leave it empty.
Dataset read_dataset(const std::string& dir);

}  // namespace mbd
