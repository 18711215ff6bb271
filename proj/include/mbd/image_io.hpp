#pragma once

#include <string>

#include "mbd/tensor.hpp"

namespace mbd {

class IoError : public Error {
 public:
  using Error::Error;
};

// Binary netpbm + PFM readers/writers.
//
// PPM (P6, maxval 255) carries RGB images as CHW float tensors in [0,1];
// writing quantizes with round(v*255) and clamps, so a round trip is exact to
// 1/255. PGM (P5) is the single-channel analogue. PFM stores full f32 maps
// losslessly; the scale header is -1.0 (little-endian) and rows run
// bottom-up, per the format.

void write_ppm(const std::string& path, const Tensor& rgb);   // {3,H,W}
Tensor read_ppm(const std::string& path);                     // -> {3,H,W}

void write_pgm(const std::string& path, const Tensor& gray);  // {1,H,W}
Tensor read_pgm(const std::string& path);                     // -> {1,H,W}

void write_pfm(const std::string& path, const Tensor& map);   // {1,H,W}
Tensor read_pfm(const std::string& path);                     // -> {1,H,W}

}  // namespace mbd
