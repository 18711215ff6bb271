#include "mbd/image_io.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace mbd {

namespace {

unsigned char quantize(float v) {
  const float s = std::round(v * 255.0f);
  return static_cast<unsigned char>(s < 0.0f ? 0.0f : (s > 255.0f ? 255.0f : s));
}

// Reads one whitespace-delimited token, skipping '#' comment lines as netpbm
// allows in headers.
std::string next_token(std::istream& in, const std::string& path) {
  std::string tok;
  int c = in.get();
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    }
    c = in.get();
  }
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (tok.empty()) throw IoError("unexpected end of header: " + path);
  return tok;
}

int parse_dim(const std::string& tok, const std::string& path) {
  try {
    const long v = std::stol(tok);
    if (v <= 0 || v > (1 << 20)) throw IoError("implausible dimension " + tok + " in " + path);
    return static_cast<int>(v);
  } catch (const std::logic_error&) {
    throw IoError("malformed header token '" + tok + "' in " + path);
  }
}

void write_bytes(const std::string& path, const std::string& header, const std::vector<unsigned char>& body) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  os.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
  if (!os) throw IoError("write failed: " + path);
}

std::ifstream open_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  return in;
}

void read_body(std::istream& in, unsigned char* dst, std::size_t n, const std::string& path) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw IoError("truncated pixel data: " + path);
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) throw IoError("write_ppm wants a {3,H,W} tensor, got " + shape_str(rgb.shape()));
  const int h = rgb.dim(1), w = rgb.dim(2);
  std::vector<unsigned char> body(static_cast<std::size_t>(h) * w * 3);
  std::size_t k = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) body[k++] = quantize(rgb[(static_cast<std::int64_t>(c) * h + y) * w + x]);
    }
  }
  write_bytes(path, "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n", body);
}

Tensor read_ppm(const std::string& path) {
  auto in = open_binary(path);
  if (next_token(in, path) != "P6") throw IoError("not a binary PPM (P6): " + path);
  const int w = parse_dim(next_token(in, path), path);
  const int h = parse_dim(next_token(in, path), path);
  if (next_token(in, path) != "255") throw IoError("unsupported maxval (want 255): " + path);
  std::vector<unsigned char> body(static_cast<std::size_t>(h) * w * 3);
  read_body(in, body.data(), body.size(), path);
  Tensor out({3, h, w});
  std::size_t k = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) out[(static_cast<std::int64_t>(c) * h + y) * w + x] = body[k++] / 255.0f;
    }
  }
  return out;
}

void write_pgm(const std::string& path, const Tensor& gray) {
  if (gray.rank() != 3 || gray.dim(0) != 1) throw IoError("write_pgm wants a {1,H,W} tensor, got " + shape_str(gray.shape()));
  const int h = gray.dim(1), w = gray.dim(2);
  std::vector<unsigned char> body(static_cast<std::size_t>(h) * w);
  std::size_t k = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) body[k++] = quantize(gray[static_cast<std::int64_t>(y) * w + x]);
  }
  write_bytes(path, "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n", body);
}

Tensor read_pgm(const std::string& path) {
  auto in = open_binary(path);
  if (next_token(in, path) != "P5") throw IoError("not a binary PGM (P5): " + path);
  const int w = parse_dim(next_token(in, path), path);
  const int h = parse_dim(next_token(in, path), path);
  if (next_token(in, path) != "255") throw IoError("unsupported maxval (want 255): " + path);
  std::vector<unsigned char> body(static_cast<std::size_t>(h) * w);
  read_body(in, body.data(), body.size(), path);
  Tensor out({1, h, w});
  for (std::size_t i = 0; i < body.size(); ++i) out[static_cast<std::int64_t>(i)] = body[i] / 255.0f;
  return out;
}

void write_pfm(const std::string& path, const Tensor& map) {
  if (map.rank() != 3 || map.dim(0) != 1) throw IoError("write_pfm wants a {1,H,W} tensor, got " + shape_str(map.shape()));
  const int h = map.dim(1), w = map.dim(2);
  std::vector<unsigned char> body(static_cast<std::size_t>(h) * w * 4);
  static_assert(sizeof(float) == 4);
  // PFM rows are stored bottom-up.
  std::size_t k = 0;
  for (int y = h - 1; y >= 0; --y) {
    const float* row = map.data() + static_cast<std::size_t>(y) * w;
    std::memcpy(body.data() + k, row, static_cast<std::size_t>(w) * 4);
    k += static_cast<std::size_t>(w) * 4;
  }
  write_bytes(path, "Pf\n" + std::to_string(w) + " " + std::to_string(h) + "\n-1.0\n", body);
}

Tensor read_pfm(const std::string& path) {
  auto in = open_binary(path);
  if (next_token(in, path) != "Pf") throw IoError("not a grayscale PFM (Pf): " + path);
  const int w = parse_dim(next_token(in, path), path);
  const int h = parse_dim(next_token(in, path), path);
  const std::string scale_tok = next_token(in, path);
  double scale;
  try {
    scale = std::stod(scale_tok);
  } catch (const std::logic_error&) {
    throw IoError("malformed PFM scale '" + scale_tok + "' in " + path);
  }
  if (scale >= 0) throw IoError("big-endian PFM not supported (scale " + scale_tok + "): " + path);
  std::vector<unsigned char> body(static_cast<std::size_t>(h) * w * 4);
  read_body(in, body.data(), body.size(), path);
  Tensor out({1, h, w});
  std::size_t k = 0;
  for (int y = h - 1; y >= 0; --y) {
    std::memcpy(out.data() + static_cast<std::size_t>(y) * w, body.data() + k, static_cast<std::size_t>(w) * 4);
    k += static_cast<std::size_t>(w) * 4;
  }
  return out;
}

}  // namespace mbd
