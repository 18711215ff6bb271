#include "mbd/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace mbd {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool parses_int(const std::string& s) {
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc{} && p == s.data() + s.size();
}

bool parses_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc{} && p == s.data() + s.size();
}

bool parses_float(const std::string& s) {
  try {
    std::size_t used = 0;
    (void)std::stof(s, &used);
    return used == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

// What each key's value must look like; set() rejects bad values up front so
// parse errors point at the config line, not at some later getter call.
enum class Kind { kInt, kU64, kNum, kFlag, kIntList, kEnum };

struct KeySpec {
  Kind kind;
  std::vector<std::string> choices;  // kEnum only
};

const std::map<std::string, KeySpec>& key_specs() {
  static const std::map<std::string, KeySpec> spec = {
      {"net.height", {Kind::kInt, {}}},
      {"net.width", {Kind::kInt, {}}},
      {"net.enc_channels", {Kind::kIntList, {}}},
      {"net.d_max_frac", {Kind::kNum, {}}},
      {"net.detach_dec3", {Kind::kFlag, {}}},
      {"train.epochs", {Kind::kInt, {}}},
      {"train.batch_size", {Kind::kInt, {}}},
      {"train.lr", {Kind::kNum, {}}},
      {"train.beta1", {Kind::kNum, {}}},
      {"train.beta2", {Kind::kNum, {}}},
      {"train.adam_eps", {Kind::kNum, {}}},
      {"train.seed", {Kind::kU64, {}}},
      {"train.mode", {Kind::kEnum, {"multi", "small_only", "wide_only"}}},
      {"train.max_samples", {Kind::kInt, {}}},
      {"train.alpha", {Kind::kNum, {}}},
      {"train.beta", {Kind::kNum, {}}},
      {"train.lambda", {Kind::kNum, {}}},
      {"train.r", {Kind::kNum, {}}},
      {"train.occl_threshold", {Kind::kNum, {}}},
      {"train.lda_norm", {Kind::kEnum, {"n", "mask_sum"}}},
      {"data.count", {Kind::kInt, {}}},
      {"data.seed", {Kind::kU64, {}}},
      {"data.max_layers", {Kind::kInt, {}}},
      {"data.texture", {Kind::kEnum, {"noise", "periodic"}}},
      {"data.noise_sigma", {Kind::kNum, {}}},
      {"data.focal_px", {Kind::kNum, {}}},
      {"data.b_small", {Kind::kNum, {}}},
      {"data.b_wide", {Kind::kNum, {}}},
      {"eval.depth_cap", {Kind::kNum, {}}},
      {"eval.disp_eps", {Kind::kNum, {}}},
      {"oracle.window", {Kind::kInt, {}}},
      {"oracle.steps", {Kind::kInt, {}}},
      {"oracle.d_range", {Kind::kInt, {}}},
      {"oracle.z_near", {Kind::kNum, {}}},
      {"oracle.z_far", {Kind::kNum, {}}},
  };
  return spec;
}

void check_value(const std::string& key, const std::string& value) {
  const KeySpec& spec = key_specs().at(key);
  switch (spec.kind) {
    case Kind::kInt:
      if (!parses_int(value)) throw ConfigError(key + " must be an integer, got '" + value + "'");
      return;
    case Kind::kU64:
      if (!parses_u64(value)) {
        throw ConfigError(key + " must be a non-negative integer, got '" + value + "'");
      }
      return;
    case Kind::kNum:
      if (!parses_float(value)) throw ConfigError(key + " must be a number, got '" + value + "'");
      return;
    case Kind::kFlag:
      if (value != "true" && value != "false" && value != "0" && value != "1") {
        throw ConfigError(key + " must be true/false, got '" + value + "'");
      }
      return;
    case Kind::kIntList: {
      std::size_t pos = 0;
      while (pos <= value.size()) {
        const std::size_t comma = std::min(value.find(',', pos), value.size());
        if (!parses_int(trim(value.substr(pos, comma - pos)))) {
          throw ConfigError(key + " must be a comma-separated int list, got '" + value + "'");
        }
        pos = comma + 1;
      }
      return;
    }
    case Kind::kEnum:
      for (const std::string& c : spec.choices) {
        if (value == c) return;
      }
      std::string opts;
      for (const std::string& c : spec.choices) opts += (opts.empty() ? "" : " | ") + c;
      throw ConfigError(key + " must be " + opts + ", got '" + value + "'");
  }
}

}  // namespace

const std::map<std::string, std::pair<std::string, std::string>>& Config::registry() {
  static const std::map<std::string, std::pair<std::string, std::string>> reg = {
      {"net.height", {"64", "input image height (divisible by 16)"}},
      {"net.width", {"192", "input image width (divisible by 16)"}},
      {"net.enc_channels", {"16,32,64,128", "encoder stage widths, comma separated"}},
      {"net.d_max_frac", {"0.3", "disparity head cap as a fraction of width"}},
      {"net.detach_dec3", {"true", "stop encoder gradients from decoder-3 losses"}},

      {"train.epochs", {"20", "training epochs"}},
      {"train.batch_size", {"4", "samples per optimizer step"}},
      {"train.lr", {"1e-4", "Adam learning rate"}},
      {"train.beta1", {"0.9", "Adam first-moment decay"}},
      {"train.beta2", {"0.999", "Adam second-moment decay"}},
      {"train.adam_eps", {"1e-8", "Adam denominator epsilon"}},
      {"train.seed", {"0", "seed for init and shuffling"}},
      {"train.mode", {"multi", "multi | small_only | wide_only"}},
      {"train.max_samples", {"0", "truncate the dataset (0 = all)"}},
      {"train.alpha", {"0.85", "SSIM share of the photometric terms"}},
      {"train.beta", {"0.85", "SSIM share of the disparity assignment term"}},
      {"train.lambda", {"0.1", "smoothness weight at full resolution"}},
      {"train.r", {"5.4", "wide/small baseline ratio used by the losses"}},
      {"train.occl_threshold", {"1.0", "consistency threshold in full-res pixels"}},
      {"train.lda_norm", {"n", "assignment-loss normaliser: n | mask_sum"}},

      {"data.count", {"350", "scenes to generate"}},
      {"data.seed", {"1", "dataset seed"}},
      {"data.max_layers", {"4", "max foreground rectangles per scene"}},
      {"data.texture", {"noise", "noise | periodic"}},
      {"data.noise_sigma", {"0.0", "additive image noise sigma"}},
      {"data.focal_px", {"100", "focal length in pixels"}},
      {"data.b_small", {"0.1", "small baseline in meters"}},
      {"data.b_wide", {"0.54", "wide baseline in meters"}},

      {"eval.depth_cap", {"80", "depth cap in meters"}},
      {"eval.disp_eps", {"1e-3", "disparity floor before depth conversion"}},

      {"oracle.window", {"5", "SSD window (odd)"}},
      {"oracle.steps", {"96", "inverse-depth hypotheses"}},
      {"oracle.d_range", {"28", "block-match disparity range"}},
      {"oracle.z_near", {"2.0", "nearest depth hypothesis anchor (m)"}},
      {"oracle.z_far", {"40.0", "farthest depth hypothesis anchor (m)"}},
  };
  return reg;
}

Config::Config() {
  for (const auto& [k, v] : registry()) values_[k] = v.first;
}

void Config::parse_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" +
                        line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void Config::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  parse_text(buf.str(), path);
}

void Config::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  check_value(key, value);
  it->second = value;
}

const std::string& Config::str(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

int Config::integer(const std::string& key) const {
  const std::string& s = str(key);
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw ConfigError(key + " must be an integer, got '" + s + "'");
  }
  return v;
}

float Config::number(const std::string& key) const {
  const std::string& s = str(key);
  try {
    std::size_t used = 0;
    const float v = std::stof(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + " must be a number, got '" + s + "'");
  }
}

bool Config::flag(const std::string& key) const {
  const std::string& s = str(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(key + " must be true/false, got '" + s + "'");
}

std::uint64_t Config::u64(const std::string& key) const {
  const std::string& s = str(key);
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw ConfigError(key + " must be a non-negative integer, got '" + s + "'");
  }
  return v;
}

std::vector<int> Config::int_list(const std::string& key) const {
  const std::string& s = str(key);
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t comma = std::min(s.find(',', pos), s.size());
    const std::string item = trim(s.substr(pos, comma - pos));
    int v = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc{} || p != item.data() + item.size()) {
      throw ConfigError(key + " must be a comma-separated int list, got '" + s + "'");
    }
    out.push_back(v);
    pos = comma + 1;
  }
  return out;
}

std::string Config::serialize() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

NetConfig Config::net() const {
  NetConfig n;
  n.height = integer("net.height");
  n.width = integer("net.width");
  n.enc_channels = int_list("net.enc_channels");
  n.d_max_frac = number("net.d_max_frac");
  n.detach_encoder_for_decoder3 = flag("net.detach_dec3");
  n.validate();
  return n;
}

TrainConfig Config::train() const {
  TrainConfig t;
  t.epochs = integer("train.epochs");
  t.batch_size = integer("train.batch_size");
  t.lr = number("train.lr");
  t.beta1 = number("train.beta1");
  t.beta2 = number("train.beta2");
  t.adam_eps = number("train.adam_eps");
  t.seed = u64("train.seed");
  t.mode = train_mode_from_name(str("train.mode"));
  t.max_samples = integer("train.max_samples");
  t.weights.alpha = number("train.alpha");
  t.weights.beta = number("train.beta");
  t.weights.lambda = number("train.lambda");
  t.weights.r = number("train.r");
  t.weights.occl_threshold = number("train.occl_threshold");
  const std::string norm = str("train.lda_norm");
  if (norm == "n") {
    t.weights.lda_norm = LdaNorm::kN;
  } else if (norm == "mask_sum") {
    t.weights.lda_norm = LdaNorm::kMaskSum;
  } else {
    throw ConfigError("train.lda_norm must be n | mask_sum, got '" + norm + "'");
  }
  t.validate();
  return t;
}

CameraRig Config::rig() const {
  CameraRig rig;
  rig.focal_px = number("data.focal_px");
  rig.baseline_small_m = number("data.b_small");
  rig.baseline_wide_m = number("data.b_wide");
  rig.height = integer("net.height");
  rig.width = integer("net.width");
  rig.validate();
  return rig;
}

SceneDefaults Config::scene() const {
  SceneDefaults d;
  d.count = integer("data.count");
  d.seed = u64("data.seed");
  d.max_layers = integer("data.max_layers");
  const std::string tex = str("data.texture");
  if (tex == "noise") {
    d.texture = TextureKind::kNoise;
  } else if (tex == "periodic") {
    d.texture = TextureKind::kPeriodicX;
  } else {
    throw ConfigError("data.texture must be noise | periodic, got '" + tex + "'");
  }
  d.noise_sigma = number("data.noise_sigma");
  return d;
}

}  // namespace mbd
