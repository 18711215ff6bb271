#pragma once

#include <map>
#include <string>
#include <vector>

#include "mbd/network.hpp"
#include "mbd/synthetic.hpp"
#include "mbd/trainer.hpp"

namespace mbd {

class ConfigError : public Error {
 public:
  using Error::Error;
};

// data.* knobs that shape generated scenes (each scene's layout itself comes
// from random_scene).
struct SceneDefaults {
  int count = 350;
  std::uint64_t seed = 1;
  int max_layers = 4;
  TextureKind texture = TextureKind::kNoise;
  float noise_sigma = 0.0f;
};

// Flat key=value configuration with a fixed key registry. Every key has a
// default, so a parsed config is always complete; setting a key outside the
// registry is an error (typos must not vanish silently). Files are UTF-8
// text, one key=value per line, with '#' comments.
class Config {
 public:
  Config();  // all defaults

  // Apply a file / text on top of the current values, so later sources
  // override earlier ones (defaults < file < command-line --set).
  void parse_file(const std::string& path);
  // origin only decorates error messages.
  void parse_text(const std::string& text, const std::string& origin = "<config>");

  // Rejects unknown keys and values that do not parse for the key's type.
  void set(const std::string& key, const std::string& value);

  const std::string& str(const std::string& key) const;
  int integer(const std::string& key) const;
  float number(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  std::vector<int> int_list(const std::string& key) const;  // comma-separated

  // Every key in sorted order, one per line — the resolved-config echo for
  // run logs and checkpoint blobs.
  std::string serialize() const;

  // Registry documentation: key -> (default, description).
  static const std::map<std::string, std::pair<std::string, std::string>>& registry();

  // Typed views over the net.* / train.* / data.* keys.
  NetConfig net() const;
  TrainConfig train() const;
  CameraRig rig() const;  // dims from net.height / net.width
  SceneDefaults scene() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace mbd
