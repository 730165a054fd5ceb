#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "satdefense/errors.hpp"

namespace satdefense {

struct ConfigKey {
  const char* name;
  const char* default_value;
  const char* help;
};

// Every accepted key with its default. Anything else is rejected.
inline const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> keys = {
      {"seed", "1", "master seed for data, training and evaluation streams"},
      {"workers", "1", "worker threads for per-sample / per-cell work"},
      {"output", "out", "directory for reports"},
      {"checkpoint", "model.ckpt", "model checkpoint path"},

      {"data.kind", "synthetic", "synthetic | cifar10 | mnist"},
      {"data.train_path", "", "CIFAR-10 binary batch used for training"},
      {"data.test_path", "", "CIFAR-10 binary batch used for evaluation"},
      {"data.train_images", "", "MNIST IDX image file for training"},
      {"data.train_labels", "", "MNIST IDX label file for training"},
      {"data.test_images", "", "MNIST IDX image file for evaluation"},
      {"data.test_labels", "", "MNIST IDX label file for evaluation"},
      {"data.train_samples", "2000", "training samples (count for synthetic, cap for files)"},
      {"data.test_samples", "1000", "evaluation pool size (count for synthetic, cap for files)"},
      {"data.classes", "10", "synthetic class count"},
      {"data.side", "32", "synthetic image side"},
      {"data.channels", "3", "synthetic channel count (1 or 3)"},

      {"synth.contrast", "0.1", "object cell contrast"},
      {"synth.contrast_min", "-1", "per-sample contrast lower bound (negative: fixed contrast)"},
      {"synth.background_amp", "0.1", "smooth background amplitude"},
      {"synth.noise_sigma", "0", "pixel noise"},
      {"synth.object_fraction", "1", "object side relative to the image"},
      {"synth.max_jitter", "2", "object offset range in pixels"},
      {"synth.texture_amp", "0.015", "per-class fine texture amplitude"},
      {"synth.texture_block", "1", "texture cell size in pixels"},
      {"synth.train_code_flip", "0.12", "training split only: probability of another class's object code"},

      {"train.epochs", "20", "training epochs"},
      {"train.batch_size", "16", "mini-batch size"},
      {"train.learning_rate", "0.05", "SGD learning rate"},

      {"defense", "identity,sat", "comma list of identity | sat | bitdepth"},
      {"sat.translation", "0.16", "SAT translation limit T"},
      {"sat.scaling", "0.16", "SAT scaling limit S"},
      {"sat.rotation", "4", "SAT rotation limit R in degrees"},
      {"sat.interpolation", "bilinear", "bilinear | nearest"},
      {"bitdepth.bits", "5", "bit-depth reduction bits"},

      {"attack", "none,ifgsm,cw,bpda", "comma list of none | fgsm | ifgsm | cw | bpda"},
      {"attack.linf_eps", "0.03", "l-infinity budget on the [0,1] scale"},
      {"attack.l2_eps", "0.05", "l2 budget"},
      {"attack.l2_convention", "metric", "metric (l2 metric scale) | unit (plain norm on [0,1])"},
      {"ifgsm.steps", "10", "I-FGSM iterations"},
      {"ifgsm.step_size", "0.0075", "I-FGSM step"},
      {"cw.steps", "100", "CW iterations"},
      {"cw.learning_rate", "0.1", "CW gradient step"},
      {"cw.c", "1", "CW distance weight"},
      {"cw.kappa", "0", "CW logit margin"},
      {"bpda.norm", "linf", "linf | l2"},
      {"bpda.linf_eps", "0.031372549019607843", "BPDA l-infinity budget (8/255)"},
      {"bpda.rounds", "50", "BPDA rounds"},
      {"bpda.learning_rate", "0.1", "BPDA step relative to the budget"},
      {"bpda.eot_samples", "1", "defense samples averaged per BPDA round"},

      {"eval.samples", "100", "curated evaluation set size"},
      {"eval.repeats", "1", "defended predictions per image (majority vote)"},
      {"eval.curate", "true", "keep only samples the model classifies correctly"},

      {"sweep.points", "5", "grid values per axis (11 with --full-grid)"},
      {"sweep.floor", "0.95", "Pareto accuracy floor relative to clean accuracy"},
  };
  return keys;
}

inline const ConfigKey* find_config_key(std::string_view name) {
  for (const auto& k : config_schema()) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
  return s;
}

// Flat "key = value" configuration; '#' starts a comment.
class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_schema()) values_[k.name] = k.default_value;
  }

  static RunConfig parse(std::string_view text, const std::string& source = "config") {
    RunConfig cfg;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto end = std::min(text.find('\n', pos), text.size());
      std::string_view line = text.substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
      }
      try {
        cfg.set(std::string(detail::trim(line.substr(0, eq))),
                std::string(detail::trim(line.substr(eq + 1))));
      } catch (const ConfigError& e) {
        throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
      }
      if (end == text.size()) break;
    }
    return cfg;
  }

  static RunConfig load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
  }

  void set(const std::string& key, std::string value) {
    if (!find_config_key(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = std::move(value);
  }

  // "key=value" as given on the command line.
  void apply_override(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
    }
    set(std::string(detail::trim(assignment.substr(0, eq))),
        std::string(detail::trim(assignment.substr(eq + 1))));
  }

  const std::string& get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  double get_double(const std::string& key) const {
    const std::string& v = get(key);
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
    }
  }

  std::uint64_t get_u64(const std::string& key) const {
    const std::string& v = get(key);
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
      throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
    }
    return out;
  }

  std::size_t get_size(const std::string& key) const { return static_cast<std::size_t>(get_u64(key)); }

  bool get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "' expects true or false, got '" + v + "'");
  }

  std::vector<std::string> get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::string_view v = get(key);
    std::size_t pos = 0;
    while (pos <= v.size()) {
      const auto end = std::min(v.find(',', pos), v.size());
      const auto item = detail::trim(v.substr(pos, end - pos));
      if (!item.empty()) out.emplace_back(item);
      pos = end + 1;
    }
    return out;
  }

  // Every key in sorted order with its effective value; stable across runs.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

  std::uint64_t hash() const { return fnv1a64(canonical()); }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace satdefense
