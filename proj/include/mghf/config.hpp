#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mghf/errors.hpp"
#include "mghf/loss.hpp"
#include "mghf/trainer.hpp"

namespace mghf {

// Flat key=value configuration. Precedence: built-in defaults, then the
// config file, then command-line flags. Unknown keys are rejected so typos
// cannot silently fall back to defaults.

struct Options {
  MghfConfig loss;
  TrainConfig train;
  int n_channels = 128;
  int n_blocks = 1;
  int hidden = 0;  // 0 means half the channel count
  double scale_clamp = 2.0;
  int classes = 4;
  int image_size = 32;
};

namespace detail {

struct KeyBinding {
  std::function<void(Options&, const std::string&)> set;
  std::function<std::string(const Options&)> get;
};

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw IoError("config: key " + key + " expects a number, got '" + v + "'");
  }
}

inline long parse_long(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long d = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw IoError("config: key " + key + " expects an integer, got '" + v + "'");
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long d = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw IoError("config: key " + key + " expects an unsigned integer, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw IoError("config: key " + key + " expects true/false, got '" + v + "'");
}

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline const std::map<std::string, KeyBinding>& key_table() {
  static const std::map<std::string, KeyBinding> table = [] {
    std::map<std::string, KeyBinding> t;
    auto dbl = [&t](const std::string& key, auto getter) {
      t[key] = {[key, getter](Options& o, const std::string& v) {
                  *getter(o) = parse_double(key, v);
                },
                [getter](const Options& o) {
                  return fmt_double(*getter(const_cast<Options&>(o)));
                }};
    };
    auto integer = [&t](const std::string& key, auto getter) {
      t[key] = {[key, getter](Options& o, const std::string& v) {
                  *getter(o) = static_cast<int>(parse_long(key, v));
                },
                [getter](const Options& o) {
                  return std::to_string(*getter(const_cast<Options&>(o)));
                }};
    };
    auto longint = [&t](const std::string& key, auto getter) {
      t[key] = {[key, getter](Options& o, const std::string& v) {
                  *getter(o) = parse_long(key, v);
                },
                [getter](const Options& o) {
                  return std::to_string(*getter(const_cast<Options&>(o)));
                }};
    };
    auto u64 = [&t](const std::string& key, auto getter) {
      t[key] = {[key, getter](Options& o, const std::string& v) {
                  *getter(o) = parse_u64(key, v);
                },
                [getter](const Options& o) {
                  return std::to_string(*getter(const_cast<Options&>(o)));
                }};
    };
    auto boolean = [&t](const std::string& key, auto getter) {
      t[key] = {[key, getter](Options& o, const std::string& v) {
                  *getter(o) = parse_bool(key, v);
                },
                [getter](const Options& o) {
                  return *getter(const_cast<Options&>(o)) ? std::string("true")
                                                          : std::string("false");
                }};
    };

    dbl("gamma1", [](Options& o) { return &o.loss.gamma1; });
    dbl("gamma2", [](Options& o) { return &o.loss.gamma2; });
    dbl("gamma3", [](Options& o) { return &o.loss.gamma3; });
    dbl("beta1", [](Options& o) { return &o.loss.csc.beta1; });
    dbl("beta2", [](Options& o) { return &o.loss.csc.beta2; });
    dbl("beta3", [](Options& o) { return &o.loss.csc.beta3; });
    dbl("tau", [](Options& o) { return &o.loss.monce.tau; });
    dbl("beta_ot", [](Options& o) { return &o.loss.monce.beta_ot; });
    dbl("q", [](Options& o) { return &o.loss.monce.q; });
    dbl("sinkhorn_epsilon", [](Options& o) { return &o.loss.monce.sinkhorn_epsilon; });
    integer("sinkhorn_max_iters", [](Options& o) { return &o.loss.monce.sinkhorn_max_iters; });
    dbl("sinkhorn_tol", [](Options& o) { return &o.loss.monce.sinkhorn_tol; });
    integer("patch_size", [](Options& o) { return &o.loss.monce.patch_size; });
    integer("stride", [](Options& o) { return &o.loss.monce.stride; });
    integer("bins", [](Options& o) { return &o.loss.pruning.bins; });
    integer("m", [](Options& o) { return &o.loss.pruning.m; });
    dbl("alpha", [](Options& o) { return &o.loss.pruning.alpha; });
    dbl("gamma", [](Options& o) { return &o.loss.pruning.gamma; });
    boolean("lip_enabled", [](Options& o) { return &o.loss.lip_enabled; });
    boolean("lip_on_pruned", [](Options& o) { return &o.loss.lip_on_pruned; });
    integer("embed_hidden", [](Options& o) { return &o.loss.embed_hidden; });
    integer("embed_dim", [](Options& o) { return &o.loss.embed_dim; });
    u64("embed_seed", [](Options& o) { return &o.loss.embed_seed; });

    dbl("lr", [](Options& o) { return &o.train.lr; });
    integer("batch", [](Options& o) { return &o.train.batch; });
    dbl("decay_factor", [](Options& o) { return &o.train.decay_factor; });
    integer("decay_every", [](Options& o) { return &o.train.decay_every; });
    dbl("adam_beta1", [](Options& o) { return &o.train.adam_beta1; });
    dbl("adam_beta2", [](Options& o) { return &o.train.adam_beta2; });
    dbl("adam_eps", [](Options& o) { return &o.train.adam_eps; });
    longint("total_iters", [](Options& o) { return &o.train.total_iters; });
    u64("seed", [](Options& o) { return &o.train.seed; });

    integer("n_channels", [](Options& o) { return &o.n_channels; });
    integer("n_blocks", [](Options& o) { return &o.n_blocks; });
    integer("hidden", [](Options& o) { return &o.hidden; });
    dbl("scale_clamp", [](Options& o) { return &o.scale_clamp; });
    integer("classes", [](Options& o) { return &o.classes; });
    integer("image_size", [](Options& o) { return &o.image_size; });
    return t;
  }();
  return table;
}

}  // namespace detail

inline void set_option(Options& opts, const std::string& key, const std::string& value) {
  const auto& table = detail::key_table();
  auto it = table.find(key);
  if (it == table.end()) throw IoError("config: unknown key '" + key + "'");
  it->second.set(opts, value);
}

/// key=value per line; blank lines and #-comments ignored.
inline void apply_config_file(Options& opts, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("config: cannot open " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    std::size_t e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError("config: " + path + ":" + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      const std::size_t b2 = s.find_first_not_of(" \t");
      if (b2 == std::string::npos) return std::string();
      const std::size_t e2 = s.find_last_not_of(" \t");
      return s.substr(b2, e2 - b2 + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw IoError("config: " + path + ":" + std::to_string(lineno) + ": empty key");
    set_option(opts, key, value);
  }
}

/// Every key with its effective value, sorted by key. This is what reports
/// echo so a result can always be traced back to its configuration.
inline std::vector<std::pair<std::string, std::string>> dump_config(const Options& opts) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [key, binding] : detail::key_table()) out.push_back({key, binding.get(opts)});
  return out;
}

}  // namespace mghf
