#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "mghf/config.hpp"
#include "mghf/loss.hpp"
#include "mghf/pruning.hpp"

namespace mghf {

// Hand-rolled JSON emission: fixed key order, %.17g numbers, no locale or
// library involvement, so identical inputs yield byte-identical reports.

inline constexpr int kReportFormatVersion = 1;

namespace detail {

inline std::string json_num(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string json_str(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  out += "\"";
  return out;
}

inline std::string json_config(const Options& opts) {
  std::string out = "{";
  bool first = true;
  for (const auto& [key, value] : dump_config(opts)) {
    if (!first) out += ",";
    first = false;
    out += json_str(key) + ":" + json_str(value);
  }
  out += "}";
  return out;
}

}  // namespace detail

/// Score report. `durations_ms` is null unless timings were requested, so
/// default reports are byte-identical across runs.
inline std::string score_report_json(const LossReport& r, const Options& opts) {
  using detail::json_num;
  std::string j = "{";
  j += "\"format_version\":" + std::to_string(kReportFormatVersion);
  j += ",\"mode\":" + detail::json_str(r.mode);
  j += ",\"mghf_n\":" + json_num(r.mghf_n);
  j += ",\"csc\":";
  if (r.has_csc) {
    j += "{\"mse\":" + json_num(r.csc.mse) + ",\"corr\":" + json_num(r.csc.corr) +
         ",\"gram\":" + json_num(r.csc.gram) + ",\"total\":" + json_num(r.csc.total) + "}";
  } else {
    j += "null";
  }
  j += ",\"lip\":" + (r.has_lip ? json_num(r.lip) : std::string("null"));
  j += ",\"mghf_c\":" + (r.mode == "c" ? json_num(r.total) : std::string("null"));
  j += ",\"gammas\":[" + json_num(opts.loss.gamma1) + "," + json_num(opts.loss.gamma2) + "," +
       json_num(opts.loss.gamma3) + "]";
  j += ",\"betas\":[" + json_num(opts.loss.csc.beta1) + "," + json_num(opts.loss.csc.beta2) + "," +
       json_num(opts.loss.csc.beta3) + "]";
  j += ",\"pruning\":";
  if (r.has_profile) {
    j += "{\"m\":" + std::to_string(r.profile.selected.size());
    j += ",\"alpha\":" + json_num(r.profile.alpha);
    j += ",\"gamma\":" + json_num(r.profile.gamma);
    j += ",\"bins\":" + std::to_string(r.profile.bins);
    j += ",\"selected\":[";
    for (std::size_t i = 0; i < r.profile.selected.size(); ++i) {
      if (i) j += ",";
      j += std::to_string(r.profile.selected[i]);
    }
    j += "],\"weights\":[";
    for (std::size_t i = 0; i < r.profile.weights.size(); ++i) {
      if (i) j += ",";
      j += json_num(r.profile.weights[i]);
    }
    j += "]}";
  } else {
    j += "null";
  }
  j += ",\"image\":{\"h\":" + std::to_string(r.image_h) + ",\"w\":" + std::to_string(r.image_w) +
       "}";
  j += ",\"sinkhorn\":";
  if (r.has_lip) {
    j += std::string("{\"converged\":") + (r.lip_converged ? "true" : "false") +
         ",\"max_residual\":" + json_num(r.lip_max_residual) + "}";
  } else {
    j += "null";
  }
  j += ",\"durations_ms\":";
  if (r.has_durations) {
    j += "{\"extract\":" + json_num(r.extract_ms) + ",\"loss\":" + json_num(r.loss_ms) +
         ",\"total\":" + json_num(r.total_ms) + "}";
  } else {
    j += "null";
  }
  j += ",\"config\":" + detail::json_config(opts);
  j += "}";
  return j;
}

/// Per-map entropy/importance table for a single image.
inline std::string inspect_report_json(const ImportanceProfile& p, const Options& opts) {
  using detail::json_num;
  std::string j = "{";
  j += "\"format_version\":" + std::to_string(kReportFormatVersion);
  j += ",\"n_maps\":" + std::to_string(p.combined.size());
  j += ",\"bins\":" + std::to_string(p.bins);
  j += ",\"m\":" + std::to_string(p.selected.size());
  j += ",\"maps\":[";
  for (std::size_t i = 0; i < p.combined.size(); ++i) {
    if (i) j += ",";
    bool is_sel = false;
    double weight = 0.0;
    for (std::size_t s = 0; s < p.selected.size(); ++s)
      if (p.selected[s] == static_cast<int>(i)) {
        is_sel = true;
        weight = p.weights[s];
      }
    j += "{\"index\":" + std::to_string(i);
    j += ",\"h_norm_g\":" + json_num(p.h_norm_g[i]);
    j += ",\"h_norm_s\":" + json_num(p.h_norm_s[i]);
    j += ",\"importance\":" + json_num(p.combined[i]);
    j += std::string(",\"selected\":") + (is_sel ? "true" : "false");
    j += ",\"weight\":" + (is_sel ? json_num(weight) : std::string("null"));
    j += "}";
  }
  j += "],\"config\":" + detail::json_config(opts);
  j += "}";
  return j;
}

inline std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "iter,loss,lr\n";
  for (const auto& p : curve)
    out += std::to_string(p.iter) + "," + detail::json_num(p.loss) + "," +
           detail::json_num(p.lr) + "\n";
  return out;
}

}  // namespace mghf
