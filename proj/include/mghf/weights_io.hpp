#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mghf/dfe.hpp"
#include "mghf/errors.hpp"

namespace mghf {

// Weights container: magic "MGHF", one version byte, a little-endian u32
// header length, a UTF-8 JSON header listing {name, shape} in payload order,
// then each array as little-endian f32 in row-major order.

inline constexpr std::uint8_t kWeightsVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
};

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_f32_le(std::string& out, float f) {
  put_u32_le(out, std::bit_cast<std::uint32_t>(f));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::size_t shape_elems(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

}  // namespace detail

inline std::string serialize_weights(const std::vector<ParamRef>& params) {
  nlohmann::json header = nlohmann::json::array();
  for (const auto& p : params) {
    if (detail::shape_elems(p.shape) != p.data->size())
      throw IoError("serialize_weights: shape of " + p.name + " does not match data length");
    header.push_back({{"name", p.name}, {"shape", p.shape}});
  }
  const std::string hdr = header.dump();

  std::string out;
  out += "MGHF";
  out.push_back(static_cast<char>(kWeightsVersion));
  detail::put_u32_le(out, static_cast<std::uint32_t>(hdr.size()));
  out += hdr;
  for (const auto& p : params)
    for (double v : *p.data) detail::put_f32_le(out, static_cast<float>(v));
  return out;
}

inline void save_weights(const std::string& path, const std::vector<ParamRef>& params) {
  const std::string blob = serialize_weights(params);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("save_weights: cannot open " + path + " for writing");
  f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!f) throw IoError("save_weights: short write to " + path);
}

inline std::vector<NamedArray> parse_weights(const std::string& blob, const std::string& origin) {
  const auto* p = reinterpret_cast<const unsigned char*>(blob.data());
  if (blob.size() < 9 || blob.compare(0, 4, "MGHF") != 0)
    throw IoError(origin + ": not a weights container (bad magic)");
  if (p[4] != kWeightsVersion)
    throw IoError(origin + ": unsupported container version " + std::to_string(p[4]));
  const std::uint32_t hdr_len = detail::get_u32_le(p + 5);
  if (blob.size() < 9 + static_cast<std::size_t>(hdr_len))
    throw IoError(origin + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(9, hdr_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(origin + ": malformed header: " + e.what());
  }
  if (!header.is_array()) throw IoError(origin + ": header must be a JSON array");

  std::vector<NamedArray> arrays;
  std::size_t off = 9 + hdr_len;
  for (const auto& entry : header) {
    if (!entry.contains("name") || !entry.contains("shape"))
      throw IoError(origin + ": header entry missing name or shape");
    NamedArray a;
    a.name = entry["name"].get<std::string>();
    for (const auto& d : entry["shape"]) {
      const int dim = d.get<int>();
      if (dim < 1) throw IoError(origin + ": non-positive dimension in " + a.name);
      a.shape.push_back(dim);
    }
    const std::size_t n = detail::shape_elems(a.shape);
    if (off + 4 * n > blob.size()) throw IoError(origin + ": truncated payload at " + a.name);
    a.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t bits = detail::get_u32_le(p + off + 4 * i);
      a.values[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    off += 4 * n;
    arrays.push_back(std::move(a));
  }
  if (off != blob.size()) throw IoError(origin + ": trailing bytes after payload");
  return arrays;
}

inline std::vector<NamedArray> load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_weights: cannot open " + path);
  std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_weights(blob, path);
}

/// Rebuilds an extractor from a loaded container; the architecture is
/// inferred from the array shapes, so the file is self-describing.
inline DfeModel dfe_from_arrays(const std::vector<NamedArray>& arrays, double scale_clamp = 2.0) {
  const NamedArray* expand = nullptr;
  int max_block = -1;
  for (const auto& a : arrays) {
    if (a.name == "expand.w") expand = &a;
    if (a.name.rfind("block", 0) == 0) {
      const std::size_t dot = a.name.find('.');
      if (dot != std::string::npos)
        max_block = std::max(max_block, std::stoi(a.name.substr(5, dot - 5)));
    }
  }
  if (!expand || expand->shape.size() != 4 || expand->shape[1] != 3)
    throw IoError("weights: missing or malformed expand.w");
  const int n_channels = expand->shape[0];

  int hidden = 0;
  for (const auto& a : arrays)
    if (a.name == "block0.i1.conv1.w") {
      if (a.shape.size() != 4) throw IoError("weights: malformed block0.i1.conv1.w");
      hidden = a.shape[0];
    }
  if (max_block >= 0 && hidden == 0) throw IoError("weights: missing block0.i1.conv1.w");

  DfeModel m = make_dfe(n_channels, max_block + 1, hidden, scale_clamp);
  auto refs = collect_params(m);
  if (refs.size() != arrays.size())
    throw IoError("weights: container holds " + std::to_string(arrays.size()) +
                  " arrays, architecture expects " + std::to_string(refs.size()));
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (arrays[i].name != refs[i].name)
      throw IoError("weights: array " + std::to_string(i) + " named " + arrays[i].name +
                    ", expected " + refs[i].name);
    if (arrays[i].shape != refs[i].shape)
      throw IoError("weights: shape mismatch at " + arrays[i].name);
    *refs[i].data = arrays[i].values;
  }
  return m;
}

inline DfeModel load_dfe(const std::string& path, double scale_clamp = 2.0) {
  return dfe_from_arrays(load_weights(path), scale_clamp);
}

}  // namespace mghf
