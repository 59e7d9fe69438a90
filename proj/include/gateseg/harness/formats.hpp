#pragma once

// Serialized forms: RLE-JSON masks, NPY / nested-JSON feature tensors and the
// existence head document.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gateseg/features.hpp"
#include "gateseg/gating.hpp"
#include "gateseg/harness/errors.hpp"
#include "gateseg/mask.hpp"

namespace gateseg::harness {

using json = nlohmann::json;

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot create " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

inline json parse_json_file(const std::filesystem::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// RLE-JSON: {"w": int, "h": int, "counts": [int, ...]}

inline json rle_to_json(const RleMask& rle) {
  return json{{"w", rle.width}, {"h", rle.height}, {"counts", rle.counts}};
}

inline RleMask rle_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("RLE mask must be a JSON object");
  for (const char* key : {"w", "h", "counts"}) {
    if (!j.contains(key)) throw FormatError(std::string("RLE mask is missing \"") + key + "\"");
  }
  if (!j["w"].is_number_unsigned() || !j["h"].is_number_unsigned() || !j["counts"].is_array()) {
    throw FormatError("RLE mask fields have the wrong type");
  }
  RleMask rle;
  rle.width = j["w"].get<std::size_t>();
  rle.height = j["h"].get<std::size_t>();
  rle.counts.reserve(j["counts"].size());
  for (const auto& c : j["counts"]) {
    if (!c.is_number_unsigned()) throw FormatError("RLE counts must be non-negative integers");
    rle.counts.push_back(c.get<std::uint64_t>());
  }
  return rle;
}

/// A mask sequence as a JSON array of per-frame RLE objects.
inline json sequence_to_rle_json(const MaskSequence& seq) {
  json arr = json::array();
  for (const auto& m : seq.frames()) arr.push_back(rle_to_json(rle_encode(m)));
  return arr;
}

inline std::vector<Mask> frames_from_rle_json(const json& arr) {
  if (!arr.is_array()) throw FormatError("RLE-JSON sequence must be an array of frame objects");
  std::vector<Mask> frames;
  frames.reserve(arr.size());
  for (std::size_t t = 0; t < arr.size(); ++t) {
    try {
      frames.push_back(rle_decode(rle_from_json(arr[t])));
    } catch (const FormatError& e) {
      throw FormatError("frame " + std::to_string(t) + ": " + e.what());
    }
  }
  return frames;
}

// ---------------------------------------------------------------------------
// Feature tensors

namespace detail {

inline std::vector<std::size_t> npy_shape(const std::string& header) {
  const auto open = header.find('(', header.find("'shape'"));
  const auto close = header.find(')', open);
  if (open == std::string::npos || close == std::string::npos) throw FormatError("npy: missing shape");
  std::vector<std::size_t> shape;
  std::stringstream ss(header.substr(open + 1, close - open - 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" ") == std::string::npos) continue;
    shape.push_back(static_cast<std::size_t>(std::stoull(item)));
  }
  return shape;
}

} // namespace detail

/// NPY v1/v2, little-endian float64 or float32, C order, three dimensions.
inline FeatureTensor read_npy_tensor(const std::filesystem::path& path) {
  const std::string bytes = read_text(path);
  if (bytes.size() < 10 || bytes.compare(0, 6, "\x93NUMPY") != 0) {
    throw FormatError(path.string() + ": not an NPY file");
  }
  const auto major = static_cast<unsigned char>(bytes[6]);
  std::size_t header_len = 0, offset = 0;
  if (major == 1) {
    header_len = static_cast<unsigned char>(bytes[8]) | (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
    offset = 10;
  } else if (major == 2 || major == 3) {
    if (bytes.size() < 12) throw FormatError(path.string() + ": truncated NPY header");
    for (int i = 3; i >= 0; --i) header_len = (header_len << 8) | static_cast<unsigned char>(bytes[8 + static_cast<std::size_t>(i)]);
    offset = 12;
  } else {
    throw FormatError(path.string() + ": unsupported NPY version");
  }
  if (offset + header_len > bytes.size()) throw FormatError(path.string() + ": truncated NPY header");
  const std::string header = bytes.substr(offset, header_len);
  const bool f8 = header.find("'<f8'") != std::string::npos;
  const bool f4 = header.find("'<f4'") != std::string::npos;
  if (!f8 && !f4) throw FormatError(path.string() + ": dtype must be <f8 or <f4");
  if (header.find("'fortran_order': True") != std::string::npos) {
    throw FormatError(path.string() + ": fortran order is not supported");
  }
  const auto shape = detail::npy_shape(header);
  if (shape.size() != 3) throw FormatError(path.string() + ": expected a 3-D tensor");
  const std::size_t count = shape[0] * shape[1] * shape[2];
  const std::size_t width = f8 ? 8 : 4;
  const char* data = bytes.data() + offset + header_len;
  if (bytes.size() - offset - header_len != count * width) throw FormatError(path.string() + ": payload size mismatch");
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (f8) {
      std::memcpy(&values[i], data + i * 8, 8);
    } else {
      float v;
      std::memcpy(&v, data + i * 4, 4);
      values[i] = v;
    }
  }
  try {
    return FeatureTensor(shape[0], shape[1], shape[2], std::move(values));
  } catch (const InputError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_npy_tensor(const std::filesystem::path& path, const FeatureTensor& f) {
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" + std::to_string(f.tokens()) + ", " +
                       std::to_string(f.frames()) + ", " + std::to_string(f.dim()) + "), }";
  // pad so the payload starts on a 64-byte boundary; header ends with '\n'
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');
  std::string bytes = "\x93NUMPY";
  bytes.push_back('\x01');
  bytes.push_back('\x00');
  bytes.push_back(static_cast<char>(header.size() & 0xff));
  bytes.push_back(static_cast<char>((header.size() >> 8) & 0xff));
  bytes += header;
  const auto& v = f.values();
  bytes.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  write_text(path, bytes);
}

/// Nested JSON array [N][T][D].
inline FeatureTensor tensor_from_json(const json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty() || !j[0][0].is_array() || j[0][0].empty()) {
    throw FormatError("feature tensor must be a non-empty N x T x D nested array");
  }
  const std::size_t n = j.size(), t = j[0].size(), d = j[0][0].size();
  std::vector<double> values;
  values.reserve(n * t * d);
  for (const auto& a : j) {
    if (!a.is_array() || a.size() != t) throw FormatError("feature tensor is ragged along the frame axis");
    for (const auto& b : a) {
      if (!b.is_array() || b.size() != d) throw FormatError("feature tensor is ragged along the feature axis");
      for (const auto& v : b) {
        if (!v.is_number()) throw FormatError("feature tensor values must be numbers");
        values.push_back(v.get<double>());
      }
    }
  }
  try {
    return FeatureTensor(n, t, d, std::move(values));
  } catch (const InputError& e) {
    throw FormatError(e.what());
  }
}

inline json tensor_to_json(const FeatureTensor& f) {
  json out = json::array();
  for (std::size_t n = 0; n < f.tokens(); ++n) {
    json frames = json::array();
    for (std::size_t t = 0; t < f.frames(); ++t) {
      json row = json::array();
      for (std::size_t d = 0; d < f.dim(); ++d) row.push_back(f.at(n, t, d));
      frames.push_back(std::move(row));
    }
    out.push_back(std::move(frames));
  }
  return out;
}

/// `.npy` files are binary; anything else is parsed as the nested JSON form.
inline FeatureTensor load_tensor(const std::filesystem::path& path) {
  if (path.extension() == ".npy") return read_npy_tensor(path);
  return tensor_from_json(parse_json_file(path));
}

// ---------------------------------------------------------------------------
// Existence head: {h, d, w1, b1, w2, b2, seed, format_version}

inline constexpr int kHeadFormatVersion = 1;

inline json head_to_json(const ExistenceHead& head, std::uint64_t seed) {
  json w1 = json::array();
  for (std::size_t h = 0; h < head.hidden; ++h) {
    w1.push_back(std::vector<double>(head.w1.begin() + static_cast<std::ptrdiff_t>(h * head.dim),
                                     head.w1.begin() + static_cast<std::ptrdiff_t>((h + 1) * head.dim)));
  }
  return json{{"format_version", kHeadFormatVersion},
              {"h", head.hidden},
              {"d", head.dim},
              {"w1", std::move(w1)},
              {"b1", head.b1},
              {"w2", head.w2},
              {"b2", head.b2},
              {"seed", seed}};
}

inline ExistenceHead head_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != kHeadFormatVersion) {
      throw FormatError("unsupported head format_version");
    }
    ExistenceHead head;
    head.hidden = j.at("h").get<std::size_t>();
    head.dim = j.at("d").get<std::size_t>();
    for (const auto& row : j.at("w1")) {
      auto r = row.get<std::vector<double>>();
      if (r.size() != head.dim) throw FormatError("head w1 row length does not match d");
      head.w1.insert(head.w1.end(), r.begin(), r.end());
    }
    head.b1 = j.at("b1").get<std::vector<double>>();
    head.w2 = j.at("w2").get<std::vector<double>>();
    head.b2 = j.at("b2").get<double>();
    head.validate();
    return head;
  } catch (const json::exception& e) {
    throw FormatError(std::string("existence head: ") + e.what());
  } catch (const InputError& e) {
    throw FormatError(std::string("existence head: ") + e.what());
  }
}

} // namespace gateseg::harness
