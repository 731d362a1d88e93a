#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "drt/adamw.hpp"
#include "drt/param.hpp"

namespace drt {

// Checkpoint layout: one line of UTF-8 JSON (ending in '\n'), then the listed
// arrays as little-endian float32, in order. The header states the byte offset
// of the binary section. Values are quantized to float32 in memory at save
// time, so a resumed run and a continued run evolve identically.

inline void quantize_in_place(std::vector<double>& v) {
  for (double& x : v) x = double(float(x));
}

namespace detail {

inline void append_f32_le(std::string& out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  out.push_back(char(bits & 0xff));
  out.push_back(char((bits >> 8) & 0xff));
  out.push_back(char((bits >> 16) & 0xff));
  out.push_back(char((bits >> 24) & 0xff));
}

inline float read_f32_le(const unsigned char* p) {
  uint32_t bits = uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) |
                  (uint32_t(p[3]) << 24);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace detail

// Quantizes store values (and optimizer moments, if given) to float32 in
// memory, then writes them. `extra` carries caller metadata such as the
// training step.
inline void save_checkpoint(const std::string& path, ParamStore& store,
                            AdamWState* opt = nullptr,
                            const nlohmann::json& extra = nlohmann::json::object()) {
  quantize_in_place(store.value_vec());
  if (opt) {
    check_usage(int64_t(opt->m.size()) == store.size(), "optimizer state size mismatch");
    quantize_in_place(opt->m);
    quantize_in_place(opt->v);
  }

  nlohmann::json header;
  header["format_version"] = 1;
  header["param_count"] = store.size();
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : store.segments()) {
    segs.push_back({{"name", s.name},
                    {"offset", s.offset},
                    {"shape", s.shape},
                    {"frozen", s.frozen}});
  }
  header["segments"] = segs;
  nlohmann::json arrays = nlohmann::json::array();
  arrays.push_back({{"name", "values"}, {"count", store.size()}});
  if (opt) {
    arrays.push_back({{"name", "adam_m"}, {"count", store.size()}});
    arrays.push_back({{"name", "adam_v"}, {"count", store.size()}});
    header["optimizer"] = {{"lr", opt->cfg.lr},
                           {"beta1", opt->cfg.beta1},
                           {"beta2", opt->cfg.beta2},
                           {"eps", opt->cfg.eps},
                           {"weight_decay", opt->cfg.weight_decay},
                           {"t", opt->t}};
  }
  header["arrays"] = arrays;
  header["extra"] = extra;

  // byte_offset participates in the header length; iterate to a fixed point.
  int64_t offset = 0;
  std::string text;
  for (int pass = 0; pass < 8; ++pass) {
    header["byte_offset"] = offset;
    text = header.dump();
    int64_t need = int64_t(text.size()) + 1;
    if (need == offset) break;
    offset = need;
  }
  check_usage(int64_t(text.size()) + 1 == offset, "checkpoint header failed to stabilize");

  std::string blob = text;
  blob.push_back('\n');
  auto dump_array = [&blob](const std::vector<double>& v) {
    for (double x : v) detail::append_f32_le(blob, float(x));
  };
  dump_array(store.value_vec());
  if (opt) {
    dump_array(opt->m);
    dump_array(opt->v);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(blob.data(), std::streamsize(blob.size()));
  if (!out) throw IoError("short write to checkpoint: " + path);
}

// Reads only the header's `extra` object — enough to reconstruct the model
// layout before deciding how to load the arrays.
inline nlohmann::json read_checkpoint_extra(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("checkpoint has no header line: " + path);
  try {
    return nlohmann::json::parse(line).value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad checkpoint header: " + std::string(e.what()));
  }
}

// Loads into a store whose segment layout must match the file exactly. If
// `opt` is non-null the file must carry optimizer arrays. Returns the header's
// `extra` object.
inline nlohmann::json load_checkpoint(const std::string& path, ParamStore& store,
                                      AdamWState* opt = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  size_t nl = data.find('\n');
  if (nl == std::string::npos) throw ParseError("checkpoint has no header line: " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(data.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad checkpoint header: " + std::string(e.what()));
  }

  if (header.value("format_version", -1) != 1)
    throw ParseError("unsupported checkpoint format version");
  int64_t offset = header.value("byte_offset", int64_t(-1));
  if (offset != int64_t(nl) + 1) throw ParseError("checkpoint byte_offset mismatch");
  if (header.value("param_count", int64_t(-1)) != store.size())
    throw ConfigError("checkpoint parameter count does not match the model");

  const auto& segs = header.at("segments");
  if (segs.size() != store.segments().size())
    throw ConfigError("checkpoint segment list does not match the model");
  for (size_t i = 0; i < segs.size(); ++i) {
    const auto& file_seg = segs[i];
    const auto& seg = store.segments()[i];
    if (file_seg.at("name").get<std::string>() != seg.name ||
        file_seg.at("offset").get<int64_t>() != seg.offset ||
        file_seg.at("shape").get<std::vector<int64_t>>() != seg.shape)
      throw ConfigError("checkpoint segment '" + seg.name + "' does not match the model");
  }

  struct ArraySpec {
    std::string name;
    int64_t count;
  };
  std::vector<ArraySpec> specs;
  for (const auto& a : header.at("arrays"))
    specs.push_back({a.at("name").get<std::string>(), a.at("count").get<int64_t>()});

  int64_t need = 0;
  for (const auto& a : specs) need += a.count * 4;
  if (int64_t(data.size()) - offset < need) throw ParseError("checkpoint binary section truncated");

  const unsigned char* p = reinterpret_cast<const unsigned char*>(data.data()) + offset;
  auto read_array = [&p](std::vector<double>& dst, int64_t count) {
    dst.resize(size_t(count));
    for (int64_t i = 0; i < count; ++i, p += 4) dst[size_t(i)] = double(detail::read_f32_le(p));
  };

  bool have_opt = false;
  for (const auto& a : specs) {
    if (a.name == "values") {
      if (a.count != store.size()) throw ParseError("checkpoint values array has wrong length");
      read_array(store.value_vec(), a.count);
    } else if (a.name == "adam_m" && opt) {
      read_array(opt->m, a.count);
      have_opt = true;
    } else if (a.name == "adam_v" && opt) {
      read_array(opt->v, a.count);
    } else {
      p += a.count * 4;  // unknown or unwanted array: skip
    }
  }
  if (opt) {
    if (!have_opt) throw ConfigError("checkpoint carries no optimizer state");
    const auto& o = header.at("optimizer");
    opt->cfg.lr = o.at("lr").get<double>();
    opt->cfg.beta1 = o.at("beta1").get<double>();
    opt->cfg.beta2 = o.at("beta2").get<double>();
    opt->cfg.eps = o.at("eps").get<double>();
    opt->cfg.weight_decay = o.at("weight_decay").get<double>();
    opt->t = o.at("t").get<int64_t>();
  }
  return header.value("extra", nlohmann::json::object());
}

}  // namespace drt
