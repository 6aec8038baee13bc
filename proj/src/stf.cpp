#include "saca/stf.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <vector>

#include "json.hpp"
#include "saca/errors.hpp"

namespace saca {

namespace {

static_assert(std::endian::native == std::endian::little, "payload I/O assumes a little-endian host");

std::string header_line(const Shape& shape) {
  std::string s = "{\"shape\":[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(shape[i]);
  }
  s += "],\"dtype\":\"f32\"}\n";
  return s;
}

}  // namespace

void write_stf(std::FILE* f, const Tensor& t) {
  if (!t.defined()) throw ValueError("write_stf: undefined tensor");
  const std::string header = header_line(t.shape());
  if (std::fwrite(header.data(), 1, header.size(), f) != header.size()) {
    throw IoError("write_stf: header write failed");
  }
  const auto& v = t.values();
  std::vector<float> payload(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) payload[i] = static_cast<float>(v[i]);
  if (!payload.empty() &&
      std::fwrite(payload.data(), sizeof(float), payload.size(), f) != payload.size()) {
    throw IoError("write_stf: payload write failed");
  }
}

Tensor read_stf(std::FILE* f) {
  std::string header;
  for (;;) {
    const int c = std::fgetc(f);
    if (c == EOF) throw IoError("read_stf: truncated header");
    if (c == '\n') break;
    header.push_back(static_cast<char>(c));
    if (header.size() > 1 << 16) throw IoError("read_stf: header line too long");
  }
  nlohmann::json j = nlohmann::json::parse(header, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("shape") || !j.contains("dtype")) {
    throw IoError("read_stf: malformed header");
  }
  if (j["dtype"] != "f32") throw IoError("read_stf: unsupported dtype");
  Shape shape;
  for (const auto& d : j["shape"]) {
    if (!d.is_number_integer()) throw IoError("read_stf: non-integer shape entry");
    shape.push_back(d.get<int>());
  }
  if (shape.empty()) throw IoError("read_stf: empty shape");
  for (int d : shape) {
    if (d <= 0) throw IoError("read_stf: nonpositive shape entry");
  }
  const std::size_t n = shape_numel(shape);
  std::vector<float> payload(n);
  if (std::fread(payload.data(), sizeof(float), n, f) != n) {
    throw IoError("read_stf: truncated payload");
  }
  Tensor out(shape);
  auto& v = out.values();
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(payload[i]);
  return out;
}

void save_stf(const std::string& path, const Tensor& t) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("save_stf: cannot open " + path);
  try {
    write_stf(f, t);
  } catch (...) {
    std::fclose(f);
    throw;
  }
  if (std::fclose(f) != 0) throw IoError("save_stf: close failed for " + path);
}

Tensor load_stf(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("load_stf: cannot open " + path);
  try {
    Tensor t = read_stf(f);
    std::fclose(f);
    return t;
  } catch (...) {
    std::fclose(f);
    throw;
  }
}

}  // namespace saca
