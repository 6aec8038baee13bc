#pragma once

#include <cstdio>
#include <string>

#include "saca/tensor.hpp"

namespace saca {

// STF: one JSON header line {"shape":[...],"dtype":"f32"} ending in '\n',
// then the raw little-endian IEEE-754 float payload in row-major order.
// Values are rounded to f32 on write and widened back on read, so a
// write/read/write cycle is bit-stable.

void write_stf(std::FILE* f, const Tensor& t);
Tensor read_stf(std::FILE* f);

void save_stf(const std::string& path, const Tensor& t);
Tensor load_stf(const std::string& path);

}  // namespace saca
