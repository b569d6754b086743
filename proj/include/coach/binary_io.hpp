#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

#include "coach/tensor.hpp"

namespace coach::io {

// Little-endian primitives shared by every on-disk container in the project.

void write_u8(std::ostream& out, std::uint8_t v);
void write_u16(std::ostream& out, std::uint16_t v);
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_i64(std::ostream& out, std::int64_t v);
void write_f32(std::ostream& out, float v);
void write_f64(std::ostream& out, double v);
void write_string(std::ostream& out, std::string_view s);
void write_magic(std::ostream& out, std::string_view magic);

std::uint8_t read_u8(std::istream& in);
std::uint16_t read_u16(std::istream& in);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
std::int64_t read_i64(std::istream& in);
float read_f32(std::istream& in);
double read_f64(std::istream& in);
std::string read_string(std::istream& in);
/// Throws FormatError naming `what` when the next bytes are not `magic`.
void expect_magic(std::istream& in, std::string_view magic, std::string_view what);

/// rank (u8), dims (u32 each), values (f64 each).
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

}  // namespace coach::io
