#include "coach/binary_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

#include "coach/errors.hpp"

namespace coach {

namespace io {
namespace {

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(T));
  out.write(bytes.data(), bytes.size());
  if (!out) throw FormatError("write failed");
}

template <typename T>
T get(std::istream& in) {
  std::array<char, sizeof(T)> bytes;
  in.read(bytes.data(), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw FormatError("unexpected end of file");
  }
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}

}  // namespace

void write_u8(std::ostream& out, std::uint8_t v) { put(out, v); }
void write_u16(std::ostream& out, std::uint16_t v) { put(out, v); }
void write_u32(std::ostream& out, std::uint32_t v) { put(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { put(out, v); }
void write_i64(std::ostream& out, std::int64_t v) { put(out, v); }
void write_f32(std::ostream& out, float v) { put(out, v); }
void write_f64(std::ostream& out, double v) { put(out, v); }

void write_string(std::ostream& out, std::string_view s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void write_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

std::uint8_t read_u8(std::istream& in) { return get<std::uint8_t>(in); }
std::uint16_t read_u16(std::istream& in) { return get<std::uint16_t>(in); }
std::uint32_t read_u32(std::istream& in) { return get<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return get<std::uint64_t>(in); }
std::int64_t read_i64(std::istream& in) { return get<std::int64_t>(in); }
float read_f32(std::istream& in) { return get<float>(in); }
double read_f64(std::istream& in) { return get<double>(in); }

std::string read_string(std::istream& in) {
  const auto n = read_u32(in);
  if (n > (1u << 30)) throw FormatError("string length out of range");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (in.gcount() != static_cast<std::streamsize>(n)) throw FormatError("unexpected end of file");
  return s;
}

void expect_magic(std::istream& in, std::string_view magic, std::string_view what) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) || got != magic) {
    throw FormatError(std::string(what) + ": bad header or version (expected " + std::string(magic) + ")");
  }
}

void write_tensor(std::ostream& out, const Tensor& t) {
  write_u8(out, static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) write_u32(out, static_cast<std::uint32_t>(d));
  for (double v : t.values()) write_f64(out, v);
}

Tensor read_tensor(std::istream& in) {
  const auto rank = read_u8(in);
  Shape shape(rank);
  for (auto& d : shape) d = read_u32(in);
  const auto n = shape_size(shape);
  if (n > (std::size_t{1} << 31)) throw FormatError("tensor too large");
  std::vector<double> data(n);
  for (auto& v : data) v = read_f64(in);
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace io
}  // namespace coach
