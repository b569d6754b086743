#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "coach/tensor.hpp"

namespace coach {

/// Interleaved 8-bit RGB bytes (row-major, HWC) of a {3, H, W} frame.
std::vector<std::uint8_t> to_rgb8(const Observation& frame);

/// Encodes a {3, H, W} frame with values in [0, 1] as an 8-bit RGB PNG.
std::vector<std::uint8_t> encode_png(const Observation& frame);
void write_png(const std::string& path, const Observation& frame);
/// Debug frame export name: `frame_{episode}_{step}.png`.
std::string frame_file_name(int episode, std::int64_t step);

std::string base64_encode(std::string_view bytes);
inline std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  return base64_encode(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace coach
