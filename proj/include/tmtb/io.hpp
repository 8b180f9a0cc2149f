#pragma once

#include "tmtb/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace tmtb::io {

// 8-bit PNG. Images are RGB tensors in [0, 1]; values are rounded to the
// nearest k/255 on write, so quantised images round-trip bit-exactly.
Image<float> read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image<float>& img);
std::vector<std::uint8_t> encode_png(const Image<float>& img);
Image<float> decode_png(const std::vector<std::uint8_t>& bytes);

/// Single-channel 8-bit PNG of a {0,1} mask (1 -> 255).
std::vector<std::uint8_t> encode_mask_png(const Raster<float>& mask);
Raster<float> decode_mask_png(const std::vector<std::uint8_t>& bytes);

/// Raw RGB8 buffer (row-major, interleaved) to PNG.
std::vector<std::uint8_t> encode_rgb8(const std::vector<std::uint8_t>& rgb, Index height, Index width);

// DMAP raster: "DMAP", u32 height, u32 width, u32 stride (little-endian),
// then height*width float32 values row-major.
void write_dmap(const std::filesystem::path& path, const DensityMap<float>& dm);
DensityMap<float> read_dmap(const std::filesystem::path& path);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::string sha256_hex(const void* data, std::size_t size);
inline std::string sha256_hex(const std::vector<std::uint8_t>& bytes) { return sha256_hex(bytes.data(), bytes.size()); }
inline std::string sha256_hex(std::string_view s) { return sha256_hex(s.data(), s.size()); }

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it over `path`, so readers
/// see either the old or the new content, never a partial file.
void write_file_atomic(const std::filesystem::path& path, const void* data, std::size_t size);
inline void write_file_atomic(const std::filesystem::path& path, std::string_view s) {
    write_file_atomic(path, s.data(), s.size());
}
inline void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& b) {
    write_file_atomic(path, b.data(), b.size());
}

}  // namespace tmtb::io
