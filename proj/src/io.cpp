#include "tmtb/io.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

namespace tmtb::io {

namespace {

std::uint8_t to_byte(float v) {
    const float c = std::min(1.0f, std::max(0.0f, v));
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

std::vector<std::uint8_t> encode_raw(const std::uint8_t* pixels, Index height, Index width, int channels) {
    require(height > 0 && width > 0, "png: empty image");
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    png_alloc_size_t size = 0;
    require(png_image_write_get_memory_size(image, size, 0, pixels, 0, nullptr) != 0,
            std::string("png: ") + image.message);
    std::vector<std::uint8_t> out(size);
    require(png_image_write_to_memory(&image, out.data(), &size, 0, pixels, 0, nullptr) != 0,
            std::string("png: ") + image.message);
    out.resize(size);
    return out;
}

/// Decodes to 8-bit with `channels` (1 or 3) channels, converting as needed.
std::vector<std::uint8_t> decode_raw(const std::vector<std::uint8_t>& bytes, int channels, Index& height,
                                     Index& width) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    require(png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()) != 0,
            std::string("png: ") + image.message);
    image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    height = image.height;
    width = image.width;
    std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
    if (png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr) == 0) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw Error("png: " + msg);
    }
    return pixels;
}

}  // namespace

std::vector<std::uint8_t> encode_rgb8(const std::vector<std::uint8_t>& rgb, Index height, Index width) {
    require_shape(static_cast<Index>(rgb.size()) == height * width * 3, "png: RGB buffer size mismatch");
    return encode_raw(rgb.data(), height, width, 3);
}

std::vector<std::uint8_t> encode_png(const Image<float>& img) {
    require_shape(img.channels() == 3, "png: expected a 3-channel image");
    // Column p of the tensor is pixel p, so the column-major storage is
    // already RGB-interleaved in row-major pixel order.
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(img.values.size()));
    for (Index i = 0; i < img.values.size(); ++i) rgb[static_cast<std::size_t>(i)] = to_byte(img.values.data()[i]);
    return encode_raw(rgb.data(), img.height, img.width, 3);
}

Image<float> decode_png(const std::vector<std::uint8_t>& bytes) {
    Index h = 0, w = 0;
    const auto rgb = decode_raw(bytes, 3, h, w);
    Image<float> img(3, h, w);
    for (Index i = 0; i < img.values.size(); ++i)
        img.values.data()[i] = static_cast<float>(rgb[static_cast<std::size_t>(i)]) / 255.0f;
    return img;
}

std::vector<std::uint8_t> encode_mask_png(const Raster<float>& mask) {
    std::vector<std::uint8_t> g(static_cast<std::size_t>(mask.size()));
    for (Index i = 0; i < mask.size(); ++i) g[static_cast<std::size_t>(i)] = mask.data()[i] > 0.5f ? 255 : 0;
    return encode_raw(g.data(), mask.rows(), mask.cols(), 1);
}

Raster<float> decode_mask_png(const std::vector<std::uint8_t>& bytes) {
    Index h = 0, w = 0;
    const auto g = decode_raw(bytes, 1, h, w);
    Raster<float> m(h, w);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = g[static_cast<std::size_t>(i)] >= 128 ? 1.0f : 0.0f;
    return m;
}

Image<float> read_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

void write_png(const std::filesystem::path& path, const Image<float>& img) { write_file_atomic(path, encode_png(img)); }

// ---------------------------------------------------------------------------

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

}  // namespace

void write_dmap(const std::filesystem::path& path, const DensityMap<float>& dm) {
    std::string out = "DMAP";
    put_u32(out, static_cast<std::uint32_t>(dm.height()));
    put_u32(out, static_cast<std::uint32_t>(dm.width()));
    put_u32(out, static_cast<std::uint32_t>(dm.stride));
    for (Index i = 0; i < dm.values.size(); ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, dm.values.data() + i, 4);
        put_u32(out, bits);
    }
    write_file_atomic(path, out);
}

DensityMap<float> read_dmap(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    require(bytes.size() >= 16 && std::memcmp(bytes.data(), "DMAP", 4) == 0, path.string() + ": not a DMAP file");
    const Index h = get_u32(bytes.data() + 4), w = get_u32(bytes.data() + 8), s = get_u32(bytes.data() + 12);
    require(bytes.size() == 16 + static_cast<std::size_t>(h * w) * 4, path.string() + ": truncated DMAP payload");
    DensityMap<float> dm(h, w, s);
    for (Index i = 0; i < h * w; ++i) {
        const std::uint32_t bits = get_u32(bytes.data() + 16 + 4 * i);
        std::memcpy(dm.values.data() + i, &bits, 4);
    }
    return dm;
}

// ---------------------------------------------------------------------------

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    require(text.size() % 4 == 0, "base64: length is not a multiple of 4");
    std::vector<std::uint8_t> out(3 * text.size() / 4);
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
    require(n >= 0, "base64: invalid input");
    // EVP_DecodeBlock keeps the bytes produced by '=' padding; drop them.
    std::size_t pad = 0;
    if (!text.empty() && text.back() == '=') ++pad;
    if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

std::string sha256_hex(const void* data, std::size_t size) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    require(EVP_Digest(data, size, md, &len, EVP_sha256(), nullptr) == 1, "sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 15]);
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), "cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_atomic(const std::filesystem::path& path, const void* data, std::size_t size) {
    static std::atomic<unsigned> counter{0};
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ostringstream suffix;
    suffix << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id()) << "." << counter++;
    const std::filesystem::path tmp = path.string() + suffix.str();
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(out), "cannot write " + tmp.string());
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
        require(static_cast<bool>(out), "short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace tmtb::io
