#include "valimetrics/image.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iterator>

#include "valimetrics/error.hpp"

namespace valimetrics {

GrayImage::GrayImage(int w, int h, std::vector<double> values)
    : width(w), height(h), data(std::move(values)) {
  if (data.size() != static_cast<std::size_t>(w) * h) {
    throw Error(Errc::DimensionMismatch, "gray image data length does not match width*height");
  }
}

GrayImage to_luma(const Image8& image) {
  GrayImage out(image.width, image.height);
  const std::size_t n = image.pixel_count();
  if (image.channels == 1) {
    for (std::size_t i = 0; i < n; ++i) out.data[i] = image.data[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint8_t* p = &image.data[i * image.channels];
      out.data[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
  }
  return out;
}

std::vector<GrayImage> split_channels(const Image8& image) {
  std::vector<GrayImage> planes(image.channels, GrayImage(image.width, image.height));
  const std::size_t n = image.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < image.channels; ++c) {
      planes[c].data[i] = image.data[i * image.channels + c];
    }
  }
  return planes;
}

int intensity_level(double v) {
  const long r = std::lround(v);
  return static_cast<int>(std::clamp<long>(r, 0, 255));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

namespace {

void write_atomically(const std::filesystem::path& path, const char* data, std::size_t size) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + tmp.string());
    out.write(data, static_cast<std::streamsize>(size));
    if (!out) throw Error(Errc::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(Errc::IoError, "cannot rename onto " + path.string() + ": " + ec.message());
}

bool has_png_signature(std::span<const std::uint8_t> b) {
  static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  return b.size() >= 8 && std::equal(sig, sig + 8, b.begin());
}

bool has_jpeg_signature(std::span<const std::uint8_t> b) {
  return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

// libpng simplified API -----------------------------------------------------

struct PngImage {
  png_image img{};
  PngImage() {
    img.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&img); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

ImageHeader png_header(std::span<const std::uint8_t> bytes) {
  PngImage png;
  if (!png_image_begin_read_from_memory(&png.img, bytes.data(), bytes.size())) {
    throw Error(Errc::DecodeError, png.img.message);
  }
  ImageHeader h;
  h.codec = Codec::Png;
  h.width = static_cast<int>(png.img.width);
  h.height = static_cast<int>(png.img.height);
  h.channels = (png.img.format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1;
  h.bit_depth = (png.img.format & PNG_FORMAT_FLAG_LINEAR) ? 16 : 8;
  return h;
}

Image8 decode_png(std::span<const std::uint8_t> bytes) {
  PngImage png;
  if (!png_image_begin_read_from_memory(&png.img, bytes.data(), bytes.size())) {
    throw Error(Errc::DecodeError, png.img.message);
  }
  if (png.img.format & PNG_FORMAT_FLAG_LINEAR) {
    throw Error(Errc::DecodeError, "only 8-bit PNG images are supported");
  }
  const bool color = png.img.format & PNG_FORMAT_FLAG_COLOR;
  png.img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image8 out(static_cast<int>(png.img.width), static_cast<int>(png.img.height), color ? 3 : 1);
  if (!png_image_finish_read(&png.img, nullptr, out.data.data(), 0, nullptr)) {
    throw Error(Errc::DecodeError, png.img.message);
  }
  return out;
}

// libjpeg ---------------------------------------------------------------------

struct JpegErrorManager {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

void jpeg_silent(j_common_ptr, int) {}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image8& image) {
  PngImage png;
  png.img.width = static_cast<png_uint_32>(image.width);
  png.img.height = static_cast<png_uint_32>(image.height);
  png.img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(png.img, size, 0, image.data.data(), 0, nullptr)) {
    throw Error(Errc::EncodeError, png.img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png.img, out.data(), &size, 0, image.data.data(), 0, nullptr)) {
    throw Error(Errc::EncodeError, png.img.message);
  }
  out.resize(size);
  return out;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  write_file(path, encode_png(image));
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  write_atomically(path, reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_atomically(path, text.data(), text.size());
}

std::vector<std::uint8_t> encode_jpeg(const Image8& image, int quality) {
  if (quality < 1 || quality > 100) {
    throw Error(Errc::QualityOutOfRange, "JPEG quality must be in [1,100], got " + std::to_string(quality));
  }
  if (image.channels != 1 && image.channels != 3) {
    throw Error(Errc::EncodeError, "JPEG encoder needs 1 or 3 channels");
  }
  jpeg_compress_struct cinfo{};
  JpegErrorManager err{};
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(buffer);
    throw Error(Errc::EncodeError, err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buffer, &size);
  cinfo.image_width = static_cast<JDIMENSION>(image.width);
  cinfo.image_height = static_cast<JDIMENSION>(image.height);
  cinfo.input_components = image.channels;
  cinfo.in_color_space = image.channels == 3 ? JCS_RGB : JCS_GRAYSCALE;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  if (image.channels == 3) {
    const int luma_factor = quality >= 90 ? 1 : 2;
    cinfo.comp_info[0].h_samp_factor = luma_factor;
    cinfo.comp_info[0].v_samp_factor = luma_factor;
    for (int c = 1; c < 3; ++c) {
      cinfo.comp_info[c].h_samp_factor = 1;
      cinfo.comp_info[c].v_samp_factor = 1;
    }
  }
  jpeg_start_compress(&cinfo, TRUE);
  const auto stride = static_cast<std::size_t>(image.width) * image.channels;
  while (cinfo.next_scanline < cinfo.image_height) {
    auto* row = const_cast<JSAMPLE*>(&image.data[cinfo.next_scanline * stride]);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  std::vector<std::uint8_t> out(buffer, buffer + size);
  jpeg_destroy_compress(&cinfo);
  std::free(buffer);
  return out;
}

namespace {

ImageHeader jpeg_header(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  err.pub.emit_message = jpeg_silent;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(Errc::DecodeError, err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  ImageHeader h;
  h.codec = Codec::Jpeg;
  h.width = static_cast<int>(cinfo.image_width);
  h.height = static_cast<int>(cinfo.image_height);
  h.channels = cinfo.num_components == 1 ? 1 : 3;
  h.bit_depth = cinfo.data_precision;
  jpeg_destroy_decompress(&cinfo);
  return h;
}

}  // namespace

Image8 decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  Image8 out;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  err.pub.emit_message = jpeg_silent;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(Errc::DecodeError, err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out = Image8(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height),
               cinfo.output_components);
  const auto stride = static_cast<std::size_t>(out.width) * out.channels;
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPLE* row = &out.data[cinfo.output_scanline * stride];
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

Image8 decode_image(std::span<const std::uint8_t> bytes) {
  if (has_png_signature(bytes)) return decode_png(bytes);
  if (has_jpeg_signature(bytes)) return decode_jpeg(bytes);
  throw Error(Errc::DecodeError, "unrecognized image signature");
}

ImageHeader probe_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    if (has_png_signature(bytes)) return png_header(bytes);
    if (has_jpeg_signature(bytes)) return jpeg_header(bytes);
  } catch (const Error& e) {
    throw Error(Errc::DecodeError, path.string() + ": " + e.what());
  }
  throw Error(Errc::DecodeError, path.string() + ": unrecognized image signature");
}

Image8 read_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_image(bytes);
  } catch (const Error& e) {
    throw Error(Errc::DecodeError, path.string() + ": " + e.what());
  }
}

}  // namespace valimetrics
