#pragma once

#include <algorithm>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "instloc/common.hpp"
#include "instloc/geometry/camera.hpp"

namespace instloc::ingest
{
namespace detail
{
struct FileCloser
{
  void operator()(std::FILE* f) const
  {
    if (f != nullptr)
    {
      std::fclose(f);
    }
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline void PngWarning(png_structp, png_const_charp) {}

/// Decoded PNG with 8- or 16-bit samples, stored as 16-bit values.
struct RawPng
{
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;
};

// libpng reports errors by longjmp back to the setjmp below. Every object
// with a destructor in these frames is constructed before setjmp so the jump
// skips none of them.
inline RawPng ReadPng(const std::filesystem::path& path)
{
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file)
  {
    throw InputError("cannot open image " + path.string());
  }
  RawPng out;
  std::vector<std::uint8_t> buffer;
  std::vector<png_bytep> rows;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, PngWarning);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png)))
  {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("corrupt png " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE)
  {
    png_set_palette_to_rgb(png);
  }
  if (color == PNG_COLOR_TYPE_GRAY && out.bit_depth < 8)
  {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (color & PNG_COLOR_MASK_ALPHA)
  {
    png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * static_cast<std::size_t>(out.height));
  rows.resize(static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y)
  {
    rows[static_cast<std::size_t>(y)] = buffer.data() + rowbytes * static_cast<std::size_t>(y);
  }
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t count = static_cast<std::size_t>(out.width) * out.height * out.channels;
  out.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i)
  {
    // PNG stores 16-bit samples big-endian.
    out.samples[i] = out.bit_depth == 16 ? static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1])
                                         : buffer[i];
  }
  return out;
}

/// bytes: row-major samples; 16-bit samples in host order.
inline void WritePng(const std::filesystem::path& path, int width, int height, int channels, int bit_depth,
                     const std::uint8_t* bytes)
{
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file)
  {
    throw InputError("cannot write image " + path.string());
  }
  const std::size_t rowbytes = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
  std::vector<std::uint8_t> row(rowbytes);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, PngWarning);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png)))
  {
    png_destroy_write_struct(&png, &info);
    throw InputError("failed writing png " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
  {
    const std::uint8_t* src = bytes + rowbytes * static_cast<std::size_t>(y);
    if (bit_depth == 16)
    {
      for (std::size_t i = 0; i + 1 < rowbytes; i += 2)
      {
        row[i] = src[i + 1];
        row[i + 1] = src[i];
      }
    }
    else
    {
      std::copy(src, src + rowbytes, row.begin());
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}
}  // namespace detail

inline geometry::RgbImage ReadRgbPng(const std::filesystem::path& path)
{
  const auto raw = detail::ReadPng(path);
  if (raw.channels != 3 && raw.channels != 1)
  {
    throw InputError("unsupported channel count in " + path.string());
  }
  geometry::RgbImage img(raw.width, raw.height);
  const int shift = raw.bit_depth == 16 ? 8 : 0;
  for (std::size_t p = 0; p < static_cast<std::size_t>(raw.width) * raw.height; ++p)
  {
    for (int c = 0; c < 3; ++c)
    {
      const std::size_t src = raw.channels == 3 ? 3 * p + static_cast<std::size_t>(c) : p;
      img.data[3 * p + static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(raw.samples[src] >> shift);
    }
  }
  return img;
}

inline geometry::DepthImage ReadDepthPng(const std::filesystem::path& path)
{
  const auto raw = detail::ReadPng(path);
  if (raw.channels != 1 || raw.bit_depth != 16)
  {
    throw InputError("depth image must be 16-bit single channel: " + path.string());
  }
  geometry::DepthImage img(raw.width, raw.height);
  img.data = raw.samples;
  return img;
}

inline void WriteRgbPng(const std::filesystem::path& path, const geometry::RgbImage& img)
{
  detail::WritePng(path, img.width, img.height, 3, 8, img.data.data());
}

inline void WriteDepthPng(const std::filesystem::path& path, const geometry::DepthImage& img)
{
  detail::WritePng(path, img.width, img.height, 1, 16, reinterpret_cast<const std::uint8_t*>(img.data.data()));
}
}  // namespace instloc::ingest
