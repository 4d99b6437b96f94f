#pragma once

#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>

#include <jpeglib.h>
#include <png.h>

#include "fcmir/image.hpp"
#include "fcmir/util.hpp"

namespace fcmir {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngReadCtx {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReadCtx() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

struct PngWriteCtx {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriteCtx() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

inline void png_string_writer(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), len);
}

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

}  // namespace detail

inline Image load_png(const std::filesystem::path& path) {
  detail::FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw StageError("cannot open image: " + path.string());

  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8))
    throw StageError("not a PNG file: " + path.string());

  detail::PngReadCtx ctx;
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!ctx.png) throw StageError("png_create_read_struct failed");
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.info) throw StageError("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(ctx.png))) throw StageError("PNG decode failed: " + path.string());

  png_init_io(ctx.png, fp.get());
  png_set_sig_bytes(ctx.png, 8);
  png_read_info(ctx.png, ctx.info);

  png_set_expand(ctx.png);
  png_set_strip_16(ctx.png);
  png_set_strip_alpha(ctx.png);
  png_set_gray_to_rgb(ctx.png);
  png_read_update_info(ctx.png, ctx.info);

  const int w = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
  const int h = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
  if (png_get_channels(ctx.png, ctx.info) != 3)
    throw StageError("unexpected channel count in " + path.string());

  Image img(w, h);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = reinterpret_cast<png_bytep>(&img.at(0, y));
  png_read_image(ctx.png, rows.data());
  png_read_end(ctx.png, nullptr);
  return img;
}

inline void save_png(const Image& img, const std::filesystem::path& path) {
  detail::FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw StageError("cannot write image: " + path.string());

  detail::PngWriteCtx ctx;
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!ctx.png) throw StageError("png_create_write_struct failed");
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.info) throw StageError("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(ctx.png))) throw StageError("PNG encode failed: " + path.string());

  png_init_io(ctx.png, fp.get());
  png_set_IHDR(ctx.png, ctx.info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);
  std::vector<png_const_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) rows[y] = reinterpret_cast<png_const_bytep>(&img.at(0, y));
  png_write_image(ctx.png, const_cast<png_bytepp>(rows.data()));
  png_write_end(ctx.png, nullptr);
}

/// PNG-encode into a memory buffer (for request attachments).
inline std::string encode_png(const Image& img) {
  detail::PngWriteCtx ctx;
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!ctx.png) throw StageError("png_create_write_struct failed");
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.info) throw StageError("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(ctx.png))) throw StageError("PNG encode failed");

  std::string out;
  png_set_write_fn(ctx.png, &out, detail::png_string_writer, nullptr);
  png_set_IHDR(ctx.png, ctx.info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);
  std::vector<png_const_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) rows[y] = reinterpret_cast<png_const_bytep>(&img.at(0, y));
  png_write_image(ctx.png, const_cast<png_bytepp>(rows.data()));
  png_write_end(ctx.png, nullptr);
  return out;
}

inline Image load_jpeg(const std::filesystem::path& path) {
  detail::FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw StageError("cannot open image: " + path.string());

  jpeg_decompress_struct cinfo{};
  detail::JpegErrorMgr jerr{};
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = detail::jpeg_error_exit;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw StageError("JPEG decode failed: " + path.string());
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, fp.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);

  Image img(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height));
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = reinterpret_cast<JSAMPROW>(&img.at(0, static_cast<int>(cinfo.output_scanline)));
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

/// Dispatch by extension (.png, .jpg, .jpeg; case-insensitive).
inline Image load_image(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".png") return load_png(path);
  if (ext == ".jpg" || ext == ".jpeg") return load_jpeg(path);
  throw StageError("unsupported image extension: " + path.string());
}

}  // namespace fcmir
