#include "dgsr/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

#include <jpeglib.h>

namespace dgsr {

float from_byte(unsigned char v) { return float(v) / 127.5f - 1.0f; }

unsigned char to_byte(double x) {
  const double v = std::round((x + 1.0) * 127.5);
  return static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
}

namespace {

Tensor<float> from_interleaved(const std::vector<unsigned char>& rgb, int h, int w) {
  Tensor<float> out({1, 3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        out(0, c, y, x) = from_byte(rgb[(std::size_t(y) * w + x) * 3 + c]);
  return out;
}

Tensor<float> read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw ImageIoError(path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw ImageIoError(path.string() + ": " + image.message);
  }
  return from_interleaved(buffer, int(image.height), int(image.width));
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void on_jpeg_error(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Tensor<float> read_jpeg(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) throw ImageIoError(path.string() + ": cannot open");

  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = on_jpeg_error;
  std::vector<unsigned char> buffer;
  int h = 0, w = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw ImageIoError(path.string() + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  h = int(cinfo.output_height);
  w = int(cinfo.output_width);
  buffer.resize(std::size_t(h) * w * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    unsigned char* row = buffer.data() + std::size_t(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_interleaved(buffer, h, w);
}

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace

bool is_image_file(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

Tensor<float> read_image(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".jpg" || ext == ".jpeg") return read_jpeg(path);
  throw ImageIoError(path.string() + ": unsupported image format");
}

template <typename Scalar>
void write_png(const std::filesystem::path& path, const Tensor<Scalar>& image, int n) {
  const Shape s = image.shape();
  if (s.c != 3 && s.c != 1)
    throw std::invalid_argument("write_png: expected 1 or 3 channels, got " + s.str());
  if (n < 0 || n >= s.n) throw std::out_of_range("write_png: batch index out of range");
  std::vector<unsigned char> buffer(std::size_t(s.h) * s.w * s.c);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x)
      for (int c = 0; c < s.c; ++c)
        buffer[(std::size_t(y) * s.w + x) * s.c + c] = to_byte(double(image(n, c, y, x)));

  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = png_uint_32(s.w);
  png.height = png_uint_32(s.h);
  png.format = s.c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr))
    throw ImageIoError(path.string() + ": " + png.message);
}

template void write_png<float>(const std::filesystem::path&, const Tensor<float>&, int);
template void write_png<double>(const std::filesystem::path&, const Tensor<double>&, int);

}  // namespace dgsr
