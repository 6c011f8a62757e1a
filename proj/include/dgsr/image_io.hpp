#ifndef DGSR_IMAGE_IO_HPP
#define DGSR_IMAGE_IO_HPP

#include "dgsr/tensor.hpp"

#include <filesystem>
#include <stdexcept>

namespace dgsr {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit value v maps to v / 127.5 - 1; the inverse rounds and saturates.
float from_byte(unsigned char v);
unsigned char to_byte(double x);

/// Decodes a PNG or JPEG file into a (1, 3, H, W) tensor in [-1, 1].
/// Grayscale and alpha inputs are converted to RGB.
Tensor<float> read_image(const std::filesystem::path& path);

/// Writes element n of an RGB (or single-channel) tensor as an 8-bit PNG.
template <typename Scalar>
void write_png(const std::filesystem::path& path, const Tensor<Scalar>& image, int n = 0);

bool is_image_file(const std::filesystem::path& path);

}  // namespace dgsr

#endif  // DGSR_IMAGE_IO_HPP
