#ifndef DGSR_CHECKPOINT_HPP
#define DGSR_CHECKPOINT_HPP

#include "dgsr/tensor.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dgsr {

/// File layout:
///   "DGSRCKPT" | u32 version | u32 scalar bytes | u64 header length |
///   JSON header | raw tensor data in header order | u64 FNV-1a of all prior bytes
/// Integers are little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
struct Archive {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor<Scalar>>> tensors;

  const Tensor<Scalar>& at(const std::string& name) const;
};

/// Written to a temporary file and renamed into place.
template <typename Scalar>
void save_archive(const std::filesystem::path& path, const Archive<Scalar>& archive);

template <typename Scalar>
Archive<Scalar> load_archive(const std::filesystem::path& path);

struct ArchiveInfo {
  std::uint32_t version = 0;
  std::uint32_t scalar_bytes = 0;
  nlohmann::json meta;
};

/// Validates magic, version and checksum and returns the header only.
ArchiveInfo inspect_archive(const std::filesystem::path& path);

}  // namespace dgsr

#endif  // DGSR_CHECKPOINT_HPP
