#pragma once

// Reader for the IDX format used by the MNIST files.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "lopt/ndarray.hpp"

namespace lopt {

class IdxError : public std::runtime_error {
 public:
  IdxError(const std::string& what, std::uint64_t offset);
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Unsigned-byte IDX tensor.
struct IdxData {
  std::vector<std::int64_t> dims;
  std::vector<std::uint8_t> values;
};

/// Throws IdxError on a bad magic, unsupported element type or a size that
/// does not match the header.
IdxData parse_idx(std::string_view bytes);
IdxData load_idx(const std::filesystem::path& path);

/// Images as [count, rows*cols] scaled to [0, 1].
NdArray idx_images(const IdxData& data);
/// Labels; throws IdxError when a value exceeds 9.
std::vector<int> idx_labels(const IdxData& data);

}  // namespace lopt
