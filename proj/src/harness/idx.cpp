#include "lopt/idx.hpp"

#include <algorithm>

#include "lopt/io.hpp"

namespace lopt {

IdxError::IdxError(const std::string& what, std::uint64_t offset)
    : std::runtime_error(what + " (offset " + std::to_string(offset) + ")"), offset_(offset) {}

IdxData parse_idx(std::string_view bytes) {
  if (bytes.size() < 4) throw IdxError("expected 4-byte header, file has " + std::to_string(bytes.size()) + " bytes", 0);
  const auto byte = [&](std::size_t i) { return static_cast<std::uint8_t>(bytes[i]); };
  if (byte(0) != 0 || byte(1) != 0) throw IdxError("bad magic", 0);
  if (byte(2) != 0x08) throw IdxError("unsupported element type " + std::to_string(byte(2)), 2);
  const std::size_t rank = byte(3);
  if (rank == 0) throw IdxError("rank 0", 3);
  const std::size_t header = 4 + 4 * rank;
  if (bytes.size() < header) {
    throw IdxError("truncated header: expected " + std::to_string(header) + " bytes, got " + std::to_string(bytes.size()),
                   bytes.size());
  }
  IdxData data;
  std::uint64_t count = 1;
  for (std::size_t d = 0; d < rank; ++d) {
    const std::size_t at = 4 + 4 * d;
    const std::uint32_t extent = (std::uint32_t{byte(at)} << 24) | (std::uint32_t{byte(at + 1)} << 16) |
                                 (std::uint32_t{byte(at + 2)} << 8) | std::uint32_t{byte(at + 3)};
    data.dims.push_back(extent);
    count *= extent;
  }
  const std::uint64_t expected = header + count;
  if (bytes.size() != expected) {
    throw IdxError("size mismatch: expected " + std::to_string(expected) + " bytes, got " + std::to_string(bytes.size()),
                   std::min<std::uint64_t>(bytes.size(), expected));
  }
  data.values.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return data;
}

IdxData load_idx(const std::filesystem::path& path) { return parse_idx(read_file(path)); }

NdArray idx_images(const IdxData& data) {
  if (data.dims.size() != 3) throw IdxError("image file must have rank 3, got " + std::to_string(data.dims.size()), 3);
  const std::int64_t n = data.dims[0];
  const std::int64_t pixels = data.dims[1] * data.dims[2];
  std::vector<double> v(data.values.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = data.values[i] / 255.0;
  return NdArray(Shape{n, pixels}, std::move(v));
}

std::vector<int> idx_labels(const IdxData& data) {
  if (data.dims.size() != 1) throw IdxError("label file must have rank 1, got " + std::to_string(data.dims.size()), 3);
  std::vector<int> out;
  for (std::size_t i = 0; i < data.values.size(); ++i) {
    if (data.values[i] > 9) throw IdxError("label " + std::to_string(data.values[i]) + " outside [0, 9]", 8 + i);
    out.push_back(data.values[i]);
  }
  return out;
}

}  // namespace lopt
