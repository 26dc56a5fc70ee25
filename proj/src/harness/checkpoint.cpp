#include "lopt/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "lopt/io.hpp"

namespace lopt {

namespace {

constexpr std::string_view kMagic = "LOPT";
constexpr std::string_view kStateMagic = "LOPS";

class Writer {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void i64(std::int64_t v) { put(static_cast<std::uint64_t>(v), 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void array(const NdArray& a) {
    for (double v : a.values()) f64(v);
  }
  std::string finish() {
    u64(fnv1a64(out_));
    return std::move(out_);
  }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view data, std::string_view magic) {
    if (data.size() < magic.size() + 12) throw CheckpointError("file too short (" + std::to_string(data.size()) + " bytes)");
    if (data.substr(0, magic.size()) != magic) throw CheckpointError("bad magic, expected " + std::string(magic));
    const std::string_view body = data.substr(0, data.size() - 8);
    std::uint64_t stored = 0;
    for (int i = 0; i < 8; ++i) {
      stored |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[body.size() + i])) << (8 * i);
    }
    if (stored != fnv1a64(body)) throw CheckpointError("checksum mismatch");
    data_ = body;
    pos_ = magic.size();
  }

  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  std::int64_t i64() { return static_cast<std::int64_t>(get(8)); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string_view bytes(std::size_t n) {
    need(n);
    const auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void array(NdArray& a) {
    need(8 * a.size());
    for (double& v : a.values()) v = f64();
  }
  void done() const {
    if (pos_ != data_.size()) throw CheckpointError(std::to_string(data_.size() - pos_) + " trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw CheckpointError("truncated at offset " + std::to_string(pos_) + ": need " + std::to_string(n) + " bytes");
    }
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string encode_checkpoint(const MetaParams& meta) {
  const Architecture& arch = meta.arch;
  const auto& names = MetaParams::names();
  Writer w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  w.u32(arch.flags.bits());
  w.u32(static_cast<std::uint32_t>(arch.flags.timescales));
  w.u32(static_cast<std::uint32_t>(arch.k_param));
  w.u32(static_cast<std::uint32_t>(arch.k_tensor));
  w.u32(static_cast<std::uint32_t>(arch.k_global));
  w.u32(static_cast<std::uint32_t>(meta.arrays.size()));
  for (std::size_t i = 0; i < meta.arrays.size(); ++i) {
    const NdArray& a = meta.arrays[i];
    w.u32(static_cast<std::uint32_t>(names[i].size()));
    w.bytes(names[i]);
    w.u32(static_cast<std::uint32_t>(a.rank()));
    for (std::int64_t d : a.shape().dims()) w.u64(static_cast<std::uint64_t>(d));
    w.array(a);
  }
  return w.finish();
}

MetaParams decode_checkpoint(std::string_view bytes) {
  Reader r(bytes, kMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw CheckpointError("unsupported version " + std::to_string(version));
  const std::uint32_t bits = r.u32();
  const std::uint32_t timescales = r.u32();
  if (timescales < 1 || timescales > 16) throw CheckpointError("bad timescale count " + std::to_string(timescales));
  MetaParams meta;
  meta.arch.flags = FeatureFlags::from_bits(bits, static_cast<int>(timescales));
  meta.arch.k_param = static_cast<int>(r.u32());
  meta.arch.k_tensor = static_cast<int>(r.u32());
  meta.arch.k_global = static_cast<int>(r.u32());
  const auto& names = MetaParams::names();
  const std::vector<Shape> shapes = MetaParams::shapes(meta.arch);
  const std::uint32_t count = r.u32();
  if (count != names.size()) {
    throw CheckpointError("expected " + std::to_string(names.size()) + " arrays, found " + std::to_string(count));
  }
  for (std::size_t i = 0; i < count; ++i) {
    const std::string_view name = r.bytes(r.u32());
    if (name != names[i]) throw CheckpointError("array " + std::to_string(i) + " is '" + std::string(name) + "', expected '" + names[i] + "'");
    const std::uint32_t rank = r.u32();
    if (rank > Shape::kMaxRank) throw CheckpointError(names[i] + ": rank " + std::to_string(rank));
    std::vector<std::int64_t> dims(rank);
    for (auto& d : dims) d = static_cast<std::int64_t>(r.u64());
    const Shape shape{std::span<const std::int64_t>(dims)};
    if (shape != shapes[i]) {
      throw CheckpointError(names[i] + ": shape " + shape.to_string() + " does not match " + shapes[i].to_string());
    }
    NdArray a(shape);
    r.array(a);
    meta.arrays.push_back(std::move(a));
  }
  r.done();
  return meta;
}

void save_checkpoint(const std::filesystem::path& path, const MetaParams& meta) {
  write_file_atomic(path, encode_checkpoint(meta));
}

MetaParams load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

std::string encode_training_state(const MetaTrainState& state) {
  Writer w;
  w.bytes(kStateMagic);
  w.u32(kCheckpointVersion);
  w.i64(state.iteration);
  w.u32(state.has_moving_avg ? 1 : 0);
  w.f64(state.moving_avg);
  w.f64(state.opt.learning_rate);
  w.f64(state.opt.decay);
  w.f64(state.opt.epsilon);
  w.i64(state.opt.updates);
  w.u32(static_cast<std::uint32_t>(state.opt.mean_square.size()));
  for (const NdArray& a : state.opt.mean_square) {
    w.u64(a.size());
    w.array(a);
  }
  return w.finish();
}

MetaTrainState decode_training_state(std::string_view bytes, MetaParams meta) {
  Reader r(bytes, kStateMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw CheckpointError("unsupported version " + std::to_string(version));
  MetaTrainState s;
  s.iteration = r.i64();
  s.has_moving_avg = r.u32() != 0;
  s.moving_avg = r.f64();
  s.opt.learning_rate = r.f64();
  s.opt.decay = r.f64();
  s.opt.epsilon = r.f64();
  s.opt.updates = r.i64();
  const std::uint32_t count = r.u32();
  if (count != meta.arrays.size()) throw CheckpointError("training state does not match the checkpoint");
  for (std::size_t i = 0; i < count; ++i) {
    if (r.u64() != meta.arrays[i].size()) throw CheckpointError("training state does not match the checkpoint");
    NdArray a(meta.arrays[i].shape());
    r.array(a);
    s.opt.mean_square.push_back(std::move(a));
  }
  r.done();
  s.meta = std::move(meta);
  return s;
}

std::filesystem::path training_state_path(const std::filesystem::path& checkpoint) {
  std::filesystem::path p = checkpoint;
  p += ".state";
  return p;
}

void save_training(const std::filesystem::path& checkpoint, const MetaTrainState& state) {
  write_file_atomic(training_state_path(checkpoint), encode_training_state(state));
  save_checkpoint(checkpoint, state.meta);
}

MetaTrainState load_training(const std::filesystem::path& checkpoint) {
  MetaParams meta = load_checkpoint(checkpoint);
  const auto path = training_state_path(checkpoint);
  try {
    return decode_training_state(read_file(path), std::move(meta));
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

}  // namespace lopt
