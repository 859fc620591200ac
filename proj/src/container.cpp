#include "svae/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "svae/errors.hpp"

namespace svae {

namespace {

constexpr char kBitstreamMagic[4] = {'S', 'V', 'A', 'E'};
constexpr char kCheckpointMagic[4] = {'S', 'V', 'C', 'K'};
constexpr uint8_t kBitstreamVersion = 1;
constexpr uint8_t kCheckpointVersion = 1;

class ByteWriter {
 public:
  void raw(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  void u8(uint8_t v) { bytes_.push_back(v); }
  void u16(uint16_t v) { le(v); }
  void u32(uint32_t v) { le(v); }
  void u64(uint64_t v) { le(v); }
  void i16(int16_t v) { le(static_cast<uint16_t>(v)); }
  void i64(int64_t v) { le(static_cast<uint64_t>(v)); }
  void f64(double v) { le(std::bit_cast<uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::vector<uint8_t> take() { return std::move(bytes_); }

 private:
  template <typename T>
  void le(T v) {
    for (size_t i = 0; i < sizeof(T); ++i) bytes_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  std::vector<uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> bytes) : bytes_(bytes) {}
  void raw(void* p, size_t n) {
    need(n);
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  uint16_t u16() { return le<uint16_t>(); }
  uint32_t u32() { return le<uint32_t>(); }
  uint64_t u64() { return le<uint64_t>(); }
  int16_t i16() { return static_cast<int16_t>(le<uint16_t>()); }
  int64_t i64() { return static_cast<int64_t>(le<uint64_t>()); }
  double f64() { return std::bit_cast<double>(le<uint64_t>()); }
  std::string str() {
    const uint32_t n = u32();
    if (n > 4096) throw FormatError("unreasonable string length in stream");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError("truncated stream");
  }
  template <typename T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

}  // namespace

// ---- bitstream container -------------------------------------------------

std::vector<uint8_t> serialize_container(const BitstreamContainer& c) {
  ByteWriter w;
  w.raw(kBitstreamMagic, 4);
  w.u8(c.header.version);
  w.u8(c.header.mean_removal ? 0x01 : 0x00);
  w.u8(c.header.q);
  w.u16(c.header.channels);
  w.u32(c.header.width);
  w.u32(c.header.height);
  w.u8(c.header.pad_right);
  w.u8(c.header.pad_bottom);
  w.i16(c.header.z_min);
  w.i16(c.header.z_max);
  w.u32(static_cast<uint32_t>(c.z_payload.size()));
  w.raw(c.z_payload.data(), c.z_payload.size());
  w.i16(c.header.y_min);
  w.i16(c.header.y_max);
  w.u32(static_cast<uint32_t>(c.y_payload.size()));
  w.raw(c.y_payload.data(), c.y_payload.size());
  return w.take();
}

BitstreamContainer parse_container(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kBitstreamMagic, 4) != 0)
    throw FormatError("not a bitstream: bad magic");
  BitstreamContainer c;
  c.header.version = r.u8();
  if (c.header.version != kBitstreamVersion)
    throw FormatError("unsupported bitstream version " + std::to_string(c.header.version));
  const uint8_t flags = r.u8();
  c.header.mean_removal = (flags & 0x01) != 0;
  c.header.q = r.u8();
  c.header.channels = r.u16();
  c.header.width = r.u32();
  c.header.height = r.u32();
  c.header.pad_right = r.u8();
  c.header.pad_bottom = r.u8();
  if (c.header.width == 0 || c.header.height == 0)
    throw FormatError("bitstream header: empty image dimensions");
  c.header.z_min = r.i16();
  c.header.z_max = r.i16();
  const uint32_t z_len = r.u32();
  if (z_len > r.remaining()) throw FormatError("bitstream: hyperlatent payload truncated");
  c.z_payload.resize(z_len);
  r.raw(c.z_payload.data(), z_len);
  c.header.y_min = r.i16();
  c.header.y_max = r.i16();
  const uint32_t y_len = r.u32();
  if (y_len != r.remaining())
    throw FormatError("bitstream: latent payload length inconsistent with container size");
  c.y_payload.resize(y_len);
  r.raw(c.y_payload.data(), y_len);
  return c;
}

// ---- checkpoint ------------------------------------------------------------

namespace {

void write_network_config(ByteWriter& w, const NetworkConfig& c) {
  w.u32(static_cast<uint32_t>(c.channels));
  w.u32(static_cast<uint32_t>(c.q));
  w.u32(static_cast<uint32_t>(c.kernel));
  w.u32(static_cast<uint32_t>(c.num_layers));
  w.u32(static_cast<uint32_t>(c.hyper_channels));
  w.f64(c.sigma_floor);
  w.f64(c.pixel_max);
}

NetworkConfig read_network_config(ByteReader& r) {
  NetworkConfig c;
  c.channels = static_cast<int>(r.u32());
  c.q = static_cast<int>(r.u32());
  c.kernel = static_cast<int>(r.u32());
  c.num_layers = static_cast<int>(r.u32());
  c.hyper_channels = static_cast<int>(r.u32());
  c.sigma_floor = r.f64();
  c.pixel_max = r.f64();
  return c;
}

void write_train_config(ByteWriter& w, const TrainConfig& t) {
  w.f64(t.lambda);
  w.u32(static_cast<uint32_t>(t.batch_size));
  w.u32(static_cast<uint32_t>(t.crop));
  w.i64(t.steps);
  w.f64(t.lr_initial);
  w.f64(t.lr_final);
  w.i64(t.lr_drop_step);
  w.f64(t.clip_norm);
  w.u64(t.seed);
  w.f64(t.beta1);
  w.f64(t.beta2);
  w.f64(t.epsilon);
  w.f64(kDistortionScale);  // distortion convention recorded for auditability
}

TrainConfig read_train_config(ByteReader& r) {
  TrainConfig t;
  t.lambda = r.f64();
  t.batch_size = static_cast<int>(r.u32());
  t.crop = static_cast<int>(r.u32());
  t.steps = r.i64();
  t.lr_initial = r.f64();
  t.lr_final = r.f64();
  t.lr_drop_step = r.i64();
  t.clip_norm = r.f64();
  t.seed = r.u64();
  t.beta1 = r.f64();
  t.beta2 = r.f64();
  t.epsilon = r.f64();
  (void)r.f64();  // distortion scale, fixed by kDistortionScale
  return t;
}

}  // namespace

ModelParams model_skeleton(const NetworkConfig& config) {
  config.validate();
  // Zero tensors with init_network's shapes: run the initializer and blank it.
  ModelParams m = init_network(0, config);
  for (auto& [name, t] : m.named_parameters())
    std::fill(t.values().begin(), t.values().end(), 0.0);
  return m;
}

std::vector<uint8_t> serialize_checkpoint(const ModelParams& params, const TrainConfig& train,
                                          uint64_t step) {
  ByteWriter w;
  w.raw(kCheckpointMagic, 4);
  w.u8(kCheckpointVersion);
  write_network_config(w, params.config);
  write_train_config(w, train);
  w.u64(step);
  const auto named = params.named_parameters();
  w.u32(static_cast<uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    w.str(name);
    w.u32(static_cast<uint32_t>(t.shape().size()));
    for (int d : t.shape()) w.u32(static_cast<uint32_t>(d));
    for (double v : t.values()) w.f64(v);
  }
  return w.take();
}

Checkpoint parse_checkpoint(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw FormatError("not a checkpoint: bad magic");
  const uint8_t version = r.u8();
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.config = read_network_config(r);
  ck.train = read_train_config(r);
  ck.step = r.u64();
  ck.params = model_skeleton(ck.config);
  auto named = ck.params.named_parameters();
  const uint32_t count = r.u32();
  if (count != named.size())
    throw FormatError("checkpoint parameter count " + std::to_string(count) +
                      " does not match config (" + std::to_string(named.size()) + ")");
  for (auto& [name, t] : named) {
    const std::string stored = r.str();
    if (stored != name)
      throw FormatError("checkpoint parameter order mismatch: expected " + name + ", found " +
                        stored);
    const uint32_t rank = r.u32();
    Shape shape(rank);
    for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int>(r.u32());
    if (shape != t.shape())
      throw FormatError("checkpoint parameter " + name + " has shape " + shape_str(shape) +
                        ", expected " + shape_str(t.shape()));
    for (double& v : t.values()) v = r.f64();
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  return ck;
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(path + ": read failed");
  return bytes;
}

void write_file(const std::string& path, std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path + ": write failed");
}

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const TrainConfig& train, uint64_t step) {
  const auto bytes = serialize_checkpoint(params, train, step);
  write_file(path, bytes);
}

Checkpoint load_checkpoint(const std::string& path) {
  const auto bytes = read_file(path);
  return parse_checkpoint(bytes);
}

}  // namespace svae
