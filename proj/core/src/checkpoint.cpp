#include "gpf/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gpf/errors.hpp"

namespace gpf {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = kFnvOffset;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

class ByteWriter {
public:
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }

  template <typename T>
  void le(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      std::reverse(std::begin(bytes), std::end(bytes));
    }
    raw(bytes, sizeof(T));
  }

  void u8(std::uint8_t v) { le(v); }
  void u32(std::uint32_t v) { le(v); }
  void i32(std::int32_t v) { le(v); }
  void i64(std::int64_t v) { le(v); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }

  void f64s(const std::vector<double>& v) {
    for (double x : v) f64(x);
  }
  void i64s(const std::vector<std::int64_t>& v) {
    for (auto x : v) i64(x);
  }
  void bits(const std::vector<std::uint8_t>& flags) {
    std::vector<std::uint8_t> packed((flags.size() + 7) / 8, 0);
    for (std::size_t k = 0; k < flags.size(); ++k) {
      if (flags[k]) packed[k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
    }
    raw(packed.data(), packed.size());
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }

  const std::string& bytes() const { return buf_; }

private:
  std::string buf_;
};

class ByteReader {
public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  void raw(void* p, std::size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw FormatError("checkpoint truncated at byte " + std::to_string(pos_) + " (need " + std::to_string(n) +
                        " more, file has " + std::to_string(bytes_.size()) + ")");
    }
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }

  template <typename T>
  T le() {
    unsigned char bytes[sizeof(T)];
    raw(bytes, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      std::reverse(std::begin(bytes), std::end(bytes));
    }
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }

  std::uint8_t u8() { return le<std::uint8_t>(); }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::int32_t i32() { return le<std::int32_t>(); }
  std::int64_t i64() { return le<std::int64_t>(); }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }

  std::vector<double> f64s(std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  std::vector<std::int64_t> i64s(std::size_t n) {
    std::vector<std::int64_t> v(n);
    for (auto& x : v) x = i64();
    return v;
  }
  std::vector<std::uint8_t> bits(std::size_t n) {
    std::vector<std::uint8_t> packed((n + 7) / 8);
    raw(packed.data(), packed.size());
    std::vector<std::uint8_t> flags(n);
    for (std::size_t k = 0; k < n; ++k) {
      flags[k] = (packed[k / 8] >> (k % 8)) & 1u;
    }
    return flags;
  }
  std::string str() {
    const auto n = u32();
    if (n > bytes_.size() - pos_) throw FormatError("checkpoint string length exceeds file");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }

  std::size_t position() const { return pos_; }

private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

void write_config(ByteWriter& w, const GpfConfig& c) {
  w.i32(c.input_dim);
  w.i32(c.hidden_width);
  w.i32(c.output_dim);
  w.i32(c.initial_hidden_layers);
  w.i32(c.max_hidden_layers);
  w.i32(c.enable_patience);
  w.i32(c.grow_patience);
  w.i32(c.prune_patience);
  w.i32(c.freeze_patience);
  w.i32(c.base_batch_size);
  w.u8(c.standalone_prune ? 1 : 0);
  w.u8(c.prune_magnitude_threshold ? 1 : 0);
  w.f64(c.prune_magnitude_threshold.value_or(0.0));
  w.f64(c.stagnation_threshold);
  w.f64(c.belief_prune_threshold);
  w.f64(c.prune_percentile);
  w.f64(c.freeze_change_threshold);
  w.f64(c.freeze_fraction);
  w.f64(c.belief_increment);
  w.f64(c.belief_magnitude);
  w.f64(c.batch_decay);
  w.f64(c.learning_rate);
  w.f64(c.adam_beta1);
  w.f64(c.adam_beta2);
  w.f64(c.adam_epsilon);
}

GpfConfig read_config(ByteReader& r) {
  GpfConfig c;
  c.input_dim = r.i32();
  c.hidden_width = r.i32();
  c.output_dim = r.i32();
  c.initial_hidden_layers = r.i32();
  c.max_hidden_layers = r.i32();
  c.enable_patience = r.i32();
  c.grow_patience = r.i32();
  c.prune_patience = r.i32();
  c.freeze_patience = r.i32();
  c.base_batch_size = r.i32();
  c.standalone_prune = r.u8() != 0;
  const bool has_threshold = r.u8() != 0;
  const double threshold = r.f64();
  if (has_threshold) c.prune_magnitude_threshold = threshold;
  c.stagnation_threshold = r.f64();
  c.belief_prune_threshold = r.f64();
  c.prune_percentile = r.f64();
  c.freeze_change_threshold = r.f64();
  c.freeze_fraction = r.f64();
  c.belief_increment = r.f64();
  c.belief_magnitude = r.f64();
  c.batch_decay = r.f64();
  c.learning_rate = r.f64();
  c.adam_beta1 = r.f64();
  c.adam_beta2 = r.f64();
  c.adam_epsilon = r.f64();
  return c;
}

}  // namespace

std::string checkpoint_bytes(const Checkpoint& ckpt) {
  const auto& net = ckpt.network;
  ByteWriter w;
  w.raw(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& layer : net.layers()) {
    w.u32(static_cast<std::uint32_t>(layer.out_dim()));
    w.u32(static_cast<std::uint32_t>(layer.in_dim()));
  }
  write_config(w, net.config());

  w.i64(ckpt.meta.episode);
  w.f64(ckpt.meta.epsilon);
  w.f64(ckpt.meta.eval_success);

  const auto& p = net.plateau();
  w.f64(p.best_loss);
  w.i64(p.last_improvement);
  w.i64(p.last_structural);
  w.i64(p.last_prune);
  w.i32(p.grow_events);
  w.i32(p.prune_events);

  for (const auto& layer : net.layers()) {
    w.u8(layer.frozen ? 1 : 0);
    w.f64s(layer.weights.data());
    w.f64s(layer.bias);
    w.f64s(layer.belief.data());
    w.bits(layer.pruned);
    w.f64s(layer.stability.lo);
    w.f64s(layer.stability.hi);
    w.i64s(layer.stability.since);
    w.i64(layer.adam.steps);
    w.f64s(layer.adam.m_w);
    w.f64s(layer.adam.v_w);
    w.f64s(layer.adam.m_b);
    w.f64s(layer.adam.v_b);
  }

  w.u32(static_cast<std::uint32_t>(ckpt.rng_states.size()));
  for (const auto& s : ckpt.rng_states) {
    w.str(s);
  }
  std::string out = w.bytes();
  ByteWriter trailer;
  trailer.le(fnv1a(out));
  out += trailer.bytes();
  return out;
}

Checkpoint checkpoint_from_bytes(const std::string& bytes) {
  ByteReader r(bytes);
  char magic[8];
  if (bytes.size() < sizeof(magic) + 8) {
    throw FormatError("checkpoint too short (" + std::to_string(bytes.size()) + " bytes)");
  }
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    std::ostringstream os;
    os << "bad checkpoint magic: got bytes";
    for (unsigned char c : magic) os << ' ' << static_cast<int>(c);
    os << ", expected \"GPFCKPT\\0\"";
    throw FormatError(os.str());
  }
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (reader supports " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  {
    ByteReader tail(std::string_view(bytes).substr(bytes.size() - 8));
    const auto stored = tail.le<std::uint64_t>();
    if (stored != fnv1a(std::string_view(bytes).substr(0, bytes.size() - 8))) {
      throw FormatError("checkpoint checksum mismatch (file corrupt or truncated)");
    }
  }
  const auto n_layers = r.u32();
  if (n_layers < 2 || n_layers > 1024) {
    throw FormatError("implausible layer count " + std::to_string(n_layers));
  }
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes(n_layers);
  for (auto& [rows, cols] : shapes) {
    rows = r.u32();
    cols = r.u32();
    if (static_cast<std::uint64_t>(rows) * cols > (1ULL << 28)) {
      throw FormatError("implausible layer shape " + std::to_string(rows) + "x" + std::to_string(cols));
    }
  }
  GpfConfig cfg = read_config(r);

  Checkpoint ckpt;
  ckpt.meta.episode = r.i64();
  ckpt.meta.epsilon = r.f64();
  ckpt.meta.eval_success = r.f64();

  PlateauTracker p;
  p.best_loss = r.f64();
  p.last_improvement = r.i64();
  p.last_structural = r.i64();
  p.last_prune = r.i64();
  p.grow_events = r.i32();
  p.prune_events = r.i32();

  std::vector<GpfLayer> layers(n_layers);
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    const auto [rows, cols] = shapes[l];
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    auto& layer = layers[l];
    layer.frozen = r.u8() != 0;
    layer.weights = Matrix(rows, cols);
    layer.weights.data() = r.f64s(n);
    layer.bias = r.f64s(rows);
    layer.belief = Matrix(rows, cols);
    layer.belief.data() = r.f64s(n);
    layer.pruned = r.bits(n);
    layer.stability.lo = r.f64s(n);
    layer.stability.hi = r.f64s(n);
    layer.stability.since = r.i64s(n);
    layer.adam.steps = r.i64();
    layer.adam.m_w = r.f64s(n);
    layer.adam.v_w = r.f64s(n);
    layer.adam.m_b = r.f64s(rows);
    layer.adam.v_b = r.f64s(rows);
  }
  const auto n_rng = r.u32();
  for (std::uint32_t i = 0; i < n_rng; ++i) {
    ckpt.rng_states.push_back(r.str());
  }
  if (r.position() + 8 != bytes.size()) {
    throw FormatError("checkpoint has " + std::to_string(bytes.size() - 8 - r.position()) + " trailing bytes");
  }
  try {
    ckpt.network = GpfNetwork::from_parts(cfg, std::move(layers), p);
  } catch (const ValidationError& e) {
    throw FormatError(std::string("checkpoint content invalid: ") + e.what());
  }
  return ckpt;
}

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  const auto bytes = checkpoint_bytes(ckpt);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) {
    throw std::runtime_error("failed to write checkpoint stream");
  }
}

Checkpoint read_checkpoint(std::istream& is) {
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return checkpoint_from_bytes(bytes);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = checkpoint_bytes(ckpt);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) {
      throw std::runtime_error("cannot open " + tmp + " for writing");
    }
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) {
      throw std::runtime_error("failed writing " + tmp);
    }
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw FormatError("cannot open checkpoint " + path.string());
  }
  return read_checkpoint(is);
}

}  // namespace gpf
