#include "altpp/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "altpp/errors.hpp"

namespace altpp {

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t hash) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= p[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

namespace {

class Writer {
 public:
  template <class T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void put_size(std::size_t v) { put<std::uint64_t>(v); }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void put_doubles(const std::vector<double>& v) {
    put_size(v.size());
    for (double d : v) put(d);
  }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::size_t get_size(std::size_t limit) {
    const auto v = get<std::uint64_t>();
    if (v > limit) throw CorruptionError("checkpoint field out of range");
    return static_cast<std::size_t>(v);
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> get_doubles() {
    const std::size_t n = get_size(remaining() / sizeof(double));
    std::vector<double> v(n);
    for (auto& d : v) d = get<double>();
    return v;
  }
  std::size_t remaining() const { return end_ - pos_; }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) throw CorruptionError("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

void put_network(Writer& w, const Network& n) {
  w.put<std::uint8_t>(static_cast<std::uint8_t>(n.spec.kind));
  w.put_size(n.spec.input_dim);
  w.put_size(n.spec.hidden_dim);
  w.put_size(n.spec.output_dim);
  w.put_size(n.spec.depth);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(n.spec.activation));
  w.put_size(n.spec.tokens);
  w.put_size(n.params.size());
  for (const auto& [name, t] : n.params.tensors) {
    w.put_string(name);
    w.put_size(t.rank());
    for (auto e : t.shape()) w.put_size(e);
    for (double v : t.values()) w.put(v);
  }
}

Network get_network(Reader& r) {
  constexpr std::size_t kMaxDim = std::size_t{1} << 32;
  Network n;
  const auto kind = r.get<std::uint8_t>();
  if (kind > 1) throw CorruptionError("unknown network kind in checkpoint");
  n.spec.kind = static_cast<NetworkKind>(kind);
  n.spec.input_dim = r.get_size(kMaxDim);
  n.spec.hidden_dim = r.get_size(kMaxDim);
  n.spec.output_dim = r.get_size(kMaxDim);
  n.spec.depth = r.get_size(kMaxDim);
  const auto act = r.get<std::uint8_t>();
  if (act > 1) throw CorruptionError("unknown activation in checkpoint");
  n.spec.activation = static_cast<Activation>(act);
  n.spec.tokens = r.get_size(kMaxDim);
  const std::size_t count = r.get_size(r.remaining());
  for (std::size_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name = r.get_string();
    const std::size_t rank = r.get_size(8);
    Shape shape(rank);
    for (auto& e : shape) e = r.get_size(kMaxDim);
    const std::size_t numel = shape_numel(shape);
    if (numel > r.remaining() / sizeof(double)) throw CorruptionError("checkpoint truncated");
    std::vector<double> data(numel);
    for (auto& d : data) d = r.get<double>();
    nt.value = Tensor(std::move(shape), std::move(data));
    n.params.tensors.push_back(std::move(nt));
  }
  return n;
}

}  // namespace

std::string serialize_model(const AlternatorModel& model) {
  Writer w;
  w.bytes().append(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.put(kCheckpointVersion);
  w.put_size(model.dim_x);
  w.put_size(model.dim_z);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(model.variant));
  w.put(model.schedule.sigma_x);
  w.put(model.schedule.sigma_z);
  w.put_doubles(model.schedule.beta);
  w.put_doubles(model.schedule.alpha);
  put_network(w, model.f);
  put_network(w, model.g);
  put_network(w, model.eps_x);
  put_network(w, model.eps_z);
  const std::uint64_t sum = fnv1a64(w.bytes().data(), w.bytes().size());
  w.put(sum);
  return std::move(w.bytes());
}

AlternatorModel deserialize_model(const std::string& bytes) {
  constexpr std::size_t kTrailer = sizeof(std::uint64_t);
  if (bytes.size() < sizeof(kCheckpointMagic) + sizeof(std::uint32_t) + kTrailer) {
    throw CorruptionError("checkpoint truncated");
  }
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw CorruptionError("not an Alternator++ checkpoint (bad magic)");
  }
  const std::size_t body = bytes.size() - kTrailer;
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body, kTrailer);
  if (stored != fnv1a64(bytes.data(), body)) throw CorruptionError("checkpoint checksum mismatch");

  Reader r(bytes, body);
  for (std::size_t i = 0; i < sizeof(kCheckpointMagic); ++i) r.get<char>();
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  AlternatorModel m;
  m.dim_x = r.get_size(std::size_t{1} << 32);
  m.dim_z = r.get_size(std::size_t{1} << 32);
  const auto variant = r.get<std::uint8_t>();
  if (variant > 1) throw CorruptionError("unknown model variant in checkpoint");
  m.variant = static_cast<ModelVariant>(variant);
  m.schedule.sigma_x = r.get<double>();
  m.schedule.sigma_z = r.get<double>();
  m.schedule.beta = r.get_doubles();
  m.schedule.alpha = r.get_doubles();
  m.f = get_network(r);
  m.g = get_network(r);
  m.eps_x = get_network(r);
  m.eps_z = get_network(r);
  if (!r.done()) throw CorruptionError("trailing bytes in checkpoint");
  m.validate();
  return m;
}

void save_model(const AlternatorModel& model, const std::filesystem::path& path) {
  const std::string bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

AlternatorModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace altpp
