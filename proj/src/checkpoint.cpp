#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "dustbin/model.hpp"

namespace dustbin {

namespace {

constexpr char kMagic[4] = {'D', 'B', 'L', 'M'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  template <typename T>
  void le(T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    U u = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
  }
  void shape(const Shape& s) {
    le(static_cast<std::uint32_t>(s.size()));
    for (auto e : s) le(static_cast<std::uint64_t>(e));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  template <typename T>
  T le() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    need(sizeof(U));
    U u = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<U>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return std::bit_cast<T>(u);
  }
  Shape shape() {
    const auto rank = le<std::uint32_t>();
    if (rank > 8) throw ParseError("checkpoint: implausible rank " + std::to_string(rank));
    Shape s(rank);
    for (auto& e : s) e = static_cast<std::size_t>(le<std::uint64_t>());
    return s;
  }
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw ParseError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto v = in_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string checkpoint_bytes(const Model& model) {
  Writer w;
  const auto& c = model.config();
  w.bytes(kMagic, 4);
  w.le(kVersion);
  w.le(static_cast<std::uint8_t>(c.architecture));
  w.shape(c.input_shape);
  w.le(static_cast<std::uint64_t>(c.k_classes));
  w.le(static_cast<std::uint8_t>(c.augmented));
  w.le(static_cast<std::uint32_t>(c.widths.size()));
  for (auto v : c.widths) w.le(static_cast<std::uint64_t>(v));
  w.le(static_cast<std::uint64_t>(c.kernel_size));
  w.le(static_cast<std::uint8_t>(c.pool));
  w.le(c.dropout_p);
  w.le(static_cast<std::uint32_t>(model.params().tensors.size()));
  for (const auto& t : model.params().tensors) {
    w.shape(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) w.le(t[i]);
  }
  return w.take();
}

Model model_from_checkpoint_bytes(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4) != std::string_view(kMagic, 4)) throw ParseError("checkpoint: bad magic (expected DBLM)");
  const auto version = r.le<std::uint32_t>();
  if (version != kVersion) throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  ModelConfig c;
  const auto arch = r.le<std::uint8_t>();
  if (arch > 2) throw ParseError("checkpoint: unknown architecture code " + std::to_string(arch));
  c.architecture = static_cast<Architecture>(arch);
  c.input_shape = r.shape();
  c.k_classes = static_cast<std::size_t>(r.le<std::uint64_t>());
  c.augmented = r.le<std::uint8_t>() != 0;
  c.widths.resize(r.le<std::uint32_t>());
  for (auto& v : c.widths) v = static_cast<std::size_t>(r.le<std::uint64_t>());
  c.kernel_size = static_cast<std::size_t>(r.le<std::uint64_t>());
  c.pool = r.le<std::uint8_t>() != 0;
  c.dropout_p = r.le<double>();
  Params p;
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t k = 0; k < count; ++k) {
    Shape s = r.shape();
    r.need(shape_size(s) * 8);
    Array a(s);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = r.le<double>();
    p.tensors.push_back(std::move(a));
  }
  if (!r.done()) throw ParseError("checkpoint: trailing bytes");
  try {
    return Model(std::move(c), std::move(p));
  } catch (const Error& e) {
    throw ParseError(std::string("checkpoint: inconsistent contents: ") + e.what());
  }
}

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  const std::string bytes = checkpoint_bytes(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return model_from_checkpoint_bytes(bytes);
}

}  // namespace dustbin
