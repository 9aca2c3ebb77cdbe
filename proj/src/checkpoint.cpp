// Copyright 2026 The satcn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <string_view>

#include "satcn/train.hpp"

namespace satcn::train {
namespace {

constexpr std::string_view kMagic = "SATCN001";
constexpr std::string_view kFirst = "adam/first/";
constexpr std::string_view kSecond = "adam/second/";
constexpr std::string_view kStep = "adam/step";

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  void f32(double v) { le(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void tensor(const std::string& name, const Tensor& t) {
    le(static_cast<std::uint32_t>(name.size()));
    bytes(name.data(), name.size());
    le(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) le(static_cast<std::uint64_t>(e));
    for (double v : t.values()) f32(v);
  }
  const std::vector<std::uint8_t>& data() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<std::uint8_t> buf) : buf_(std::move(buf)) {}

  std::uint64_t offset() const { return pos_; }
  bool done() const { return pos_ == buf_.size(); }

  void need(std::uint64_t n, const char* what) const {
    if (n > buf_.size() - pos_) {
      throw FormatError(std::string("truncated checkpoint while reading ") + what, pos_);
    }
  }
  template <typename T>
  T le(const char* what) {
    need(sizeof(T), what);
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<decltype(u)>(buf_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  double f32() { return std::bit_cast<float>(le<std::uint32_t>("tensor data")); }

 private:
  std::vector<std::uint8_t> buf_;
  std::uint64_t pos_ = 0;
};

}  // namespace

FormatError::FormatError(const std::string& what, std::uint64_t offset)
    : std::runtime_error(what + " (offset " + std::to_string(offset) + ")"), offset_(offset) {}

void save_checkpoint(const MultiStageModel& model, const AdamState* state,
                     const std::filesystem::path& path) {
  const ModelConfig& c = model.config();
  const ParamStore& store = model.store();
  Writer w;
  w.bytes(kMagic.data(), kMagic.size());
  for (std::uint64_t v : {c.stages, c.hidden, c.bottleneck, c.stacks, c.blocks, c.kernel, c.fft_size, c.hop}) {
    w.le(static_cast<std::int64_t>(v));
  }
  w.le(static_cast<std::int64_t>(c.seed));

  const bool with_state = state && state->first.size() == store.size();
  std::uint32_t count = static_cast<std::uint32_t>(store.size());
  if (with_state) {
    for (std::size_t i = 0; i < store.size(); ++i) count += store[i].trainable ? 2 : 0;
    ++count;
  }
  w.le(count);
  for (std::size_t i = 0; i < store.size(); ++i) w.tensor(store[i].name, store[i].value);
  if (with_state) {
    for (std::size_t i = 0; i < store.size(); ++i) {
      if (!store[i].trainable) continue;
      w.tensor(std::string(kFirst) + store[i].name, state->first[i]);
      w.tensor(std::string(kSecond) + store[i].name, state->second[i]);
    }
    // Split so the count survives float32 storage exactly (up to 2^48).
    Tensor step({2});
    step[0] = static_cast<double>(state->step & 0xFFFFFF);
    step[1] = static_cast<double>(state->step >> 24);
    w.tensor(std::string(kStep), step);
  }

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(w.data().data()), static_cast<std::streamsize>(w.data().size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  Reader r(std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {}));

  if (r.str(kMagic.size(), "magic") != kMagic) throw FormatError("bad checkpoint magic", 0);
  ModelConfig c;
  std::array<std::size_t*, 8> fields{&c.stages, &c.hidden, &c.bottleneck, &c.stacks,
                                     &c.blocks, &c.kernel, &c.fft_size,   &c.hop};
  for (std::size_t* f : fields) {
    const std::uint64_t at = r.offset();
    const auto v = r.le<std::int64_t>("config");
    if (v < 0 || v > (std::int64_t{1} << 32)) throw FormatError("config field out of range", at);
    *f = static_cast<std::size_t>(v);
  }
  c.seed = static_cast<std::uint64_t>(r.le<std::int64_t>("config"));
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what(), r.offset());
  }

  MultiStageModel model(c);
  ParamStore& store = model.store();
  std::vector<Tensor> first(store.size()), second(store.size());
  std::optional<std::uint64_t> step;
  std::set<std::string> seen;

  const auto count = r.le<std::uint32_t>("tensor count");
  for (std::uint32_t n = 0; n < count; ++n) {
    const std::uint64_t at = r.offset();
    const auto name_len = r.le<std::uint32_t>("name length");
    const std::string name = r.str(name_len, "name");
    if (!seen.insert(name).second) throw FormatError("duplicate tensor " + name, at);
    const auto rank = r.le<std::uint32_t>("rank");
    if (rank > 8) throw FormatError("implausible rank for " + name, at);
    Tensor::Shape shape;
    std::uint64_t elements = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto e = r.le<std::uint64_t>("extent");
      if (e > (std::uint64_t{1} << 32)) throw FormatError("implausible extent for " + name, at);
      shape.push_back(static_cast<std::size_t>(e));
      elements *= e;
      if (elements > (std::uint64_t{1} << 40)) throw FormatError("implausible size for " + name, at);
    }
    r.need(elements * 4, "tensor data");
    Tensor t(shape);
    for (double& v : t.values()) v = r.f32();

    std::string_view key = name;
    if (key == kStep) {
      if (t.size() != 2) throw FormatError("bad adam/step tensor", at);
      step = static_cast<std::uint64_t>(t[0]) | (static_cast<std::uint64_t>(t[1]) << 24);
      continue;
    }
    std::string base(key);
    std::vector<Tensor>* slot = nullptr;
    if (key.starts_with(kFirst)) {
      base = key.substr(kFirst.size());
      slot = &first;
    } else if (key.starts_with(kSecond)) {
      base = key.substr(kSecond.size());
      slot = &second;
    }
    const auto index = store.index_of(base);
    if (!index) throw FormatError("unknown tensor " + name, at);
    Parameter& p = store[*index];
    if (p.value.shape() != shape) {
      throw FormatError("shape mismatch for " + name + ": " + shape_string(shape) + " vs " +
                            shape_string(p.value.shape()),
                        at);
    }
    if (slot) {
      (*slot)[*index] = std::move(t);
    } else {
      p.value = std::move(t);
    }
  }
  if (!r.done()) throw FormatError("trailing bytes after last tensor", r.offset());
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!seen.contains(store[i].name)) throw FormatError("missing tensor " + store[i].name, r.offset());
  }

  std::optional<AdamState> loaded_state;
  if (step) {
    AdamState state;
    state.step = *step;
    state.first.resize(store.size());
    state.second.resize(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
      if (!store[i].trainable) continue;
      if (first[i].empty() && store[i].value.size() > 0) {
        throw FormatError("optimizer state incomplete for " + store[i].name, r.offset());
      }
      state.first[i] = std::move(first[i]);
      state.second[i] = std::move(second[i]);
    }
    loaded_state = std::move(state);
  }
  return LoadedCheckpoint{std::move(model), std::move(loaded_state)};
}

}  // namespace satcn::train
