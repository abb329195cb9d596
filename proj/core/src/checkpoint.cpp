// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#include "forgetrace/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "forgetrace/error.hpp"

namespace forgetrace {

namespace {

constexpr char kMagic[4] = {'F', 'T', 'R', 'C'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f64s(const AlignedDoubles& v) {
    for (double x : v) f64(x);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("unexpected end of checkpoint");
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  void f64s(AlignedDoubles& out, std::size_t n) {
    need(n * 8);
    out.resize(n);
    for (auto& x : out) x = f64();
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{in_[pos_++]} << (8 * i);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ModelState& s) {
  const ModelConfig& c = s.config;
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  for (int v : {c.n_layers, c.d_model, c.n_heads, c.d_ffn, c.vocab_size, c.context_len}) w.i32(v);
  w.f64(c.max_lr);
  w.f64(c.min_lr_ratio);
  w.i64(c.warmup_steps);
  w.i64(c.total_steps);
  for (double v : {c.beta1, c.beta2, c.adam_eps, c.weight_decay, c.grad_clip, c.init_std}) {
    w.f64(v);
  }
  w.u64(c.init_seed);

  w.u32(static_cast<std::uint32_t>(s.layout.size()));
  for (const auto& sec : s.layout) {
    w.u32(static_cast<std::uint32_t>(sec.name.size()));
    w.bytes(sec.name.data(), sec.name.size());
    w.u64(sec.rows);
    w.u64(sec.cols);
    for (std::size_t i = 0; i < sec.size(); ++i) w.f64(s.weights[sec.offset + i]);
  }
  w.u64(s.adam_m.size());
  w.f64s(s.adam_m);
  w.u64(s.adam_v.size());
  w.f64s(s.adam_v);
  w.i64(s.step);
  w.u64(s.rng_state);
  return w.take();
}

ModelState deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.str(4) != std::string(kMagic, 4)) throw FormatError("bad checkpoint magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }

  ModelConfig c;
  c.n_layers = r.i32();
  c.d_model = r.i32();
  c.n_heads = r.i32();
  c.d_ffn = r.i32();
  c.vocab_size = r.i32();
  c.context_len = r.i32();
  c.max_lr = r.f64();
  c.min_lr_ratio = r.f64();
  c.warmup_steps = r.i64();
  c.total_steps = r.i64();
  c.beta1 = r.f64();
  c.beta2 = r.f64();
  c.adam_eps = r.f64();
  c.weight_decay = r.f64();
  c.grad_clip = r.f64();
  c.init_std = r.f64();
  c.init_seed = r.u64();
  const auto problems = c.violations();
  if (!problems.empty()) throw FormatError("invalid checkpoint config: " + problems.front());

  ModelState s;
  s.config = c;
  s.layout = parameter_layout(c);
  s.weights.assign(c.parameter_count(), 0.0);

  const std::uint32_t n_sections = r.u32();
  if (n_sections != s.layout.size()) throw FormatError("checkpoint section count mismatch");
  for (const auto& sec : s.layout) {
    const std::string name = r.str(r.u32());
    if (name != sec.name) throw FormatError("unexpected checkpoint section '" + name + "'");
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    if (rows != sec.rows || cols != sec.cols) {
      throw FormatError("checkpoint section '" + name + "' has wrong shape");
    }
    r.need(sec.size() * 8);
    for (std::size_t i = 0; i < sec.size(); ++i) s.weights[sec.offset + i] = r.f64();
  }
  for (auto* moments : {&s.adam_m, &s.adam_v}) {
    const std::uint64_t n = r.u64();
    if (n != s.weights.size()) throw FormatError("checkpoint moment size mismatch");
    r.f64s(*moments, n);
  }
  s.step = r.i64();
  s.rng_state = r.u64();
  if (!r.done()) throw FormatError("trailing bytes in checkpoint");
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const ModelState& state) {
  const auto bytes = serialize_checkpoint(state);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("cannot write " + path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace forgetrace
