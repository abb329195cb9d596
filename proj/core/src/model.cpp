// Copyright 2026 The Forgetrace Authors.
// SPDX-License-Identifier: Apache-2.0

#include "forgetrace/model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>

#include "forgetrace/error.hpp"
#include "forgetrace/random.hpp"

namespace forgetrace {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Arr = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using MapMat = Eigen::Map<Mat>;
using CMapMat = Eigen::Map<const Mat>;
using MapRow = Eigen::Map<RowVec>;
using CMapRow = Eigen::Map<const RowVec>;

constexpr double kLayerNormEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

struct LayerOffsets {
  const ParamSection* ln1_g;
  const ParamSection* ln1_b;
  const ParamSection* wqkv;
  const ParamSection* bqkv;
  const ParamSection* wo;
  const ParamSection* bo;
  const ParamSection* ln2_g;
  const ParamSection* ln2_b;
  const ParamSection* w1;
  const ParamSection* b1;
  const ParamSection* w2;
  const ParamSection* b2;
};

struct Offsets {
  const ParamSection* tok;
  const ParamSection* pos;
  std::vector<LayerOffsets> layers;
  const ParamSection* lnf_g;
  const ParamSection* lnf_b;
  const ParamSection* head_w;
  const ParamSection* head_b;

  explicit Offsets(const ModelState& s) {
    tok = &s.section("tok_emb");
    pos = &s.section("pos_emb");
    for (int l = 0; l < s.config.n_layers; ++l) {
      const std::string p = "h" + std::to_string(l) + ".";
      layers.push_back({&s.section(p + "ln1.g"), &s.section(p + "ln1.b"),
                        &s.section(p + "attn.wqkv"), &s.section(p + "attn.bqkv"),
                        &s.section(p + "attn.wo"), &s.section(p + "attn.bo"),
                        &s.section(p + "ln2.g"), &s.section(p + "ln2.b"),
                        &s.section(p + "mlp.w1"), &s.section(p + "mlp.b1"),
                        &s.section(p + "mlp.w2"), &s.section(p + "mlp.b2")});
    }
    lnf_g = &s.section("lnf.g");
    lnf_b = &s.section("lnf.b");
    head_w = &s.section("head.w");
    head_b = &s.section("head.b");
  }
};

CMapMat cmat(const AlignedDoubles& store, const ParamSection* s) {
  return CMapMat(store.data() + s->offset, static_cast<Eigen::Index>(s->rows),
                 static_cast<Eigen::Index>(s->cols));
}
MapMat mmat(AlignedDoubles& store, const ParamSection* s) {
  return MapMat(store.data() + s->offset, static_cast<Eigen::Index>(s->rows),
                static_cast<Eigen::Index>(s->cols));
}
CMapRow crow(const AlignedDoubles& store, const ParamSection* s) {
  return CMapRow(store.data() + s->offset, static_cast<Eigen::Index>(s->size()));
}
MapRow mrow(AlignedDoubles& store, const ParamSection* s) {
  return MapRow(store.data() + s->offset, static_cast<Eigen::Index>(s->size()));
}

void layer_norm(const Mat& x, const CMapRow& g, const CMapRow& b, Mat& xhat,
                std::vector<double>& rstd, Mat& y) {
  const Eigen::Index n = x.rows();
  const double inv_d = 1.0 / static_cast<double>(x.cols());
  xhat.resize(n, x.cols());
  y.resize(n, x.cols());
  rstd.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.row(i).sum() * inv_d;
    const double var = (x.row(i).array() - mu).square().sum() * inv_d;
    const double rs = 1.0 / std::sqrt(var + kLayerNormEps);
    rstd[static_cast<std::size_t>(i)] = rs;
    xhat.row(i) = (x.row(i).array() - mu) * rs;
    y.row(i) = xhat.row(i).cwiseProduct(g) + b;
  }
}

// Returns dx; accumulates dg and db.
Mat layer_norm_backward(const Mat& dy, const Mat& xhat, const std::vector<double>& rstd,
                        const CMapRow& g, MapRow dg, MapRow db) {
  const Eigen::Index n = dy.rows();
  const double inv_d = 1.0 / static_cast<double>(dy.cols());
  Mat dx(n, dy.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    dg += dy.row(i).cwiseProduct(xhat.row(i));
    db += dy.row(i);
    const RowVec dxhat = dy.row(i).cwiseProduct(g);
    const double mean_dxhat = dxhat.sum() * inv_d;
    const double mean_dxhat_xhat = dxhat.cwiseProduct(xhat.row(i)).sum() * inv_d;
    dx.row(i) = rstd[static_cast<std::size_t>(i)] *
                (dxhat.array() - mean_dxhat - xhat.row(i).array() * mean_dxhat_xhat).matrix();
  }
  return dx;
}

// tanh through exp, which Eigen vectorizes for doubles.
Arr gelu_tanh(const Mat& u) {
  const Arr z = kGeluC * (u.array() + kGeluA * u.array().cube());
  return 1.0 - 2.0 / ((2.0 * z).exp() + 1.0);
}

Mat gelu(const Mat& u) {
  Mat g(u.rows(), u.cols());
  g.array() = 0.5 * u.array() * (1.0 + gelu_tanh(u));
  return g;
}

Mat gelu_grad(const Mat& u) {
  const Arr t = gelu_tanh(u);
  Mat d(u.rows(), u.cols());
  d.array() = 0.5 * (1.0 + t) +
              0.5 * u.array() * (1.0 - t.square()) * kGeluC *
                  (1.0 + 3.0 * kGeluA * u.array().square());
  return d;
}

// Causal softmax in place: row i may attend to columns [0, first_col + i].
void causal_softmax(Mat& s, Eigen::Index first_col) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const Eigen::Index limit = first_col + i + 1;
    const double mx = s.row(i).head(limit).maxCoeff();
    s.row(i).head(limit) = (s.row(i).head(limit).array() - mx).exp();
    const double z = s.row(i).head(limit).sum();
    s.row(i).head(limit) /= z;
    if (limit < s.cols()) s.row(i).tail(s.cols() - limit).setZero();
  }
}

struct LayerCache {
  Mat xhat1, a1, qkv, att, xhat2, a2, u, g;
  std::vector<double> rstd1, rstd2;
  std::vector<Mat> probs;  // per (row, head), cols x cols
};

void check_context(std::size_t length, const ModelConfig& c) {
  if (length > static_cast<std::size_t>(c.context_len)) throw ConfigError("context overflow");
}

void check_ids(std::span<const TokenId> tokens, const ModelConfig& c) {
  for (TokenId t : tokens) {
    if (t < 0 || t >= c.vocab_size) throw ConfigError("token id out of range");
  }
}

LossAndGradient compute(const ModelState& s, const Batch& batch, bool want_grad) {
  const ModelConfig& cfg = s.config;
  check_context(batch.cols, cfg);
  batch.validate(static_cast<std::size_t>(cfg.vocab_size));

  const Offsets off(s);
  const auto& w = s.weights;
  const Eigen::Index T = static_cast<Eigen::Index>(batch.cols);
  const Eigen::Index R = static_cast<Eigen::Index>(batch.rows);
  const Eigen::Index N = R * T;
  const Eigen::Index d = cfg.d_model;
  const Eigen::Index H = cfg.n_heads;
  const Eigen::Index hd = d / H;
  const Eigen::Index V = cfg.vocab_size;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  LossAndGradient out;
  out.position_nll.assign(static_cast<std::size_t>(N), 0.0);
  if (N == 0) {
    if (want_grad) out.gradient.assign(w.size(), 0.0);
    return out;
  }

  const auto tok = cmat(w, off.tok);
  const auto pos = cmat(w, off.pos);
  Mat x(N, d);
  for (Eigen::Index r = 0; r < R; ++r) {
    for (Eigen::Index t = 0; t < T; ++t) {
      const auto id = batch.tokens[static_cast<std::size_t>(r * T + t)];
      x.row(r * T + t) = tok.row(id) + pos.row(t);
    }
  }

  std::vector<LayerCache> caches(static_cast<std::size_t>(cfg.n_layers));
  for (int l = 0; l < cfg.n_layers; ++l) {
    const LayerOffsets& lo = off.layers[static_cast<std::size_t>(l)];
    LayerCache& c = caches[static_cast<std::size_t>(l)];
    layer_norm(x, crow(w, lo.ln1_g), crow(w, lo.ln1_b), c.xhat1, c.rstd1, c.a1);
    c.qkv.noalias() = c.a1 * cmat(w, lo.wqkv);
    c.qkv.rowwise() += crow(w, lo.bqkv);
    c.att.resize(N, d);
    c.probs.resize(static_cast<std::size_t>(R * H));
    for (Eigen::Index r = 0; r < R; ++r) {
      for (Eigen::Index h = 0; h < H; ++h) {
        const auto q = c.qkv.block(r * T, h * hd, T, hd);
        const auto k = c.qkv.block(r * T, d + h * hd, T, hd);
        const auto v = c.qkv.block(r * T, 2 * d + h * hd, T, hd);
        Mat& p = c.probs[static_cast<std::size_t>(r * H + h)];
        p.noalias() = (q * k.transpose()) * scale;
        causal_softmax(p, 0);
        c.att.block(r * T, h * hd, T, hd).noalias() = p * v;
      }
    }
    x.noalias() += c.att * cmat(w, lo.wo);
    x.rowwise() += crow(w, lo.bo);
    layer_norm(x, crow(w, lo.ln2_g), crow(w, lo.ln2_b), c.xhat2, c.rstd2, c.a2);
    c.u.noalias() = c.a2 * cmat(w, lo.w1);
    c.u.rowwise() += crow(w, lo.b1);
    c.g = gelu(c.u);
    x.noalias() += c.g * cmat(w, lo.w2);
    x.rowwise() += crow(w, lo.b2);
  }

  Mat xhat_f, af;
  std::vector<double> rstd_f;
  layer_norm(x, crow(w, off.lnf_g), crow(w, off.lnf_b), xhat_f, rstd_f, af);
  // The N x V block dominates allocation; keep it across calls.
  thread_local Mat logits;
  logits.resize(N, V);
  logits.noalias() = af * cmat(w, off.head_w);
  logits.rowwise() += crow(w, off.head_b);

  // Softmax cross-entropy over supervised positions; logits become dlogits.
  const std::size_t m = batch.supervised_count();
  double total = 0.0;
  for (Eigen::Index p = 0; p < N; ++p) {
    const auto up = static_cast<std::size_t>(p);
    if (!batch.mask[up]) {
      logits.row(p).setZero();
      continue;
    }
    const TokenId target = batch.tokens[up + 1];
    const double mx = logits.row(p).maxCoeff();
    logits.row(p) = (logits.row(p).array() - mx).exp();
    const double z = logits.row(p).sum();
    const double nll = std::log(z) - std::log(logits(p, target));
    out.position_nll[up] = nll;
    total += nll;
    if (want_grad) {
      logits.row(p) /= z;
      logits(p, target) -= 1.0;
      logits.row(p) /= static_cast<double>(m);
    }
  }
  out.mean_loss = m ? total / static_cast<double>(m) : 0.0;
  if (!want_grad) return out;

  out.gradient.assign(w.size(), 0.0);
  auto& gr = out.gradient;
  if (m == 0) return out;
  const Mat& dlogits = logits;

  mmat(gr, off.head_w).noalias() += af.transpose() * dlogits;
  mrow(gr, off.head_b) += dlogits.colwise().sum();
  Mat daf = dlogits * cmat(w, off.head_w).transpose();
  Mat dx = layer_norm_backward(daf, xhat_f, rstd_f, crow(w, off.lnf_g), mrow(gr, off.lnf_g),
                               mrow(gr, off.lnf_b));

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const LayerOffsets& lo = off.layers[static_cast<std::size_t>(l)];
    LayerCache& c = caches[static_cast<std::size_t>(l)];

    mmat(gr, lo.w2).noalias() += c.g.transpose() * dx;
    mrow(gr, lo.b2) += dx.colwise().sum();
    Mat du = dx * cmat(w, lo.w2).transpose();
    du.array() *= gelu_grad(c.u).array();
    mmat(gr, lo.w1).noalias() += c.a2.transpose() * du;
    mrow(gr, lo.b1) += du.colwise().sum();
    Mat da2 = du * cmat(w, lo.w1).transpose();
    dx += layer_norm_backward(da2, c.xhat2, c.rstd2, crow(w, lo.ln2_g), mrow(gr, lo.ln2_g),
                              mrow(gr, lo.ln2_b));

    mmat(gr, lo.wo).noalias() += c.att.transpose() * dx;
    mrow(gr, lo.bo) += dx.colwise().sum();
    Mat datt = dx * cmat(w, lo.wo).transpose();
    Mat dqkv = Mat::Zero(N, 3 * d);
    for (Eigen::Index r = 0; r < R; ++r) {
      for (Eigen::Index h = 0; h < H; ++h) {
        const auto q = c.qkv.block(r * T, h * hd, T, hd);
        const auto k = c.qkv.block(r * T, d + h * hd, T, hd);
        const auto v = c.qkv.block(r * T, 2 * d + h * hd, T, hd);
        const Mat& p = c.probs[static_cast<std::size_t>(r * H + h)];
        const auto dout = datt.block(r * T, h * hd, T, hd);
        Mat dp = dout * v.transpose();
        dqkv.block(r * T, 2 * d + h * hd, T, hd).noalias() = p.transpose() * dout;
        const Eigen::VectorXd row_dot = (dp.cwiseProduct(p)).rowwise().sum();
        Mat ds = p.cwiseProduct((dp.colwise() - row_dot));
        ds *= scale;
        dqkv.block(r * T, h * hd, T, hd).noalias() = ds * k;
        dqkv.block(r * T, d + h * hd, T, hd).noalias() = ds.transpose() * q;
      }
    }
    mmat(gr, lo.wqkv).noalias() += c.a1.transpose() * dqkv;
    mrow(gr, lo.bqkv) += dqkv.colwise().sum();
    Mat da1 = dqkv * cmat(w, lo.wqkv).transpose();
    dx += layer_norm_backward(da1, c.xhat1, c.rstd1, crow(w, lo.ln1_g), mrow(gr, lo.ln1_g),
                              mrow(gr, lo.ln1_b));
  }

  auto dtok = mmat(gr, off.tok);
  auto dpos = mmat(gr, off.pos);
  for (Eigen::Index r = 0; r < R; ++r) {
    for (Eigen::Index t = 0; t < T; ++t) {
      const auto id = batch.tokens[static_cast<std::size_t>(r * T + t)];
      dtok.row(id) += dx.row(r * T + t);
      dpos.row(t) += dx.row(r * T + t);
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config and layout

std::vector<std::string> ModelConfig::violations() const {
  std::vector<std::string> v;
  if (n_layers < 1) v.emplace_back("n_layers must be ≥ 1");
  if (d_model < 1) v.emplace_back("d_model must be ≥ 1");
  if (n_heads < 1) v.emplace_back("n_heads must be ≥ 1");
  if (d_model >= 1 && n_heads >= 1 && d_model % n_heads != 0) {
    v.emplace_back("d_model not divisible by n_heads");
  }
  if (d_ffn < 1) v.emplace_back("d_ffn must be ≥ 1");
  if (vocab_size < 4) v.emplace_back("vocab_size must be ≥ 4");
  if (context_len < 64) v.emplace_back("context_len must be ≥ 64");
  if (!(max_lr > 0.0)) v.emplace_back("max_lr must be > 0");
  if (!(min_lr_ratio > 0.0 && min_lr_ratio <= 1.0)) v.emplace_back("min_lr_ratio must be in (0, 1]");
  if (total_steps < 1) v.emplace_back("total_steps must be ≥ 1");
  if (warmup_steps < 0 || (warmup_steps > 0 && warmup_steps >= total_steps)) {
    v.emplace_back("warmup_steps must be in [0, total_steps)");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0)) v.emplace_back("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) v.emplace_back("beta2 must be in [0, 1)");
  if (!(adam_eps > 0.0)) v.emplace_back("adam_eps must be > 0");
  if (!(weight_decay >= 0.0)) v.emplace_back("weight_decay must be ≥ 0");
  if (!(init_std > 0.0)) v.emplace_back("init_std must be > 0");
  return v;
}

void ModelConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg;
  for (const auto& s : v) {
    if (!msg.empty()) msg += "; ";
    msg += s;
  }
  throw ConfigError(msg);
}

std::size_t ModelConfig::parameter_count() const {
  std::size_t total = 0;
  for (const auto& s : parameter_layout(*this)) total += s.size();
  return total;
}

std::vector<ParamSection> parameter_layout(const ModelConfig& c) {
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto f = static_cast<std::size_t>(c.d_ffn);
  const auto v = static_cast<std::size_t>(c.vocab_size);
  const auto ctx = static_cast<std::size_t>(c.context_len);
  std::vector<ParamSection> out;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols, bool decay) {
    out.push_back({std::move(name), offset, rows, cols, decay});
    offset += rows * cols;
  };
  add("tok_emb", v, d, true);
  add("pos_emb", ctx, d, true);
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string p = "h" + std::to_string(l) + ".";
    add(p + "ln1.g", 1, d, false);
    add(p + "ln1.b", 1, d, false);
    add(p + "attn.wqkv", d, 3 * d, true);
    add(p + "attn.bqkv", 1, 3 * d, false);
    add(p + "attn.wo", d, d, true);
    add(p + "attn.bo", 1, d, false);
    add(p + "ln2.g", 1, d, false);
    add(p + "ln2.b", 1, d, false);
    add(p + "mlp.w1", d, f, true);
    add(p + "mlp.b1", 1, f, false);
    add(p + "mlp.w2", f, d, true);
    add(p + "mlp.b2", 1, d, false);
  }
  add("lnf.g", 1, d, false);
  add("lnf.b", 1, d, false);
  add("head.w", d, v, true);
  add("head.b", 1, v, false);
  return out;
}

const ParamSection& ModelState::section(std::string_view name) const {
  for (const auto& s : layout) {
    if (s.name == name) return s;
  }
  throw ConfigError("unknown parameter section '" + std::string(name) + "'");
}

std::span<double> ModelState::param(std::string_view name) {
  const auto& s = section(name);
  return std::span<double>(weights).subspan(s.offset, s.size());
}

std::span<const double> ModelState::param(std::string_view name) const {
  const auto& s = section(name);
  return std::span<const double>(weights).subspan(s.offset, s.size());
}

std::uint64_t ModelState::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  mix(weights.data(), weights.size() * sizeof(double));
  mix(adam_m.data(), adam_m.size() * sizeof(double));
  mix(adam_v.data(), adam_v.size() * sizeof(double));
  mix(&step, sizeof(step));
  mix(&rng_state, sizeof(rng_state));
  return h;
}

bool ModelState::all_finite() const {
  auto finite = [](const AlignedDoubles& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  return finite(weights) && finite(adam_m) && finite(adam_v);
}

ModelState init_model(const ModelConfig& config) {
  config.validate();
  ModelState s;
  s.config = config;
  s.layout = parameter_layout(config);
  const std::size_t n = config.parameter_count();
  s.weights.assign(n, 0.0);
  s.adam_m.assign(n, 0.0);
  s.adam_v.assign(n, 0.0);

  Rng rng(config.init_seed);
  const double resid_scale = 1.0 / std::sqrt(2.0 * config.n_layers);
  for (const auto& sec : s.layout) {
    auto p = std::span<double>(s.weights).subspan(sec.offset, sec.size());
    const bool is_gain = sec.name.ends_with(".g");
    if (is_gain) {
      std::fill(p.begin(), p.end(), 1.0);
    } else if (sec.decay) {
      double std = config.init_std;
      if (sec.name.ends_with("attn.wo") || sec.name.ends_with("mlp.w2")) std *= resid_scale;
      for (double& x : p) x = std * rng.normal();
    }
  }
  s.rng_state = rng.state();
  return s;
}

double lr_at(std::int64_t step, const ModelConfig& c) {
  const double min_lr = c.min_lr_ratio * c.max_lr;
  if (step < 0) step = 0;
  if (c.warmup_steps > 0 && step < c.warmup_steps) {
    return c.max_lr * static_cast<double>(step) / static_cast<double>(c.warmup_steps);
  }
  if (step >= c.total_steps) return min_lr;
  const double progress = static_cast<double>(step - c.warmup_steps) /
                          static_cast<double>(c.total_steps - c.warmup_steps);
  return min_lr + (c.max_lr - min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

// ---------------------------------------------------------------------------
// Inference

struct InferenceSession::Impl {
  const ModelState* state;
  Offsets off;
  std::vector<Mat> keys;    // per layer, context_len x d
  std::vector<Mat> values;  // per layer, context_len x d
  Eigen::Index length = 0;

  explicit Impl(const ModelState& s) : state(&s), off(s) {
    const auto ctx = static_cast<Eigen::Index>(s.config.context_len);
    keys.assign(static_cast<std::size_t>(s.config.n_layers), Mat(ctx, s.config.d_model));
    values.assign(static_cast<std::size_t>(s.config.n_layers), Mat(ctx, s.config.d_model));
  }
};

InferenceSession::InferenceSession(const ModelState& state)
    : impl_(std::make_unique<Impl>(state)) {}
InferenceSession::~InferenceSession() = default;
InferenceSession::InferenceSession(InferenceSession&&) noexcept = default;
InferenceSession& InferenceSession::operator=(InferenceSession&&) noexcept = default;

std::size_t InferenceSession::length() const { return static_cast<std::size_t>(impl_->length); }

Logits InferenceSession::append(std::span<const TokenId> tokens) {
  Impl& im = *impl_;
  const ModelState& s = *im.state;
  const ModelConfig& cfg = s.config;
  check_context(static_cast<std::size_t>(im.length) + tokens.size(), cfg);
  check_ids(tokens, cfg);

  const auto& w = s.weights;
  const Eigen::Index m = static_cast<Eigen::Index>(tokens.size());
  const Eigen::Index p0 = im.length;
  const Eigen::Index d = cfg.d_model;
  const Eigen::Index H = cfg.n_heads;
  const Eigen::Index hd = d / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Logits out;
  out.rows = tokens.size();
  out.vocab = static_cast<std::size_t>(cfg.vocab_size);
  if (m == 0) return out;

  const auto tok = cmat(w, im.off.tok);
  const auto pos = cmat(w, im.off.pos);
  Mat x(m, d);
  for (Eigen::Index i = 0; i < m; ++i) {
    x.row(i) = tok.row(tokens[static_cast<std::size_t>(i)]) + pos.row(p0 + i);
  }

  Mat xhat, a, qkv, att(m, d), u;
  std::vector<double> rstd;
  for (int l = 0; l < cfg.n_layers; ++l) {
    const LayerOffsets& lo = im.off.layers[static_cast<std::size_t>(l)];
    Mat& kc = im.keys[static_cast<std::size_t>(l)];
    Mat& vc = im.values[static_cast<std::size_t>(l)];
    layer_norm(x, crow(w, lo.ln1_g), crow(w, lo.ln1_b), xhat, rstd, a);
    qkv.noalias() = a * cmat(w, lo.wqkv);
    qkv.rowwise() += crow(w, lo.bqkv);
    kc.block(p0, 0, m, d) = qkv.middleCols(d, d);
    vc.block(p0, 0, m, d) = qkv.middleCols(2 * d, d);
    for (Eigen::Index h = 0; h < H; ++h) {
      const auto q = qkv.block(0, h * hd, m, hd);
      const auto k = kc.block(0, h * hd, p0 + m, hd);
      const auto v = vc.block(0, h * hd, p0 + m, hd);
      Mat p = (q * k.transpose()) * scale;
      causal_softmax(p, p0);
      att.block(0, h * hd, m, hd).noalias() = p * v;
    }
    x.noalias() += att * cmat(w, lo.wo);
    x.rowwise() += crow(w, lo.bo);
    layer_norm(x, crow(w, lo.ln2_g), crow(w, lo.ln2_b), xhat, rstd, a);
    u.noalias() = a * cmat(w, lo.w1);
    u.rowwise() += crow(w, lo.b1);
    x.noalias() += gelu(u) * cmat(w, lo.w2);
    x.rowwise() += crow(w, lo.b2);
  }
  layer_norm(x, crow(w, im.off.lnf_g), crow(w, im.off.lnf_b), xhat, rstd, a);
  out.values.resize(out.rows * out.vocab);
  MapMat logits(out.values.data(), m, cfg.vocab_size);
  logits.noalias() = a * cmat(w, im.off.head_w);
  logits.rowwise() += crow(w, im.off.head_b);
  im.length += m;
  return out;
}

Logits forward(const ModelState& state, std::span<const TokenId> tokens) {
  InferenceSession session(state);
  return session.append(tokens);
}

std::size_t argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

TokenSeq greedy_decode(const ModelState& state, std::span<const TokenId> prefix, std::size_t n) {
  if (prefix.empty()) throw ConfigError("empty prefix");
  if (prefix.size() + n > static_cast<std::size_t>(state.config.context_len)) {
    throw ConfigError("context overflow");
  }
  TokenSeq out;
  out.reserve(n);
  if (n == 0) return out;
  InferenceSession session(state);
  Logits logits = session.append(prefix);
  for (std::size_t i = 0; i < n; ++i) {
    const auto next = static_cast<TokenId>(argmax(logits.row(logits.rows - 1)));
    out.push_back(next);
    if (i + 1 < n) logits = session.append(std::span<const TokenId>(&next, 1));
  }
  return out;
}

std::vector<double> token_logprobs(const ModelState& state, std::span<const TokenId> tokens) {
  if (tokens.size() < 2) throw ConfigError("nothing to predict");
  const Logits logits = forward(state, tokens);
  std::vector<double> out(tokens.size() - 1);
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    out[i] = row[static_cast<std::size_t>(tokens[i + 1])] - mx - std::log(z);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

LossAndGradient loss_and_gradient(const ModelState& state, const Batch& batch) {
  return compute(state, batch, true);
}

double batch_loss(const ModelState& state, const Batch& batch) {
  return compute(state, batch, false).mean_loss;
}

TrainResult train_step(ModelState& state, const Batch& batch, double lr) {
  LossAndGradient lg = compute(state, batch, true);
  double norm2 = 0.0;
  for (double g : lg.gradient) norm2 += g * g;
  if (!std::isfinite(lg.mean_loss) || !std::isfinite(norm2)) throw DivergenceError();

  const ModelConfig& c = state.config;
  double clip = 1.0;
  const double norm = std::sqrt(norm2);
  if (c.grad_clip > 0.0 && norm > c.grad_clip) clip = c.grad_clip / norm;

  const double t = static_cast<double>(state.step + 1);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (const auto& sec : state.layout) {
    const double wd = sec.decay ? c.weight_decay : 0.0;
    for (std::size_t i = sec.offset; i < sec.offset + sec.size(); ++i) {
      const double g = lg.gradient[i] * clip;
      double& m = state.adam_m[i];
      double& v = state.adam_v[i];
      m = c.beta1 * m + (1.0 - c.beta1) * g;
      v = c.beta2 * v + (1.0 - c.beta2) * g * g;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      state.weights[i] -= lr * (mhat / (std::sqrt(vhat) + c.adam_eps) + wd * state.weights[i]);
    }
  }
  ++state.step;
  return {lg.mean_loss, std::move(lg.position_nll)};
}

TrainResult train_step(ModelState& state, const Batch& batch) {
  return train_step(state, batch, lr_at(state.step, state.config));
}

// ---------------------------------------------------------------------------
// Gradient check

GradientCheckResult gradient_check(const ModelState& state, const Batch& batch,
                                   const GradientCheckOptions& options) {
  LossAndGradient lg = loss_and_gradient(state, batch);
  if (options.corrupt) options.corrupt(lg.gradient);

  GradientCheckResult result;
  ModelState probe = state;
  Rng rng(options.seed);
  const std::size_t n = state.weights.size();
  for (std::size_t k = 0; k < options.samples; ++k) {
    const auto i = static_cast<std::size_t>(rng.below(n));
    const double saved = probe.weights[i];
    probe.weights[i] = saved + options.h;
    const double plus = batch_loss(probe, batch);
    probe.weights[i] = saved - options.h;
    const double minus = batch_loss(probe, batch);
    probe.weights[i] = saved;
    const double numeric = (plus - minus) / (2.0 * options.h);
    const double analytic = lg.gradient[i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), options.abs_floor});
    result.max_rel_error = std::max(result.max_rel_error, std::abs(analytic - numeric) / denom);
    result.max_abs_gradient = std::max(result.max_abs_gradient, std::abs(analytic));
    ++result.checked;
  }
  return result;
}

GradientCheckResult gradient_check(const ModelConfig& config, const Batch& batch,
                                   const GradientCheckOptions& options) {
  return gradient_check(init_model(config), batch, options);
}

}  // namespace forgetrace
