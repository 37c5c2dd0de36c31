// Pre-layer-norm transformer encoder with a tied MLM head. Everything here is
// templated on the scalar type: float for training, double for gradient
// checking.

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "babylab/error.hpp"
#include "babylab/model.hpp"
#include "babylab/random.hpp"

namespace babylab {

namespace {

template <typename Real>
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MatMap = Eigen::Map<Mat<Real>>;
template <typename Real>
using ConstMatMap = Eigen::Map<const Mat<Real>>;
template <typename Real>
using StridedMap = Eigen::Map<Mat<Real>, 0, Eigen::OuterStride<>>;
template <typename Real>
using ConstStridedMap = Eigen::Map<const Mat<Real>, 0, Eigen::OuterStride<>>;
template <typename Real>
using RowVecMap = Eigen::Map<Eigen::Matrix<Real, 1, Eigen::Dynamic>>;
template <typename Real>
using ConstRowVecMap = Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>;

template <typename Real>
ConstMatMap<Real> cmat(const Real* p, std::size_t rows, std::size_t cols) {
  return ConstMatMap<Real>(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <typename Real>
MatMap<Real> mat(Real* p, std::size_t rows, std::size_t cols) {
  return MatMap<Real>(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename Real>
Real gelu(Real x) {
  return Real(0.5) * x * (Real(1) + std::erf(x * Real(std::numbers::sqrt2 / 2)));
}

template <typename Real>
Real gelu_grad(Real x) {
  const Real cdf = Real(0.5) * (Real(1) + std::erf(x * Real(std::numbers::sqrt2 / 2)));
  const Real pdf = std::exp(Real(-0.5) * x * x) * Real(0.5 * std::numbers::inv_sqrtpi *
                                                        std::numbers::sqrt2);
  return cdf + x * pdf;
}

struct LayerNormCache {
  template <typename Real>
  static void forward(const Real* x, const Real* gain, const Real* bias, std::size_t rows,
                      std::size_t width, Real* out, Real* xhat, Real* rstd) {
    for (std::size_t r = 0; r < rows; ++r) {
      const Real* xr = x + r * width;
      double mean = 0.0;
      for (std::size_t i = 0; i < width; ++i) mean += xr[i];
      mean /= static_cast<double>(width);
      double var = 0.0;
      for (std::size_t i = 0; i < width; ++i) {
        const double d = xr[i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(width);
      const auto rs = static_cast<Real>(1.0 / std::sqrt(var + kLayerNormEps));
      rstd[r] = rs;
      Real* hr = xhat + r * width;
      Real* orow = out + r * width;
      for (std::size_t i = 0; i < width; ++i) {
        hr[i] = static_cast<Real>(xr[i] - mean) * rs;
        orow[i] = hr[i] * gain[i] + bias[i];
      }
    }
  }

  // Adds d(input) into dx.
  template <typename Real>
  static void backward(const Real* dout, const Real* xhat, const Real* rstd, const Real* gain,
                       std::size_t rows, std::size_t width, Real* dx, Real* dgain, Real* dbias) {
    for (std::size_t r = 0; r < rows; ++r) {
      const Real* dr = dout + r * width;
      const Real* hr = xhat + r * width;
      Real mean_d = 0, mean_dh = 0;
      for (std::size_t i = 0; i < width; ++i) {
        const Real dxhat = dr[i] * gain[i];
        mean_d += dxhat;
        mean_dh += dxhat * hr[i];
        dgain[i] += dr[i] * hr[i];
        dbias[i] += dr[i];
      }
      mean_d /= static_cast<Real>(width);
      mean_dh /= static_cast<Real>(width);
      Real* dxr = dx + r * width;
      for (std::size_t i = 0; i < width; ++i) {
        const Real dxhat = dr[i] * gain[i];
        dxr[i] += rstd[r] * (dxhat - mean_d - hr[i] * mean_dh);
      }
    }
  }
};

template <typename Real>
void fill_dropout_mask(AlignedVector<Real>& mask, std::size_t n, double rate, std::uint64_t seed) {
  mask.resize(n);
  Rng rng(seed);
  const Real keep_scale = static_cast<Real>(1.0 / (1.0 - rate));
  for (auto& m : mask) m = rng.bernoulli(rate) ? Real(0) : keep_scale;
}

template <typename Real>
class Encoder {
 public:
  Encoder(const BasicParameters<Real>& params, const Batch& batch, const ForwardOptions& options)
      : params_(params),
        cfg_(params.config),
        off_(params.config),
        batch_(batch),
        train_(options.train && params.config.dropout > 0.0),
        seed_(options.dropout_seed),
        B_(batch.batch_size),
        T_(batch.length),
        H_(cfg_.hidden_size),
        I_(cfg_.intermediate_size),
        NH_(cfg_.num_heads),
        D_(cfg_.head_dim()),
        N_(B_ * T_) {
    if (params.data.size() != off_.total) throw Error("parameter buffer does not match config");
    if (batch.input_ids.size() != N_ || N_ == 0) throw Error("malformed batch");
    if (T_ > cfg_.max_context) {
      throw Error("sequence length " + std::to_string(T_) + " exceeds max_context " +
                  std::to_string(cfg_.max_context));
    }
    for (TokenId id : batch.input_ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size) {
        throw Error("token id " + std::to_string(id) + " out of range for vocab_size " +
                    std::to_string(cfg_.vocab_size));
      }
    }
    run();
  }

  // Final hidden states [B*T x H] after the final layer norm.
  const AlignedVector<Real>& hidden() const { return hidden_; }
  const AlignedVector<Real>& probs(std::size_t layer) const { return layers_[layer].probs; }

  void backward(AlignedVector<Real>& d_hidden, AlignedVector<Real>& grad) const;

 private:
  struct LayerCache {
    AlignedVector<Real> ln1, xhat1, rstd1;
    AlignedVector<Real> q, k, v;
    AlignedVector<Real> probs, attn_mask;
    AlignedVector<Real> ctx;
    AlignedVector<Real> ln2, xhat2, rstd2;
    AlignedVector<Real> pre, act;
    AlignedVector<Real> ffn_mask;
  };

  const Real* w(std::size_t offset) const { return params_.data.data() + offset; }

  void run();
  void attention_forward(LayerCache& c, std::size_t layer);
  void attention_backward(const LayerCache& c, const AlignedVector<Real>& dctx,
                          AlignedVector<Real>& dq, AlignedVector<Real>& dk,
                          AlignedVector<Real>& dv) const;

  const BasicParameters<Real>& params_;
  const ModelConfig& cfg_;
  ParameterOffsets off_;
  const Batch& batch_;
  bool train_;
  std::uint64_t seed_;
  std::size_t B_, T_, H_, I_, NH_, D_, N_;

  std::vector<LayerCache> layers_;
  AlignedVector<Real> xhat_final_, rstd_final_, hidden_;
};

template <typename Real>
void Encoder<Real>::run() {
  AlignedVector<Real> x(N_ * H_);
  const Real* tok = w(off_.token_embedding);
  const Real* pos = w(off_.position_embedding);
  for (std::size_t b = 0; b < B_; ++b) {
    for (std::size_t t = 0; t < T_; ++t) {
      const auto id = static_cast<std::size_t>(batch_.input_ids[b * T_ + t]);
      Real* xr = x.data() + (b * T_ + t) * H_;
      for (std::size_t i = 0; i < H_; ++i) xr[i] = tok[id * H_ + i] + pos[t * H_ + i];
    }
  }

  layers_.resize(cfg_.num_layers);
  for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
    const auto& o = off_.layers[l];
    auto& c = layers_[l];
    c.ln1.resize(N_ * H_);
    c.xhat1.resize(N_ * H_);
    c.rstd1.resize(N_);
    LayerNormCache::forward(x.data(), w(o.ln1_gain), w(o.ln1_bias), N_, H_, c.ln1.data(),
                            c.xhat1.data(), c.rstd1.data());
    c.q.resize(N_ * H_);
    c.k.resize(N_ * H_);
    c.v.resize(N_ * H_);
    const auto ln1 = cmat(c.ln1.data(), N_, H_);
    mat(c.q.data(), N_, H_).noalias() = ln1 * cmat(w(o.wq), H_, H_);
    mat(c.k.data(), N_, H_).noalias() = ln1 * cmat(w(o.wk), H_, H_);
    mat(c.v.data(), N_, H_).noalias() = ln1 * cmat(w(o.wv), H_, H_);
    attention_forward(c, l);
    mat(x.data(), N_, H_).noalias() += cmat(c.ctx.data(), N_, H_) * cmat(w(o.wo), H_, H_);

    c.ln2.resize(N_ * H_);
    c.xhat2.resize(N_ * H_);
    c.rstd2.resize(N_);
    LayerNormCache::forward(x.data(), w(o.ln2_gain), w(o.ln2_bias), N_, H_, c.ln2.data(),
                            c.xhat2.data(), c.rstd2.data());
    c.pre.resize(N_ * I_);
    c.act.resize(N_ * I_);
    auto pre = mat(c.pre.data(), N_, I_);
    pre.noalias() = cmat(c.ln2.data(), N_, H_) * cmat(w(o.ffn_w1), H_, I_);
    pre.rowwise() += ConstRowVecMap<Real>(w(o.ffn_b1), static_cast<Eigen::Index>(I_));
    for (std::size_t i = 0; i < N_ * I_; ++i) c.act[i] = gelu(c.pre[i]);
    Mat<Real> f = cmat(c.act.data(), N_, I_) * cmat(w(o.ffn_w2), I_, H_);
    f.rowwise() += ConstRowVecMap<Real>(w(o.ffn_b2), static_cast<Eigen::Index>(H_));
    if (train_) {
      fill_dropout_mask(c.ffn_mask, N_ * H_, cfg_.dropout, derive_seed(seed_, "ffn-dropout", l));
      f.array() *= cmat(c.ffn_mask.data(), N_, H_).array();
    }
    mat(x.data(), N_, H_) += f;
  }

  hidden_.resize(N_ * H_);
  xhat_final_.resize(N_ * H_);
  rstd_final_.resize(N_);
  LayerNormCache::forward(x.data(), w(off_.final_gain), w(off_.final_bias), N_, H_,
                          hidden_.data(), xhat_final_.data(), rstd_final_.data());
}

template <typename Real>
void Encoder<Real>::attention_forward(LayerCache& c, std::size_t layer) {
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(D_));
  c.probs.assign(B_ * NH_ * T_ * T_, Real(0));
  c.ctx.assign(N_ * H_, Real(0));
  if (train_) {
    fill_dropout_mask(c.attn_mask, c.probs.size(), cfg_.dropout,
                      derive_seed(seed_, "attention-dropout", layer));
  }
  const auto stride = Eigen::OuterStride<>(static_cast<Eigen::Index>(H_));
  const auto T = static_cast<Eigen::Index>(T_);
  const auto D = static_cast<Eigen::Index>(D_);
  Mat<Real> dropped;
  for (std::size_t b = 0; b < B_; ++b) {
    for (std::size_t h = 0; h < NH_; ++h) {
      const std::size_t base = b * T_ * H_ + h * D_;
      ConstStridedMap<Real> q(c.q.data() + base, T, D, stride);
      ConstStridedMap<Real> k(c.k.data() + base, T, D, stride);
      ConstStridedMap<Real> v(c.v.data() + base, T, D, stride);
      Real* pb = c.probs.data() + (b * NH_ + h) * T_ * T_;
      auto p = mat(pb, T_, T_);
      p.noalias() = (q * k.transpose()) * scale;
      for (std::size_t i = 0; i < T_; ++i) {
        Real* row = pb + i * T_;
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t j = 0; j < T_; ++j) {
          if (batch_.valid(b, j)) mx = std::max(mx, row[j]);
        }
        Real sum = 0;
        for (std::size_t j = 0; j < T_; ++j) {
          row[j] = batch_.valid(b, j) ? std::exp(row[j] - mx) : Real(0);
          sum += row[j];
        }
        if (sum > 0) {
          const Real inv = Real(1) / sum;
          for (std::size_t j = 0; j < T_; ++j) row[j] *= inv;
        }
      }
      StridedMap<Real> ctx(c.ctx.data() + base, T, D, stride);
      if (train_) {
        dropped = (p.array() * cmat(c.attn_mask.data() + (b * NH_ + h) * T_ * T_, T_, T_).array()).matrix();
        ctx.noalias() = dropped * v;
      } else {
        ctx.noalias() = p * v;
      }
    }
  }
}

template <typename Real>
void Encoder<Real>::attention_backward(const LayerCache& c, const AlignedVector<Real>& dctx_buf,
                                       AlignedVector<Real>& dq_buf, AlignedVector<Real>& dk_buf,
                                       AlignedVector<Real>& dv_buf) const {
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(D_));
  const auto stride = Eigen::OuterStride<>(static_cast<Eigen::Index>(H_));
  const auto T = static_cast<Eigen::Index>(T_);
  const auto D = static_cast<Eigen::Index>(D_);
  Mat<Real> dp(T, T), pd(T, T);
  for (std::size_t b = 0; b < B_; ++b) {
    for (std::size_t h = 0; h < NH_; ++h) {
      const std::size_t base = b * T_ * H_ + h * D_;
      ConstStridedMap<Real> q(c.q.data() + base, T, D, stride);
      ConstStridedMap<Real> k(c.k.data() + base, T, D, stride);
      ConstStridedMap<Real> v(c.v.data() + base, T, D, stride);
      ConstStridedMap<Real> dctx(dctx_buf.data() + base, T, D, stride);
      StridedMap<Real> dq(dq_buf.data() + base, T, D, stride);
      StridedMap<Real> dk(dk_buf.data() + base, T, D, stride);
      StridedMap<Real> dv(dv_buf.data() + base, T, D, stride);
      const std::size_t pbase = (b * NH_ + h) * T_ * T_;
      const auto p = cmat(c.probs.data() + pbase, T_, T_);

      dp.noalias() = dctx * v.transpose();
      if (train_) {
        const auto mask = cmat(c.attn_mask.data() + pbase, T_, T_);
        pd = (p.array() * mask.array()).matrix();
        dv.noalias() = pd.transpose() * dctx;
        dp.array() *= mask.array();
      } else {
        dv.noalias() = p.transpose() * dctx;
      }
      for (Eigen::Index i = 0; i < T; ++i) {
        const Real dot = dp.row(i).dot(p.row(i));
        dp.row(i) = (p.row(i).array() * (dp.row(i).array() - dot)) * scale;
      }
      dq.noalias() = dp * k;
      dk.noalias() = dp.transpose() * q;
    }
  }
}

template <typename Real>
void Encoder<Real>::backward(AlignedVector<Real>& d_hidden, AlignedVector<Real>& grad) const {
  Real* g = grad.data();
  AlignedVector<Real> dx(N_ * H_, Real(0));
  LayerNormCache::backward(d_hidden.data(), xhat_final_.data(), rstd_final_.data(),
                           w(off_.final_gain), N_, H_, dx.data(), g + off_.final_gain,
                           g + off_.final_bias);

  AlignedVector<Real> df(N_ * H_), dact(N_ * I_), dln(N_ * H_), dctx(N_ * H_), dq(N_ * H_),
      dk(N_ * H_), dv(N_ * H_);
  for (std::size_t l = cfg_.num_layers; l-- > 0;) {
    const auto& o = off_.layers[l];
    const auto& c = layers_[l];

    // feed-forward sublayer
    df = dx;
    if (train_) {
      for (std::size_t i = 0; i < df.size(); ++i) df[i] *= c.ffn_mask[i];
    }
    const auto dfm = cmat(df.data(), N_, H_);
    RowVecMap<Real>(g + o.ffn_b2, static_cast<Eigen::Index>(H_)) += dfm.colwise().sum();
    mat(g + o.ffn_w2, I_, H_).noalias() += cmat(c.act.data(), N_, I_).transpose() * dfm;
    mat(dact.data(), N_, I_).noalias() = dfm * cmat(w(o.ffn_w2), I_, H_).transpose();
    for (std::size_t i = 0; i < N_ * I_; ++i) dact[i] *= gelu_grad(c.pre[i]);
    const auto dpre = cmat(dact.data(), N_, I_);
    RowVecMap<Real>(g + o.ffn_b1, static_cast<Eigen::Index>(I_)) += dpre.colwise().sum();
    mat(g + o.ffn_w1, H_, I_).noalias() += cmat(c.ln2.data(), N_, H_).transpose() * dpre;
    mat(dln.data(), N_, H_).noalias() = dpre * cmat(w(o.ffn_w1), H_, I_).transpose();
    LayerNormCache::backward(dln.data(), c.xhat2.data(), c.rstd2.data(), w(o.ln2_gain), N_, H_,
                             dx.data(), g + o.ln2_gain, g + o.ln2_bias);

    // attention sublayer
    const auto dxm = cmat(dx.data(), N_, H_);
    mat(g + o.wo, H_, H_).noalias() += cmat(c.ctx.data(), N_, H_).transpose() * dxm;
    mat(dctx.data(), N_, H_).noalias() = dxm * cmat(w(o.wo), H_, H_).transpose();
    attention_backward(c, dctx, dq, dk, dv);
    const auto ln1t = cmat(c.ln1.data(), N_, H_).transpose();
    const auto dqm = cmat(dq.data(), N_, H_);
    const auto dkm = cmat(dk.data(), N_, H_);
    const auto dvm = cmat(dv.data(), N_, H_);
    mat(g + o.wq, H_, H_).noalias() += ln1t * dqm;
    mat(g + o.wk, H_, H_).noalias() += ln1t * dkm;
    mat(g + o.wv, H_, H_).noalias() += ln1t * dvm;
    auto dlnm = mat(dln.data(), N_, H_);
    dlnm.noalias() = dqm * cmat(w(o.wq), H_, H_).transpose();
    dlnm.noalias() += dkm * cmat(w(o.wk), H_, H_).transpose();
    dlnm.noalias() += dvm * cmat(w(o.wv), H_, H_).transpose();
    LayerNormCache::backward(dln.data(), c.xhat1.data(), c.rstd1.data(), w(o.ln1_gain), N_, H_,
                             dx.data(), g + o.ln1_gain, g + o.ln1_bias);
  }

  Real* dtok = g + off_.token_embedding;
  Real* dpos = g + off_.position_embedding;
  for (std::size_t b = 0; b < B_; ++b) {
    for (std::size_t t = 0; t < T_; ++t) {
      if (!batch_.valid(b, t)) continue;
      const auto id = static_cast<std::size_t>(batch_.input_ids[b * T_ + t]);
      const Real* dr = dx.data() + (b * T_ + t) * H_;
      for (std::size_t i = 0; i < H_; ++i) {
        dtok[id * H_ + i] += dr[i];
        dpos[t * H_ + i] += dr[i];
      }
    }
  }
}

// Logits for the given rows of the final hidden states: Y E^T + bias.
template <typename Real>
Mat<Real> head_logits(const BasicParameters<Real>& params, const AlignedVector<Real>& hidden,
                      std::span<const std::size_t> rows) {
  const auto& cfg = params.config;
  const ParameterOffsets off(cfg);
  const std::size_t H = cfg.hidden_size, V = cfg.vocab_size;
  Mat<Real> y(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(H));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    y.row(static_cast<Eigen::Index>(r)) =
        cmat(hidden.data() + rows[r] * H, 1, H);
  }
  Mat<Real> logits = y * cmat(params.data.data() + off.token_embedding, V, H).transpose();
  logits.rowwise() +=
      ConstRowVecMap<Real>(params.data.data() + off.output_bias, static_cast<Eigen::Index>(V));
  return logits;
}

// log-sum-exp of one row, accumulated in double.
template <typename Row>
double log_sum_exp(const Row& row) {
  const double mx = static_cast<double>(row.maxCoeff());
  double sum = 0.0;
  for (Eigen::Index j = 0; j < row.size(); ++j) sum += std::exp(static_cast<double>(row(j)) - mx);
  return mx + std::log(sum);
}

}  // namespace

template <typename Real>
BasicTensor<Real> forward(const BasicParameters<Real>& params, const Batch& batch,
                          const ForwardOptions& options) {
  const Encoder<Real> enc(params, batch, options);
  const std::size_t n = batch.batch_size * batch.length;
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  const Mat<Real> logits = head_logits(params, enc.hidden(), rows);
  BasicTensor<Real> out;
  out.shape = {batch.batch_size, batch.length, params.config.vocab_size};
  out.data.assign(logits.data(), logits.data() + logits.size());
  return out;
}

template <typename Real>
std::vector<BasicTensor<Real>> attention_weights(const BasicParameters<Real>& params,
                                                 const Batch& batch) {
  const Encoder<Real> enc(params, batch, {});
  std::vector<BasicTensor<Real>> out;
  for (std::size_t l = 0; l < params.config.num_layers; ++l) {
    out.push_back({{batch.batch_size, params.config.num_heads, batch.length, batch.length},
                   enc.probs(l)});
  }
  return out;
}

template <typename Real>
double mlm_loss(const BasicTensor<Real>& logits, std::span<const TokenId> labels) {
  if (logits.shape.size() != 3) throw Error("logits must be [batch x length x vocab]");
  const std::size_t rows = logits.shape[0] * logits.shape[1];
  const std::size_t vocab = logits.shape[2];
  if (labels.size() != rows) throw Error("labels do not match logits shape");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] == kIgnoreLabel) continue;
    const auto row = cmat(logits.data.data() + r * vocab, 1, vocab);
    total += log_sum_exp(row) - static_cast<double>(row(0, labels[r]));
    ++count;
  }
  if (count == 0) throw Error("batch has no labelled positions");
  return total / static_cast<double>(count);
}

template <typename Real>
double loss_and_gradient(const BasicParameters<Real>& params, const Batch& batch,
                         const ForwardOptions& options, AlignedVector<Real>& grad) {
  if (batch.labels.size() != batch.input_ids.size()) throw Error("batch has no labels");
  std::vector<std::size_t> rows;
  std::vector<TokenId> targets;
  for (std::size_t i = 0; i < batch.labels.size(); ++i) {
    if (batch.labels[i] == kIgnoreLabel) continue;
    if (batch.labels[i] < 0 || static_cast<std::size_t>(batch.labels[i]) >= params.config.vocab_size) {
      throw Error("label id out of range");
    }
    rows.push_back(i);
    targets.push_back(batch.labels[i]);
  }
  if (rows.empty()) throw Error("batch has no labelled positions");

  const Encoder<Real> enc(params, batch, options);
  Mat<Real> logits = head_logits(params, enc.hidden(), rows);

  const auto m = static_cast<double>(rows.size());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const double lse = log_sum_exp(row);
    loss += lse - static_cast<double>(row(targets[static_cast<std::size_t>(r)]));
    for (Eigen::Index j = 0; j < row.size(); ++j) {
      row(j) = static_cast<Real>(std::exp(static_cast<double>(row(j)) - lse) / m);
    }
    row(targets[static_cast<std::size_t>(r)]) -= static_cast<Real>(1.0 / m);
  }
  loss /= m;

  // `logits` now holds d(loss)/d(logits).
  const auto& cfg = params.config;
  const ParameterOffsets off(cfg);
  const std::size_t H = cfg.hidden_size, V = cfg.vocab_size;
  grad.assign(params.data.size(), Real(0));
  Real* g = grad.data();
  RowVecMap<Real>(g + off.output_bias, static_cast<Eigen::Index>(V)) += logits.colwise().sum();
  Mat<Real> y(logits.rows(), static_cast<Eigen::Index>(H));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    y.row(static_cast<Eigen::Index>(r)) = cmat(enc.hidden().data() + rows[r] * H, 1, H);
  }
  mat(g + off.token_embedding, V, H).noalias() += logits.transpose() * y;
  const Mat<Real> dy = logits * cmat(params.data.data() + off.token_embedding, V, H);
  AlignedVector<Real> d_hidden(batch.input_ids.size() * H, Real(0));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t i = 0; i < H; ++i) {
      d_hidden[rows[r] * H + i] = dy(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i));
    }
  }
  enc.backward(d_hidden, grad);
  return loss;
}

template <typename Real>
std::vector<double> target_log_probs(const BasicParameters<Real>& params, const Batch& batch,
                                     std::span<const Query> queries) {
  if (queries.empty()) return {};
  std::vector<std::size_t> rows;
  rows.reserve(queries.size());
  for (const auto& q : queries) {
    if (q.row >= batch.batch_size || q.position >= batch.length) {
      throw Error("query outside batch");
    }
    if (q.target < 0 || static_cast<std::size_t>(q.target) >= params.config.vocab_size) {
      throw Error("query target out of range");
    }
    rows.push_back(q.row * batch.length + q.position);
  }
  const Encoder<Real> enc(params, batch, {});
  const Mat<Real> logits = head_logits(params, enc.hidden(), rows);
  std::vector<double> out(queries.size());
  for (std::size_t r = 0; r < queries.size(); ++r) {
    const auto row = logits.row(static_cast<Eigen::Index>(r));
    out[r] = static_cast<double>(row(queries[r].target)) - log_sum_exp(row);
  }
  return out;
}

#define BABYLAB_INSTANTIATE(Real)                                                            \
  template BasicTensor<Real> forward(const BasicParameters<Real>&, const Batch&,             \
                                     const ForwardOptions&);                                 \
  template std::vector<BasicTensor<Real>> attention_weights(const BasicParameters<Real>&,    \
                                                            const Batch&);                   \
  template double mlm_loss(const BasicTensor<Real>&, std::span<const TokenId>);              \
  template double loss_and_gradient(const BasicParameters<Real>&, const Batch&,              \
                                    const ForwardOptions&, AlignedVector<Real>&);              \
  template std::vector<double> target_log_probs(const BasicParameters<Real>&, const Batch&, \
                                                std::span<const Query>);

BABYLAB_INSTANTIATE(float)
BABYLAB_INSTANTIATE(double)

#undef BABYLAB_INSTANTIATE

}  // namespace babylab
