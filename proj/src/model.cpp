#include "icrl/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "icrl/errors.hpp"
#include "icrl/kernels.hpp"

namespace icrl {
namespace {

constexpr double kRmsEps = 1e-5;
constexpr char kCheckpointMagic[8] = {'I', 'C', 'R', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

namespace kn = kernels;

double rms_forward(const double* x, const double* gain, double* y, std::size_t d) {
  const double ms = kn::active().dot(x, x, d) / static_cast<double>(d);
  const double r = 1.0 / std::sqrt(ms + kRmsEps);
  for (std::size_t k = 0; k < d; ++k) y[k] = x[k] * r * gain[k];
  return r;
}

// y = x * r * g with r = (mean(x^2) + eps)^-1/2. Accumulates into dx and dg.
void rms_backward(const double* x, double r, const double* gain, const double* dy,
                  double* dx, double* dgain, std::size_t d) {
  double proj = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    dgain[k] += dy[k] * x[k] * r;
    proj += x[k] * dy[k] * gain[k];
  }
  const double c = r * r * r * proj / static_cast<double>(d);
  for (std::size_t k = 0; k < d; ++k) dx[k] += r * dy[k] * gain[k] - c * x[k];
}

inline double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

// In-place softmax of w[0..n); returns nothing, w holds probabilities.
void softmax_inplace(double* w, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, w[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    w[j] = std::exp(w[j] - mx);
    sum += w[j];
  }
  const double inv = 1.0 / sum;
  for (std::size_t j = 0; j < n; ++j) w[j] *= inv;
}

void log_softmax_inplace(std::vector<double>& v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - mx);
  const double lse = mx + std::log(sum);
  for (double& x : v) x -= lse;
}

inline std::size_t bucket(std::size_t dist, std::size_t buckets) {
  return std::min(dist, buckets - 1);
}

}  // namespace

// ---------------------------------------------------------------------------
// Architecture and parameters

void ArchSpec::validate() const {
  if (vocab < tok::kNumReserved || vocab > kMaxVocab) {
    throw ConfigError("model.vocab must be in [10, 1024]");
  }
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw ConfigError("model.d_model must be a positive multiple of model.n_heads");
  }
  if (d_model > 64) throw ConfigError("model.d_model must be <= 64");
  if (n_layers < 1 || n_layers > 2) throw ConfigError("model.n_layers must be 1 or 2");
  if (d_ff == 0) throw ConfigError("model.d_ff must be positive");
  if (window < 2) throw ConfigError("model.window must be >= 2");
  if (rel_buckets == 0) throw ConfigError("model.rel_buckets must be positive");
  if (copy_dim == 0) throw ConfigError("model.copy_dim must be positive");
}

ParamLayout::ParamLayout(const ArchSpec& a) {
  const std::size_t V = a.vocab, d = a.d_model, f = a.d_ff, R = a.rel_buckets, c = a.copy_dim;
  std::size_t off = 0;
  auto take = [&](std::size_t n) {
    const std::size_t at = off;
    off += n;
    return at;
  };
  tok_emb = take(V * d);
  prev_emb = take(V * d);
  for (std::size_t l = 0; l < a.n_layers; ++l) {
    Block b{};
    b.ln1 = take(d);
    b.wq = take(d * d);
    b.wk = take(d * d);
    b.wv = take(d * d);
    b.wo = take(d * d);
    b.rel = take(a.n_heads * R);
    b.ln2 = take(d);
    b.w1 = take(f * d);
    b.b1 = take(f);
    b.w2 = take(d * f);
    b.b2 = take(d);
    blocks.push_back(b);
  }
  lnf = take(d);
  wout = take(V * d);
  bout = take(V);
  cq = take(c * d);
  ck = take(c * d);
  crel = take(R);
  wgate = take(d);
  bgate = take(1);
  total = off;
}

PolicyParams::PolicyParams(const ArchSpec& arch)
    : arch_(arch), layout_(std::make_shared<ParamLayout>(arch)) {
  arch_.validate();
  theta_.assign(layout_->total, 0.0);
}

PolicyParams PolicyParams::initialize(const ArchSpec& arch, std::uint64_t seed,
                                      double init_scale) {
  PolicyParams p(arch);
  const ParamLayout& L = p.layout();
  Rng rng(derive_seed(seed, {0x1417}));
  for (double& v : p.theta_) v = init_scale * rng.normal();
  auto fill = [&](std::size_t off, std::size_t n, double value) {
    std::fill_n(p.theta_.begin() + static_cast<std::ptrdiff_t>(off), n, value);
  };
  const std::size_t d = arch.d_model;
  for (const auto& b : L.blocks) {
    fill(b.ln1, d, 1.0);
    fill(b.ln2, d, 1.0);
    fill(b.rel, arch.n_heads * arch.rel_buckets, 0.0);
    fill(b.b1, arch.d_ff, 0.0);
    fill(b.b2, d, 0.0);
  }
  fill(L.lnf, d, 1.0);
  fill(L.bout, arch.vocab, 0.0);
  fill(L.crel, arch.rel_buckets, 0.0);
  fill(L.bgate, 1, 0.0);
  return p;
}

// ---------------------------------------------------------------------------
// Forward

ForwardTape::ForwardTape(const PolicyParams& params, std::span<const TokenId> context)
    : params_(&params) {
  const ArchSpec& a = params.arch();
  xs_.resize(a.n_layers + 1);
  layers_.resize(a.n_layers);
  append(tok::kBos);
  for (TokenId t : context) append(t);
}

ForwardTape::ForwardTape(const ForwardTape& parent, std::span<const TokenId> continuation)
    : params_(parent.params_), parent_(&parent), begin_(parent.size()) {
  const ArchSpec& a = params_->arch();
  xs_.resize(a.n_layers + 1);
  layers_.resize(a.n_layers);
  for (TokenId t : continuation) append(t);
}

TokenId ForwardTape::token(std::size_t pos) const {
  if (pos < begin_) return parent_->token(pos);
  return tokens_[pos - begin_];
}

const double* ForwardTape::key(std::size_t layer, std::size_t pos) const {
  if (pos < begin_) return parent_->key(layer, pos);
  return layers_[layer].k.data() + (pos - begin_) * params_->arch().d_model;
}

const double* ForwardTape::value(std::size_t layer, std::size_t pos) const {
  if (pos < begin_) return parent_->value(layer, pos);
  return layers_[layer].v.data() + (pos - begin_) * params_->arch().d_model;
}

const double* ForwardTape::copy_key(std::size_t pos) const {
  if (pos < begin_) return parent_->copy_key(pos);
  return ck_.data() + (pos - begin_) * params_->arch().copy_dim;
}

void ForwardTape::append(TokenId token) {
  const ArchSpec& a = params_->arch();
  if (token < 0 || static_cast<std::size_t>(token) >= a.vocab) {
    throw ContractError("token id outside the policy vocabulary");
  }
  if (size() >= a.window) throw ContractError("sequence exceeds the context window");
  tokens_.push_back(token);
  const std::size_t n = tokens_.size();
  const std::size_t d = a.d_model, f = a.d_ff;
  for (auto& x : xs_) x.resize(n * d);
  for (LayerActs& A : layers_) {
    A.r1.resize(n);
    A.r2.resize(n);
    for (auto* v : {&A.u, &A.q, &A.k, &A.v, &A.o, &A.x_mid, &A.u2}) v->resize(n * d);
    A.hpre.resize(n * f);
    A.hact.resize(n * f);
    A.attn_offset.resize(n);
  }
  rf_.resize(n);
  z_.resize(n * d);
  ck_.resize(n * a.copy_dim);
  heads_.resize(n);
  forward_position(size() - 1);
}

void ForwardTape::forward_position(std::size_t p) {
  const ArchSpec& a = params_->arch();
  const ParamLayout& L = params_->layout();
  const kn::KernelTable& K = kn::active();
  const std::size_t d = a.d_model, H = a.n_heads, dh = d / H, f = a.d_ff, R = a.rel_buckets;
  const std::size_t i = p - begin_;
  const auto s = static_cast<std::size_t>(token(p));
  const auto prev = static_cast<std::size_t>(p == 0 ? tok::kBos : token(p - 1));

  double* x0 = xs_[0].data() + i * d;
  const double* emb = params_->at(L.tok_emb) + s * d;
  const double* pemb = params_->at(L.prev_emb) + prev * d;
  for (std::size_t k = 0; k < d; ++k) x0[k] = emb[k] + pemb[k];

  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> tmp(std::max(d, f));
  for (std::size_t l = 0; l < a.n_layers; ++l) {
    const ParamLayout::Block& B = L.blocks[l];
    LayerActs& A = layers_[l];
    const double* x = xs_[l].data() + i * d;
    double* u = A.u.data() + i * d;
    double* q = A.q.data() + i * d;
    A.r1[i] = rms_forward(x, params_->at(B.ln1), u, d);
    K.gemv(params_->at(B.wq), u, q, d, d);
    K.gemv(params_->at(B.wk), u, A.k.data() + i * d, d, d);
    K.gemv(params_->at(B.wv), u, A.v.data() + i * d, d, d);

    A.attn_offset[i] = A.attn.size();
    A.attn.resize(A.attn.size() + H * (p + 1));
    double* o = A.o.data() + i * d;
    std::fill_n(o, d, 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      double* w = A.attn.data() + A.attn_offset[i] + h * (p + 1);
      const double* qh = q + h * dh;
      const double* rel = params_->at(B.rel) + h * R;
      for (std::size_t j = 0; j <= p; ++j) {
        w[j] = K.dot(qh, key(l, j) + h * dh, dh) * scale + rel[bucket(p - j, R)];
      }
      softmax_inplace(w, p + 1);
      for (std::size_t j = 0; j <= p; ++j) K.axpy(w[j], value(l, j) + h * dh, o + h * dh, dh);
    }
    double* xm = A.x_mid.data() + i * d;
    K.gemv(params_->at(B.wo), o, tmp.data(), d, d);
    for (std::size_t k = 0; k < d; ++k) xm[k] = x[k] + tmp[k];

    double* u2 = A.u2.data() + i * d;
    A.r2[i] = rms_forward(xm, params_->at(B.ln2), u2, d);
    double* hpre = A.hpre.data() + i * f;
    double* hact = A.hact.data() + i * f;
    K.gemv(params_->at(B.w1), u2, hpre, f, d);
    const double* b1 = params_->at(B.b1);
    for (std::size_t k = 0; k < f; ++k) {
      hpre[k] += b1[k];
      hact[k] = hpre[k] * sigmoid(hpre[k]);
    }
    double* xo = xs_[l + 1].data() + i * d;
    K.gemv(params_->at(B.w2), hact, tmp.data(), d, f);
    const double* b2 = params_->at(B.b2);
    for (std::size_t k = 0; k < d; ++k) xo[k] = xm[k] + tmp[k] + b2[k];
  }
  double* z = z_.data() + i * d;
  rf_[i] = rms_forward(xs_[a.n_layers].data() + i * d, params_->at(L.lnf), z, d);
  K.gemv(params_->at(L.ck), z, ck_.data() + i * a.copy_dim, a.copy_dim, d);
}

std::span<const double> ForwardTape::next_logprobs(std::size_t pos) {
  if (pos < begin_ || pos >= size()) throw ContractError("position not owned by this tape");
  const std::size_t i = pos - begin_;
  if (heads_[i]) return heads_[i]->logp;

  const ArchSpec& a = params_->arch();
  const ParamLayout& L = params_->layout();
  const kn::KernelTable& K = kn::active();
  const std::size_t V = a.vocab, d = a.d_model, c = a.copy_dim, R = a.rel_buckets;
  const double* z = z_.data() + i * d;

  HeadActs h;
  h.logp.resize(V);
  K.gemv(params_->at(L.wout), z, h.logp.data(), V, d);
  const double* bout = params_->at(L.bout);
  for (std::size_t v = 0; v < V; ++v) h.logp[v] += bout[v];

  h.cq.resize(c);
  K.gemv(params_->at(L.cq), z, h.cq.data(), c, d);
  const double cscale = 1.0 / std::sqrt(static_cast<double>(c));
  const double* crel = params_->at(L.crel);
  h.cattn.resize(pos + 1);
  for (std::size_t j = 0; j <= pos; ++j) {
    h.cattn[j] = K.dot(h.cq.data(), copy_key(j), c) * cscale + crel[bucket(pos - j, R)];
  }
  softmax_inplace(h.cattn.data(), pos + 1);
  h.gate = K.dot(params_->at(L.wgate), z, d) + *params_->at(L.bgate);
  for (std::size_t j = 0; j <= pos; ++j) {
    h.logp[static_cast<std::size_t>(token(j))] += h.gate * h.cattn[j];
  }
  log_softmax_inplace(h.logp);
  heads_[i] = std::move(h);
  return heads_[i]->logp;
}

// ---------------------------------------------------------------------------
// Backward

void ParentGrad::resize(const ArchSpec& a, std::size_t positions) {
  dk.assign(a.n_layers, std::vector<double>(positions * a.d_model, 0.0));
  dv.assign(a.n_layers, std::vector<double>(positions * a.d_model, 0.0));
  dck.assign(positions * a.copy_dim, 0.0);
}

void ParentGrad::add(const ParentGrad& other) {
  if (dk.empty()) {
    *this = other;
    return;
  }
  for (std::size_t l = 0; l < dk.size(); ++l) {
    for (std::size_t k = 0; k < dk[l].size(); ++k) dk[l][k] += other.dk[l][k];
    for (std::size_t k = 0; k < dv[l].size(); ++k) dv[l][k] += other.dv[l][k];
  }
  for (std::size_t k = 0; k < dck.size(); ++k) dck[k] += other.dck[k];
}

class TapeBackward {
 public:
  static void run(ForwardTape& t, std::span<const LogitSeed> seeds,
                  const ParentGrad* from_children, std::span<double> grad, ParentGrad* to_parent);
};

void TapeBackward::run(ForwardTape& t, std::span<const LogitSeed> seeds,
                       const ParentGrad* from_children, std::span<double> grad,
                       ParentGrad* to_parent) {
  const PolicyParams& P = *t.params_;
  const ArchSpec& a = P.arch();
  const ParamLayout& L = P.layout();
  if (grad.size() != P.size()) throw ContractError("gradient buffer size mismatch");
  const kn::KernelTable& K = kn::active();
  const std::size_t V = a.vocab, d = a.d_model, H = a.n_heads, dh = d / H, f = a.d_ff,
                    R = a.rel_buckets, c = a.copy_dim;
  const std::size_t begin = t.begin_;
  const std::size_t n = t.tokens_.size();
  double* G = grad.data();

  if (t.parent_ && to_parent) to_parent->resize(a, begin);
  const bool send_up = t.parent_ && to_parent;

  std::vector<double> dz(n * d, 0.0), dck(n * c, 0.0);
  if (from_children) {
    for (std::size_t i = 0; i < n * c; ++i) dck[i] += from_children->dck[begin * c + i];
  }
  auto dck_at = [&](std::size_t j) -> double* {
    if (j < begin) return send_up ? to_parent->dck.data() + j * c : nullptr;
    return dck.data() + (j - begin) * c;
  };

  // Output head.
  const double cscale = 1.0 / std::sqrt(static_cast<double>(c));
  std::vector<double> dcq(c), dca;
  for (const LogitSeed& seed : seeds) {
    if (seed.dlogits.size() != V) throw ContractError("logit seed has wrong length");
    t.next_logprobs(seed.pos);
    const std::size_t i = seed.pos - begin;
    const ForwardTape::HeadActs& h = *t.heads_[i];
    const double* z = t.z_.data() + i * d;
    double* dzi = dz.data() + i * d;
    const double* dl = seed.dlogits.data();

    K.ger(1.0, dl, z, G + L.wout, V, d);
    K.axpy(1.0, dl, G + L.bout, V);
    K.gemv_t_acc(P.at(L.wout), dl, dzi, V, d);

    const std::size_t m = seed.pos + 1;
    dca.assign(m, 0.0);
    double dgate = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double g = dl[static_cast<std::size_t>(t.token(j))];
      dgate += g * h.cattn[j];
      dca[j] = h.gate * g;
    }
    K.axpy(dgate, z, G + L.wgate, d);
    G[L.bgate] += dgate;
    K.axpy(dgate, P.at(L.wgate), dzi, d);

    double inner = 0.0;
    for (std::size_t j = 0; j < m; ++j) inner += h.cattn[j] * dca[j];
    std::fill(dcq.begin(), dcq.end(), 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      const double ds = h.cattn[j] * (dca[j] - inner);
      G[L.crel + bucket(seed.pos - j, R)] += ds;
      K.axpy(ds * cscale, t.copy_key(j), dcq.data(), c);
      if (double* target = dck_at(j)) K.axpy(ds * cscale, h.cq.data(), target, c);
    }
    K.ger(1.0, dcq.data(), z, G + L.cq, c, d);
    K.gemv_t_acc(P.at(L.cq), dcq.data(), dzi, c, d);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = t.z_.data() + i * d;
    K.ger(1.0, dck.data() + i * c, z, G + L.ck, c, d);
    K.gemv_t_acc(P.at(L.ck), dck.data() + i * c, dz.data() + i * d, c, d);
  }

  // Final norm.
  std::vector<double> dx(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    rms_backward(t.xs_[a.n_layers].data() + i * d, t.rf_[i], P.at(L.lnf), dz.data() + i * d,
                 dx.data() + i * d, G + L.lnf, d);
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> dxm(n * d), dq(n * d), dk(n * d), dv(n * d), dx_in(n * d);
  std::vector<double> dh_act(f), dh_pre(f), du(d), dout(d);
  std::vector<double> da;
  for (std::size_t l = a.n_layers; l-- > 0;) {
    const ParamLayout::Block& B = L.blocks[l];
    const ForwardTape::LayerActs& A = t.layers_[l];
    std::fill(dq.begin(), dq.end(), 0.0);
    std::fill(dk.begin(), dk.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    if (from_children) {
      for (std::size_t k = 0; k < n * d; ++k) {
        dk[k] += from_children->dk[l][begin * d + k];
        dv[k] += from_children->dv[l][begin * d + k];
      }
    }
    auto dk_at = [&](std::size_t j) -> double* {
      if (j < begin) return send_up ? to_parent->dk[l].data() + j * d : nullptr;
      return dk.data() + (j - begin) * d;
    };
    auto dv_at = [&](std::size_t j) -> double* {
      if (j < begin) return send_up ? to_parent->dv[l].data() + j * d : nullptr;
      return dv.data() + (j - begin) * d;
    };

    // Feed-forward.
    for (std::size_t i = 0; i < n; ++i) {
      const double* dxo = dx.data() + i * d;
      double* dxmi = dxm.data() + i * d;
      std::copy_n(dxo, d, dxmi);
      K.axpy(1.0, dxo, G + B.b2, d);
      K.ger(1.0, dxo, A.hact.data() + i * f, G + B.w2, d, f);
      std::fill(dh_act.begin(), dh_act.end(), 0.0);
      K.gemv_t_acc(P.at(B.w2), dxo, dh_act.data(), d, f);
      const double* hpre = A.hpre.data() + i * f;
      for (std::size_t k = 0; k < f; ++k) {
        const double sg = sigmoid(hpre[k]);
        dh_pre[k] = dh_act[k] * sg * (1.0 + hpre[k] * (1.0 - sg));
      }
      K.axpy(1.0, dh_pre.data(), G + B.b1, f);
      K.ger(1.0, dh_pre.data(), A.u2.data() + i * d, G + B.w1, f, d);
      std::fill(du.begin(), du.end(), 0.0);
      K.gemv_t_acc(P.at(B.w1), dh_pre.data(), du.data(), f, d);
      rms_backward(A.x_mid.data() + i * d, A.r2[i], P.at(B.ln2), du.data(), dxmi, G + B.ln2, d);
    }

    // Attention mixing.
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t p = begin + i;
      const double* dxmi = dxm.data() + i * d;
      K.ger(1.0, dxmi, A.o.data() + i * d, G + B.wo, d, d);
      std::fill(dout.begin(), dout.end(), 0.0);
      K.gemv_t_acc(P.at(B.wo), dxmi, dout.data(), d, d);
      const double* q = A.q.data() + i * d;
      for (std::size_t h = 0; h < H; ++h) {
        const double* w = A.attn.data() + A.attn_offset[i] + h * (p + 1);
        const double* doh = dout.data() + h * dh;
        da.assign(p + 1, 0.0);
        double inner = 0.0;
        for (std::size_t j = 0; j <= p; ++j) {
          da[j] = K.dot(doh, t.value(l, j) + h * dh, dh);
          inner += w[j] * da[j];
          if (double* target = dv_at(j)) K.axpy(w[j], doh, target + h * dh, dh);
        }
        for (std::size_t j = 0; j <= p; ++j) {
          const double ds = w[j] * (da[j] - inner);
          G[B.rel + h * R + bucket(p - j, R)] += ds;
          K.axpy(ds * scale, t.key(l, j) + h * dh, dq.data() + i * d + h * dh, dh);
          if (double* target = dk_at(j)) K.axpy(ds * scale, q + h * dh, target + h * dh, dh);
        }
      }
    }

    // Projections and the first norm.
    for (std::size_t i = 0; i < n; ++i) {
      const double* u = A.u.data() + i * d;
      std::fill(du.begin(), du.end(), 0.0);
      K.ger(1.0, dq.data() + i * d, u, G + B.wq, d, d);
      K.ger(1.0, dk.data() + i * d, u, G + B.wk, d, d);
      K.ger(1.0, dv.data() + i * d, u, G + B.wv, d, d);
      K.gemv_t_acc(P.at(B.wq), dq.data() + i * d, du.data(), d, d);
      K.gemv_t_acc(P.at(B.wk), dk.data() + i * d, du.data(), d, d);
      K.gemv_t_acc(P.at(B.wv), dv.data() + i * d, du.data(), d, d);
      double* dxi = dx_in.data() + i * d;
      std::copy_n(dxm.data() + i * d, d, dxi);
      rms_backward(t.xs_[l].data() + i * d, A.r1[i], P.at(B.ln1), du.data(), dxi, G + B.ln1, d);
    }
    std::swap(dx, dx_in);
  }

  // Embeddings.
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t p = begin + i;
    const auto s = static_cast<std::size_t>(t.token(p));
    const auto prev = static_cast<std::size_t>(p == 0 ? tok::kBos : t.token(p - 1));
    K.axpy(1.0, dx.data() + i * d, G + L.tok_emb + s * d, d);
    K.axpy(1.0, dx.data() + i * d, G + L.prev_emb + prev * d, d);
  }
}

void backward(ForwardTape& tape, std::span<const LogitSeed> seeds,
              const ParentGrad* from_children, std::span<double> grad, ParentGrad* to_parent) {
  TapeBackward::run(tape, seeds, from_children, grad, to_parent);
}

// ---------------------------------------------------------------------------
// Convenience entry points

std::vector<double> next_token_logprobs(const PolicyParams& params,
                                        std::span<const TokenId> context, std::size_t pinned) {
  const std::size_t window = params.arch().window;
  std::vector<TokenId> kept;
  std::span<const TokenId> use = context;
  if (context.size() + 1 > window) {
    pinned = std::min(pinned, window - 2);
    const std::size_t tail = window - 1 - pinned;
    kept.assign(context.begin(), context.begin() + static_cast<std::ptrdiff_t>(pinned));
    kept.insert(kept.end(), context.end() - static_cast<std::ptrdiff_t>(tail), context.end());
    use = kept;
  }
  ForwardTape tape(params, use);
  const auto lp = tape.next_logprobs(tape.size() - 1);
  return {lp.begin(), lp.end()};
}

SampledToken sample_from_logprobs(std::span<const double> logp, double temperature, Rng& rng) {
  if (logp.empty()) throw ContractError("empty distribution");
  if (!(temperature > 0.0)) throw ContractError("temperature must be positive");
  if (temperature < kGreedyTemperature) {
    const auto it = std::max_element(logp.begin(), logp.end());
    return {static_cast<TokenId>(it - logp.begin()), 0.0};
  }
  std::vector<double> scaled(logp.begin(), logp.end());
  if (temperature != 1.0) {
    for (double& x : scaled) x /= temperature;
    log_softmax_inplace(scaled);
  }
  const double u = rng.uniform();
  double cum = 0.0;
  std::size_t last_nonzero = 0;
  for (std::size_t v = 0; v < scaled.size(); ++v) {
    const double p = std::exp(scaled[v]);
    if (p > 0.0) last_nonzero = v;
    cum += p;
    if (u < cum) return {static_cast<TokenId>(v), scaled[v]};
  }
  return {static_cast<TokenId>(last_nonzero), scaled[last_nonzero]};
}

TokenId sample(const PolicyParams& params, std::span<const TokenId> context, double temperature,
               std::uint64_t seed) {
  Rng rng(seed);
  return sample_from_logprobs(next_token_logprobs(params, context), temperature, rng).token;
}

std::vector<double> context_logprobs(const PolicyParams& params, std::span<const TokenId> context,
                                     std::span<const std::size_t> indices) {
  ForwardTape tape(params, context);
  std::vector<double> out;
  out.reserve(indices.size());
  for (std::size_t idx : indices) {
    if (idx >= context.size()) throw ContractError("scored index outside context");
    out.push_back(tape.next_logprobs(idx)[static_cast<std::size_t>(context[idx])]);
  }
  return out;
}

std::vector<double> grad_weighted_context_logprob(const PolicyParams& params,
                                                  std::span<const TokenId> context,
                                                  std::span<const std::size_t> indices,
                                                  std::span<const double> weights) {
  if (indices.size() != weights.size()) {
    throw ContractError("weights length must equal the number of scored positions");
  }
  ForwardTape tape(params, context);
  std::vector<LogitSeed> seeds;
  seeds.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t idx = indices[k];
    if (idx >= context.size()) throw ContractError("scored index outside context");
    const auto lp = tape.next_logprobs(idx);
    LogitSeed s{idx, std::vector<double>(lp.size())};
    for (std::size_t v = 0; v < lp.size(); ++v) s.dlogits[v] = -weights[k] * std::exp(lp[v]);
    s.dlogits[static_cast<std::size_t>(context[idx])] += weights[k];
    seeds.push_back(std::move(s));
  }
  std::vector<double> grad(params.size(), 0.0);
  backward(tape, seeds, nullptr, grad, nullptr);
  return grad;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace binio {

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u64(os, bits);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw ConfigError("truncated binary file");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw ConfigError("truncated binary file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double get_f64(std::istream& is) {
  const std::uint64_t bits = get_u64(is);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace binio

void write_checkpoint(std::ostream& os, const PolicyParams& params) {
  const ArchSpec& a = params.arch();
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  binio::put_u32(os, kCheckpointVersion);
  for (std::size_t v : {a.vocab, a.d_model, a.n_heads, a.n_layers, a.d_ff, a.window,
                        a.rel_buckets, a.copy_dim}) {
    binio::put_u64(os, v);
  }
  binio::put_u64(os, params.size());
  for (double v : params.values()) binio::put_f64(os, v);
}

PolicyParams read_checkpoint(std::istream& is) {
  char magic[sizeof kCheckpointMagic];
  if (!is.read(magic, sizeof magic) ||
      std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw ConfigError("not a policy checkpoint");
  }
  const std::uint32_t version = binio::get_u32(is);
  if (version != kCheckpointVersion) {
    throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  }
  ArchSpec a;
  for (std::size_t* f : {&a.vocab, &a.d_model, &a.n_heads, &a.n_layers, &a.d_ff, &a.window,
                         &a.rel_buckets, &a.copy_dim}) {
    *f = binio::get_u64(is);
  }
  PolicyParams p(a);
  const std::uint64_t count = binio::get_u64(is);
  if (count != p.size()) throw ConfigError("checkpoint parameter count does not match header");
  for (double& v : p.values()) v = binio::get_f64(is);
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_checkpoint(os, params);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

}  // namespace icrl
