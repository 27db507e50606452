#pragma once

// Small autoregressive policy over a word vocabulary.
//
// Per position: token embedding plus previous-token embedding, then
// n_layers pre-norm blocks of multi-head causal attention (content score plus
// a learned bias per head and relative distance) and a SiLU feed-forward, then
// a final RMS norm. The output head is a full-vocabulary linear layer plus a
// copy term: a separate attention over all earlier positions whose weights,
// scaled by a learned gate, are added to the logits of the attended tokens.
// Every distribution is an exact softmax over the whole vocabulary.
//
// Sequences always start with an implicit <bos>; context token i sits at
// sequence position i + 1 and is predicted from position i.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "icrl/rng.hpp"
#include "icrl/vocab.hpp"

namespace icrl {

struct ArchSpec {
  std::size_t vocab = 0;
  std::size_t d_model = 32;
  std::size_t n_heads = 2;
  std::size_t n_layers = 1;
  std::size_t d_ff = 64;
  std::size_t window = 512;  // max sequence length including <bos>
  std::size_t rel_buckets = 64;
  std::size_t copy_dim = 16;

  // Throws ConfigError on inconsistent sizes.
  void validate() const;
  bool operator==(const ArchSpec&) const = default;
};

// Offsets of each tensor inside the flat parameter vector.
struct ParamLayout {
  struct Block {
    std::size_t ln1, wq, wk, wv, wo, rel, ln2, w1, b1, w2, b2;
  };
  std::size_t tok_emb = 0, prev_emb = 0;
  std::vector<Block> blocks;
  std::size_t lnf = 0, wout = 0, bout = 0;
  std::size_t cq = 0, ck = 0, crel = 0, wgate = 0, bgate = 0;
  std::size_t total = 0;

  explicit ParamLayout(const ArchSpec& a);
};

class PolicyParams {
 public:
  PolicyParams() = default;
  explicit PolicyParams(const ArchSpec& arch);  // all zero

  // Gaussian weights with std `init_scale`, unit norm gains, zero biases.
  static PolicyParams initialize(const ArchSpec& arch, std::uint64_t seed,
                                 double init_scale = 0.02);

  const ArchSpec& arch() const { return arch_; }
  const ParamLayout& layout() const { return *layout_; }
  std::span<double> values() { return theta_; }
  std::span<const double> values() const { return theta_; }
  std::size_t size() const { return theta_.size(); }
  double* at(std::size_t offset) { return theta_.data() + offset; }
  const double* at(std::size_t offset) const { return theta_.data() + offset; }

  bool operator==(const PolicyParams& o) const {
    return arch_ == o.arch_ && theta_ == o.theta_;
  }

 private:
  ArchSpec arch_;
  std::shared_ptr<const ParamLayout> layout_;
  std::vector<double> theta_;
};

// Forward activations for a run of positions. A tape may extend a parent
// tape (a shared prompt); positions below begin() live in the parent, which
// must outlive the child and stay unchanged.
class ForwardTape {
 public:
  // Root tape over <bos> + context.
  ForwardTape(const PolicyParams& params, std::span<const TokenId> context);
  // Child tape over parent + continuation.
  ForwardTape(const ForwardTape& parent, std::span<const TokenId> continuation);

  ForwardTape(const ForwardTape&) = delete;
  ForwardTape& operator=(const ForwardTape&) = delete;

  void append(TokenId token);

  std::size_t begin() const { return begin_; }
  std::size_t size() const { return begin_ + tokens_.size(); }
  TokenId token(std::size_t pos) const;
  const PolicyParams& params() const { return *params_; }
  const ForwardTape* parent() const { return parent_; }

  // Log-probabilities of the next token after sequence position `pos`
  // (owned positions only). Computed on first use and cached.
  std::span<const double> next_logprobs(std::size_t pos);

 private:
  friend class TapeBackward;

  struct LayerActs {
    std::vector<double> r1, u, q, k, v, o, x_mid, r2, u2, hpre, hact;
    std::vector<double> attn;               // per position: heads x (pos + 1)
    std::vector<std::size_t> attn_offset;
  };
  struct HeadActs {
    std::vector<double> cq, cattn, logp;
    double gate = 0.0;
  };

  const double* key(std::size_t layer, std::size_t pos) const;
  const double* value(std::size_t layer, std::size_t pos) const;
  const double* copy_key(std::size_t pos) const;
  void forward_position(std::size_t pos);

  const PolicyParams* params_;
  const ForwardTape* parent_ = nullptr;
  std::size_t begin_ = 0;
  std::vector<TokenId> tokens_;
  std::vector<std::vector<double>> xs_;  // n_layers + 1 residual streams
  std::vector<LayerActs> layers_;
  std::vector<double> rf_, z_, ck_;
  std::vector<std::optional<HeadActs>> heads_;
};

// Gradient wrt the logits at one sequence position (the position whose
// output predicts the next token).
struct LogitSeed {
  std::size_t pos = 0;
  std::vector<double> dlogits;
};

// Gradient that a child tape sends into its parent's positions.
struct ParentGrad {
  std::vector<std::vector<double>> dk, dv;  // per layer, positions x d_model
  std::vector<double> dck;                  // positions x copy_dim
  void resize(const ArchSpec& a, std::size_t positions);
  void add(const ParentGrad& other);
};

// Backpropagates `seeds` (plus gradient arriving from children in
// `from_children`) through `tape`'s owned positions, accumulating parameter
// gradients into `grad` and writing the gradient for the parent's positions
// into `to_parent` (when the tape has a parent).
void backward(ForwardTape& tape, std::span<const LogitSeed> seeds,
              const ParentGrad* from_children, std::span<double> grad,
              ParentGrad* to_parent);

// Next-token log-probabilities given a context. When <bos> + context exceeds
// the window, tokens are dropped from the left except the first `pinned`
// context tokens.
std::vector<double> next_token_logprobs(const PolicyParams& params,
                                        std::span<const TokenId> context,
                                        std::size_t pinned = 0);

struct SampledToken {
  TokenId token = 0;
  double logprob = 0.0;  // under the temperature-scaled distribution
};

// Temperatures below this are treated as greedy (argmax, lowest id on ties).
inline constexpr double kGreedyTemperature = 1e-6;

SampledToken sample_from_logprobs(std::span<const double> logp, double temperature, Rng& rng);

TokenId sample(const PolicyParams& params, std::span<const TokenId> context,
               double temperature, std::uint64_t seed);

// Log-probabilities of context tokens at the given context indices, each
// conditioned on everything before it.
std::vector<double> context_logprobs(const PolicyParams& params,
                                     std::span<const TokenId> context,
                                     std::span<const std::size_t> indices);

// grad of sum_k weights[k] * log p(context[indices[k]] | prefix).
std::vector<double> grad_weighted_context_logprob(const PolicyParams& params,
                                                  std::span<const TokenId> context,
                                                  std::span<const std::size_t> indices,
                                                  std::span<const double> weights);

// Checkpoint: "ICRLCKPT", u32 version, u64 architecture fields, u64 parameter
// count, then IEEE-754 doubles; all little-endian.
void write_checkpoint(std::ostream& os, const PolicyParams& params);
PolicyParams read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::filesystem::path& path);

namespace binio {
void put_u32(std::ostream& os, std::uint32_t v);
void put_u64(std::ostream& os, std::uint64_t v);
void put_f64(std::ostream& os, double v);
std::uint32_t get_u32(std::istream& is);
std::uint64_t get_u64(std::istream& is);
double get_f64(std::istream& is);
}  // namespace binio

}  // namespace icrl
