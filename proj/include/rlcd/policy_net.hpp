#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "rlcd/graph.hpp"

namespace rlcd {

enum class DecoderKind { single_layer, bilinear, ntn };

std::string to_string(DecoderKind kind);
DecoderKind decoder_kind_from_string(const std::string& name);

struct PolicyShape {
  int nodes = 0;          ///< d
  int input_dim = 64;     ///< n, resampled observations per node
  int embed_dim = 64;     ///< d_e
  int heads = 8;
  int layers = 3;
  int ff_dim = 256;
  int decoder_hidden = 16;  ///< d_h of the single-layer decoder
  int ntn_slices = 2;       ///< K of the NTN decoder
  int critic_hidden = 64;
  DecoderKind decoder = DecoderKind::single_layer;
};

void validate(const PolicyShape& shape);

/// One self-attention block: multi-head attention and a ReLU feed-forward
/// layer, each wrapped in a residual connection followed by batch norm.
/// Activations are row vectors, so a layer computes X * W.
struct AttentionBlock {
  Eigen::MatrixXd wq, wk, wv, wo;           // d_e x d_e
  Eigen::MatrixXd norm1_gain, norm1_bias;   // 1 x d_e
  Eigen::MatrixXd ff_w1, ff_b1;             // d_e x ff, 1 x ff
  Eigen::MatrixXd ff_w2, ff_b2;             // ff x d_e, 1 x d_e
  Eigen::MatrixXd norm2_gain, norm2_bias;   // 1 x d_e
};

/// Encoder, decoder, and critic weights. Decoder tensors not used by the
/// configured variant are left empty.
struct PolicyParams {
  PolicyShape shape;

  Eigen::MatrixXd embed_w, embed_b;          // n x d_e, 1 x d_e
  Eigen::MatrixXd embed_gain, embed_bias;    // 1 x d_e
  std::vector<AttentionBlock> blocks;

  // single layer: g_ij = u^T tanh(W1 enc_i + W2 enc_j)
  Eigen::MatrixXd dec_w1, dec_w2;            // d_h x d_e
  Eigen::MatrixXd dec_u;                     // d_h x 1
  // bilinear: g_ij = enc_i^T W enc_j
  Eigen::MatrixXd bilinear_w;                // d_e x d_e
  // NTN: g_ij = u^T tanh(enc_i^T W[1:K] enc_j + V [enc_i; enc_j] + b)
  std::vector<Eigen::MatrixXd> ntn_w;        // K of d_e x d_e
  Eigen::MatrixXd ntn_v;                     // K x 2 d_e
  Eigen::MatrixXd ntn_b, ntn_u;              // K x 1
  Eigen::MatrixXd logit_bias;                // 1 x 1, shared by every g_ij

  Eigen::MatrixXd critic_w1, critic_b1;      // d_e x h, 1 x h
  Eigen::MatrixXd critic_w2, critic_b2;      // h x 1, 1 x 1

  /// Calls f(name, tensor, is_critic) for every non-empty tensor in a fixed order.
  template <class F>
  void for_each(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit_impl(*this, f);
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& p, F& f);
};

/// Glorot-uniform weights, zero biases, unit norm gains. The shared logit
/// bias starts at `logit_bias_init` (-10 encodes a sparse prior).
PolicyParams init_policy(const PolicyShape& shape, double logit_bias_init, std::mt19937_64& rng);

/// Same structure as `p`, all zeros.
PolicyParams zeros_like(const PolicyParams& p);

std::size_t parameter_count(const PolicyParams& p);

/// b elements, each d node-vectors of length n. Row b*d + i holds x~_i of element b.
struct InputBatch {
  int batch = 0;
  int nodes = 0;
  int dim = 0;
  Eigen::MatrixXd data;
};

/// Forward activations kept for the backward pass.
struct PolicyForward {
  int batch = 0;
  int nodes = 0;

  struct NormCache {
    Eigen::MatrixXd normalized;
    Eigen::VectorXd inv_std;
  };
  struct BlockCache {
    Eigen::MatrixXd input, q, k, v, attn_out, hidden1, ff_pre, ff_act;
    std::vector<Eigen::MatrixXd> attention;  // batch * heads of d x d
    NormCache norm1, norm2;
  };

  Eigen::MatrixXd input;
  NormCache embed_norm;
  std::vector<BlockCache> blocks;
  Eigen::MatrixXd encodings;  // (b*d) x d_e

  std::vector<Eigen::MatrixXd> decoder_cache;  // per element, variant-specific
  std::vector<Eigen::MatrixXd> logits;         // per element, d x d, -inf diagonal

  Eigen::MatrixXd critic_pooled, critic_pre;   // b x d_e, b x h
  Eigen::VectorXd values;                      // b

  /// Encodings of batch element `b` (d x d_e).
  Eigen::MatrixXd node_encodings(int b) const { return encodings.middleRows(b * nodes, nodes); }
};

/// Full forward pass: encoder, decoder logits, critic values.
PolicyForward forward(const PolicyParams& params, const InputBatch& batch);

/// Encoder only; permutation-equivariant in the node axis. Returns (b*d) x d_e.
Eigen::MatrixXd encode(const InputBatch& batch, const PolicyParams& params);

/// Decoder logits for one element's encodings (d x d_e). Diagonal is -inf.
Eigen::MatrixXd decode_logits(const Eigen::MatrixXd& encodings, const PolicyParams& params);

/// Critic baseline per batch element from mean-pooled encodings.
Eigen::VectorXd critic_value(const Eigen::MatrixXd& encodings, int batch, const PolicyParams& params);

double sigmoid(double x);

struct GraphSample {
  AdjacencyMatrix adjacency;
  double log_prob = 0.0;
  Eigen::MatrixXd edge_probs;  // sigmoid(logits), zero diagonal
};

/// Independent Bernoulli(sigmoid(g_ij)) draw for every off-diagonal entry.
GraphSample sample_graph(const Eigen::MatrixXd& logits, std::mt19937_64& rng);
std::vector<GraphSample> sample_graphs(std::span<const Eigen::MatrixXd> logits, std::mt19937_64& rng);

/// Sum over off-diagonal entries of log Bernoulli mass, in log-sigmoid form.
double log_prob(const AdjacencyMatrix& a, const Eigen::MatrixXd& logits);

/// Sum over off-diagonal entries of Bernoulli entropy.
double entropy(const Eigen::MatrixXd& logits);

struct TrainHyper {
  double entropy_weight = 1e-3;
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  double grad_clip = 5.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

/// Actor objective for fixed advantages:
///   -(1/b) sum_b adv_b log pi(A_b) - beta (1/b) sum_b H_b
double actor_surrogate(const PolicyForward& fwd, std::span<const GraphSample> samples,
                       std::span<const double> advantages, double entropy_weight);

/// (1/b) sum_b (value_b - reward_b)^2
double critic_loss(const PolicyForward& fwd, std::span<const double> rewards);

/// Gradients of actor_surrogate (advantages = reward - value, held fixed) with
/// respect to encoder and decoder weights, and of critic_loss with respect to
/// the critic weights. The critic sees the encodings as constants.
PolicyParams policy_gradients(const PolicyParams& params, const PolicyForward& fwd,
                              std::span<const GraphSample> samples, std::span<const double> rewards,
                              double entropy_weight);

class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  explicit AdamOptimizer(const PolicyParams& like);

  /// Applies one Adam step to the actor or critic tensors of `params`.
  void step(PolicyParams& params, const PolicyParams& grads, bool critic, double lr,
            const TrainHyper& hyper);

  std::int64_t actor_steps() const { return actor_t_; }

 private:
  PolicyParams m_, v_;
  std::int64_t actor_t_ = 0;
  std::int64_t critic_t_ = 0;
};

struct StepDiagnostics {
  double mean_reward = 0.0;
  double critic_loss = 0.0;
  double mean_entropy = 0.0;
  double actor_loss = 0.0;
  double actor_grad_norm = 0.0;
  double critic_grad_norm = 0.0;
  bool skipped = false;
};

/// REINFORCE with a learned baseline plus entropy bonus; global-norm clipping
/// per parameter group. A non-finite gradient skips the update.
StepDiagnostics train_step(PolicyParams& params, AdamOptimizer& optimizer, const PolicyForward& fwd,
                           std::span<const GraphSample> samples, std::span<const double> rewards,
                           const TrainHyper& hyper);

void save_checkpoint(const PolicyParams& params, const std::string& path);
PolicyParams load_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------

template <class Self, class F>
void PolicyParams::visit_impl(Self& p, F& f) {
  auto emit = [&](std::string_view name, auto& m, bool critic) {
    if (m.size() > 0) f(name, m, critic);
  };
  emit("embed_w", p.embed_w, false);
  emit("embed_b", p.embed_b, false);
  emit("embed_gain", p.embed_gain, false);
  emit("embed_bias", p.embed_bias, false);
  for (auto& b : p.blocks) {
    emit("wq", b.wq, false);
    emit("wk", b.wk, false);
    emit("wv", b.wv, false);
    emit("wo", b.wo, false);
    emit("norm1_gain", b.norm1_gain, false);
    emit("norm1_bias", b.norm1_bias, false);
    emit("ff_w1", b.ff_w1, false);
    emit("ff_b1", b.ff_b1, false);
    emit("ff_w2", b.ff_w2, false);
    emit("ff_b2", b.ff_b2, false);
    emit("norm2_gain", b.norm2_gain, false);
    emit("norm2_bias", b.norm2_bias, false);
  }
  emit("dec_w1", p.dec_w1, false);
  emit("dec_w2", p.dec_w2, false);
  emit("dec_u", p.dec_u, false);
  emit("bilinear_w", p.bilinear_w, false);
  for (auto& w : p.ntn_w) emit("ntn_w", w, false);
  emit("ntn_v", p.ntn_v, false);
  emit("ntn_b", p.ntn_b, false);
  emit("ntn_u", p.ntn_u, false);
  emit("logit_bias", p.logit_bias, false);
  emit("critic_w1", p.critic_w1, true);
  emit("critic_b1", p.critic_b1, true);
  emit("critic_w2", p.critic_w2, true);
  emit("critic_b2", p.critic_b2, true);
}

}  // namespace rlcd
