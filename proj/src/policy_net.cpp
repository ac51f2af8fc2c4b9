#include "rlcd/policy_net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace rlcd {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(DecoderKind kind) {
  switch (kind) {
    case DecoderKind::single_layer: return "single_layer";
    case DecoderKind::bilinear: return "bilinear";
    case DecoderKind::ntn: return "ntn";
  }
  return "?";
}

DecoderKind decoder_kind_from_string(const std::string& name) {
  if (name == "single_layer") return DecoderKind::single_layer;
  if (name == "bilinear") return DecoderKind::bilinear;
  if (name == "ntn") return DecoderKind::ntn;
  throw std::invalid_argument("unknown decoder variant '" + name + "'");
}

void validate(const PolicyShape& s) {
  if (s.nodes < 1) throw std::invalid_argument("policy: nodes must be >= 1");
  if (s.input_dim < 1) throw std::invalid_argument("policy: input_dim (n) must be >= 1");
  if (s.embed_dim < 1 || s.heads < 1 || s.embed_dim % s.heads != 0)
    throw std::invalid_argument("policy: embed_dim must be a positive multiple of heads");
  if (s.layers < 0 || s.ff_dim < 1 || s.decoder_hidden < 1 || s.ntn_slices < 1 || s.critic_hidden < 1)
    throw std::invalid_argument("policy: layer sizes must be positive");
}

namespace {

constexpr double kNormEps = 1e-5;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

MatrixXd glorot(int rows, int cols, int fan_in, int fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
  return m;
}

std::vector<std::pair<MatrixXd*, bool>> tensors(PolicyParams& p) {
  std::vector<std::pair<MatrixXd*, bool>> out;
  p.for_each([&](std::string_view, MatrixXd& m, bool critic) { out.emplace_back(&m, critic); });
  return out;
}

std::vector<std::pair<const MatrixXd*, bool>> tensors(const PolicyParams& p) {
  std::vector<std::pair<const MatrixXd*, bool>> out;
  p.for_each([&](std::string_view, const MatrixXd& m, bool critic) { out.emplace_back(&m, critic); });
  return out;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// ---- batch norm --------------------------------------------------------------
// Statistics are taken per feature over all (element, node) rows of the batch,
// so relative scale between nodes survives normalization.

MatrixXd batch_norm(const MatrixXd& x, const MatrixXd& gain, const MatrixXd& bias,
                    PolicyForward::NormCache& cache) {
  const double rows = static_cast<double>(x.rows());
  const Eigen::RowVectorXd mean = x.colwise().sum() / rows;
  cache.normalized = x.rowwise() - mean;
  const Eigen::RowVectorXd var = cache.normalized.colwise().squaredNorm() / rows;
  cache.inv_std = (var.array() + kNormEps).rsqrt().transpose();
  cache.normalized = cache.normalized * cache.inv_std.asDiagonal();
  MatrixXd y = cache.normalized * gain.row(0).asDiagonal();
  y.rowwise() += bias.row(0);
  return y;
}

MatrixXd batch_norm_backward(const MatrixXd& dy, const MatrixXd& gain,
                             const PolicyForward::NormCache& cache, MatrixXd& dgain, MatrixXd& dbias) {
  const double rows = static_cast<double>(dy.rows());
  dgain.row(0) += (dy.cwiseProduct(cache.normalized)).colwise().sum();
  dbias.row(0) += dy.colwise().sum();
  const MatrixXd dxhat = dy * gain.row(0).asDiagonal();
  const Eigen::RowVectorXd mean_d = dxhat.colwise().sum() / rows;
  const Eigen::RowVectorXd mean_dx = dxhat.cwiseProduct(cache.normalized).colwise().sum() / rows;
  MatrixXd dx = dxhat.rowwise() - mean_d;
  dx -= cache.normalized * mean_dx.asDiagonal();
  return dx * cache.inv_std.asDiagonal();
}

// ---- attention block ---------------------------------------------------------

MatrixXd block_forward(const AttentionBlock& blk, const MatrixXd& h, int batch, int nodes, int heads,
                       PolicyForward::BlockCache& c) {
  const Eigen::Index de = h.cols();
  const Eigen::Index dk = de / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  c.input = h;
  c.q = h * blk.wq;
  c.k = h * blk.wk;
  c.v = h * blk.wv;
  c.attn_out.resize(h.rows(), de);
  c.attention.assign(static_cast<std::size_t>(batch) * heads, MatrixXd());
  for (int b = 0; b < batch; ++b) {
    for (int hd = 0; hd < heads; ++hd) {
      const auto q = c.q.block(b * nodes, hd * dk, nodes, dk);
      const auto k = c.k.block(b * nodes, hd * dk, nodes, dk);
      const auto v = c.v.block(b * nodes, hd * dk, nodes, dk);
      MatrixXd s = (q * k.transpose()) * scale;
      for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const double mx = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - mx).exp();
        s.row(r) /= s.row(r).sum();
      }
      c.attn_out.block(b * nodes, hd * dk, nodes, dk) = s * v;
      c.attention[static_cast<std::size_t>(b) * heads + hd] = std::move(s);
    }
  }
  MatrixXd r1 = h + c.attn_out * blk.wo;
  c.hidden1 = batch_norm(r1, blk.norm1_gain, blk.norm1_bias, c.norm1);
  c.ff_pre = c.hidden1 * blk.ff_w1;
  c.ff_pre.rowwise() += blk.ff_b1.row(0);
  c.ff_act = c.ff_pre.cwiseMax(0.0);
  MatrixXd r2 = c.hidden1 + c.ff_act * blk.ff_w2;
  r2.rowwise() += blk.ff_b2.row(0);
  return batch_norm(r2, blk.norm2_gain, blk.norm2_bias, c.norm2);
}

MatrixXd block_backward(const AttentionBlock& blk, const PolicyForward::BlockCache& c, const MatrixXd& dout,
                        int batch, int nodes, int heads, AttentionBlock& g) {
  const Eigen::Index de = c.input.cols();
  const Eigen::Index dk = de / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  const MatrixXd dr2 = batch_norm_backward(dout, blk.norm2_gain, c.norm2, g.norm2_gain, g.norm2_bias);
  g.ff_w2 += c.ff_act.transpose() * dr2;
  g.ff_b2.row(0) += dr2.colwise().sum();
  MatrixXd dpre = (dr2 * blk.ff_w2.transpose()).cwiseProduct((c.ff_pre.array() > 0.0).cast<double>().matrix());
  g.ff_w1 += c.hidden1.transpose() * dpre;
  g.ff_b1.row(0) += dpre.colwise().sum();
  const MatrixXd dh1 = dr2 + dpre * blk.ff_w1.transpose();

  const MatrixXd dr1 = batch_norm_backward(dh1, blk.norm1_gain, c.norm1, g.norm1_gain, g.norm1_bias);
  g.wo += c.attn_out.transpose() * dr1;
  const MatrixXd dattn = dr1 * blk.wo.transpose();

  MatrixXd dq(c.q.rows(), de), dkm(c.k.rows(), de), dv(c.v.rows(), de);
  for (int b = 0; b < batch; ++b) {
    for (int hd = 0; hd < heads; ++hd) {
      const MatrixXd& p = c.attention[static_cast<std::size_t>(b) * heads + hd];
      const auto q = c.q.block(b * nodes, hd * dk, nodes, dk);
      const auto k = c.k.block(b * nodes, hd * dk, nodes, dk);
      const auto v = c.v.block(b * nodes, hd * dk, nodes, dk);
      const auto dout_h = dattn.block(b * nodes, hd * dk, nodes, dk);
      const MatrixXd dp = dout_h * v.transpose();
      dv.block(b * nodes, hd * dk, nodes, dk) = p.transpose() * dout_h;
      const VectorXd row_dot = dp.cwiseProduct(p).rowwise().sum();
      const MatrixXd ds = p.cwiseProduct(dp.colwise() - row_dot) * scale;
      dq.block(b * nodes, hd * dk, nodes, dk) = ds * k;
      dkm.block(b * nodes, hd * dk, nodes, dk) = ds.transpose() * q;
    }
  }
  g.wq += c.input.transpose() * dq;
  g.wk += c.input.transpose() * dkm;
  g.wv += c.input.transpose() * dv;
  return dr1 + dq * blk.wq.transpose() + dkm * blk.wk.transpose() + dv * blk.wv.transpose();
}

// ---- decoders ---------------------------------------------------------------

// Logits for one element; `cache` receives the tanh activations needed by
// the backward pass (rows indexed i*d + j).
MatrixXd decode_element(const PolicyParams& p, const MatrixXd& enc, MatrixXd* cache) {
  const Eigen::Index d = enc.rows();
  const double bias = p.logit_bias(0, 0);
  MatrixXd g(d, d);
  switch (p.shape.decoder) {
    case DecoderKind::single_layer: {
      const MatrixXd left = enc * p.dec_w1.transpose();   // d x d_h
      const MatrixXd right = enc * p.dec_w2.transpose();  // d x d_h
      MatrixXd act(d * d, left.cols());
      for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
          act.row(i * d + j) = (left.row(i) + right.row(j)).array().tanh();
          g(i, j) = act.row(i * d + j).dot(p.dec_u.col(0)) + bias;
        }
      }
      if (cache) *cache = std::move(act);
      break;
    }
    case DecoderKind::bilinear: {
      g = enc * p.bilinear_w * enc.transpose();
      g.array() += bias;
      break;
    }
    case DecoderKind::ntn: {
      const Eigen::Index de = enc.cols();
      const int slices = static_cast<int>(p.ntn_w.size());
      const MatrixXd left = enc * p.ntn_v.leftCols(de).transpose();    // d x K
      const MatrixXd right = enc * p.ntn_v.rightCols(de).transpose();  // d x K
      MatrixXd act(d * d, slices);
      for (int s = 0; s < slices; ++s) {
        const MatrixXd bil = enc * p.ntn_w[s] * enc.transpose();
        for (Eigen::Index i = 0; i < d; ++i)
          for (Eigen::Index j = 0; j < d; ++j)
            act(i * d + j, s) = std::tanh(bil(i, j) + left(i, s) + right(j, s) + p.ntn_b(s, 0));
      }
      for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) g(i, j) = act.row(i * d + j).dot(p.ntn_u.col(0)) + bias;
      if (cache) *cache = std::move(act);
      break;
    }
  }
  g.diagonal().setConstant(kNegInf);
  return g;
}

// Accumulates decoder gradients for one element and returns d loss / d enc.
MatrixXd decode_backward(const PolicyParams& p, const MatrixXd& enc, const MatrixXd& cache,
                         const MatrixXd& dg, PolicyParams& grads) {
  const Eigen::Index d = enc.rows();
  MatrixXd denc = MatrixXd::Zero(d, enc.cols());
  grads.logit_bias(0, 0) += dg.sum();
  switch (p.shape.decoder) {
    case DecoderKind::single_layer: {
      const Eigen::Index dh = p.dec_u.rows();
      MatrixXd dleft = MatrixXd::Zero(d, dh), dright = MatrixXd::Zero(d, dh);
      for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
          if (i == j) continue;
          const double gij = dg(i, j);
          const auto t = cache.row(i * d + j);
          grads.dec_u.col(0) += gij * t.transpose();
          const Eigen::RowVectorXd dpre =
              gij * p.dec_u.col(0).transpose().cwiseProduct((1.0 - t.array().square()).matrix());
          dleft.row(i) += dpre;
          dright.row(j) += dpre;
        }
      }
      grads.dec_w1 += dleft.transpose() * enc;
      grads.dec_w2 += dright.transpose() * enc;
      denc += dleft * p.dec_w1 + dright * p.dec_w2;
      break;
    }
    case DecoderKind::bilinear: {
      grads.bilinear_w += enc.transpose() * dg * enc;
      denc += dg * enc * p.bilinear_w.transpose() + dg.transpose() * enc * p.bilinear_w;
      break;
    }
    case DecoderKind::ntn: {
      const Eigen::Index de = enc.cols();
      const int slices = static_cast<int>(p.ntn_w.size());
      MatrixXd dleft = MatrixXd::Zero(d, slices), dright = MatrixXd::Zero(d, slices);
      for (int s = 0; s < slices; ++s) {
        MatrixXd dbil = MatrixXd::Zero(d, d);
        for (Eigen::Index i = 0; i < d; ++i) {
          for (Eigen::Index j = 0; j < d; ++j) {
            if (i == j) continue;
            const double t = cache(i * d + j, s);
            grads.ntn_u(s, 0) += dg(i, j) * t;
            const double da = dg(i, j) * p.ntn_u(s, 0) * (1.0 - t * t);
            dbil(i, j) = da;
            dleft(i, s) += da;
            dright(j, s) += da;
            grads.ntn_b(s, 0) += da;
          }
        }
        grads.ntn_w[s] += enc.transpose() * dbil * enc;
        denc += dbil * enc * p.ntn_w[s].transpose() + dbil.transpose() * enc * p.ntn_w[s];
      }
      grads.ntn_v.leftCols(de) += dleft.transpose() * enc;
      grads.ntn_v.rightCols(de) += dright.transpose() * enc;
      denc += dleft * p.ntn_v.leftCols(de) + dright * p.ntn_v.rightCols(de);
      break;
    }
  }
  return denc;
}

MatrixXd pool_nodes(const MatrixXd& encodings, int batch) {
  const Eigen::Index nodes = encodings.rows() / batch;
  MatrixXd pooled(batch, encodings.cols());
  for (int b = 0; b < batch; ++b)
    pooled.row(b) = encodings.middleRows(b * nodes, nodes).colwise().mean();
  return pooled;
}

void check_input(const PolicyParams& p, const InputBatch& in) {
  if (in.nodes != p.shape.nodes || in.dim != p.shape.input_dim || in.batch < 1 ||
      in.data.rows() != static_cast<Eigen::Index>(in.batch) * in.nodes || in.data.cols() != in.dim) {
    throw std::invalid_argument("input batch shape does not match the policy (d=" +
                                std::to_string(p.shape.nodes) + ", n=" + std::to_string(p.shape.input_dim) + ")");
  }
}

MatrixXd encode_cached(const PolicyParams& p, const InputBatch& in, PolicyForward& fwd) {
  check_input(p, in);
  fwd.batch = in.batch;
  fwd.nodes = in.nodes;
  fwd.input = in.data;
  MatrixXd e = in.data * p.embed_w;
  e.rowwise() += p.embed_b.row(0);
  MatrixXd h = batch_norm(e, p.embed_gain, p.embed_bias, fwd.embed_norm);
  fwd.blocks.resize(p.blocks.size());
  for (std::size_t l = 0; l < p.blocks.size(); ++l)
    h = block_forward(p.blocks[l], h, in.batch, in.nodes, p.shape.heads, fwd.blocks[l]);
  return h;
}

}  // namespace

PolicyParams init_policy(const PolicyShape& s, double logit_bias_init, std::mt19937_64& rng) {
  validate(s);
  PolicyParams p;
  p.shape = s;
  const int de = s.embed_dim;
  p.embed_w = glorot(s.input_dim, de, s.input_dim, de, rng);
  p.embed_b = MatrixXd::Zero(1, de);
  p.embed_gain = MatrixXd::Ones(1, de);
  p.embed_bias = MatrixXd::Zero(1, de);
  p.blocks.resize(s.layers);
  for (auto& b : p.blocks) {
    b.wq = glorot(de, de, de, de, rng);
    b.wk = glorot(de, de, de, de, rng);
    b.wv = glorot(de, de, de, de, rng);
    b.wo = glorot(de, de, de, de, rng);
    b.norm1_gain = MatrixXd::Ones(1, de);
    b.norm1_bias = MatrixXd::Zero(1, de);
    b.ff_w1 = glorot(de, s.ff_dim, de, s.ff_dim, rng);
    b.ff_b1 = MatrixXd::Zero(1, s.ff_dim);
    b.ff_w2 = glorot(s.ff_dim, de, s.ff_dim, de, rng);
    b.ff_b2 = MatrixXd::Zero(1, de);
    b.norm2_gain = MatrixXd::Ones(1, de);
    b.norm2_bias = MatrixXd::Zero(1, de);
  }
  switch (s.decoder) {
    case DecoderKind::single_layer:
      p.dec_w1 = glorot(s.decoder_hidden, de, de, s.decoder_hidden, rng);
      p.dec_w2 = glorot(s.decoder_hidden, de, de, s.decoder_hidden, rng);
      p.dec_u = glorot(s.decoder_hidden, 1, s.decoder_hidden, 1, rng);
      break;
    case DecoderKind::bilinear:
      p.bilinear_w = glorot(de, de, de, de, rng);
      break;
    case DecoderKind::ntn:
      for (int k = 0; k < s.ntn_slices; ++k) p.ntn_w.push_back(glorot(de, de, de, de, rng));
      p.ntn_v = glorot(s.ntn_slices, 2 * de, 2 * de, s.ntn_slices, rng);
      p.ntn_b = MatrixXd::Zero(s.ntn_slices, 1);
      p.ntn_u = glorot(s.ntn_slices, 1, s.ntn_slices, 1, rng);
      break;
  }
  p.logit_bias = MatrixXd::Constant(1, 1, logit_bias_init);
  p.critic_w1 = glorot(de, s.critic_hidden, de, s.critic_hidden, rng);
  p.critic_b1 = MatrixXd::Zero(1, s.critic_hidden);
  p.critic_w2 = glorot(s.critic_hidden, 1, s.critic_hidden, 1, rng);
  p.critic_b2 = MatrixXd::Zero(1, 1);
  return p;
}

PolicyParams zeros_like(const PolicyParams& p) {
  PolicyParams z = p;
  z.for_each([](std::string_view, MatrixXd& m, bool) { m.setZero(); });
  return z;
}

std::size_t parameter_count(const PolicyParams& p) {
  std::size_t n = 0;
  p.for_each([&](std::string_view, const MatrixXd& m, bool) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

PolicyForward forward(const PolicyParams& p, const InputBatch& in) {
  PolicyForward fwd;
  fwd.encodings = encode_cached(p, in, fwd);
  fwd.logits.resize(in.batch);
  fwd.decoder_cache.resize(in.batch);
  for (int b = 0; b < in.batch; ++b)
    fwd.logits[b] = decode_element(p, fwd.node_encodings(b), &fwd.decoder_cache[b]);
  fwd.critic_pooled = pool_nodes(fwd.encodings, in.batch);
  fwd.critic_pre = fwd.critic_pooled * p.critic_w1;
  fwd.critic_pre.rowwise() += p.critic_b1.row(0);
  fwd.values = (fwd.critic_pre.cwiseMax(0.0) * p.critic_w2).col(0).array() + p.critic_b2(0, 0);
  return fwd;
}

MatrixXd encode(const InputBatch& batch, const PolicyParams& params) {
  PolicyForward scratch;
  return encode_cached(params, batch, scratch);
}

MatrixXd decode_logits(const MatrixXd& encodings, const PolicyParams& params) {
  if (encodings.cols() != params.shape.embed_dim)
    throw std::invalid_argument("decode_logits: encoding width mismatch");
  return decode_element(params, encodings, nullptr);
}

VectorXd critic_value(const MatrixXd& encodings, int batch, const PolicyParams& p) {
  if (batch < 1 || encodings.rows() % batch != 0) throw std::invalid_argument("critic_value: bad batch size");
  MatrixXd pre = pool_nodes(encodings, batch) * p.critic_w1;
  pre.rowwise() += p.critic_b1.row(0);
  return (pre.cwiseMax(0.0) * p.critic_w2).col(0).array() + p.critic_b2(0, 0);
}

GraphSample sample_graph(const MatrixXd& logits, std::mt19937_64& rng) {
  const int d = static_cast<int>(logits.rows());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GraphSample s{AdjacencyMatrix(d), 0.0, MatrixXd::Zero(d, d)};
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      if (i == j) continue;
      const double prob = sigmoid(logits(i, j));
      s.edge_probs(i, j) = prob;
      if (u(rng) < prob) s.adjacency.set_edge(i, j);
    }
  }
  s.log_prob = log_prob(s.adjacency, logits);
  return s;
}

std::vector<GraphSample> sample_graphs(std::span<const MatrixXd> logits, std::mt19937_64& rng) {
  std::vector<GraphSample> out;
  out.reserve(logits.size());
  for (const auto& g : logits) out.push_back(sample_graph(g, rng));
  return out;
}

double log_prob(const AdjacencyMatrix& a, const MatrixXd& logits) {
  const int d = a.nodes();
  if (logits.rows() != d || logits.cols() != d) throw std::invalid_argument("log_prob: shape mismatch");
  double lp = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (i != j) lp -= a.has_edge(i, j) ? softplus(-logits(i, j)) : softplus(logits(i, j));
  return lp;
}

double entropy(const MatrixXd& logits) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      if (i == j) continue;
      const double g = logits(i, j);
      const double p = sigmoid(g);
      h += p * softplus(-g) + (1.0 - p) * softplus(g);
    }
  }
  return h;
}

double actor_surrogate(const PolicyForward& fwd, std::span<const GraphSample> samples,
                       std::span<const double> advantages, double entropy_weight) {
  const double b = static_cast<double>(fwd.batch);
  double loss = 0.0;
  for (int k = 0; k < fwd.batch; ++k) {
    loss -= advantages[k] * log_prob(samples[k].adjacency, fwd.logits[k]) / b;
    loss -= entropy_weight * entropy(fwd.logits[k]) / b;
  }
  return loss;
}

double critic_loss(const PolicyForward& fwd, std::span<const double> rewards) {
  double loss = 0.0;
  for (int k = 0; k < fwd.batch; ++k) loss += (fwd.values(k) - rewards[k]) * (fwd.values(k) - rewards[k]);
  return loss / fwd.batch;
}

PolicyParams policy_gradients(const PolicyParams& p, const PolicyForward& fwd,
                              std::span<const GraphSample> samples, std::span<const double> rewards,
                              double entropy_weight) {
  const int batch = fwd.batch;
  const int d = fwd.nodes;
  if (static_cast<int>(samples.size()) != batch || static_cast<int>(rewards.size()) != batch)
    throw std::invalid_argument("policy_gradients: need one sample and one reward per batch element");
  PolicyParams g = zeros_like(p);

  MatrixXd denc(fwd.encodings.rows(), fwd.encodings.cols());
  for (int b = 0; b < batch; ++b) {
    const double advantage = rewards[b] - fwd.values(b);
    const MatrixXd& logits = fwd.logits[b];
    MatrixXd dg = MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        if (i == j) continue;
        const double x = logits(i, j);
        const double prob = sigmoid(x);
        const double a = samples[b].adjacency.has_edge(i, j) ? 1.0 : 0.0;
        dg(i, j) = (-advantage * (a - prob) + entropy_weight * x * prob * (1.0 - prob)) / batch;
      }
    }
    denc.middleRows(b * d, d) = decode_backward(p, fwd.node_encodings(b), fwd.decoder_cache[b], dg, g);
  }

  MatrixXd dh = std::move(denc);
  for (std::size_t l = p.blocks.size(); l-- > 0;)
    dh = block_backward(p.blocks[l], fwd.blocks[l], dh, batch, d, p.shape.heads, g.blocks[l]);
  const MatrixXd de = batch_norm_backward(dh, p.embed_gain, fwd.embed_norm, g.embed_gain, g.embed_bias);
  g.embed_w += fwd.input.transpose() * de;
  g.embed_b.row(0) += de.colwise().sum();

  VectorXd dv(batch);
  for (int b = 0; b < batch; ++b) dv(b) = 2.0 * (fwd.values(b) - rewards[b]) / batch;
  const MatrixXd hidden = fwd.critic_pre.cwiseMax(0.0);
  g.critic_w2.col(0) += hidden.transpose() * dv;
  g.critic_b2(0, 0) += dv.sum();
  const MatrixXd dpre = (dv * p.critic_w2.col(0).transpose())
                            .cwiseProduct((fwd.critic_pre.array() > 0.0).cast<double>().matrix());
  g.critic_w1 += fwd.critic_pooled.transpose() * dpre;
  g.critic_b1.row(0) += dpre.colwise().sum();
  return g;
}

AdamOptimizer::AdamOptimizer(const PolicyParams& like) : m_(zeros_like(like)), v_(zeros_like(like)) {}

void AdamOptimizer::step(PolicyParams& params, const PolicyParams& grads, bool critic, double lr,
                         const TrainHyper& h) {
  const std::int64_t t = critic ? ++critic_t_ : ++actor_t_;
  const double bc1 = 1.0 - std::pow(h.adam_beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(h.adam_beta2, static_cast<double>(t));
  auto pt = tensors(params);
  auto gt = tensors(grads);
  auto mt = tensors(m_);
  auto vt = tensors(v_);
  for (std::size_t i = 0; i < pt.size(); ++i) {
    if (pt[i].second != critic) continue;
    MatrixXd& m = *mt[i].first;
    MatrixXd& v = *vt[i].first;
    const MatrixXd& g = *gt[i].first;
    m = h.adam_beta1 * m + (1.0 - h.adam_beta1) * g;
    v = h.adam_beta2 * v + (1.0 - h.adam_beta2) * g.cwiseProduct(g);
    pt[i].first->array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + h.adam_eps);
  }
}

StepDiagnostics train_step(PolicyParams& params, AdamOptimizer& optimizer, const PolicyForward& fwd,
                           std::span<const GraphSample> samples, std::span<const double> rewards,
                           const TrainHyper& hyper) {
  StepDiagnostics diag;
  std::vector<double> advantages(rewards.size());
  for (int b = 0; b < fwd.batch; ++b) {
    diag.mean_reward += rewards[b] / fwd.batch;
    diag.mean_entropy += entropy(fwd.logits[b]) / fwd.batch;
    advantages[b] = rewards[b] - fwd.values(b);
  }
  diag.critic_loss = critic_loss(fwd, rewards);
  diag.actor_loss = actor_surrogate(fwd, samples, advantages, hyper.entropy_weight);

  PolicyParams grads = policy_gradients(params, fwd, samples, rewards, hyper.entropy_weight);
  double actor_sq = 0.0, critic_sq = 0.0;
  grads.for_each([&](std::string_view, const MatrixXd& m, bool critic) {
    (critic ? critic_sq : actor_sq) += m.squaredNorm();
  });
  diag.actor_grad_norm = std::sqrt(actor_sq);
  diag.critic_grad_norm = std::sqrt(critic_sq);
  if (!std::isfinite(diag.actor_grad_norm) || !std::isfinite(diag.critic_grad_norm)) {
    diag.skipped = true;
    return diag;
  }
  const double actor_scale = diag.actor_grad_norm > hyper.grad_clip ? hyper.grad_clip / diag.actor_grad_norm : 1.0;
  const double critic_scale =
      diag.critic_grad_norm > hyper.grad_clip ? hyper.grad_clip / diag.critic_grad_norm : 1.0;
  grads.for_each([&](std::string_view, MatrixXd& m, bool critic) { m *= critic ? critic_scale : actor_scale; });
  optimizer.step(params, grads, /*critic=*/false, hyper.actor_lr, hyper);
  optimizer.step(params, grads, /*critic=*/true, hyper.critic_lr, hyper);
  return diag;
}

// ---- checkpoints ----------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'R', 'L', 'C', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return v;
}

}  // namespace

void save_checkpoint(const PolicyParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  const PolicyShape& s = params.shape;
  for (int v : {s.nodes, s.input_dim, s.embed_dim, s.heads, s.layers, s.ff_dim, s.decoder_hidden,
                s.ntn_slices, s.critic_hidden, static_cast<int>(s.decoder)})
    put<std::int32_t>(out, v);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors(params).size()));
  params.for_each([&](std::string_view name, const MatrixXd& m, bool) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::int64_t>(out, m.rows());
    put<std::int64_t>(out, m.cols());
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  });
  if (!out) throw std::runtime_error("failed writing " + path);
}

PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw std::runtime_error(path + ": not a checkpoint");
  if (const auto version = get<std::uint32_t>(in); version != kCheckpointVersion)
    throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));
  PolicyShape s;
  s.nodes = get<std::int32_t>(in);
  s.input_dim = get<std::int32_t>(in);
  s.embed_dim = get<std::int32_t>(in);
  s.heads = get<std::int32_t>(in);
  s.layers = get<std::int32_t>(in);
  s.ff_dim = get<std::int32_t>(in);
  s.decoder_hidden = get<std::int32_t>(in);
  s.ntn_slices = get<std::int32_t>(in);
  s.critic_hidden = get<std::int32_t>(in);
  const int decoder = get<std::int32_t>(in);
  if (decoder < 0 || decoder > 2) throw std::runtime_error(path + ": bad decoder id");
  s.decoder = static_cast<DecoderKind>(decoder);
  std::mt19937_64 rng(0);
  PolicyParams p = init_policy(s, 0.0, rng);
  auto slots = tensors(p);
  if (get<std::uint32_t>(in) != slots.size()) throw std::runtime_error(path + ": tensor count mismatch");
  std::size_t idx = 0;
  p.for_each([&](std::string_view name, MatrixXd& m, bool) {
    const auto len = get<std::uint32_t>(in);
    std::string stored(len, '\0');
    in.read(stored.data(), len);
    const auto rows = get<std::int64_t>(in);
    const auto cols = get<std::int64_t>(in);
    if (stored != name || rows != m.rows() || cols != m.cols())
      throw std::runtime_error(path + ": tensor " + std::to_string(idx) + " does not match shape metadata");
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint truncated");
    ++idx;
  });
  return p;
}

}  // namespace rlcd
