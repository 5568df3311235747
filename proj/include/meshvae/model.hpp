#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "meshvae/autodiff.hpp"
#include "meshvae/mesh.hpp"
#include "meshvae/pooling.hpp"
#include "meshvae/rng.hpp"
#include "meshvae/spectral.hpp"

namespace meshvae {

struct ModelConfig {
  int latent_dim = 8;
  double beta = 8.5e-3;
  int cheb_order = 6;
  std::vector<int> channels = {3, 32, 32, 32, 64};
  double pooling_factor = 4.0;
  int hidden_dense_width = 64;
  double alpha_vertex = 1.0;
  double alpha_chamfer = 1.0;
  double alpha_edge = 0.1;
  double alpha_normal = 0.1;
  bool cheb_bias = true;
  // Literal signed inner-product sum in the normal loss instead of
  // per-term absolute values.
  bool signed_normal_loss = false;
};

struct DenseLayer {
  Eigen::MatrixXd w;  // in x out
  Eigen::MatrixXd b;  // 1 x out
};

/// All trainable tensors. Chebyshev layers are indexed fine-to-coarse for
/// the encoder and coarse-to-fine for the decoder.
struct ModelParams {
  std::vector<ChebLayer> enc_cheb;
  DenseLayer enc_hidden;
  DenseLayer head_mu;
  DenseLayer head_logvar;
  DenseLayer dec_hidden;
  DenseLayer dec_expand;
  std::vector<ChebLayer> dec_cheb;
  DenseLayer out_proj;

  /// Enumerates every tensor as (name, matrix) in a fixed order.
  template <typename F>
  void visit(F&& f) {
    auto dense = [&](const std::string& name, DenseLayer& d) {
      f(name + ".w", d.w);
      f(name + ".b", d.b);
    };
    for (std::size_t i = 0; i < enc_cheb.size(); ++i) {
      for (std::size_t k = 0; k < enc_cheb[i].theta.size(); ++k)
        f("enc_cheb" + std::to_string(i) + ".theta" + std::to_string(k), enc_cheb[i].theta[k]);
      if (enc_cheb[i].bias.size() > 0)
        f("enc_cheb" + std::to_string(i) + ".bias", enc_cheb[i].bias);
    }
    dense("enc_hidden", enc_hidden);
    dense("head_mu", head_mu);
    dense("head_logvar", head_logvar);
    dense("dec_hidden", dec_hidden);
    dense("dec_expand", dec_expand);
    for (std::size_t i = 0; i < dec_cheb.size(); ++i) {
      for (std::size_t k = 0; k < dec_cheb[i].theta.size(); ++k)
        f("dec_cheb" + std::to_string(i) + ".theta" + std::to_string(k), dec_cheb[i].theta[k]);
      if (dec_cheb[i].bias.size() > 0)
        f("dec_cheb" + std::to_string(i) + ".bias", dec_cheb[i].bias);
    }
    dense("out_proj", out_proj);
  }

  template <typename F>
  void visit(F&& f) const {
    const_cast<ModelParams*>(this)->visit(
        [&](const std::string& name, Eigen::MatrixXd& t) { f(name, std::as_const(t)); });
  }
};

/// Config, pooling hierarchy, and weights bundled for forward passes.
struct Model {
  ModelConfig config;
  PoolingHierarchy hierarchy;
  ModelParams params;

  int input_vertices() const { return hierarchy.meshes.front().num_vertices(); }
  int coarsest_vertices() const { return hierarchy.meshes.back().num_vertices(); }
};

namespace detail {

inline ChebLayer init_cheb(int order, int f_in, int f_out, bool bias, RandomStream& rng) {
  ChebLayer layer;
  layer.order = order;
  layer.f_in = f_in;
  layer.f_out = f_out;
  // The layer sums K independent theta_k products, so its effective fan-in
  // is K * f_in; per-k Glorot would inflate output variance K-fold.
  const double limit = std::sqrt(6.0 / static_cast<double>(order * f_in + f_out));
  layer.theta.resize(static_cast<std::size_t>(order));
  for (int k = 0; k < order; ++k) {
    Eigen::MatrixXd& th = layer.theta[static_cast<std::size_t>(k)];
    th.resize(f_in, f_out);
    for (Eigen::Index i = 0; i < th.rows(); ++i)
      for (Eigen::Index j = 0; j < th.cols(); ++j) th(i, j) = rng.uniform(-limit, limit);
  }
  if (bias) layer.bias = Eigen::MatrixXd::Zero(1, f_out);
  return layer;
}

inline DenseLayer init_dense(int in, int out, RandomStream& rng) {
  DenseLayer d;
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  d.w.resize(in, out);
  for (Eigen::Index i = 0; i < d.w.rows(); ++i)
    for (Eigen::Index j = 0; j < d.w.cols(); ++j) d.w(i, j) = rng.uniform(-limit, limit);
  d.b = Eigen::MatrixXd::Zero(1, out);
  return d;
}

}  // namespace detail

/// Deterministic Glorot-uniform initialization from the seed. The channel
/// list must start at 3 and exceed the hierarchy depth by exactly one.
inline Model build_model(const ModelConfig& config, PoolingHierarchy hierarchy,
                         std::uint64_t seed) {
  const int stages = static_cast<int>(config.channels.size()) - 1;
  if (stages < 1 || config.channels.front() != 3)
    throw std::invalid_argument("build_model: channels must start at 3");
  if (hierarchy.num_levels() != stages)
    throw std::invalid_argument("build_model: hierarchy has " +
                                std::to_string(hierarchy.num_levels()) + " levels but " +
                                std::to_string(stages) + " conv stages are configured");
  if (config.latent_dim < 1) throw std::invalid_argument("build_model: latent_dim must be >= 1");
  if (config.cheb_order < 1) throw std::invalid_argument("build_model: cheb_order must be >= 1");

  Model model;
  model.config = config;
  model.hierarchy = std::move(hierarchy);
  const int n_coarse = model.hierarchy.meshes.back().num_vertices();
  const int c_top = config.channels.back();
  const int flat = n_coarse * c_top;
  const int hidden = config.hidden_dense_width;
  const int d = config.latent_dim;

  auto stream = [&](const std::string& name) { return RandomStream(derive_seed(seed, name)); };

  for (int i = 0; i < stages; ++i) {
    RandomStream rng(derive_seed(seed, "enc_cheb", static_cast<std::uint64_t>(i)));
    model.params.enc_cheb.push_back(detail::init_cheb(
        config.cheb_order, config.channels[static_cast<std::size_t>(i)],
        config.channels[static_cast<std::size_t>(i) + 1], config.cheb_bias, rng));
  }
  {
    RandomStream rng = stream("enc_hidden");
    model.params.enc_hidden = detail::init_dense(flat, hidden, rng);
  }
  {
    RandomStream rng = stream("head_mu");
    model.params.head_mu = detail::init_dense(hidden, d, rng);
  }
  {
    RandomStream rng = stream("head_logvar");
    model.params.head_logvar = detail::init_dense(hidden, d, rng);
    // Start near-deterministic (sigma ~ e^-2): a unit-variance posterior at
    // initialization drowns the latent signal and training collapses to the
    // corpus-mean shape before the encoder can become informative.
    model.params.head_logvar.b.setConstant(-4.0);
  }
  {
    RandomStream rng = stream("dec_hidden");
    model.params.dec_hidden = detail::init_dense(d, hidden, rng);
  }
  {
    RandomStream rng = stream("dec_expand");
    model.params.dec_expand = detail::init_dense(hidden, flat, rng);
  }
  for (int s = 0; s < stages; ++s) {
    RandomStream rng(derive_seed(seed, "dec_cheb", static_cast<std::uint64_t>(s)));
    model.params.dec_cheb.push_back(detail::init_cheb(
        config.cheb_order, config.channels[static_cast<std::size_t>(stages - s)],
        config.channels[static_cast<std::size_t>(stages - s - 1)], config.cheb_bias, rng));
  }
  {
    RandomStream rng = stream("out_proj");
    model.params.out_proj = detail::init_dense(config.channels.front(), 3, rng);
    // Start the decoded cloud at the reference geometry's centroid instead of
    // the origin: raw corpora are not centered, and crawling the whole
    // translation through the loss dominates early training otherwise.
    model.params.out_proj.b = model.hierarchy.meshes.front().vertices.colwise().mean();
  }
  return model;
}

/// Tape handles for the full parameter set.
struct ModelValues {
  std::vector<ChebLayerValues> enc_cheb;
  struct DenseValues {
    ad::Value w, b;
  };
  DenseValues enc_hidden, head_mu, head_logvar, dec_hidden, dec_expand, out_proj;
  std::vector<ChebLayerValues> dec_cheb;
};

inline ModelValues model_values(ad::Tape& tape, const Model& model, bool trainable) {
  ModelValues v;
  auto dense = [&](const DenseLayer& d) {
    ModelValues::DenseValues dv;
    dv.w = trainable ? ad::parameter(tape, d.w) : ad::constant(tape, d.w);
    dv.b = trainable ? ad::parameter(tape, d.b) : ad::constant(tape, d.b);
    return dv;
  };
  for (const ChebLayer& l : model.params.enc_cheb)
    v.enc_cheb.push_back(cheb_layer_values(tape, l, trainable));
  v.enc_hidden = dense(model.params.enc_hidden);
  v.head_mu = dense(model.params.head_mu);
  v.head_logvar = dense(model.params.head_logvar);
  v.dec_hidden = dense(model.params.dec_hidden);
  v.dec_expand = dense(model.params.dec_expand);
  for (const ChebLayer& l : model.params.dec_cheb)
    v.dec_cheb.push_back(cheb_layer_values(tape, l, trainable));
  v.out_proj = dense(model.params.out_proj);
  return v;
}

inline ad::Value dense_forward(const ModelValues::DenseValues& d, ad::Value x) {
  return ad::add(ad::matmul(x, d.w), d.b);
}

/// Flat list of the parameter handles in ModelParams::visit order.
inline std::vector<ad::Value> collect_values(const ModelValues& v) {
  std::vector<ad::Value> out;
  auto cheb = [&](const ChebLayerValues& c) {
    for (const ad::Value& th : c.theta) out.push_back(th);
    if (c.has_bias()) out.push_back(c.bias);
  };
  auto dense = [&](const ModelValues::DenseValues& d) {
    out.push_back(d.w);
    out.push_back(d.b);
  };
  for (const ChebLayerValues& c : v.enc_cheb) cheb(c);
  dense(v.enc_hidden);
  dense(v.head_mu);
  dense(v.head_logvar);
  dense(v.dec_hidden);
  dense(v.dec_expand);
  for (const ChebLayerValues& c : v.dec_cheb) cheb(c);
  dense(v.out_proj);
  return out;
}

/// Graph encoder: [cheb -> ELU -> pool] per level, flatten, dense, ELU,
/// then the mu and log-variance heads. Returns (mu, log_var) as 1 x d.
inline std::pair<ad::Value, ad::Value> encode_graph(const Model& model, const ModelValues& v,
                                                    ad::Value x) {
  if (x.rows() != model.input_vertices() || x.cols() != 3)
    throw std::invalid_argument("encode: vertex matrix does not match hierarchy root");
  const int stages = model.hierarchy.num_levels();
  for (int i = 0; i < stages; ++i) {
    x = cheb_forward(model.params.enc_cheb[static_cast<std::size_t>(i)],
                     model.hierarchy.scaled_laplacians[static_cast<std::size_t>(i)],
                     v.enc_cheb[static_cast<std::size_t>(i)], x);
    x = ad::elu(x);
    x = ad::spmm(model.hierarchy.levels[static_cast<std::size_t>(i)].q_down, x);
  }
  ad::Value flat = ad::reshape(x, 1, x.rows() * x.cols());
  ad::Value h = ad::elu(dense_forward(v.enc_hidden, flat));
  return {dense_forward(v.head_mu, h), dense_forward(v.head_logvar, h)};
}

/// Graph decoder: dense to hidden, ELU, dense to coarsest features,
/// [unpool -> cheb -> ELU] per level, then the linear output projection.
inline ad::Value decode_graph(const Model& model, const ModelValues& v, ad::Value z) {
  if (z.rows() != 1 || z.cols() != model.config.latent_dim)
    throw std::invalid_argument("decode: latent vector length mismatch");
  const int stages = model.hierarchy.num_levels();
  const int n_coarse = model.coarsest_vertices();
  const int c_top = model.config.channels.back();
  ad::Value h = ad::elu(dense_forward(v.dec_hidden, z));
  ad::Value e = dense_forward(v.dec_expand, h);
  ad::Value x = ad::reshape(e, n_coarse, c_top);
  for (int s = 0; s < stages; ++s) {
    const int level = stages - 1 - s;
    x = ad::spmm(model.hierarchy.levels[static_cast<std::size_t>(level)].q_up, x);
    x = cheb_forward(model.params.dec_cheb[static_cast<std::size_t>(s)],
                     model.hierarchy.scaled_laplacians[static_cast<std::size_t>(level)],
                     v.dec_cheb[static_cast<std::size_t>(s)], x);
    x = ad::elu(x);
  }
  return dense_forward(v.out_proj, x);
}

struct EncodeResult {
  Eigen::RowVectorXd mu;
  Eigen::RowVectorXd log_var;
};

/// Deterministic plain-data encode via a throwaway constant graph.
inline EncodeResult encode(const Model& model, const Eigen::MatrixXd& vertices) {
  ad::Tape tape;
  ModelValues v = model_values(tape, model, /*trainable=*/false);
  auto [mu, lv] = encode_graph(model, v, ad::constant(tape, vertices));
  return {mu.data().row(0), lv.data().row(0)};
}

inline Eigen::MatrixXd decode(const Model& model, const Eigen::RowVectorXd& z) {
  ad::Tape tape;
  ModelValues v = model_values(tape, model, /*trainable=*/false);
  return decode_graph(model, v, ad::constant(tape, z)).data();
}

struct LatentCode {
  Eigen::RowVectorXd z;
  Eigen::RowVectorXd mu;
  Eigen::RowVectorXd log_var;
};

/// z = mu + exp(log_var / 2) * eps, or exactly mu when deterministic.
inline LatentCode reparameterize(const Eigen::RowVectorXd& mu,
                                 const Eigen::RowVectorXd& log_var, RandomStream& rng,
                                 bool deterministic) {
  if (mu.size() != log_var.size())
    throw std::invalid_argument("reparameterize: length mismatch");
  LatentCode code;
  code.mu = mu;
  code.log_var = log_var;
  if (deterministic) {
    code.z = mu;
    return code;
  }
  code.z.resize(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    code.z(i) = mu(i) + std::exp(log_var(i) / 2.0) * rng.normal();
  return code;
}

// ---- Loss terms (all scalar Values) ----

/// L1 distance over all coordinates.
inline ad::Value loss_vertex(ad::Value m, ad::Value m_star) {
  if (m.rows() != m_star.rows() || m.cols() != m_star.cols())
    throw std::invalid_argument("loss_vertex: shape mismatch");
  return ad::sum(ad::vabs(ad::sub(m, m_star)));
}

/// Symmetric squared-distance Chamfer; nearest assignments are constants.
inline ad::Value loss_chamfer(ad::Value m, ad::Value m_star) {
  if (m.rows() == 0 || m_star.rows() == 0)
    throw std::invalid_argument("loss_chamfer: empty point set");
  std::vector<int> to_star = ad::nearest_rows(m.data(), m_star.data());
  std::vector<int> to_m = ad::nearest_rows(m_star.data(), m.data());
  ad::Value fwd = ad::sum(ad::square(ad::sub(m, ad::gather_rows(m_star, to_star))));
  ad::Value bwd = ad::sum(ad::square(ad::sub(ad::gather_rows(m, to_m), m_star)));
  return ad::add(fwd, bwd);
}

namespace detail {

/// Cyclic within-face vertex pairs (f0,f1), (f1,f2), (f2,f0).
inline void face_pair_indices(const Eigen::MatrixXi& faces, std::vector<int>& ia,
                              std::vector<int>& ib) {
  ia.clear();
  ib.clear();
  ia.reserve(static_cast<std::size_t>(faces.rows()) * 3);
  ib.reserve(static_cast<std::size_t>(faces.rows()) * 3);
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    for (int k = 0; k < 3; ++k) {
      ia.push_back(faces(f, k));
      ib.push_back(faces(f, (k + 1) % 3));
    }
  }
}

}  // namespace detail

/// Sum over faces and within-face pairs of |<unit edge, face normal>|
/// (or the literal signed sum). Edges shorter than 1e-12 are masked out.
inline ad::Value loss_normal(ad::Value m, const Eigen::MatrixXi& faces,
                             const Eigen::MatrixXd& gt_normals, bool signed_sum = false) {
  if (gt_normals.rows() != faces.rows() || gt_normals.cols() != 3)
    throw std::invalid_argument("loss_normal: normals must be F x 3");
  ad::Tape& tape = *m.tape;
  std::vector<int> ia, ib;
  detail::face_pair_indices(faces, ia, ib);
  ad::Value diff = ad::sub(ad::gather_rows(m, ia), ad::gather_rows(m, ib));
  ad::Value norms = ad::row_norms(diff);

  const Eigen::Index rows = norms.rows();
  Eigen::MatrixXd mask(rows, 1);
  Eigen::MatrixXd pad(rows, 1);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const bool live = norms.data()(r, 0) > 1e-12;
    mask(r, 0) = live ? 1.0 : 0.0;
    pad(r, 0) = live ? 0.0 : 1.0;  // keeps log() finite on masked rows
  }
  ad::Value safe = ad::add(norms, ad::constant(tape, pad));
  ad::Value unit = ad::mul(diff, ad::broadcast_cols(ad::reciprocal_positive(safe), 3));

  Eigen::MatrixXd normals_rep(rows, 3);
  for (Eigen::Index f = 0; f < faces.rows(); ++f)
    for (int k = 0; k < 3; ++k) normals_rep.row(f * 3 + k) = gt_normals.row(f);
  ad::Value dots = ad::matmul(ad::mul(unit, ad::constant(tape, normals_rep)),
                              ad::constant(tape, Eigen::MatrixXd::Ones(3, 1)));
  ad::Value terms = signed_sum ? dots : ad::vabs(dots);
  return ad::sum(ad::mul(terms, ad::constant(tape, mask)));
}

/// Sum over faces and within-face pairs of | |edge| - |target edge| |.
inline ad::Value loss_edge(ad::Value m, ad::Value m_star, const Eigen::MatrixXi& faces) {
  if (m.rows() != m_star.rows() || m.cols() != m_star.cols())
    throw std::invalid_argument("loss_edge: shape mismatch");
  std::vector<int> ia, ib;
  detail::face_pair_indices(faces, ia, ib);
  ad::Value len = ad::row_norms(ad::sub(ad::gather_rows(m, ia), ad::gather_rows(m, ib)));
  ad::Value len_star =
      ad::row_norms(ad::sub(ad::gather_rows(m_star, ia), ad::gather_rows(m_star, ib)));
  return ad::sum(ad::vabs(ad::sub(len, len_star)));
}

/// -(beta/2) * sum(1 + log var - mu^2 - var), with log var clamped to
/// [-10, 10] before exponentiation.
inline ad::Value loss_kl(ad::Value mu, ad::Value log_var, double beta) {
  if (mu.rows() != log_var.rows() || mu.cols() != log_var.cols())
    throw std::invalid_argument("loss_kl: shape mismatch");
  ad::Value lv = ad::clamp(log_var, -10.0, 10.0);
  ad::Value inner = ad::add_scalar(ad::sub(lv, ad::add(ad::square(mu), ad::vexp(lv))), 1.0);
  return ad::scale(ad::sum(inner), -beta / 2.0);
}

struct LossBreakdown {
  ad::Value total;
  ad::Value kl;
  ad::Value vertex;
  ad::Value chamfer;
  ad::Value edge;
  ad::Value normal;
};

/// loss_kl + alpha_vertex L_vertex + alpha_chamfer L_chamfer
/// + alpha_edge L_edge + alpha_normal L_normal.
inline LossBreakdown total_loss(const ModelConfig& config, ad::Value recon,
                                ad::Value target_vertices, const Eigen::MatrixXi& faces,
                                const Eigen::MatrixXd& gt_normals, ad::Value mu,
                                ad::Value log_var) {
  LossBreakdown lb;
  lb.kl = loss_kl(mu, log_var, config.beta);
  lb.vertex = loss_vertex(recon, target_vertices);
  lb.chamfer = loss_chamfer(recon, target_vertices);
  lb.edge = loss_edge(recon, target_vertices, faces);
  lb.normal = loss_normal(recon, faces, gt_normals, config.signed_normal_loss);
  lb.total = ad::add(
      lb.kl, ad::add(ad::add(ad::scale(lb.vertex, config.alpha_vertex),
                             ad::scale(lb.chamfer, config.alpha_chamfer)),
                     ad::add(ad::scale(lb.edge, config.alpha_edge),
                             ad::scale(lb.normal, config.alpha_normal))));
  return lb;
}

}  // namespace meshvae
