#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshvae/mesh.hpp"
#include "meshvae/model.hpp"

namespace meshvae {

/// Reconstruction percentage (1 - ||M - M*|| / ||M*||) * 100 over the
/// flattened coordinate vectors.
inline double metric_E(const Eigen::MatrixXd& m, const Eigen::MatrixXd& m_star) {
  if (m.rows() != m_star.rows() || m.cols() != m_star.cols())
    throw std::invalid_argument("metric_E: shape mismatch");
  const double denom = m_star.norm();
  if (denom == 0.0) throw std::invalid_argument("metric_E: zero ground truth");
  return (1.0 - (m - m_star).norm() / denom) * 100.0;
}

inline double metric_chamfer(const Eigen::MatrixXd& m, const Eigen::MatrixXd& m_star) {
  return chamfer_distance(m, m_star);
}

inline double metric_rcd(const Eigen::MatrixXd& m, const Eigen::MatrixXd& m_star) {
  return std::sqrt(chamfer_distance(m, m_star));
}

/// Distance from each row of m to its nearest row of m_star.
inline Eigen::VectorXd per_vertex_rcd(const Eigen::MatrixXd& m, const Eigen::MatrixXd& m_star) {
  if (m.cols() != m_star.cols()) throw std::invalid_argument("per_vertex_rcd: width mismatch");
  Eigen::VectorXd out(m.rows());
  if (m.cols() == 3) {
    const Eigen::Index nm = m.rows(), ns = m_star.rows();
    const double *mx = m.data(), *my = mx + nm, *mz = my + nm;
    const double *sx = m_star.data(), *sy = sx + ns, *sz = sy + ns;
    for (Eigen::Index i = 0; i < nm; ++i) {
      const double xi = mx[i], yi = my[i], zi = mz[i];
      double best = (xi - sx[0]) * (xi - sx[0]) + (yi - sy[0]) * (yi - sy[0]) +
                    (zi - sz[0]) * (zi - sz[0]);
      for (Eigen::Index j = 1; j < ns; ++j) {
        const double dx = xi - sx[j], dy = yi - sy[j], dz = zi - sz[j];
        best = std::min(best, dx * dx + dy * dy + dz * dz);
      }
      out(i) = std::sqrt(best);
    }
    return out;
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double best = (m.row(i) - m_star.row(0)).squaredNorm();
    for (Eigen::Index j = 1; j < m_star.rows(); ++j)
      best = std::min(best, (m.row(i) - m_star.row(j)).squaredNorm());
    out(i) = std::sqrt(best);
  }
  return out;
}

struct MetricsReport {
  double e_percent = 0.0;
  double chamfer = 0.0;  // cm^2
  double rcd = 0.0;      // cm
  double kl = 0.0;
  Eigen::VectorXd per_vertex;  // per-vertex RCD for heatmap export
};

// ---- Dense linear algebra kernels used by the statistics below ----

/// Determinant by LU decomposition with partial pivoting.
inline double lu_determinant(Eigen::MatrixXd a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("lu_determinant: square matrix required");
  const Eigen::Index n = a.rows();
  double det = 1.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index pivot = k;
    double best = std::abs(a(k, k));
    for (Eigen::Index i = k + 1; i < n; ++i) {
      if (std::abs(a(i, k)) > best) {
        best = std::abs(a(i, k));
        pivot = i;
      }
    }
    if (best == 0.0) return 0.0;
    if (pivot != k) {
      a.row(pivot).swap(a.row(k));
      det = -det;
    }
    det *= a(k, k);
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const double factor = a(i, k) / a(k, k);
      a.row(i).tail(n - k - 1) -= factor * a.row(k).tail(n - k - 1);
    }
  }
  return det;
}

struct SymmetricEigen {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // column i pairs with values(i)
};

/// Cyclic Jacobi eigensolver for symmetric matrices.
inline SymmetricEigen jacobi_eigen(Eigen::MatrixXd a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("jacobi_eigen: square matrix required");
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double scale = std::max(1.0, a.norm());
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= 1e-14 * scale) break;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) <= 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double aip = a(i, p), aiq = a(i, q);
          a(i, p) = c * aip - s * aiq;
          a(i, q) = s * aip + c * aiq;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          const double api = a(p, i), aqi = a(q, i);
          a(p, i) = c * api - s * aqi;
          a(q, i) = s * api + c * aqi;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          const double vip = v(i, p), viq = v(i, q);
          v(i, p) = c * vip - s * viq;
          v(i, q) = s * vip + c * viq;
        }
      }
    }
  }
  SymmetricEigen res;
  res.values.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) res.values(i) = a(i, i);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) {
    return res.values(x) > res.values(y);
  });
  Eigen::VectorXd sorted_vals(n);
  Eigen::MatrixXd sorted_vecs(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    sorted_vals(i) = res.values(order[static_cast<std::size_t>(i)]);
    sorted_vecs.col(i) = v.col(order[static_cast<std::size_t>(i)]);
  }
  res.values = sorted_vals;
  res.vectors = sorted_vecs;
  return res;
}

// ---- Latent statistics ----

struct CorrelationResult {
  Eigen::MatrixXd r;  // d x d, unit diagonal
  double det_times_100 = 0.0;
};

/// Correlation matrix of the columns of X plus det(R) * 100 by LU.
inline CorrelationResult correlation_det(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows(), d = x.cols();
  if (n < 2) throw std::invalid_argument("correlation_det: need at least 2 observations");
  Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - mean;
  Eigen::MatrixXd c = (centered.transpose() * centered) / static_cast<double>(n - 1);
  for (Eigen::Index j = 0; j < d; ++j) {
    if (c(j, j) <= 1e-15)
      throw std::runtime_error("correlation_det: latent dimension " + std::to_string(j) +
                               " has zero variance");
  }
  CorrelationResult res;
  res.r.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j)
      res.r(i, j) = i == j ? 1.0 : c(i, j) / std::sqrt(c(i, i) * c(j, j));
  }
  res.det_times_100 = lu_determinant(res.r) * 100.0;
  return res;
}

struct HistogramDim {
  double bin_width = 0.0;
  std::vector<double> bin_left;
  std::vector<double> density;      // area-normalized
  std::vector<double> ref_density;  // N(0,1) density at the bin center
};

/// Density-normalized per-dimension histograms with a standard-normal
/// overlay. A constant column spans [v - 0.5, v + 0.5].
inline std::vector<HistogramDim> latent_histograms(const Eigen::MatrixXd& x, int bins) {
  if (bins < 1) throw std::invalid_argument("latent_histograms: bins must be >= 1");
  std::vector<HistogramDim> out;
  out.reserve(static_cast<std::size_t>(x.cols()));
  const double norm_const = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    double lo = x.col(j).minCoeff();
    double hi = x.col(j).maxCoeff();
    if (lo == hi) {
      lo -= 0.5;
      hi += 0.5;
    }
    HistogramDim h;
    h.bin_width = (hi - lo) / bins;
    h.bin_left.resize(static_cast<std::size_t>(bins));
    h.density.assign(static_cast<std::size_t>(bins), 0.0);
    h.ref_density.resize(static_cast<std::size_t>(bins));
    for (int b = 0; b < bins; ++b) {
      h.bin_left[static_cast<std::size_t>(b)] = lo + b * h.bin_width;
      const double center = lo + (b + 0.5) * h.bin_width;
      h.ref_density[static_cast<std::size_t>(b)] =
          norm_const * std::exp(-0.5 * center * center);
    }
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      int b = static_cast<int>((x(i, j) - lo) / h.bin_width);
      b = std::clamp(b, 0, bins - 1);
      h.density[static_cast<std::size_t>(b)] += 1.0;
    }
    const double total = static_cast<double>(x.rows()) * h.bin_width;
    for (double& dsty : h.density) dsty /= total;
    out.push_back(std::move(h));
  }
  return out;
}

// ---- PCA baseline ----

struct PcaModel {
  Eigen::VectorXd mean;        // 3N
  Eigen::MatrixXd components;  // d x 3N, orthonormal rows
  Eigen::VectorXd variances;   // d, descending
};

/// Centered-covariance eigenbasis, top d by variance. Small feature
/// dimensions use a direct Jacobi eigendecomposition of the covariance;
/// larger ones the n x n Gram-matrix trick (equivalent for d <= n - 1).
inline PcaModel pca_fit(const Eigen::MatrixXd& train, int d) {
  const Eigen::Index n = train.rows(), p = train.cols();
  if (d < 0 || d > std::min<Eigen::Index>(n - 1, p))
    throw std::invalid_argument("pca_fit: d must satisfy d <= min(n - 1, 3N)");
  PcaModel model;
  model.mean = train.colwise().mean().transpose();
  Eigen::MatrixXd centered = train.rowwise() - model.mean.transpose();
  model.components.resize(d, p);
  model.variances.resize(d);
  if (d == 0) return model;
  if (p <= 400) {
    Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    SymmetricEigen eig = jacobi_eigen(cov);
    for (int k = 0; k < d; ++k) {
      model.components.row(k) = eig.vectors.col(k).transpose();
      model.variances(k) = eig.values(k);
    }
  } else {
    Eigen::MatrixXd gram = (centered * centered.transpose()) / static_cast<double>(n - 1);
    SymmetricEigen eig = jacobi_eigen(gram);
    for (int k = 0; k < d; ++k) {
      Eigen::VectorXd dir = centered.transpose() * eig.vectors.col(k);
      const double norm = dir.norm();
      if (norm > 1e-12) {
        dir /= norm;
      } else {
        // Degenerate trailing direction: deterministic orthonormal fill.
        dir.setZero();
        dir(k % p) = 1.0;
        for (int prev = 0; prev < k; ++prev)
          dir -= model.components.row(prev).dot(dir) * model.components.row(prev).transpose();
        dir.normalize();
      }
      model.components.row(k) = dir.transpose();
      model.variances(k) = std::max(0.0, eig.values(k));
    }
  }
  return model;
}

/// mean + components^T (components (x - mean)).
inline Eigen::VectorXd pca_reconstruct(const PcaModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.mean.size())
    throw std::invalid_argument("pca_reconstruct: dimension mismatch");
  if (model.components.rows() == 0) return model.mean;
  Eigen::VectorXd coeff = model.components * (x - model.mean);
  return model.mean + model.components.transpose() * coeff;
}

/// Row-major flattening of vertex matrices for the PCA pipeline.
inline Eigen::VectorXd flatten_vertices(const Eigen::MatrixXd& vertices) {
  Eigen::VectorXd out(vertices.rows() * 3);
  for (Eigen::Index i = 0; i < vertices.rows(); ++i)
    for (Eigen::Index c = 0; c < 3; ++c) out(i * 3 + c) = vertices(i, c);
  return out;
}

inline Eigen::MatrixXd unflatten_vertices(const Eigen::VectorXd& flat) {
  Eigen::MatrixXd out(flat.size() / 3, 3);
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index c = 0; c < 3; ++c) out(i, c) = flat(i * 3 + c);
  return out;
}

// ---- Greedy latent-mode ranking ----

struct ModeRanking {
  std::vector<int> ranked;          // permutation of 0..d-1
  std::vector<double> cumulative_e;
  std::vector<double> cumulative_chamfer;
};

/// Greedy forward selection: at each step add the mode whose inclusion
/// maximizes the corpus-mean reconstruction percentage (ties to the lowest
/// index), recording the cumulative E and Chamfer curves.
inline ModeRanking rank_modes(
    const std::function<Eigen::RowVectorXd(const Eigen::MatrixXd&)>& encode_fn,
    const std::function<Eigen::MatrixXd(const Eigen::RowVectorXd&)>& decode_fn,
    const std::vector<Eigen::MatrixXd>& corpus_vertices, int d) {
  if (d < 1) throw std::invalid_argument("rank_modes: d must be >= 1");
  if (corpus_vertices.empty()) throw std::invalid_argument("rank_modes: empty corpus");
  std::vector<Eigen::RowVectorXd> codes;
  codes.reserve(corpus_vertices.size());
  for (const Eigen::MatrixXd& verts : corpus_vertices) codes.push_back(encode_fn(verts));

  auto mean_scores = [&](const std::vector<int>& subset) {
    double e_sum = 0.0, cd_sum = 0.0;
    for (std::size_t i = 0; i < corpus_vertices.size(); ++i) {
      Eigen::RowVectorXd z = Eigen::RowVectorXd::Zero(d);
      for (int mode : subset) z(mode) = codes[i](mode);
      Eigen::MatrixXd recon = decode_fn(z);
      e_sum += metric_E(recon, corpus_vertices[i]);
      cd_sum += metric_chamfer(recon, corpus_vertices[i]);
    }
    const double inv = 1.0 / static_cast<double>(corpus_vertices.size());
    return std::pair<double, double>{e_sum * inv, cd_sum * inv};
  };

  ModeRanking ranking;
  std::vector<char> used(static_cast<std::size_t>(d), 0);
  std::vector<int> selected;
  for (int step = 0; step < d; ++step) {
    int best_mode = -1;
    double best_e = 0.0, best_cd = 0.0;
    for (int c = 0; c < d; ++c) {
      if (used[static_cast<std::size_t>(c)]) continue;
      std::vector<int> trial = selected;
      trial.push_back(c);
      auto [e, cd] = mean_scores(trial);
      if (best_mode < 0 || e > best_e) {
        best_mode = c;
        best_e = e;
        best_cd = cd;
      }
    }
    used[static_cast<std::size_t>(best_mode)] = 1;
    selected.push_back(best_mode);
    ranking.ranked.push_back(best_mode);
    ranking.cumulative_e.push_back(best_e);
    ranking.cumulative_chamfer.push_back(best_cd);
  }
  return ranking;
}

inline ModeRanking rank_modes(const Model& model, const std::vector<Mesh>& corpus) {
  std::vector<Eigen::MatrixXd> verts;
  verts.reserve(corpus.size());
  for (const Mesh& m : corpus) verts.push_back(m.vertices);
  return rank_modes(
      [&model](const Eigen::MatrixXd& v) -> Eigen::RowVectorXd { return encode(model, v).mu; },
      [&model](const Eigen::RowVectorXd& z) { return decode(model, z); }, verts,
      model.config.latent_dim);
}

/// Corpus latent matrix: one row of mu per mesh.
inline Eigen::MatrixXd latent_matrix(const Model& model, const std::vector<Mesh>& corpus) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(corpus.size()), model.config.latent_dim);
  for (std::size_t i = 0; i < corpus.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) = encode(model, corpus[i].vertices).mu;
  return x;
}

/// Deterministic round-trip metrics of one mesh through the model.
inline MetricsReport evaluate_mesh(const Model& model, const Mesh& mesh) {
  EncodeResult enc = encode(model, mesh.vertices);
  Eigen::MatrixXd recon = decode(model, enc.mu);
  MetricsReport rep;
  rep.e_percent = metric_E(recon, mesh.vertices);
  rep.chamfer = metric_chamfer(recon, mesh.vertices);
  rep.rcd = std::sqrt(rep.chamfer);
  rep.per_vertex = per_vertex_rcd(recon, mesh.vertices);
  double kl = 0.0;
  for (Eigen::Index i = 0; i < enc.mu.size(); ++i) {
    const double lv = std::clamp(enc.log_var(i), -10.0, 10.0);
    kl += 1.0 + lv - enc.mu(i) * enc.mu(i) - std::exp(lv);
  }
  rep.kl = -model.config.beta / 2.0 * kl;
  return rep;
}

}  // namespace meshvae
