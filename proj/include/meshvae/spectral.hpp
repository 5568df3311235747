#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "meshvae/autodiff.hpp"
#include "meshvae/rng.hpp"
#include "meshvae/sparse.hpp"

namespace meshvae {

/// Symmetric normalized graph Laplacian L = I - D^{+1/2} A D^{+1/2}.
/// The pseudoinverse convention gives an isolated vertex an identity row.
inline SparseMatrix normalized_laplacian(const SparseMatrix& adjacency) {
  if (adjacency.rows() != adjacency.cols() || !adjacency.is_symmetric(0.0))
    throw std::invalid_argument("normalized_laplacian: adjacency must be symmetric");
  const int n = adjacency.rows();
  std::vector<double> inv_sqrt_deg(static_cast<std::size_t>(n), 0.0);
  {
    std::vector<double> deg(static_cast<std::size_t>(n), 0.0);
    for (const Triplet& t : adjacency.entries()) deg[static_cast<std::size_t>(t.row)] += t.value;
    for (int i = 0; i < n; ++i)
      if (deg[static_cast<std::size_t>(i)] > 0.0)
        inv_sqrt_deg[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(deg[static_cast<std::size_t>(i)]);
  }
  std::vector<Triplet> t;
  t.reserve(adjacency.nnz() + static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) t.push_back({i, i, 1.0});
  for (const Triplet& e : adjacency.entries())
    t.push_back({e.row, e.col,
                 -e.value * inv_sqrt_deg[static_cast<std::size_t>(e.row)] *
                     inv_sqrt_deg[static_cast<std::size_t>(e.col)]});
  return SparseMatrix(n, n, std::move(t));
}

struct LambdaMaxResult {
  double value = 0.0;
  bool converged = false;
};

/// Largest-eigenvalue estimate by power iteration with a deterministic
/// seeded start vector. Falls back to 2.0 (the normalized-Laplacian upper
/// bound) with converged=false when max_iter is exhausted.
inline LambdaMaxResult estimate_lambda_max(const SparseMatrix& laplacian, double tol = 1e-6,
                                           int max_iter = 10000) {
  if (laplacian.rows() != laplacian.cols())
    throw std::invalid_argument("estimate_lambda_max: matrix must be square");
  const int n = laplacian.rows();
  if (n == 0) return {0.0, true};
  RandomStream rng(derive_seed(0x9E3779B97F4A7C15ull, "lambda-max-start"));
  Eigen::MatrixXd v(n, 1);
  for (int i = 0; i < n; ++i) v(i, 0) = rng.uniform(-1.0, 1.0);
  v /= v.norm();
  double prev = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::MatrixXd w = laplacian.apply(v);
    double est = (v.transpose() * w)(0, 0);
    double wn = w.norm();
    if (wn == 0.0) return {0.0, true};  // start vector lies in the kernel; spectrum reached 0
    v = w / wn;
    if (it > 0 && std::abs(est - prev) <= tol * std::max(std::abs(est), 1e-30))
      return {est, true};
    prev = est;
  }
  return {2.0, false};
}

/// Shifted and rescaled Laplacian 2 L / lambda_max - I.
inline SparseMatrix scale_laplacian(const SparseMatrix& laplacian, double lambda_max) {
  if (lambda_max <= 0.0)
    throw std::invalid_argument("scale_laplacian: lambda_max must be positive");
  const int n = laplacian.rows();
  std::vector<Triplet> t;
  t.reserve(laplacian.nnz() + static_cast<std::size_t>(n));
  const double s = 2.0 / lambda_max;
  for (const Triplet& e : laplacian.entries()) t.push_back({e.row, e.col, s * e.value});
  for (int i = 0; i < n; ++i) t.push_back({i, i, -1.0});
  return SparseMatrix(n, n, std::move(t));
}

/// Chebyshev spectral convolution layer. theta[k] maps F_in to F_out
/// channels for basis order k; the scaled Laplacian it filters with is
/// supplied at call time (cached per hierarchy resolution).
struct ChebLayer {
  int order = 0;  // K
  int f_in = 0;
  int f_out = 0;
  std::vector<Eigen::MatrixXd> theta;  // K matrices, each F_in x F_out
  Eigen::MatrixXd bias;                // 1 x F_out (empty when bias disabled)
};

/// Parameter handles for one layer on a tape (theta values then optional bias).
struct ChebLayerValues {
  std::vector<ad::Value> theta;
  ad::Value bias;  // id < 0 when bias disabled
  bool has_bias() const { return bias.id >= 0; }
};

inline ChebLayerValues cheb_layer_values(ad::Tape& tape, const ChebLayer& layer,
                                         bool trainable = true) {
  ChebLayerValues v;
  v.theta.reserve(layer.theta.size());
  for (const Eigen::MatrixXd& th : layer.theta)
    v.theta.push_back(trainable ? ad::parameter(tape, th) : ad::constant(tape, th));
  if (layer.bias.size() > 0)
    v.bias = trainable ? ad::parameter(tape, layer.bias) : ad::constant(tape, layer.bias);
  return v;
}

/// output = sum_k T_k(L_bar) * signal * theta_k (+ bias), with the Chebyshev
/// recursion T_0 = I, T_1 = L_bar, T_k = 2 L_bar T_{k-1} - T_{k-2} applied
/// directly to the signal.
inline ad::Value cheb_forward(const ChebLayer& layer, const SparseMatrix& lb,
                              const ChebLayerValues& values, ad::Value signal) {
  if (signal.cols() != layer.f_in)
    throw std::invalid_argument("cheb_forward: signal width does not match F_in");
  if (layer.order < 1) throw std::invalid_argument("cheb_forward: order must be >= 1");
  ad::Value t_prev = signal;  // T_0 s
  ad::Value out = ad::matmul(t_prev, values.theta[0]);
  if (layer.order > 1) {
    ad::Value t_cur = ad::spmm(lb, signal);  // T_1 s
    out = ad::add(out, ad::matmul(t_cur, values.theta[1]));
    for (int k = 2; k < layer.order; ++k) {
      ad::Value t_next = ad::sub(ad::scale(ad::spmm(lb, t_cur), 2.0), t_prev);
      out = ad::add(out, ad::matmul(t_next, values.theta[static_cast<std::size_t>(k)]));
      t_prev = t_cur;
      t_cur = t_next;
    }
  }
  if (values.has_bias()) out = ad::add(out, values.bias);
  return out;
}

}  // namespace meshvae
