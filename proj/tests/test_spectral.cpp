#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <vector>

#include "meshvae/autodiff.hpp"
#include "meshvae/rng.hpp"
#include "meshvae/sparse.hpp"
#include "meshvae/spectral.hpp"

using namespace meshvae;

namespace {

SparseMatrix complete_graph(int n) {
  std::vector<Triplet> tr;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) tr.push_back({i, j, 1.0});
  return SparseMatrix(n, n, tr);
}

Eigen::MatrixXd randn(RandomStream& rng, Eigen::Index r, Eigen::Index c) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

// Dense Chebyshev polynomial of the scaled Laplacian, the oracle the
// sparse recursion must match.
Eigen::MatrixXd dense_cheb(const Eigen::MatrixXd& lb, const std::vector<double>& theta,
                           const Eigen::MatrixXd& s) {
  const Eigen::Index n = lb.rows();
  Eigen::MatrixXd tkm2 = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd tkm1 = lb;
  Eigen::MatrixXd acc = theta[0] * tkm2;
  if (theta.size() > 1) acc += theta[1] * tkm1;
  for (std::size_t k = 2; k < theta.size(); ++k) {
    Eigen::MatrixXd tk = 2.0 * lb * tkm1 - tkm2;
    acc += theta[k] * tk;
    tkm2 = tkm1;
    tkm1 = tk;
  }
  return acc * s;
}

}  // namespace

TEST_CASE("K3 normalized laplacian entries and spectrum") {
  SparseMatrix lap = normalized_laplacian(complete_graph(3));
  Eigen::MatrixXd dense = lap.to_dense();
  for (int i = 0; i < 3; ++i) {
    CHECK(dense(i, i) == Catch::Approx(1.0).margin(1e-15));
    for (int j = 0; j < 3; ++j)
      if (i != j) CHECK(dense(i, j) == Catch::Approx(-0.5).margin(1e-15));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dense);
  CHECK(eig.eigenvalues()(0) == Catch::Approx(0.0).margin(1e-12));
  CHECK(eig.eigenvalues()(1) == Catch::Approx(1.5).margin(1e-12));
  CHECK(eig.eigenvalues()(2) == Catch::Approx(1.5).margin(1e-12));
}

TEST_CASE("isolated vertex gets an identity row") {
  // Triangle plus vertex 3 with no edges.
  std::vector<Triplet> tr;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) tr.push_back({i, j, 1.0});
  SparseMatrix adj(4, 4, tr);
  Eigen::MatrixXd dense = normalized_laplacian(adj).to_dense();
  CHECK(dense(3, 3) == 1.0);
  for (int j = 0; j < 3; ++j) {
    CHECK(dense(3, j) == 0.0);
    CHECK(dense(j, 3) == 0.0);
  }
}

TEST_CASE("asymmetric adjacency is rejected") {
  std::vector<Triplet> tr = {{0, 1, 1.0}};
  SparseMatrix adj(2, 2, tr);
  CHECK_THROWS(normalized_laplacian(adj));
}

TEST_CASE("lambda_max estimates match dense oracles") {
  LambdaMaxResult k3 = estimate_lambda_max(normalized_laplacian(complete_graph(3)));
  CHECK(k3.converged);
  CHECK(k3.value == Catch::Approx(1.5).margin(1e-6));

  LambdaMaxResult p2 = estimate_lambda_max(normalized_laplacian(complete_graph(2)));
  CHECK(p2.converged);
  CHECK(p2.value == Catch::Approx(2.0).margin(1e-6));

  LambdaMaxResult ident = estimate_lambda_max(SparseMatrix::identity(5));
  CHECK(ident.converged);
  CHECK(ident.value == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("lambda_max on larger laplacians agrees with a dense eigensolver") {
  RandomStream rng(derive_seed(3, "lambda-oracle"));
  for (int trial = 0; trial < 5; ++trial) {
    // Random connected-ish graph on 8 vertices: ring plus random chords.
    std::vector<Triplet> tr;
    auto add_edge = [&](int i, int j) {
      tr.push_back({i, j, 1.0});
      tr.push_back({j, i, 1.0});
    };
    for (int i = 0; i < 8; ++i) add_edge(i, (i + 1) % 8);
    for (int c = 0; c < 4; ++c) {
      int i = static_cast<int>(rng.index(8)), j = static_cast<int>(rng.index(8));
      if (i != j) add_edge(std::min(i, j), std::max(i, j));
    }
    SparseMatrix lap = normalized_laplacian(SparseMatrix(8, 8, tr));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(lap.to_dense());
    LambdaMaxResult est = estimate_lambda_max(lap);
    CHECK(est.converged);
    // The Rayleigh quotient never exceeds the true top eigenvalue; the
    // iteration tolerance bounds relative change, not absolute error, so
    // the lower margin is looser than the stopping threshold.
    const double truth = eig.eigenvalues().maxCoeff();
    CHECK(est.value <= truth + 1e-9);
    CHECK(est.value >= truth - 1e-3);
    CHECK(est.value <= 2.0 + 1e-6);
  }
}

TEST_CASE("scale_laplacian formula") {
  SparseMatrix ident = SparseMatrix::identity(3);
  CHECK((scale_laplacian(ident, 1.0).to_dense() - Eigen::MatrixXd::Identity(3, 3)).norm() ==
        0.0);

  SparseMatrix zero(3, 3, {});
  CHECK((scale_laplacian(zero, 1.0).to_dense() + Eigen::MatrixXd::Identity(3, 3)).norm() == 0.0);

  Eigen::MatrixXd scaled = scale_laplacian(normalized_laplacian(complete_graph(3)), 1.5).to_dense();
  for (int i = 0; i < 3; ++i) {
    CHECK(scaled(i, i) == Catch::Approx(1.0 / 3.0).margin(1e-15));
    for (int j = 0; j < 3; ++j)
      if (i != j) CHECK(scaled(i, j) == Catch::Approx(-2.0 / 3.0).margin(1e-15));
  }

  CHECK_THROWS(scale_laplacian(ident, 0.0));
  CHECK_THROWS(scale_laplacian(ident, -1.0));
}

TEST_CASE("scaled laplacian spectrum lies in [-1, 1]") {
  SparseMatrix lap = normalized_laplacian(complete_graph(5));
  LambdaMaxResult lm = estimate_lambda_max(lap);
  Eigen::MatrixXd lb = scale_laplacian(lap, lm.value).to_dense();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(lb);
  CHECK(eig.eigenvalues().minCoeff() >= -1.0 - 1e-8);
  CHECK(eig.eigenvalues().maxCoeff() <= 1.0 + 1e-8);
}

TEST_CASE("cheb identity and linear-term special cases") {
  SparseMatrix lap = normalized_laplacian(complete_graph(3));
  SparseMatrix lb = scale_laplacian(lap, estimate_lambda_max(lap).value);
  RandomStream rng(derive_seed(11, "cheb-signal"));
  Eigen::MatrixXd s = randn(rng, 3, 2);

  ChebLayer ident_layer;
  ident_layer.order = 1;
  ident_layer.f_in = 2;
  ident_layer.f_out = 2;
  ident_layer.theta = {Eigen::MatrixXd::Identity(2, 2)};
  ad::Tape tape;
  ChebLayerValues vals = cheb_layer_values(tape, ident_layer, /*trainable=*/false);
  ad::Value out = cheb_forward(ident_layer, lb, vals, ad::constant(tape, s));
  CHECK((out.data() - s).norm() < 1e-14);

  ChebLayer lin_layer;
  lin_layer.order = 2;
  lin_layer.f_in = 2;
  lin_layer.f_out = 2;
  lin_layer.theta = {Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Identity(2, 2)};
  ChebLayerValues lv = cheb_layer_values(tape, lin_layer, false);
  ad::Value out2 = cheb_forward(lin_layer, lb, lv, ad::constant(tape, s));
  CHECK((out2.data() - lb.to_dense() * s).norm() < 1e-13);
}

TEST_CASE("cheb recursion matches the dense polynomial oracle") {
  SparseMatrix lap = normalized_laplacian(complete_graph(3));
  SparseMatrix lb = scale_laplacian(lap, estimate_lambda_max(lap).value);
  RandomStream rng(derive_seed(12, "cheb-oracle"));

  std::vector<double> coef = {0.3, -0.7, 1.1};
  ChebLayer layer;
  layer.order = 3;
  layer.f_in = 1;
  layer.f_out = 1;
  for (double c : coef) layer.theta.push_back(Eigen::MatrixXd::Constant(1, 1, c));
  Eigen::MatrixXd s = randn(rng, 3, 1);

  ad::Tape tape;
  ChebLayerValues vals = cheb_layer_values(tape, layer, false);
  ad::Value out = cheb_forward(layer, lb, vals, ad::constant(tape, s));
  CHECK((out.data() - dense_cheb(lb.to_dense(), coef, s)).norm() < 1e-10);
}

TEST_CASE("cheb order 6 matches dense oracle on a 10-vertex graph") {
  std::vector<Triplet> tr;
  auto add_edge = [&](int i, int j) {
    tr.push_back({i, j, 1.0});
    tr.push_back({j, i, 1.0});
  };
  for (int i = 0; i < 10; ++i) add_edge(i, (i + 1) % 10);
  add_edge(0, 5);
  add_edge(2, 7);
  SparseMatrix lap = normalized_laplacian(SparseMatrix(10, 10, tr));
  SparseMatrix lb = scale_laplacian(lap, estimate_lambda_max(lap).value);

  RandomStream rng(derive_seed(13, "cheb-oracle6"));
  std::vector<double> coef;
  for (int k = 0; k < 6; ++k) coef.push_back(rng.normal());
  ChebLayer layer;
  layer.order = 6;
  layer.f_in = 1;
  layer.f_out = 1;
  for (double c : coef) layer.theta.push_back(Eigen::MatrixXd::Constant(1, 1, c));
  Eigen::MatrixXd s = randn(rng, 10, 1);

  ad::Tape tape;
  ChebLayerValues vals = cheb_layer_values(tape, layer, false);
  ad::Value out = cheb_forward(layer, lb, vals, ad::constant(tape, s));
  CHECK((out.data() - dense_cheb(lb.to_dense(), coef, s)).norm() < 1e-10);
}

TEST_CASE("cheb_forward is linear in the signal with zero bias") {
  SparseMatrix lap = normalized_laplacian(complete_graph(4));
  SparseMatrix lb = scale_laplacian(lap, estimate_lambda_max(lap).value);
  RandomStream rng(derive_seed(14, "cheb-linear"));

  ChebLayer layer;
  layer.order = 3;
  layer.f_in = 2;
  layer.f_out = 3;
  for (int k = 0; k < 3; ++k) layer.theta.push_back(randn(rng, 2, 3));
  Eigen::MatrixXd s1 = randn(rng, 4, 2), s2 = randn(rng, 4, 2);
  const double a = 0.7, b = -1.3;

  ad::Tape tape;
  ChebLayerValues vals = cheb_layer_values(tape, layer, false);
  auto fwd = [&](const Eigen::MatrixXd& s) {
    return cheb_forward(layer, lb, vals, ad::constant(tape, s)).data();
  };
  CHECK((fwd(a * s1 + b * s2) - (a * fwd(s1) + b * fwd(s2))).norm() < 1e-12);
}

TEST_CASE("cheb_forward gradients pass the finite-difference check") {
  SparseMatrix lap = normalized_laplacian(complete_graph(4));
  SparseMatrix lb = scale_laplacian(lap, estimate_lambda_max(lap).value);
  RandomStream rng(derive_seed(15, "cheb-grad"));

  const int order = 3, f_in = 2, f_out = 2;
  Eigen::MatrixXd signal = randn(rng, 4, f_in);
  std::vector<Eigen::MatrixXd> point;
  for (int k = 0; k < order; ++k) point.push_back(randn(rng, f_in, f_out));
  point.push_back(randn(rng, 1, f_out));  // bias
  point.push_back(signal);

  auto run = [&](const std::vector<Eigen::MatrixXd>& p, std::vector<Eigen::MatrixXd>* grads) {
    ad::Tape tape;
    ChebLayer layer;
    layer.order = order;
    layer.f_in = f_in;
    layer.f_out = f_out;
    ChebLayerValues vals;
    std::vector<ad::Value> leaves;
    for (int k = 0; k < order; ++k) {
      leaves.push_back(ad::parameter(tape, p[static_cast<std::size_t>(k)]));
      vals.theta.push_back(leaves.back());
      layer.theta.push_back(p[static_cast<std::size_t>(k)]);
    }
    leaves.push_back(ad::parameter(tape, p[order]));
    vals.bias = leaves.back();
    layer.bias = p[order];
    leaves.push_back(ad::parameter(tape, p[order + 1]));
    ad::Value root = ad::sum(ad::square(cheb_forward(layer, lb, vals, leaves.back())));
    const double out = root.data()(0, 0);
    if (grads) {
      tape.backward(root);
      grads->clear();
      for (auto& v : leaves) grads->push_back(v.grad());
    }
    return out;
  };

  std::vector<Eigen::MatrixXd> analytic;
  run(point, &analytic);
  auto f = [&](const std::vector<Eigen::MatrixXd>& p) { return run(p, nullptr); };
  CHECK(ad::check_gradient(f, point, analytic, 1e-5).max_rel_error < 1e-4);
}
