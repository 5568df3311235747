#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "meshvae/model.hpp"
#include "meshvae/pooling.hpp"
#include "meshvae/procrustes.hpp"
#include "meshvae/rng.hpp"
#include "meshvae/synthetic.hpp"
#include "meshvae/train.hpp"

using namespace meshvae;

namespace {

Mesh small_tube() {
  SyntheticSpec spec;
  spec.n_theta = 5;
  spec.n_len = 8;
  spec.length = 4.0;
  return generate_tube(spec, detail::TubeShape{0.5, 0.9, 0.5, 0.7, 0.2});
}

ModelConfig small_config() {
  ModelConfig c;
  c.latent_dim = 4;
  c.cheb_order = 3;
  c.channels = {3, 4, 4, 4, 6};
  c.hidden_dense_width = 8;
  return c;
}

Model small_model(std::uint64_t seed = 7) {
  Mesh tube = small_tube();
  return build_model(small_config(), build_hierarchy(tube, 4, 4.0), seed);
}

std::vector<Mesh> tube_corpus(int count, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_theta = 5;
  spec.n_len = 8;
  spec.length = 4.0;
  spec.corpus_size = count;
  spec.seed = seed;
  return generate_corpus(spec);
}

bool params_equal(const Model& a, const Model& b) {
  std::vector<Eigen::MatrixXd> ta, tb;
  a.params.visit([&](const std::string&, const Eigen::MatrixXd& t) { ta.push_back(t); });
  b.params.visit([&](const std::string&, const Eigen::MatrixXd& t) { tb.push_back(t); });
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (ta[i].rows() != tb[i].rows() || ta[i].cols() != tb[i].cols() || ta[i] != tb[i])
      return false;
  return true;
}

}  // namespace

TEST_CASE("model initialization is deterministic in the seed") {
  Model a = small_model(42);
  Model b = small_model(42);
  Model c = small_model(43);
  CHECK(params_equal(a, b));
  CHECK_FALSE(params_equal(a, c));
}

TEST_CASE("model shapes follow the configuration") {
  SyntheticSpec spec;  // 16 x 40 grid: 642 vertices at the finest level
  Mesh tube = generate_tube(spec, detail::TubeShape{0.6, 1.2, 0.5, 0.7, 0.3});
  REQUIRE(tube.num_vertices() == 642);

  ModelConfig config;  // defaults: d = 8, channels 3,32,32,32,64
  Model m = build_model(config, build_hierarchy(tube, 4, 4.0), 0);

  CHECK(m.params.head_mu.w.cols() == 8);
  CHECK(m.params.head_logvar.w.cols() == 8);
  CHECK(m.params.enc_cheb.size() == 4);
  CHECK(m.params.dec_cheb.size() == 4);
  CHECK(m.params.enc_cheb[0].f_in == 3);
  CHECK(m.params.enc_cheb[3].f_out == 64);
  CHECK(m.params.dec_cheb[0].f_in == 64);
  CHECK(m.params.dec_cheb[3].f_out == 3);
  CHECK(m.params.enc_hidden.w.rows() == m.coarsest_vertices() * 64);
  CHECK(m.params.out_proj.w.rows() == 3);
  CHECK(m.params.out_proj.w.cols() == 3);

  // Parameter shapes are a pure function of config + hierarchy, not seed.
  Model other = build_model(config, build_hierarchy(tube, 4, 4.0), 99);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> sa, sb;
  m.params.visit([&](const std::string&, const Eigen::MatrixXd& t) {
    sa.emplace_back(t.rows(), t.cols());
  });
  other.params.visit([&](const std::string&, const Eigen::MatrixXd& t) {
    sb.emplace_back(t.rows(), t.cols());
  });
  CHECK(sa == sb);

  bool all_finite = true;
  m.params.visit([&](const std::string&, const Eigen::MatrixXd& t) {
    all_finite = all_finite && t.allFinite();
  });
  CHECK(all_finite);
}

TEST_CASE("model construction rejects inconsistent configurations") {
  Mesh tube = small_tube();
  PoolingHierarchy h = build_hierarchy(tube, 4, 4.0);

  ModelConfig bad_start = small_config();
  bad_start.channels = {4, 4, 4, 4, 6};
  CHECK_THROWS_AS(build_model(bad_start, h, 0), std::invalid_argument);

  ModelConfig short_chain = small_config();
  short_chain.channels = {3, 8};  // one conv stage against a 4-level hierarchy
  CHECK_THROWS_WITH(build_model(short_chain, h, 0),
                    Catch::Matchers::ContainsSubstring("levels"));
}

TEST_CASE("chebyshev bias tensors follow the config flag") {
  Mesh tube = small_tube();
  ModelConfig with_bias = small_config();
  ModelConfig no_bias = small_config();
  no_bias.cheb_bias = false;

  auto bias_count = [&](const Model& m) {
    int n = 0;
    m.params.visit([&](const std::string& name, const Eigen::MatrixXd&) {
      if (name.find("cheb") != std::string::npos && name.find(".bias") != std::string::npos)
        ++n;
    });
    return n;
  };
  CHECK(bias_count(build_model(with_bias, build_hierarchy(tube, 4, 4.0), 0)) == 8);
  CHECK(bias_count(build_model(no_bias, build_hierarchy(tube, 4, 4.0), 0)) == 0);
}

TEST_CASE("encode is a deterministic finite map") {
  Model m = small_model();
  Mesh tube = small_tube();

  EncodeResult a = encode(m, tube.vertices);
  EncodeResult b = encode(m, tube.vertices);
  CHECK(a.mu == b.mu);
  CHECK(a.log_var == b.log_var);
  CHECK(a.mu.size() == 4);
  CHECK(a.mu.allFinite());
  CHECK(a.log_var.allFinite());

  // No input normalization anywhere: the zero mesh encodes to finite values.
  Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(tube.num_vertices(), 3);
  EncodeResult z = encode(m, zeros);
  CHECK(z.mu.allFinite());
  CHECK(z.log_var.allFinite());

  CHECK_THROWS_AS(encode(m, Eigen::MatrixXd::Zero(10, 3)), std::invalid_argument);
}

TEST_CASE("decode is a deterministic finite map") {
  Model m = small_model();

  Eigen::RowVectorXd z0 = Eigen::RowVectorXd::Zero(4);
  Eigen::MatrixXd ref = decode(m, z0);
  CHECK(ref.rows() == m.input_vertices());
  CHECK(ref.cols() == 3);
  CHECK(ref.allFinite());
  CHECK(decode(m, z0) == ref);

  CHECK_THROWS_AS(decode(m, Eigen::RowVectorXd::Zero(5)), std::invalid_argument);
}

TEST_CASE("deterministic encode-decode round trip is a pure function") {
  Model m = small_model();
  Mesh tube = small_tube();
  EncodeResult enc = encode(m, tube.vertices);
  Eigen::MatrixXd first = decode(m, enc.mu);
  EncodeResult enc2 = encode(m, tube.vertices);
  Eigen::MatrixXd second = decode(m, enc2.mu);
  CHECK(first == second);
}

TEST_CASE("reparameterization follows the latent contract") {
  Eigen::RowVectorXd mu(3), lv(3);
  mu << 0.5, -1.0, 2.0;
  lv << 0.2, -0.3, 0.1;

  RandomStream rng(5);
  LatentCode det = reparameterize(mu, lv, rng, /*deterministic=*/true);
  CHECK(det.z == mu);

  // log-variance of -60 is an effective zero sigma.
  Eigen::RowVectorXd tiny = Eigen::RowVectorXd::Constant(3, -60.0);
  RandomStream rng2(5);
  LatentCode near_mu = reparameterize(mu, tiny, rng2, false);
  CHECK((near_mu.z - mu).cwiseAbs().maxCoeff() <= 1e-12);

  RandomStream ra(9), rb(9);
  LatentCode sa = reparameterize(mu, lv, ra, false);
  LatentCode sb = reparameterize(mu, lv, rb, false);
  CHECK(sa.z == sb.z);
  CHECK(sa.z != mu);

  Eigen::RowVectorXd shorter(2);
  shorter << 0, 0;
  CHECK_THROWS_AS(reparameterize(mu, shorter, ra, true), std::invalid_argument);
}

TEST_CASE("training for zero epochs leaves parameters untouched") {
  std::vector<Mesh> corpus = tube_corpus(4, 21);
  Model m = build_model(small_config(), build_hierarchy(corpus[0], 4, 4.0), 7);
  Model before = m;

  AugmentPolicy policy;  // unused by the 'none' arm
  TrainSettings settings;
  settings.epochs = 0;
  std::vector<EpochRecord> log =
      train(m, corpus, {}, policy, AugmentArm::none, settings, 3);
  CHECK(log.empty());
  CHECK(params_equal(m, before));
}

TEST_CASE("training is deterministic and reduces the objective") {
  std::vector<Mesh> corpus = tube_corpus(8, 22);
  PoolingHierarchy h = build_hierarchy(corpus[0], 4, 4.0);
  AugmentPolicy policy = fit_policy(corpus, corpus[0]);

  TrainSettings settings;
  settings.epochs = 12;
  settings.batch_size = 4;

  auto run = [&]() {
    Model m = build_model(small_config(), h, 7);
    std::vector<EpochRecord> log =
        train(m, corpus, {}, policy, AugmentArm::none, settings, 3);
    return std::make_pair(std::move(m), std::move(log));
  };
  auto [m1, log1] = run();
  auto [m2, log2] = run();

  REQUIRE(log1.size() == 12);
  CHECK(log1.back().train_loss == log2.back().train_loss);
  CHECK(params_equal(m1, m2));
  CHECK(log1.back().train_loss < log1.front().train_loss);
  for (const EpochRecord& rec : log1) {
    CHECK(std::isfinite(rec.train_loss));
    CHECK(rec.val_e <= 100.0);  // can go negative while untrained
    CHECK(std::isfinite(rec.val_e));
    CHECK(rec.val_rcd >= 0.0);
  }
}

TEST_CASE("training aborts with a diagnostic on non-finite loss") {
  std::vector<Mesh> corpus = tube_corpus(2, 23);
  Model m = build_model(small_config(), build_hierarchy(corpus[0], 4, 4.0), 7);
  m.params.enc_hidden.w(0, 0) = std::numeric_limits<double>::quiet_NaN();

  AugmentPolicy policy;
  TrainSettings settings;
  settings.epochs = 1;
  CHECK_THROWS_WITH(train(m, corpus, {}, policy, AugmentArm::none, settings, 3),
                    Catch::Matchers::ContainsSubstring("non-finite"));
}

TEST_CASE("training rejects an empty corpus") {
  Model m = small_model();
  AugmentPolicy policy;
  TrainSettings settings;
  CHECK_THROWS_AS(train(m, {}, {}, policy, AugmentArm::none, settings, 3),
                  std::invalid_argument);
}
