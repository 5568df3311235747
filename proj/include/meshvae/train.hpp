#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshvae/analysis.hpp"
#include "meshvae/autodiff.hpp"
#include "meshvae/mesh.hpp"
#include "meshvae/model.hpp"
#include "meshvae/procrustes.hpp"
#include "meshvae/rng.hpp"

namespace meshvae {

struct TrainSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 8;
  int epochs = 300;
};

/// Which augmentation the training loop applies per sample.
enum class AugmentArm { procaug, scale_only, rotation_only, none };

inline std::string to_string(AugmentArm arm) {
  switch (arm) {
    case AugmentArm::procaug: return "procaug";
    case AugmentArm::scale_only: return "scale-only";
    case AugmentArm::rotation_only: return "rotation-only";
    case AugmentArm::none: return "none";
  }
  return "unknown";
}

inline AugmentArm augment_arm_from_string(const std::string& s) {
  if (s == "procaug") return AugmentArm::procaug;
  if (s == "scale-only") return AugmentArm::scale_only;
  if (s == "rotation-only") return AugmentArm::rotation_only;
  if (s == "none") return AugmentArm::none;
  throw std::invalid_argument("unknown augmentation arm: " + s);
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double kl = 0.0;
  double vertex = 0.0;
  double chamfer = 0.0;
  double edge = 0.0;
  double normal = 0.0;
  double val_e = 0.0;
  double val_rcd = 0.0;
};

/// Adaptive-moment optimizer state, one slot per parameter tensor.
struct AdamState {
  std::vector<Eigen::MatrixXd> m;
  std::vector<Eigen::MatrixXd> v;
  long steps = 0;
};

namespace detail {

inline Mesh apply_arm(const Mesh& mesh, const AugmentPolicy& policy, AugmentArm arm,
                      RandomStream& rng) {
  switch (arm) {
    case AugmentArm::procaug: return augment(mesh, policy, rng);
    case AugmentArm::scale_only:
      return augment_with_branch(mesh, policy, AugmentBranch::scaling, rng);
    case AugmentArm::rotation_only:
      return augment_with_branch(mesh, policy, AugmentBranch::rotation, rng);
    case AugmentArm::none: return mesh;
  }
  return mesh;
}

inline void check_finite_terms(const LossBreakdown& lb, int epoch, int step) {
  auto bad = [](const ad::Value& v) { return !std::isfinite(v.data()(0, 0)); };
  const char* term = nullptr;
  if (bad(lb.kl)) term = "kl";
  else if (bad(lb.vertex)) term = "vertex";
  else if (bad(lb.chamfer)) term = "chamfer";
  else if (bad(lb.edge)) term = "edge";
  else if (bad(lb.normal)) term = "normal";
  else if (bad(lb.total)) term = "total";
  if (term)
    throw std::runtime_error("training aborted at epoch " + std::to_string(epoch) + " step " +
                             std::to_string(step) + ": loss term '" + term +
                             "' is non-finite");
}

}  // namespace detail

/// One optimizer pass over the training corpus per epoch, with a fresh
/// graph per batch. The augmented mesh serves as both input and target.
/// Validation metrics use the deterministic round trip; with no
/// validation meshes they fall back to the training corpus.
inline std::vector<EpochRecord> train(Model& model, const std::vector<Mesh>& train_meshes,
                                      const std::vector<Mesh>& val_meshes,
                                      const AugmentPolicy& policy, AugmentArm arm,
                                      const TrainSettings& settings, std::uint64_t seed) {
  if (train_meshes.empty()) throw std::invalid_argument("train: empty training corpus");
  validate_shared_topology(train_meshes);
  const int n = static_cast<int>(train_meshes.size());
  const Mesh& topo = train_meshes.front();

  AdamState adam;
  model.params.visit([&](const std::string&, Eigen::MatrixXd& t) {
    adam.m.emplace_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
    adam.v.emplace_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
  });

  RandomStream shuffle_rng(derive_seed(seed, "epoch-shuffle"));
  std::vector<EpochRecord> records;
  records.reserve(static_cast<std::size_t>(settings.epochs));
  long global_step = 0;

  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    shuffle_rng.shuffle(order);

    EpochRecord rec;
    rec.epoch = epoch;
    double item_count = 0.0;

    for (int start = 0; start < n; start += settings.batch_size) {
      const int batch_n = std::min(settings.batch_size, n - start);
      ad::Tape tape;
      ModelValues values = model_values(tape, model, /*trainable=*/true);
      std::vector<ad::Value> params = collect_values(values);

      ad::Value batch_total{};
      double sum_kl = 0, sum_vertex = 0, sum_chamfer = 0, sum_edge = 0, sum_normal = 0;
      for (int bi = 0; bi < batch_n; ++bi) {
        const int idx = order[static_cast<std::size_t>(start + bi)];
        RandomStream aug_rng(derive_seed(
            seed, "augment", static_cast<std::uint64_t>(epoch) * static_cast<std::uint64_t>(n) +
                                 static_cast<std::uint64_t>(idx)));
        Mesh aug = detail::apply_arm(train_meshes[static_cast<std::size_t>(idx)], policy, arm,
                                     aug_rng);
        Eigen::MatrixXd gt_normals = face_unit_normals(aug);

        ad::Value input = ad::constant(tape, aug.vertices);
        auto [mu, lv] = encode_graph(model, values, input);
        // Sampled latent with the clamped-variance path used in training.
        RandomStream eps_rng(derive_seed(
            seed, "reparam", static_cast<std::uint64_t>(epoch) * static_cast<std::uint64_t>(n) +
                                 static_cast<std::uint64_t>(idx)));
        Eigen::MatrixXd eps(1, model.config.latent_dim);
        for (Eigen::Index j = 0; j < eps.cols(); ++j) eps(0, j) = eps_rng.normal();
        ad::Value sigma = ad::vexp(ad::scale(ad::clamp(lv, -10.0, 10.0), 0.5));
        ad::Value z = ad::add(mu, ad::mul(sigma, ad::constant(tape, eps)));
        ad::Value recon = decode_graph(model, values, z);

        LossBreakdown lb = total_loss(model.config, recon, input, aug.faces, gt_normals, mu, lv);
        detail::check_finite_terms(lb, epoch, static_cast<int>(global_step));
        batch_total = bi == 0 ? lb.total : ad::add(batch_total, lb.total);
        sum_kl += lb.kl.data()(0, 0);
        sum_vertex += lb.vertex.data()(0, 0);
        sum_chamfer += lb.chamfer.data()(0, 0);
        sum_edge += lb.edge.data()(0, 0);
        sum_normal += lb.normal.data()(0, 0);
      }
      ad::Value objective = ad::scale(batch_total, 1.0 / batch_n);
      tape.backward(objective);

      rec.train_loss += batch_total.data()(0, 0);
      rec.kl += sum_kl;
      rec.vertex += sum_vertex;
      rec.chamfer += sum_chamfer;
      rec.edge += sum_edge;
      rec.normal += sum_normal;
      item_count += batch_n;

      ++adam.steps;
      ++global_step;
      const double bc1 = 1.0 - std::pow(settings.beta1, static_cast<double>(adam.steps));
      const double bc2 = 1.0 - std::pow(settings.beta2, static_cast<double>(adam.steps));
      std::size_t slot = 0;
      model.params.visit([&](const std::string&, Eigen::MatrixXd& tensor) {
        const Eigen::MatrixXd& g = params[slot].grad();
        adam.m[slot] = settings.beta1 * adam.m[slot] + (1.0 - settings.beta1) * g;
        adam.v[slot] = settings.beta2 * adam.v[slot] +
                       (1.0 - settings.beta2) * g.cwiseProduct(g);
        const Eigen::MatrixXd m_hat = adam.m[slot] / bc1;
        const Eigen::MatrixXd v_hat = adam.v[slot] / bc2;
        const Eigen::MatrixXd denom =
            v_hat.cwiseSqrt() +
            Eigen::MatrixXd::Constant(v_hat.rows(), v_hat.cols(), settings.epsilon);
        tensor -= settings.learning_rate * m_hat.cwiseQuotient(denom);
        ++slot;
      });
    }

    rec.train_loss /= item_count;
    rec.kl /= item_count;
    rec.vertex /= item_count;
    rec.chamfer /= item_count;
    rec.edge /= item_count;
    rec.normal /= item_count;

    const std::vector<Mesh>& eval_set = val_meshes.empty() ? train_meshes : val_meshes;
    double e_sum = 0.0, rcd_sum = 0.0;
    for (const Mesh& m : eval_set) {
      EncodeResult enc = encode(model, m.vertices);
      Eigen::MatrixXd recon = decode(model, enc.mu);
      e_sum += metric_E(recon, m.vertices);
      rcd_sum += metric_rcd(recon, m.vertices);
    }
    rec.val_e = e_sum / static_cast<double>(eval_set.size());
    rec.val_rcd = rcd_sum / static_cast<double>(eval_set.size());
    records.push_back(rec);
  }
  return records;
}

}  // namespace meshvae
