#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "meshvae/analysis.hpp"
#include "meshvae/csv.hpp"
#include "meshvae/mesh.hpp"
#include "meshvae/model.hpp"
#include "meshvae/pooling.hpp"
#include "meshvae/procrustes.hpp"
#include "meshvae/rng.hpp"
#include "meshvae/train.hpp"

namespace meshvae {

/// Seeded shuffle of 0..n-1 dealt round-robin into k folds, each sorted.
/// Fold sizes differ by at most one.
inline std::vector<std::vector<int>> kfold_split(int n, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold_split: k must be >= 2");
  if (n < k)
    throw std::invalid_argument("kfold_split: corpus size " + std::to_string(n) +
                                " is smaller than k = " + std::to_string(k));
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  RandomStream rng(derive_seed(seed, "kfold-shuffle"));
  rng.shuffle(perm);
  std::vector<std::vector<int>> folds(static_cast<std::size_t>(k));
  for (int i = 0; i < n; ++i)
    folds[static_cast<std::size_t>(i % k)].push_back(perm[static_cast<std::size_t>(i)]);
  for (auto& fold : folds) std::sort(fold.begin(), fold.end());
  return folds;
}

struct ExperimentConfig {
  ModelConfig model;
  int folds = 10;
  int epochs = 300;
  AugmentArm arm = AugmentArm::procaug;
  std::vector<int> latent_sweep = {8};
  std::vector<double> beta_sweep = {8.5e-3};
  std::uint64_t seed = 0;
  TrainSettings settings;  // epochs field is overridden by `epochs` above
};

struct FoldMetrics {
  double l2 = 0.0;        // RMS per-vertex reconstruction error
  double rcd = 0.0;       // sqrt of symmetric squared chamfer
  double e_percent = 0.0;
  double det_r_100 = 0.0;
};

struct FoldRow {
  int fold = 0;
  FoldMetrics metrics;
  bool det_degenerate = false;  // a latent dimension had zero variance
};

struct CellReport {
  int latent_dim = 0;
  double beta = 0.0;
  AugmentArm arm = AugmentArm::procaug;
  std::vector<FoldRow> folds;
  FoldMetrics mean;
  FoldMetrics stddev;  // population standard deviation over folds
  int degenerate_det_folds = 0;
};

struct ExperimentReport {
  std::vector<CellReport> cells;
};

/// RMS per-vertex Euclidean error; same length units as the coordinates.
inline double metric_l2_rms(const Eigen::MatrixXd& m, const Eigen::MatrixXd& m_star) {
  if (m.rows() != m_star.rows() || m.cols() != m_star.cols())
    throw std::invalid_argument("metric_l2_rms: shape mismatch");
  return (m - m_star).norm() / std::sqrt(static_cast<double>(m.rows()));
}

/// Vertex-mean template of a shared-topology corpus; used as the pooling
/// reference geometry.
inline Mesh corpus_template(const std::vector<Mesh>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("corpus_template: empty corpus");
  validate_shared_topology(corpus);
  Mesh tmpl = corpus.front();
  for (std::size_t i = 1; i < corpus.size(); ++i) tmpl.vertices += corpus[i].vertices;
  tmpl.vertices /= static_cast<double>(corpus.size());
  return tmpl;
}

/// Alignment reference: the member with median Frobenius norm (lower
/// median for even counts), robust to the corpus scale spread.
inline const Mesh& median_norm_member(const std::vector<Mesh>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("median_norm_member: empty corpus");
  std::vector<std::pair<double, std::size_t>> norms;
  norms.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i)
    norms.emplace_back(corpus[i].vertices.norm(), i);
  std::sort(norms.begin(), norms.end());
  return corpus[norms[(norms.size() - 1) / 2].second];
}

namespace detail {

inline FoldMetrics fold_mean(const std::vector<FoldRow>& rows) {
  FoldMetrics m;
  for (const FoldRow& r : rows) {
    m.l2 += r.metrics.l2;
    m.rcd += r.metrics.rcd;
    m.e_percent += r.metrics.e_percent;
    m.det_r_100 += r.metrics.det_r_100;
  }
  const double k = static_cast<double>(rows.size());
  m.l2 /= k;
  m.rcd /= k;
  m.e_percent /= k;
  m.det_r_100 /= k;
  return m;
}

inline FoldMetrics fold_stddev(const std::vector<FoldRow>& rows, const FoldMetrics& mean) {
  FoldMetrics s;
  for (const FoldRow& r : rows) {
    auto sq = [](double x) { return x * x; };
    s.l2 += sq(r.metrics.l2 - mean.l2);
    s.rcd += sq(r.metrics.rcd - mean.rcd);
    s.e_percent += sq(r.metrics.e_percent - mean.e_percent);
    s.det_r_100 += sq(r.metrics.det_r_100 - mean.det_r_100);
  }
  const double k = static_cast<double>(rows.size());
  s.l2 = std::sqrt(s.l2 / k);
  s.rcd = std::sqrt(s.rcd / k);
  s.e_percent = std::sqrt(s.e_percent / k);
  s.det_r_100 = std::sqrt(s.det_r_100 / k);
  return s;
}

}  // namespace detail

/// Trains one model per (latent, beta, fold) cell and reports held-out
/// reconstruction metrics plus the latent decorrelation determinant
/// measured on the full corpus. Any fold failure aborts the experiment
/// with the fold id in the message.
inline ExperimentReport run_experiment(const ExperimentConfig& config,
                                       const std::vector<Mesh>& corpus) {
  if (config.latent_sweep.empty() || config.beta_sweep.empty())
    throw std::invalid_argument("run_experiment: sweep lists must be non-empty");
  const int n = static_cast<int>(corpus.size());
  const auto folds = kfold_split(n, config.folds, config.seed);

  const Mesh tmpl = corpus_template(corpus);
  const int stages = static_cast<int>(config.model.channels.size()) - 1;
  const PoolingHierarchy hierarchy =
      build_hierarchy(tmpl, stages, config.model.pooling_factor);

  TrainSettings settings = config.settings;
  settings.epochs = config.epochs;

  ExperimentReport report;
  std::uint64_t cell_index = 0;
  for (int latent : config.latent_sweep) {
    for (double beta : config.beta_sweep) {
      ModelConfig mc = config.model;
      mc.latent_dim = latent;
      mc.beta = beta;

      CellReport cell;
      cell.latent_dim = latent;
      cell.beta = beta;
      cell.arm = config.arm;

      const std::uint64_t cell_seed = derive_seed(config.seed, "cell", cell_index);
      for (std::size_t f = 0; f < folds.size(); ++f) {
        try {
          std::vector<Mesh> train_set, val_set;
          std::vector<bool> held(static_cast<std::size_t>(n), false);
          for (int idx : folds[f]) held[static_cast<std::size_t>(idx)] = true;
          for (int i = 0; i < n; ++i)
            (held[static_cast<std::size_t>(i)] ? val_set : train_set)
                .push_back(corpus[static_cast<std::size_t>(i)]);

          AugmentPolicy policy;
          if (config.arm != AugmentArm::none)
            policy = fit_policy(train_set, median_norm_member(train_set));

          const std::uint64_t fold_seed = derive_seed(cell_seed, "fold", f);
          Model model = build_model(mc, hierarchy, derive_seed(fold_seed, "init"));
          train(model, train_set, val_set, policy, config.arm, settings,
                derive_seed(fold_seed, "train"));

          FoldRow row;
          row.fold = static_cast<int>(f);
          for (const Mesh& m : val_set) {
            EncodeResult enc = encode(model, m.vertices);
            Eigen::MatrixXd recon = decode(model, enc.mu);
            row.metrics.l2 += metric_l2_rms(recon, m.vertices);
            row.metrics.rcd += metric_rcd(recon, m.vertices);
            row.metrics.e_percent += metric_E(recon, m.vertices);
          }
          const double vn = static_cast<double>(val_set.size());
          row.metrics.l2 /= vn;
          row.metrics.rcd /= vn;
          row.metrics.e_percent /= vn;
          try {
            row.metrics.det_r_100 = correlation_det(latent_matrix(model, corpus)).det_times_100;
          } catch (const std::runtime_error&) {
            row.metrics.det_r_100 = 0.0;
            row.det_degenerate = true;
            ++cell.degenerate_det_folds;
          }
          cell.folds.push_back(row);
        } catch (const std::exception& e) {
          throw std::runtime_error("run_experiment: fold " + std::to_string(f) +
                                   " failed: " + e.what());
        }
      }
      cell.mean = detail::fold_mean(cell.folds);
      cell.stddev = detail::fold_stddev(cell.folds, cell.mean);
      report.cells.push_back(std::move(cell));
      ++cell_index;
    }
  }
  return report;
}

/// Same folds and metrics as run_experiment, but each fold fits a linear
/// eigenbasis of the flattened training vertices instead of training a
/// network. The decorrelation determinant uses the full-corpus basis
/// coefficients.
inline ExperimentReport run_pca_baseline(const ExperimentConfig& config,
                                         const std::vector<Mesh>& corpus) {
  if (config.latent_sweep.empty())
    throw std::invalid_argument("run_pca_baseline: latent sweep must be non-empty");
  validate_shared_topology(corpus);
  const int n = static_cast<int>(corpus.size());
  const auto folds = kfold_split(n, config.folds, config.seed);

  Eigen::MatrixXd flat(n, corpus.front().num_vertices() * 3);
  for (int i = 0; i < n; ++i)
    flat.row(i) = flatten_vertices(corpus[static_cast<std::size_t>(i)].vertices).transpose();

  ExperimentReport report;
  for (int latent : config.latent_sweep) {
    CellReport cell;
    cell.latent_dim = latent;
    cell.beta = 0.0;
    cell.arm = AugmentArm::none;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      try {
        std::vector<bool> held(static_cast<std::size_t>(n), false);
        for (int idx : folds[f]) held[static_cast<std::size_t>(idx)] = true;
        Eigen::MatrixXd train_flat(n - static_cast<int>(folds[f].size()), flat.cols());
        int ti = 0;
        for (int i = 0; i < n; ++i)
          if (!held[static_cast<std::size_t>(i)]) train_flat.row(ti++) = flat.row(i);

        PcaModel pca = pca_fit(train_flat, latent);
        FoldRow row;
        row.fold = static_cast<int>(f);
        for (int idx : folds[f]) {
          const Eigen::MatrixXd& verts = corpus[static_cast<std::size_t>(idx)].vertices;
          Eigen::MatrixXd recon = unflatten_vertices(pca_reconstruct(pca, flat.row(idx).transpose()));
          row.metrics.l2 += metric_l2_rms(recon, verts);
          row.metrics.rcd += metric_rcd(recon, verts);
          row.metrics.e_percent += metric_E(recon, verts);
        }
        const double vn = static_cast<double>(folds[f].size());
        row.metrics.l2 /= vn;
        row.metrics.rcd /= vn;
        row.metrics.e_percent /= vn;
        try {
          Eigen::MatrixXd coeffs(n, latent);
          for (int i = 0; i < n; ++i)
            coeffs.row(i) =
                (pca.components * (flat.row(i).transpose() - pca.mean)).transpose();
          row.metrics.det_r_100 = correlation_det(coeffs).det_times_100;
        } catch (const std::runtime_error&) {
          row.metrics.det_r_100 = 0.0;
          row.det_degenerate = true;
          ++cell.degenerate_det_folds;
        }
        cell.folds.push_back(row);
      } catch (const std::exception& e) {
        throw std::runtime_error("run_pca_baseline: fold " + std::to_string(f) +
                                 " failed: " + e.what());
      }
    }
    cell.mean = detail::fold_mean(cell.folds);
    cell.stddev = detail::fold_stddev(cell.folds, cell.mean);
    report.cells.push_back(std::move(cell));
  }
  return report;
}

/// Fold rows followed by mean and std rows; the aggregate rows are exact
/// arithmetic functions of the fold rows above them.
inline CsvTable cell_csv(const CellReport& cell) {
  CsvTable t;
  t.header = {"fold", "l2", "rcd", "e_percent", "det_r_100", "det_degenerate"};
  auto metric_cells = [](const FoldMetrics& m) {
    return std::vector<std::string>{csv_double(m.l2), csv_double(m.rcd),
                                    csv_double(m.e_percent), csv_double(m.det_r_100)};
  };
  for (const FoldRow& row : cell.folds) {
    std::vector<std::string> cells = {std::to_string(row.fold)};
    for (std::string& c : metric_cells(row.metrics)) cells.push_back(std::move(c));
    cells.push_back(row.det_degenerate ? "1" : "0");
    t.add_row(std::move(cells));
  }
  for (const char* label : {"mean", "std"}) {
    const FoldMetrics& m = (std::string(label) == "mean") ? cell.mean : cell.stddev;
    std::vector<std::string> cells = {label};
    for (std::string& c : metric_cells(m)) cells.push_back(std::move(c));
    cells.push_back(std::to_string(cell.degenerate_det_folds));
    t.add_row(std::move(cells));
  }
  return t;
}

inline std::string cell_csv_name(const CellReport& cell) {
  char beta_buf[32];
  std::snprintf(beta_buf, sizeof beta_buf, "%g", cell.beta);
  return "metrics_latent" + std::to_string(cell.latent_dim) + "_beta" + beta_buf + "_" +
         to_string(cell.arm) + ".csv";
}

struct SampleSet {
  std::vector<Mesh> meshes;
  std::vector<Eigen::VectorXd> rcd_maps;  // per-vertex nearest distances to the input
  std::vector<double> rcd;                // scalar RCD against the input
};

/// Decodes n draws of z = mu + S * zeta with zeta ~ N(0, I) around the
/// deterministic encoding of the input mesh.
inline SampleSet extrapolate(const Model& model, const Mesh& mesh, double noise_scale, int count,
                             RandomStream& rng) {
  if (noise_scale < 0.0) throw std::invalid_argument("extrapolate: noise scale must be >= 0");
  if (count < 1) throw std::invalid_argument("extrapolate: count must be >= 1");
  const EncodeResult enc = encode(model, mesh.vertices);
  const Eigen::MatrixXi& faces = model.hierarchy.meshes.front().faces;
  SampleSet out;
  for (int i = 0; i < count; ++i) {
    Eigen::RowVectorXd zeta(model.config.latent_dim);
    for (Eigen::Index j = 0; j < zeta.size(); ++j) zeta(j) = rng.normal();
    const Eigen::RowVectorXd z = (noise_scale == 0.0) ? enc.mu : (enc.mu + noise_scale * zeta);
    Mesh sample;
    sample.vertices = decode(model, z);
    sample.faces = faces;
    out.rcd_maps.push_back(per_vertex_rcd(sample.vertices, mesh.vertices));
    out.rcd.push_back(metric_rcd(sample.vertices, mesh.vertices));
    out.meshes.push_back(std::move(sample));
  }
  return out;
}

/// Decodes mu_a + (i/n)(mu_b - mu_a) for i = 0..n; the endpoints bypass
/// the arithmetic and decode the exact encodings.
inline std::vector<Mesh> interpolate(const Model& model, const Mesh& mesh_a, const Mesh& mesh_b,
                                     int steps) {
  if (steps < 1) throw std::invalid_argument("interpolate: steps must be >= 1");
  const Eigen::RowVectorXd mu_a = encode(model, mesh_a.vertices).mu;
  const Eigen::RowVectorXd mu_b = encode(model, mesh_b.vertices).mu;
  const Eigen::MatrixXi& faces = model.hierarchy.meshes.front().faces;
  std::vector<Mesh> out;
  for (int i = 0; i <= steps; ++i) {
    Eigen::RowVectorXd z;
    if (i == 0) z = mu_a;
    else if (i == steps) z = mu_b;
    else z = mu_a + (static_cast<double>(i) / steps) * (mu_b - mu_a);
    Mesh m;
    m.vertices = decode(model, z);
    m.faces = faces;
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace meshvae
