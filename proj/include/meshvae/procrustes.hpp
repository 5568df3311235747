#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshvae/mesh.hpp"
#include "meshvae/rng.hpp"

namespace meshvae {

/// Singular value decomposition of a 3x3 matrix, a = u * diag(sigma) * v^T,
/// by one-sided Jacobi column orthogonalization. Singular values descend.
struct Svd3 {
  Eigen::Matrix3d u;
  Eigen::Vector3d sigma;
  Eigen::Matrix3d v;
};

inline Svd3 svd3_jacobi(const Eigen::Matrix3d& a) {
  Eigen::Matrix3d b = a;
  Eigen::Matrix3d v = Eigen::Matrix3d::Identity();
  for (int sweep = 0; sweep < 60; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        const double alpha = b.col(p).squaredNorm();
        const double beta = b.col(q).squaredNorm();
        const double gamma = b.col(p).dot(b.col(q));
        off = std::max(off, std::abs(gamma));
        if (gamma == 0.0 || std::abs(gamma) <= 1e-30 * std::sqrt(alpha * beta)) continue;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        const Eigen::Vector3d bp = b.col(p), bq = b.col(q);
        b.col(p) = c * bp - s * bq;
        b.col(q) = s * bp + c * bq;
        const Eigen::Vector3d vp = v.col(p), vq = v.col(q);
        v.col(p) = c * vp - s * vq;
        v.col(q) = s * vp + c * vq;
      }
    }
    if (off <= 1e-15 * std::max(1.0, a.norm() * a.norm())) break;
  }
  Svd3 res;
  res.v = v;
  for (int i = 0; i < 3; ++i) res.sigma(i) = b.col(i).norm();
  // Descending order, permuting u and v columns together.
  int order[3] = {0, 1, 2};
  for (int i = 0; i < 2; ++i)
    for (int j = i + 1; j < 3; ++j)
      if (res.sigma(order[j]) > res.sigma(order[i])) std::swap(order[i], order[j]);
  Eigen::Matrix3d bs;
  Eigen::Matrix3d vs;
  Eigen::Vector3d ss;
  for (int i = 0; i < 3; ++i) {
    bs.col(i) = b.col(order[i]);
    vs.col(i) = v.col(order[i]);
    ss(i) = res.sigma(order[i]);
  }
  res.sigma = ss;
  res.v = vs;
  // Left vectors: normalized columns, completing the basis on rank deficiency.
  const double tol = 1e-14 * std::max(1.0, ss(0));
  for (int i = 0; i < 3; ++i) {
    if (ss(i) > tol) {
      res.u.col(i) = bs.col(i) / ss(i);
    } else {
      res.sigma(i) = 0.0;
      Eigen::Vector3d cand = Eigen::Vector3d::Zero();
      if (i == 0) {
        cand = Eigen::Vector3d::UnitX();
      } else if (i == 1) {
        // Any unit vector orthogonal to u0.
        Eigen::Vector3d u0 = res.u.col(0);
        Eigen::Vector3d axis = std::abs(u0(0)) < 0.9 ? Eigen::Vector3d::UnitX()
                                                     : Eigen::Vector3d::UnitY();
        cand = u0.cross(axis).normalized();
      } else {
        cand = res.u.col(0).cross(res.u.col(1)).normalized();
      }
      res.u.col(i) = cand;
    }
  }
  return res;
}

struct ProcrustesResult {
  Eigen::Matrix3d rotation;  // Omega*, orthogonal (reflection permitted)
  double residual = 0.0;     // Frobenius distance after alignment
  double scale_in = 0.0;     // Frobenius norm of the input M
};

/// Unit Frobenius normalization; returns the matrix and its original norm.
inline std::pair<Eigen::MatrixXd, double> frobenius_normalize(const Eigen::MatrixXd& m) {
  const double norm = m.norm();
  if (norm == 0.0) throw std::invalid_argument("frobenius_normalize: zero matrix");
  return {m / norm, norm};
}

/// Orthogonal Procrustes: Omega* = U V^T from the SVD of M^T M_ref,
/// minimizing ||M Omega - M_ref||_F over orthogonal Omega. With
/// proper_rotation the smallest singular direction is sign-flipped when
/// needed to force det +1.
inline ProcrustesResult procrustes_rotation(const Eigen::MatrixXd& m,
                                            const Eigen::MatrixXd& m_ref,
                                            bool proper_rotation = false) {
  if (m.rows() != m_ref.rows() || m.cols() != 3 || m_ref.cols() != 3)
    throw std::invalid_argument("procrustes_rotation: shape mismatch");
  Svd3 svd = svd3_jacobi(m.transpose() * m_ref);
  Eigen::Matrix3d omega = svd.u * svd.v.transpose();
  if (proper_rotation && omega.determinant() < 0.0) {
    Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
    flip(2, 2) = -1.0;
    omega = svd.u * flip * svd.v.transpose();
  }
  ProcrustesResult res;
  res.rotation = omega;
  res.residual = (m * omega - m_ref).norm();
  res.scale_in = m.norm();
  return res;
}

struct EulerZyx {
  double psi = 0.0;    // about x
  double xi = 0.0;     // about y
  double gamma = 0.0;  // about z
};

/// Omega = Omega_z(gamma) Omega_y(xi) Omega_x(psi).
inline Eigen::Matrix3d euler_zyx_to_rotation(double psi, double xi, double gamma) {
  const double cx = std::cos(psi), sx = std::sin(psi);
  const double cy = std::cos(xi), sy = std::sin(xi);
  const double cz = std::cos(gamma), sz = std::sin(gamma);
  Eigen::Matrix3d rx, ry, rz;
  rx << 1, 0, 0, 0, cx, -sx, 0, sx, cx;
  ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
  rz << cz, -sz, 0, sz, cz, 0, 0, 0, 1;
  return rz * ry * rx;
}

class GimbalLockError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void require_proper_rotation(const Eigen::Matrix3d& omega) {
  if ((omega.transpose() * omega - Eigen::Matrix3d::Identity()).norm() > 1e-8 ||
      omega.determinant() < 0.0)
    throw std::invalid_argument("rotation_to_euler_zyx: matrix is not a proper rotation");
}
}  // namespace detail

/// Inverse of euler_zyx_to_rotation on the principal ranges
/// psi, gamma in (-pi, pi], xi in (-pi/2, pi/2). Throws GimbalLockError
/// when |Omega(2,0)| >= 1 - 1e-9.
inline EulerZyx rotation_to_euler_zyx(const Eigen::Matrix3d& omega) {
  detail::require_proper_rotation(omega);
  if (std::abs(omega(2, 0)) >= 1.0 - 1e-9)
    throw GimbalLockError("rotation_to_euler_zyx: gimbal lock (|sin xi| ~ 1)");
  EulerZyx e;
  e.xi = std::asin(-omega(2, 0));
  e.gamma = std::atan2(omega(1, 0), omega(0, 0));
  e.psi = std::atan2(omega(2, 1), omega(2, 2));
  return e;
}

struct EulerExtraction {
  EulerZyx angles;
  bool gimbal_locked = false;
};

/// Extraction with the gimbal fallback: psi fixed to 0 and the remaining
/// rotation absorbed into gamma; the sample is flagged.
inline EulerExtraction rotation_to_euler_zyx_safe(const Eigen::Matrix3d& omega) {
  detail::require_proper_rotation(omega);
  EulerExtraction res;
  if (std::abs(omega(2, 0)) >= 1.0 - 1e-9) {
    res.gimbal_locked = true;
    res.angles.psi = 0.0;
    res.angles.xi = omega(2, 0) <= 0.0 ? std::asin(1.0) : std::asin(-1.0);
    res.angles.gamma = std::atan2(-omega(0, 1), omega(1, 1));
    return res;
  }
  res.angles = rotation_to_euler_zyx(omega);
  return res;
}

struct AugmentPolicy {
  double psi_min = 0.0, psi_max = 0.0;
  double xi_min = 0.0, xi_max = 0.0;
  double gamma_min = 0.0, gamma_max = 0.0;
  double s_min = 1.0, s_max = 1.0;  // Frobenius norms
  static constexpr int num_transforms = 3;
  int num_gimbal_flagged = 0;
  int num_reflections_excluded = 0;
};

/// Angle ranges from corpus-vs-reference Procrustes rotations plus the
/// corpus Frobenius-norm range. Gimbal-locked members contribute gamma and
/// xi only; reflection alignments are excluded from angle ranges entirely.
inline AugmentPolicy fit_policy(const std::vector<Mesh>& corpus, const Mesh& reference) {
  if (corpus.empty()) throw std::invalid_argument("fit_policy: empty corpus");
  auto [ref_unit, ref_norm] = frobenius_normalize(reference.vertices);
  AugmentPolicy policy;
  bool first_scale = true, first_psi = true, first_gx = true;
  for (const Mesh& m : corpus) {
    auto [m_unit, m_norm] = frobenius_normalize(m.vertices);
    if (first_scale) {
      policy.s_min = policy.s_max = m_norm;
      first_scale = false;
    } else {
      policy.s_min = std::min(policy.s_min, m_norm);
      policy.s_max = std::max(policy.s_max, m_norm);
    }
    ProcrustesResult pr = procrustes_rotation(m_unit, ref_unit);
    if (pr.rotation.determinant() < 0.0) {
      ++policy.num_reflections_excluded;
      continue;
    }
    // With members M = ref * R^T (row-vector convention), the aligning
    // rotation Omega* equals R itself, so angles come straight from it.
    EulerExtraction ex = rotation_to_euler_zyx_safe(pr.rotation);
    if (ex.gimbal_locked) ++policy.num_gimbal_flagged;
    if (first_gx) {
      policy.xi_min = policy.xi_max = ex.angles.xi;
      policy.gamma_min = policy.gamma_max = ex.angles.gamma;
      first_gx = false;
    } else {
      policy.xi_min = std::min(policy.xi_min, ex.angles.xi);
      policy.xi_max = std::max(policy.xi_max, ex.angles.xi);
      policy.gamma_min = std::min(policy.gamma_min, ex.angles.gamma);
      policy.gamma_max = std::max(policy.gamma_max, ex.angles.gamma);
    }
    if (!ex.gimbal_locked) {
      if (first_psi) {
        policy.psi_min = policy.psi_max = ex.angles.psi;
        first_psi = false;
      } else {
        policy.psi_min = std::min(policy.psi_min, ex.angles.psi);
        policy.psi_max = std::max(policy.psi_max, ex.angles.psi);
      }
    }
  }
  if (first_gx) throw std::runtime_error("fit_policy: every member excluded as a reflection");
  if (first_psi)
    throw std::runtime_error("fit_policy: every member gimbal-locked; psi range is empty");
  return policy;
}

enum class AugmentBranch { identity = 0, scaling = 1, rotation = 2 };

/// One augmentation with the branch forced (rng only feeds the branch's
/// own parameter draws).
inline Mesh augment_with_branch(const Mesh& mesh, const AugmentPolicy& policy,
                                AugmentBranch branch, RandomStream& rng) {
  Mesh out = mesh;
  switch (branch) {
    case AugmentBranch::identity:
      break;
    case AugmentBranch::scaling: {
      const double s_rand = rng.uniform(policy.s_min, policy.s_max);
      const double norm = mesh.vertices.norm();
      if (norm == 0.0) throw std::invalid_argument("augment: zero-norm mesh");
      out.vertices = mesh.vertices * (s_rand / norm);
      break;
    }
    case AugmentBranch::rotation: {
      const double psi = rng.uniform(policy.psi_min, policy.psi_max);
      const double xi = rng.uniform(policy.xi_min, policy.xi_max);
      const double gamma = rng.uniform(policy.gamma_min, policy.gamma_max);
      Eigen::Matrix3d omega = euler_zyx_to_rotation(psi, xi, gamma);
      out.vertices = mesh.vertices * omega.transpose();
      break;
    }
  }
  return out;
}

/// RandAugment-style draw: identity, rescale, or rotation, each picked
/// with probability 1/3.
inline Mesh augment(const Mesh& mesh, const AugmentPolicy& policy, RandomStream& rng) {
  const auto branch = static_cast<AugmentBranch>(rng.index(3));
  return augment_with_branch(mesh, policy, branch, rng);
}

struct AlignmentRow {
  int mesh_id = 0;
  double l2_before = 0.0;
  double l2_after = 0.0;
  double chamfer_before = 0.0;
  double chamfer_after = 0.0;
};

/// Per-mesh L2 and Chamfer error against the reference, before alignment
/// (raw coordinates) and after unit-scale Procrustes alignment.
inline std::vector<AlignmentRow> alignment_report(const std::vector<Mesh>& corpus,
                                                  const Mesh& reference) {
  validate_shared_topology(corpus);
  if (!corpus.empty()) validate_shared_topology({corpus.front(), reference});
  auto [ref_unit, ref_norm] = frobenius_normalize(reference.vertices);
  std::vector<AlignmentRow> rows;
  rows.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Mesh& m = corpus[i];
    AlignmentRow row;
    row.mesh_id = static_cast<int>(i);
    row.l2_before = (m.vertices - reference.vertices).norm();
    row.chamfer_before = chamfer_distance(m.vertices, reference.vertices);
    auto [m_unit, m_norm] = frobenius_normalize(m.vertices);
    ProcrustesResult pr = procrustes_rotation(m_unit, ref_unit);
    Eigen::MatrixXd aligned = m_unit * pr.rotation;
    row.l2_after = (aligned - ref_unit).norm();
    row.chamfer_after = chamfer_distance(aligned, ref_unit);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace meshvae
