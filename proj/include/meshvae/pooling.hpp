#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "meshvae/mesh.hpp"
#include "meshvae/sparse.hpp"
#include "meshvae/spectral.hpp"

namespace meshvae {

namespace detail {

/// Closest point of triangle (a, b, c) to p, as barycentric weights.
struct BaryPoint {
  Eigen::RowVector3d point;
  double w0, w1, w2;
};

inline BaryPoint closest_point_on_triangle(const Eigen::RowVector3d& p,
                                           const Eigen::RowVector3d& a,
                                           const Eigen::RowVector3d& b,
                                           const Eigen::RowVector3d& c) {
  const Eigen::RowVector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return {a, 1.0, 0.0, 0.0};
  const Eigen::RowVector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return {b, 0.0, 1.0, 0.0};
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return {a + v * ab, 1.0 - v, v, 0.0};
  }
  const Eigen::RowVector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return {c, 0.0, 0.0, 1.0};
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return {a + w * ac, 1.0 - w, 0.0, w};
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {b + w * (c - b), 0.0, 1.0 - w, w};
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return {a + ab * v + ac * w, 1.0 - v - w, v, w};
}

/// Plane quadric p p^T for the supporting plane of one face, unit-weighted.
inline Eigen::Matrix4d face_quadric(const Eigen::RowVector3d& a, const Eigen::RowVector3d& b,
                                    const Eigen::RowVector3d& c) {
  Eigen::RowVector3d n = (b - a).cross(c - a);
  const double len = n.norm();
  if (len == 0.0) return Eigen::Matrix4d::Zero();
  n /= len;
  Eigen::Vector4d plane(n(0), n(1), n(2), -n.dot(a));
  return plane * plane.transpose();
}

/// Quadric-optimal contraction point with midpoint fallback when the
/// 3x3 system is singular or badly conditioned (condition estimate > 1e12).
inline Eigen::RowVector3d optimal_position(const Eigen::Matrix4d& q,
                                           const Eigen::RowVector3d& va,
                                           const Eigen::RowVector3d& vb) {
  const Eigen::Matrix3d a = q.topLeftCorner<3, 3>();
  const Eigen::Vector3d rhs = -q.topRightCorner<3, 1>();
  const double det = a.determinant();
  if (det != 0.0) {
    Eigen::Matrix3d inv;
    inv << a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1), a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2),
        a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1), a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2),
        a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0), a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2),
        a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0), a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1),
        a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    inv /= det;
    const double cond = a.norm() * inv.norm();
    if (cond <= 1e12) return (inv * rhs).transpose();
  }
  return 0.5 * (va + vb);
}

inline double contraction_cost(const Eigen::Matrix4d& q, const Eigen::RowVector3d& v) {
  Eigen::Vector4d h(v(0), v(1), v(2), 1.0);
  return h.dot(q * h);
}

}  // namespace detail

struct SimplifyResult {
  Mesh coarse;
  SparseMatrix q_down;  // n x N, one 1 per row at the surviving fine index
};

/// Iterative minimum-cost edge contraction down to target_vertex_count.
/// Deterministic: candidates ordered by (cost, min index, max index);
/// contractions that would flip a face normal, break the edge-link
/// condition, or orphan a vertex are skipped for the current step.
inline SimplifyResult qem_simplify(const Mesh& mesh, int target_vertex_count) {
  if (target_vertex_count < 4)
    throw std::invalid_argument("qem_simplify: target must be at least 4 vertices");
  const int n_fine = mesh.num_vertices();
  if (target_vertex_count > n_fine)
    throw std::invalid_argument("qem_simplify: target exceeds mesh size");

  Eigen::MatrixXd pos = mesh.vertices;
  std::vector<Eigen::Vector3i> faces(static_cast<std::size_t>(mesh.num_faces()));
  for (int f = 0; f < mesh.num_faces(); ++f) faces[static_cast<std::size_t>(f)] = mesh.faces.row(f).transpose();
  std::vector<char> face_alive(faces.size(), 1);
  std::vector<char> vert_alive(static_cast<std::size_t>(n_fine), 1);

  std::vector<Eigen::Matrix4d> quadric(static_cast<std::size_t>(n_fine), Eigen::Matrix4d::Zero());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Eigen::Vector3i& fc = faces[f];
    Eigen::Matrix4d k = detail::face_quadric(pos.row(fc(0)), pos.row(fc(1)), pos.row(fc(2)));
    quadric[static_cast<std::size_t>(fc(0))] += k;
    quadric[static_cast<std::size_t>(fc(1))] += k;
    quadric[static_cast<std::size_t>(fc(2))] += k;
  }

  auto face_has = [&](const Eigen::Vector3i& fc, int v) {
    return fc(0) == v || fc(1) == v || fc(2) == v;
  };

  int alive_count = n_fine;
  while (alive_count > target_vertex_count) {
    // Rescan candidate edges from the current face set.
    std::set<std::pair<int, int>> edges;
    for (std::size_t f = 0; f < faces.size(); ++f) {
      if (!face_alive[f]) continue;
      const Eigen::Vector3i& fc = faces[f];
      for (int k = 0; k < 3; ++k) {
        int a = fc(k), b = fc((k + 1) % 3);
        edges.insert({std::min(a, b), std::max(a, b)});
      }
    }

    struct Candidate {
      double cost;
      int a, b;
      Eigen::RowVector3d vbar;
    };
    std::vector<Candidate> cands;
    cands.reserve(edges.size());
    for (const auto& [a, b] : edges) {
      Eigen::Matrix4d q = quadric[static_cast<std::size_t>(a)] + quadric[static_cast<std::size_t>(b)];
      Eigen::RowVector3d vbar = detail::optimal_position(q, pos.row(a), pos.row(b));
      cands.push_back({detail::contraction_cost(q, vbar), a, b, vbar});
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
      if (x.cost != y.cost) return x.cost < y.cost;
      if (x.a != y.a) return x.a < y.a;
      return x.b < y.b;
    });

    bool contracted = false;
    for (const Candidate& cand : cands) {
      const int a = cand.a, b = cand.b;

      // Link condition: common neighbors of a and b must be exactly the
      // opposite vertices of the faces shared by edge (a, b).
      std::set<int> na, nb, opposite;
      int shared_faces = 0;
      for (std::size_t f = 0; f < faces.size(); ++f) {
        if (!face_alive[f]) continue;
        const Eigen::Vector3i& fc = faces[f];
        const bool has_a = face_has(fc, a), has_b = face_has(fc, b);
        for (int k = 0; k < 3; ++k) {
          if (has_a && fc(k) != a) na.insert(fc(k));
          if (has_b && fc(k) != b) nb.insert(fc(k));
        }
        if (has_a && has_b) {
          ++shared_faces;
          for (int k = 0; k < 3; ++k)
            if (fc(k) != a && fc(k) != b) opposite.insert(fc(k));
        }
      }
      std::vector<int> common;
      std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(),
                            std::back_inserter(common));
      std::set<int> common_set(common.begin(), common.end());
      common_set.erase(a);
      common_set.erase(b);
      if (common_set != opposite || static_cast<int>(opposite.size()) != shared_faces) continue;

      // Flip and degeneracy check on every surviving face touching a or b.
      bool ok = true;
      for (std::size_t f = 0; f < faces.size() && ok; ++f) {
        if (!face_alive[f]) continue;
        const Eigen::Vector3i& fc = faces[f];
        const bool has_a = face_has(fc, a), has_b = face_has(fc, b);
        if (has_a && has_b) continue;  // face dies with the contraction
        if (!has_a && !has_b) continue;
        Eigen::RowVector3d p0 = pos.row(fc(0)), p1 = pos.row(fc(1)), p2 = pos.row(fc(2));
        Eigen::RowVector3d old_n = (p1 - p0).cross(p2 - p0);
        Eigen::RowVector3d q0 = (fc(0) == a || fc(0) == b) ? cand.vbar : p0;
        Eigen::RowVector3d q1 = (fc(1) == a || fc(1) == b) ? cand.vbar : p1;
        Eigen::RowVector3d q2 = (fc(2) == a || fc(2) == b) ? cand.vbar : p2;
        Eigen::RowVector3d new_n = (q1 - q0).cross(q2 - q0);
        if (new_n.norm() == 0.0 || old_n.dot(new_n) < 0.0) ok = false;
      }
      if (!ok) continue;

      // No vertex may be left without an incident face.
      {
        std::set<int> at_risk = opposite;
        at_risk.insert(a);
        for (int v : at_risk) {
          bool referenced = false;
          for (std::size_t f = 0; f < faces.size() && !referenced; ++f) {
            if (!face_alive[f]) continue;
            const Eigen::Vector3i& fc = faces[f];
            if (face_has(fc, a) && face_has(fc, b)) continue;  // dies
            int va = fc(0) == b ? a : fc(0);
            int vb = fc(1) == b ? a : fc(1);
            int vc = fc(2) == b ? a : fc(2);
            if (va == v || vb == v || vc == v) referenced = true;
          }
          if (!referenced) {
            ok = false;
            break;
          }
        }
      }
      if (!ok) continue;

      // Commit. The lower index survives and takes the optimal position.
      pos.row(a) = cand.vbar;
      vert_alive[static_cast<std::size_t>(b)] = 0;
      quadric[static_cast<std::size_t>(a)] += quadric[static_cast<std::size_t>(b)];
      for (std::size_t f = 0; f < faces.size(); ++f) {
        if (!face_alive[f]) continue;
        Eigen::Vector3i& fc = faces[f];
        for (int k = 0; k < 3; ++k)
          if (fc(k) == b) fc(k) = a;
        if (fc(0) == fc(1) || fc(1) == fc(2) || fc(0) == fc(2)) face_alive[f] = 0;
      }
      --alive_count;
      contracted = true;
      break;
    }
    if (!contracted)
      throw std::runtime_error(
          "qem_simplify: no valid contraction remains; achieved " +
          std::to_string(alive_count) + " vertices (target " +
          std::to_string(target_vertex_count) + ")");
  }

  // Coarse vertex order is ascending fine index of the survivors.
  std::vector<int> coarse_of_fine(static_cast<std::size_t>(n_fine), -1);
  std::vector<Triplet> qd;
  qd.reserve(static_cast<std::size_t>(alive_count));
  SimplifyResult res{Mesh{}, SparseMatrix{}};
  res.coarse.vertices.resize(alive_count, 3);
  int c = 0;
  for (int v = 0; v < n_fine; ++v) {
    if (!vert_alive[static_cast<std::size_t>(v)]) continue;
    coarse_of_fine[static_cast<std::size_t>(v)] = c;
    res.coarse.vertices.row(c) = pos.row(v);
    qd.push_back({c, v, 1.0});
    ++c;
  }
  int n_faces = 0;
  for (std::size_t f = 0; f < faces.size(); ++f) n_faces += face_alive[f] ? 1 : 0;
  res.coarse.faces.resize(n_faces, 3);
  int fi = 0;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    if (!face_alive[f]) continue;
    for (int k = 0; k < 3; ++k)
      res.coarse.faces(fi, k) = coarse_of_fine[static_cast<std::size_t>(faces[f](k))];
    ++fi;
  }
  res.q_down = SparseMatrix(alive_count, n_fine, std::move(qd));
  validate(res.coarse);
  return res;
}

/// Barycentric upsampling matrix. Retained fine vertices map one-hot to
/// their coarse counterpart; every other fine vertex gets the clamped
/// barycentric weights of its closest point on the nearest coarse triangle
/// (brute force, ties to the lowest triangle index).
inline SparseMatrix build_upsampling(const Mesh& mesh_fine, const Mesh& mesh_coarse,
                                     const SparseMatrix& q_down) {
  if (mesh_coarse.num_faces() == 0)
    throw std::invalid_argument("build_upsampling: coarse mesh has no faces");
  const int n_fine = mesh_fine.num_vertices();
  const int n_coarse = mesh_coarse.num_vertices();
  std::vector<int> coarse_of_fine(static_cast<std::size_t>(n_fine), -1);
  for (const Triplet& t : q_down.entries())
    if (t.value == 1.0) coarse_of_fine[static_cast<std::size_t>(t.col)] = t.row;

  std::vector<Triplet> qu;
  for (int v = 0; v < n_fine; ++v) {
    const int retained = coarse_of_fine[static_cast<std::size_t>(v)];
    if (retained >= 0) {
      qu.push_back({v, retained, 1.0});
      continue;
    }
    const Eigen::RowVector3d p = mesh_fine.vertices.row(v);
    int best_face = -1;
    double best_d = std::numeric_limits<double>::infinity();
    detail::BaryPoint best_bp{};
    for (int f = 0; f < mesh_coarse.num_faces(); ++f) {
      detail::BaryPoint bp = detail::closest_point_on_triangle(
          p, mesh_coarse.vertices.row(mesh_coarse.faces(f, 0)),
          mesh_coarse.vertices.row(mesh_coarse.faces(f, 1)),
          mesh_coarse.vertices.row(mesh_coarse.faces(f, 2)));
      const double d = (p - bp.point).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best_face = f;
        best_bp = bp;
      }
    }
    double w[3] = {best_bp.w0, best_bp.w1, best_bp.w2};
    double sum = 0.0;
    for (double& wi : w) {
      wi = std::clamp(wi, 0.0, 1.0);
      sum += wi;
    }
    for (double& wi : w) wi /= sum;
    for (int k = 0; k < 3; ++k) {
      if (w[k] == 0.0) continue;
      qu.push_back({v, mesh_coarse.faces(best_face, k), w[k]});
    }
  }
  return SparseMatrix(n_fine, n_coarse, std::move(qu));
}

/// One resolution step of the hierarchy.
struct PoolingLevel {
  Mesh mesh_fine;
  Mesh mesh_coarse;
  SparseMatrix q_down;  // n x N
  SparseMatrix q_up;    // N x n
};

struct PoolingHierarchy {
  std::vector<Mesh> meshes;                     // num_levels + 1 resolutions, finest first
  std::vector<PoolingLevel> levels;             // num_levels
  std::vector<SparseMatrix> scaled_laplacians;  // one per resolution
  std::vector<double> lambda_max;               // one per resolution
  std::vector<bool> lambda_converged;           // power-iteration status per resolution
  double factor = 4.0;

  int num_levels() const { return static_cast<int>(levels.size()); }
};

/// Repeated QEM pooling with per-resolution Laplacian caching.
/// Coarse size per level is max(4, floor(n / factor)).
inline PoolingHierarchy build_hierarchy(const Mesh& mesh, int num_levels, double factor = 4.0) {
  if (num_levels < 0) throw std::invalid_argument("build_hierarchy: negative level count");
  if (factor <= 1.0) throw std::invalid_argument("build_hierarchy: factor must exceed 1");
  if (mesh.num_vertices() < 4)
    throw std::invalid_argument("build_hierarchy: mesh needs at least 4 vertices");
  PoolingHierarchy h;
  h.factor = factor;
  h.meshes.push_back(mesh);
  for (int l = 0; l < num_levels; ++l) {
    const Mesh& fine = h.meshes.back();
    const int target =
        std::max(4, static_cast<int>(std::floor(fine.num_vertices() / factor)));
    SimplifyResult sr = target < fine.num_vertices()
                            ? qem_simplify(fine, target)
                            : SimplifyResult{fine, SparseMatrix::identity(fine.num_vertices())};
    SparseMatrix qu = build_upsampling(fine, sr.coarse, sr.q_down);
    h.levels.push_back({fine, sr.coarse, std::move(sr.q_down), std::move(qu)});
    h.meshes.push_back(h.levels.back().mesh_coarse);
  }
  for (const Mesh& m : h.meshes) {
    SparseMatrix lap = normalized_laplacian(build_adjacency(m));
    LambdaMaxResult lm = estimate_lambda_max(lap);
    h.scaled_laplacians.push_back(scale_laplacian(lap, lm.converged ? lm.value : 2.0));
    h.lambda_max.push_back(lm.converged ? lm.value : 2.0);
    h.lambda_converged.push_back(lm.converged);
  }
  return h;
}

inline Eigen::MatrixXd apply_down(const PoolingLevel& level, const Eigen::MatrixXd& signal) {
  return level.q_down.apply(signal);
}

inline Eigen::MatrixXd apply_up(const PoolingLevel& level, const Eigen::MatrixXd& signal) {
  return level.q_up.apply(signal);
}

}  // namespace meshvae
