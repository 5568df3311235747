#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshvae/mesh.hpp"
#include "meshvae/procrustes.hpp"
#include "meshvae/rng.hpp"

namespace meshvae {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Parameters of the synthetic vessel-with-bulge corpus. Every mesh is a
/// capped tube on an identical (n_theta, n_len) grid, so the whole corpus
/// shares one topology. Units are cm.
struct SyntheticSpec {
  int n_theta = 16;
  int n_len = 40;
  double length = 6.0;                 // centerline arc length
  Range neck_radius{0.5, 0.7};
  Range sac_radius{1.0, 1.5};
  Range sac_center{0.35, 0.65};        // t0 along the normalized centerline
  Range sac_width{0.5, 0.9};           // Gaussian width of the bulge
  Range bend_amplitude{0.0, 0.8};      // lateral centerline deflection
  Range rotation_jitter{-0.25, 0.25};  // per-axis Euler angles of a random pose
  Range scale_jitter{0.9, 1.15};       // multiplicative size factor
  int corpus_size = 64;
  std::uint64_t seed = 0;
};

namespace detail {

struct TubeShape {
  double r_neck, r_sac, t0, width, bend;
};

/// Radius profile along arc length s = t * length.
inline double tube_radius(const TubeShape& p, double t, double length) {
  const double s = (t - p.t0) * length;
  return p.r_neck + (p.r_sac - p.r_neck) * std::exp(-s * s / (2.0 * p.width * p.width));
}

}  // namespace detail

/// One capped tube: n_len rings of n_theta vertices swept along a bent
/// centerline with parallel-transport frames, closed by triangle fans.
/// N = n_theta * n_len + 2, F = 2 * n_theta * (n_len - 1) + 2 * n_theta.
inline Mesh generate_tube(const SyntheticSpec& spec, const detail::TubeShape& shape) {
  const int nt = spec.n_theta, nl = spec.n_len;
  if (nt < 3 || nl < 2) throw std::invalid_argument("generate_tube: grid too small");
  if (!(shape.r_sac >= shape.r_neck) || !(shape.r_neck > 0.0))
    throw std::invalid_argument("generate_tube: need sac radius >= neck radius > 0");

  // Self-intersection guard: the maximal radius must clear the bend's
  // tightest curvature, kappa_max = A pi^2 / L^2 for the sine bend below.
  const double kappa_max =
      shape.bend * std::numbers::pi * std::numbers::pi / (spec.length * spec.length);
  double r_max = shape.r_neck;
  for (int i = 0; i < nl; ++i)
    r_max = std::max(r_max, detail::tube_radius(shape, i / double(nl - 1), spec.length));
  if (r_max * kappa_max >= 0.95)
    throw std::runtime_error(
        "generate_tube: parameters self-intersect (radius times curvature = " +
        std::to_string(r_max * kappa_max) + " >= 0.95)");

  // Centerline c(t) = (A sin(pi t), 0, L t) and its unit tangents.
  std::vector<Eigen::RowVector3d> center(static_cast<std::size_t>(nl));
  std::vector<Eigen::RowVector3d> tangent(static_cast<std::size_t>(nl));
  for (int i = 0; i < nl; ++i) {
    const double t = i / double(nl - 1);
    center[static_cast<std::size_t>(i)] =
        Eigen::RowVector3d(shape.bend * std::sin(std::numbers::pi * t), 0.0, spec.length * t);
    tangent[static_cast<std::size_t>(i)] =
        Eigen::RowVector3d(shape.bend * std::numbers::pi * std::cos(std::numbers::pi * t), 0.0,
                           spec.length)
            .normalized();
  }
  // Parallel transport of the ring frame along the centerline (no twist).
  std::vector<Eigen::RowVector3d> normal(static_cast<std::size_t>(nl));
  {
    Eigen::RowVector3d n0(0.0, 1.0, 0.0);
    n0 -= n0.dot(tangent[0]) * tangent[0];
    normal[0] = n0.normalized();
    for (int i = 1; i < nl; ++i) {
      Eigen::RowVector3d n = normal[static_cast<std::size_t>(i - 1)];
      n -= n.dot(tangent[static_cast<std::size_t>(i)]) * tangent[static_cast<std::size_t>(i)];
      normal[static_cast<std::size_t>(i)] = n.normalized();
    }
  }

  Mesh mesh;
  const int n_verts = nt * nl + 2;
  mesh.vertices.resize(n_verts, 3);
  for (int i = 0; i < nl; ++i) {
    const double t = i / double(nl - 1);
    const double r = detail::tube_radius(shape, t, spec.length);
    const Eigen::RowVector3d b =
        tangent[static_cast<std::size_t>(i)].cross(normal[static_cast<std::size_t>(i)]);
    for (int j = 0; j < nt; ++j) {
      const double theta = 2.0 * std::numbers::pi * j / nt;
      mesh.vertices.row(i * nt + j) =
          center[static_cast<std::size_t>(i)] +
          r * (std::cos(theta) * normal[static_cast<std::size_t>(i)] + std::sin(theta) * b);
    }
  }
  const int apex_bottom = nt * nl;
  const int apex_top = nt * nl + 1;
  mesh.vertices.row(apex_bottom) = center.front();
  mesh.vertices.row(apex_top) = center.back();

  const int n_faces = 2 * nt * (nl - 1) + 2 * nt;
  mesh.faces.resize(n_faces, 3);
  int f = 0;
  for (int i = 0; i + 1 < nl; ++i) {
    for (int j = 0; j < nt; ++j) {
      const int j1 = (j + 1) % nt;
      const int a = i * nt + j, b = i * nt + j1;
      const int c = (i + 1) * nt + j1, d = (i + 1) * nt + j;
      mesh.faces.row(f++) << a, b, c;
      mesh.faces.row(f++) << a, c, d;
    }
  }
  for (int j = 0; j < nt; ++j) {
    const int j1 = (j + 1) % nt;
    mesh.faces.row(f++) << apex_bottom, j1, j;                                // outward -z
    mesh.faces.row(f++) << apex_top, (nl - 1) * nt + j, (nl - 1) * nt + j1;   // outward +z
  }
  validate(mesh);
  return mesh;
}

/// Deterministic corpus with per-sample shape, pose, and size variation,
/// drawn from one split seed per member.
inline std::vector<Mesh> generate_corpus(const SyntheticSpec& spec) {
  if (spec.corpus_size < 1) throw std::invalid_argument("generate_corpus: empty corpus");
  if (!(spec.neck_radius.lo > 0.0))
    throw std::invalid_argument("generate_corpus: neck radius range must stay positive");
  if (!(spec.sac_radius.lo > spec.neck_radius.hi))
    throw std::invalid_argument(
        "generate_corpus: sac radius range must lie above the neck radius range");
  std::vector<Mesh> corpus;
  corpus.reserve(static_cast<std::size_t>(spec.corpus_size));
  for (int i = 0; i < spec.corpus_size; ++i) {
    RandomStream rng(derive_seed(spec.seed, "mesh", static_cast<std::uint64_t>(i)));
    detail::TubeShape shape;
    shape.r_neck = rng.uniform(spec.neck_radius.lo, spec.neck_radius.hi);
    shape.r_sac = rng.uniform(spec.sac_radius.lo, spec.sac_radius.hi);
    shape.t0 = rng.uniform(spec.sac_center.lo, spec.sac_center.hi);
    shape.width = rng.uniform(spec.sac_width.lo, spec.sac_width.hi);
    shape.bend = rng.uniform(spec.bend_amplitude.lo, spec.bend_amplitude.hi);
    Mesh mesh = generate_tube(spec, shape);
    const double psi = rng.uniform(spec.rotation_jitter.lo, spec.rotation_jitter.hi);
    const double xi = rng.uniform(spec.rotation_jitter.lo, spec.rotation_jitter.hi);
    const double gamma = rng.uniform(spec.rotation_jitter.lo, spec.rotation_jitter.hi);
    const double scale = rng.uniform(spec.scale_jitter.lo, spec.scale_jitter.hi);
    Eigen::Matrix3d omega = euler_zyx_to_rotation(psi, xi, gamma);
    mesh.vertices = scale * (mesh.vertices * omega.transpose());
    corpus.push_back(std::move(mesh));
  }
  return corpus;
}

}  // namespace meshvae
