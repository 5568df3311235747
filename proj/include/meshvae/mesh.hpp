#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "meshvae/sparse.hpp"

namespace meshvae {

/// Triangle mesh: vertex positions (N x 3) and face indices (F x 3).
struct Mesh {
  Eigen::MatrixXd vertices;
  Eigen::MatrixXi faces;

  int num_vertices() const { return static_cast<int>(vertices.rows()); }
  int num_faces() const { return static_cast<int>(faces.rows()); }
};

/// Checks index ranges, distinct corners, and that every vertex is used.
inline void validate(const Mesh& mesh) {
  const int n = mesh.num_vertices();
  std::vector<char> used(static_cast<std::size_t>(n), 0);
  for (int f = 0; f < mesh.num_faces(); ++f) {
    int a = mesh.faces(f, 0), b = mesh.faces(f, 1), c = mesh.faces(f, 2);
    if (a < 0 || a >= n || b < 0 || b >= n || c < 0 || c >= n)
      throw std::invalid_argument("mesh: face " + std::to_string(f) +
                                  " has a vertex index out of range");
    if (a == b || b == c || a == c)
      throw std::invalid_argument("mesh: face " + std::to_string(f) +
                                  " has repeated vertex indices");
    used[a] = used[b] = used[c] = 1;
  }
  for (int v = 0; v < n; ++v) {
    if (!used[v])
      throw std::invalid_argument("mesh: vertex " + std::to_string(v) +
                                  " is not referenced by any face");
  }
}

namespace detail {

inline std::string format_coord(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline bool blank_or_comment(const std::string& line, char comment_char) {
  for (char ch : line) {
    if (ch == comment_char) return true;
    if (!std::isspace(static_cast<unsigned char>(ch))) return false;
  }
  return true;
}

[[noreturn]] inline void parse_fail(const std::string& path, int line_no,
                                    const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + what);
}

inline std::string lowercase_ext(const std::string& path) {
  auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

inline Mesh load_off(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  int line_no = 0;
  auto next_line = [&](std::string& out) {
    while (std::getline(in, line)) {
      ++line_no;
      if (!blank_or_comment(line, '#')) {
        out = line;
        return true;
      }
    }
    return false;
  };
  std::string header;
  if (!next_line(header)) parse_fail(path, line_no, "missing OFF header");
  {
    std::istringstream ss(header);
    std::string tag;
    ss >> tag;
    if (tag != "OFF") parse_fail(path, line_no, "expected OFF header, got '" + tag + "'");
  }
  std::string counts;
  if (!next_line(counts)) parse_fail(path, line_no, "missing count line");
  long nv = 0, nf = 0, ne = 0;
  {
    std::istringstream ss(counts);
    if (!(ss >> nv >> nf >> ne)) parse_fail(path, line_no, "malformed count line");
    if (nv < 0 || nf < 0) parse_fail(path, line_no, "negative counts");
  }
  Mesh mesh;
  mesh.vertices.resize(nv, 3);
  for (long v = 0; v < nv; ++v) {
    std::string vl;
    if (!next_line(vl)) parse_fail(path, line_no, "unexpected end of file in vertex list");
    std::istringstream ss(vl);
    double x, y, z;
    if (!(ss >> x >> y >> z)) parse_fail(path, line_no, "malformed vertex line");
    mesh.vertices(v, 0) = x;
    mesh.vertices(v, 1) = y;
    mesh.vertices(v, 2) = z;
  }
  mesh.faces.resize(nf, 3);
  for (long f = 0; f < nf; ++f) {
    std::string fl;
    if (!next_line(fl)) parse_fail(path, line_no, "unexpected end of file in face list");
    std::istringstream ss(fl);
    long k, a, b, c;
    if (!(ss >> k >> a >> b >> c)) parse_fail(path, line_no, "malformed face line");
    if (k != 3) parse_fail(path, line_no, "only triangle faces are supported");
    mesh.faces(f, 0) = static_cast<int>(a);
    mesh.faces(f, 1) = static_cast<int>(b);
    mesh.faces(f, 2) = static_cast<int>(c);
  }
  validate(mesh);
  return mesh;
}

inline Mesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<Eigen::RowVector3d> verts;
  std::vector<Eigen::RowVector3i> faces;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank_or_comment(line, '#')) continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      double x, y, z;
      if (!(ss >> x >> y >> z)) parse_fail(path, line_no, "malformed vertex line");
      verts.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<long> idx;
      std::string tok;
      while (ss >> tok) {
        // "f 1 2 3" or "f 1/4/7 2/5/8 3/6/9": the vertex index leads.
        std::size_t slash = tok.find('/');
        std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
        try {
          idx.push_back(std::stol(head));
        } catch (const std::exception&) {
          parse_fail(path, line_no, "malformed face index '" + tok + "'");
        }
      }
      if (idx.size() != 3) parse_fail(path, line_no, "only triangle faces are supported");
      Eigen::RowVector3i f;
      for (int k = 0; k < 3; ++k) {
        long i = idx[k];
        if (i < 0) i = static_cast<long>(verts.size()) + i + 1;  // relative index
        if (i < 1) parse_fail(path, line_no, "face index out of range");
        f(k) = static_cast<int>(i - 1);
      }
      faces.push_back(f);
    }
    // Other OBJ records (vn, vt, usemtl, o, g, s, mtllib) are ignored.
  }
  Mesh mesh;
  mesh.vertices.resize(static_cast<long>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(i) = verts[i];
  mesh.faces.resize(static_cast<long>(faces.size()), 3);
  for (std::size_t i = 0; i < faces.size(); ++i) mesh.faces.row(i) = faces[i];
  validate(mesh);
  return mesh;
}

}  // namespace detail

/// Loads a mesh from an OFF or OBJ file, chosen by extension.
inline Mesh load_mesh(const std::string& path) {
  std::string ext = detail::lowercase_ext(path);
  if (ext == "off") return detail::load_off(path);
  if (ext == "obj") return detail::load_obj(path);
  throw std::runtime_error("unsupported mesh format: " + path);
}

/// Saves a mesh as OFF or OBJ, chosen by extension. Coordinates keep
/// nine significant digits.
inline void save_mesh(const Mesh& mesh, const std::string& path) {
  validate(mesh);
  std::string ext = detail::lowercase_ext(path);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  if (ext == "off") {
    out << "OFF\n" << mesh.num_vertices() << " " << mesh.num_faces() << " 0\n";
    for (int v = 0; v < mesh.num_vertices(); ++v)
      out << detail::format_coord(mesh.vertices(v, 0)) << " "
          << detail::format_coord(mesh.vertices(v, 1)) << " "
          << detail::format_coord(mesh.vertices(v, 2)) << "\n";
    for (int f = 0; f < mesh.num_faces(); ++f)
      out << "3 " << mesh.faces(f, 0) << " " << mesh.faces(f, 1) << " "
          << mesh.faces(f, 2) << "\n";
  } else if (ext == "obj") {
    for (int v = 0; v < mesh.num_vertices(); ++v)
      out << "v " << detail::format_coord(mesh.vertices(v, 0)) << " "
          << detail::format_coord(mesh.vertices(v, 1)) << " "
          << detail::format_coord(mesh.vertices(v, 2)) << "\n";
    for (int f = 0; f < mesh.num_faces(); ++f)
      out << "f " << mesh.faces(f, 0) + 1 << " " << mesh.faces(f, 1) + 1 << " "
          << mesh.faces(f, 2) + 1 << "\n";
  } else {
    throw std::runtime_error("unsupported mesh format: " + path);
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

/// Binary symmetric vertex adjacency (N x N), ones on connected pairs.
inline SparseMatrix build_adjacency(const Mesh& mesh) {
  const int n = mesh.num_vertices();
  std::set<std::pair<int, int>> edges;
  for (int f = 0; f < mesh.num_faces(); ++f) {
    const int v[3] = {mesh.faces(f, 0), mesh.faces(f, 1), mesh.faces(f, 2)};
    for (int k = 0; k < 3; ++k) {
      int a = v[k], b = v[(k + 1) % 3];
      edges.insert({std::min(a, b), std::max(a, b)});
    }
  }
  std::vector<Triplet> t;
  t.reserve(edges.size() * 2);
  for (const auto& [a, b] : edges) {
    t.push_back({a, b, 1.0});
    t.push_back({b, a, 1.0});
  }
  return SparseMatrix(n, n, std::move(t));
}

/// Undirected edge list with i < j, sorted lexicographically.
inline std::vector<std::pair<int, int>> edge_set(const Mesh& mesh) {
  std::set<std::pair<int, int>> edges;
  for (int f = 0; f < mesh.num_faces(); ++f) {
    const int v[3] = {mesh.faces(f, 0), mesh.faces(f, 1), mesh.faces(f, 2)};
    for (int k = 0; k < 3; ++k) {
      int a = v[k], b = v[(k + 1) % 3];
      edges.insert({std::min(a, b), std::max(a, b)});
    }
  }
  return {edges.begin(), edges.end()};
}

/// Unit normal of each face (F x 3); throws on a degenerate face.
inline Eigen::MatrixXd face_unit_normals(const Mesh& mesh) {
  Eigen::MatrixXd normals(mesh.num_faces(), 3);
  for (int f = 0; f < mesh.num_faces(); ++f) {
    Eigen::RowVector3d a = mesh.vertices.row(mesh.faces(f, 0));
    Eigen::RowVector3d b = mesh.vertices.row(mesh.faces(f, 1));
    Eigen::RowVector3d c = mesh.vertices.row(mesh.faces(f, 2));
    Eigen::RowVector3d cr = (b - a).cross(c - a);
    double len = cr.norm();
    if (len == 0.0)
      throw std::runtime_error("face " + std::to_string(f) + " has zero area");
    normals.row(f) = cr / len;
  }
  return normals;
}

/// Symmetric squared-distance Chamfer between two point sets (rows).
namespace detail {

/// Sum over rows of `a` of the squared distance to the nearest row of
/// `b`, on contiguous 3-column arrays (the vertex-matrix hot path).
inline double nearest_sq_sum3(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::Index na = a.rows(), nb = b.rows();
  const double *ax = a.data(), *ay = ax + na, *az = ay + na;
  const double *bx = b.data(), *by = bx + nb, *bz = by + nb;
  double total = 0.0;
  for (Eigen::Index i = 0; i < na; ++i) {
    const double xi = ax[i], yi = ay[i], zi = az[i];
    double best = (xi - bx[0]) * (xi - bx[0]) + (yi - by[0]) * (yi - by[0]) +
                  (zi - bz[0]) * (zi - bz[0]);
    for (Eigen::Index j = 1; j < nb; ++j) {
      const double dx = xi - bx[j], dy = yi - by[j], dz = zi - bz[j];
      best = std::min(best, dx * dx + dy * dy + dz * dz);
    }
    total += best;
  }
  return total;
}

}  // namespace detail

inline double chamfer_distance(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.cols() != y.cols()) throw std::invalid_argument("chamfer_distance: width mismatch");
  if (x.rows() == 0 || y.rows() == 0)
    throw std::invalid_argument("chamfer_distance: empty point set");
  if (x.cols() == 3) return detail::nearest_sq_sum3(x, y) + detail::nearest_sq_sum3(y, x);
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double best = (x.row(i) - y.row(0)).squaredNorm();
    for (Eigen::Index j = 1; j < y.rows(); ++j)
      best = std::min(best, (x.row(i) - y.row(j)).squaredNorm());
    total += best;
  }
  for (Eigen::Index j = 0; j < y.rows(); ++j) {
    double best = (y.row(j) - x.row(0)).squaredNorm();
    for (Eigen::Index i = 1; i < x.rows(); ++i)
      best = std::min(best, (y.row(j) - x.row(i)).squaredNorm());
    total += best;
  }
  return total;
}

/// Verifies that every mesh shares one topology (vertex count and faces).
/// Throws naming the first mesh that differs from meshes[0].
inline void validate_shared_topology(const std::vector<Mesh>& meshes) {
  if (meshes.empty()) return;
  const Mesh& ref = meshes.front();
  for (std::size_t i = 1; i < meshes.size(); ++i) {
    const Mesh& m = meshes[i];
    if (m.num_vertices() != ref.num_vertices() || m.num_faces() != ref.num_faces() ||
        m.faces != ref.faces)
      throw std::invalid_argument("mesh " + std::to_string(i) +
                                  " does not share the corpus topology");
  }
}

}  // namespace meshvae
