#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "meshvae/mesh.hpp"
#include "meshvae/sparse.hpp"
#include "meshvae/synthetic.hpp"

using namespace meshvae;

namespace {

Mesh tetrahedron() {
  Mesh m;
  m.vertices.resize(4, 3);
  m.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;
  m.faces.resize(4, 3);
  m.faces << 0, 2, 1, 0, 1, 3, 0, 3, 2, 1, 2, 3;
  return m;
}

Mesh single_triangle() {
  Mesh m;
  m.vertices.resize(3, 3);
  m.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  m.faces.resize(1, 3);
  m.faces << 0, 1, 2;
  return m;
}

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("off round trip preserves a tetrahedron") {
  const auto path = temp_file("mv_tet.off");
  {
    std::ofstream out(path);
    out << "OFF\n4 4 0\n"
        << "0 0 0\n1 0 0\n0 1 0\n0 0 1\n"
        << "3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n";
  }
  Mesh m = load_mesh(path.string());
  REQUIRE(m.num_vertices() == 4);
  REQUIRE(m.num_faces() == 4);
  CHECK(m.vertices(3, 2) == 1.0);
  CHECK(m.faces(0, 1) == 2);

  const auto path2 = temp_file("mv_tet2.off");
  save_mesh(m, path2.string());
  Mesh m2 = load_mesh(path2.string());
  CHECK(m2.vertices == m.vertices);
  CHECK(m2.faces == m.faces);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("obj loader handles slash tokens and rejects index zero") {
  const auto path = temp_file("mv_tri.obj");
  {
    std::ofstream out(path);
    out << "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2 3/3\n";
  }
  Mesh m = load_mesh(path.string());
  CHECK(m.num_vertices() == 3);
  CHECK(m.faces.row(0) == Eigen::RowVector3i(0, 1, 2));
  {
    std::ofstream out(path);
    out << "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n";
  }
  CHECK_THROWS(load_mesh(path.string()));
  std::filesystem::remove(path);
}

TEST_CASE("obj round trip and relative indices") {
  Mesh m = tetrahedron();
  const auto path = temp_file("mv_tet.obj");
  save_mesh(m, path.string());
  Mesh m2 = load_mesh(path.string());
  CHECK(m2.faces == m.faces);
  CHECK((m2.vertices - m.vertices).norm() == 0.0);

  {
    std::ofstream out(path);
    out << "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n";
  }
  Mesh rel = load_mesh(path.string());
  CHECK(rel.faces.row(0) == Eigen::RowVector3i(0, 1, 2));
  std::filesystem::remove(path);
}

TEST_CASE("parse errors name the line") {
  const auto path = temp_file("mv_bad.off");
  {
    std::ofstream out(path);
    out << "OFF\n3 1 0\n0 0 0\n1 0 0\nnot-a-number 0 0\n3 0 1 2\n";
  }
  try {
    load_mesh(path.string());
    FAIL("expected parse error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find(":5") != std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST_CASE("save_mesh refuses invalid meshes") {
  Mesh m = single_triangle();
  m.faces(0, 1) = 0;  // degenerate: repeated corner
  CHECK_THROWS(save_mesh(m, temp_file("mv_invalid.off").string()));

  Mesh no_faces = single_triangle();
  no_faces.faces.resize(0, 3);
  CHECK_THROWS(save_mesh(no_faces, temp_file("mv_invalid.off").string()));
}

TEST_CASE("validate rejects out-of-range and isolated vertices") {
  Mesh m = single_triangle();
  CHECK_NOTHROW(validate(m));
  m.faces(0, 2) = 3;
  CHECK_THROWS(validate(m));

  Mesh iso = single_triangle();
  iso.vertices.conservativeResize(4, 3);
  iso.vertices.row(3) << 5, 5, 5;
  CHECK_THROWS(validate(iso));
}

TEST_CASE("adjacency of a single triangle is K3") {
  SparseMatrix a = build_adjacency(single_triangle());
  Eigen::MatrixXd dense = a.to_dense();
  Eigen::MatrixXd expect(3, 3);
  expect << 0, 1, 1, 1, 0, 1, 1, 1, 0;
  CHECK(dense == expect);
}

TEST_CASE("adjacency degree sequence of two triangles sharing an edge") {
  Mesh m;
  m.vertices.resize(4, 3);
  m.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 0;
  m.faces.resize(2, 3);
  m.faces << 0, 1, 2, 1, 3, 2;
  SparseMatrix a = build_adjacency(m);
  Eigen::VectorXd deg = a.to_dense().rowwise().sum();
  // Shared edge (1,2) gives those two vertices degree 3.
  CHECK(deg(0) == 2);
  CHECK(deg(1) == 3);
  CHECK(deg(2) == 3);
  CHECK(deg(3) == 2);
}

TEST_CASE("tetrahedron adjacency is K4 with 12 nonzeros") {
  SparseMatrix a = build_adjacency(tetrahedron());
  CHECK(a.nnz() == 12);
  CHECK(a.is_symmetric());
  for (int i = 0; i < 4; ++i) CHECK(a.coeff(i, i) == 0.0);
}

TEST_CASE("face normals: axis-aligned, winding, translation invariance") {
  Mesh m = single_triangle();
  Eigen::MatrixXd n = face_unit_normals(m);
  CHECK((n.row(0) - Eigen::RowVector3d(0, 0, 1)).norm() < 1e-15);

  Mesh rev = m;
  rev.faces.row(0) << 0, 2, 1;
  Eigen::MatrixXd nr = face_unit_normals(rev);
  CHECK((nr.row(0) - Eigen::RowVector3d(0, 0, -1)).norm() < 1e-15);

  Mesh shifted = m;
  shifted.vertices.rowwise() += Eigen::RowVector3d(3.5, -2.0, 7.25);
  CHECK((face_unit_normals(shifted) - n).norm() == 0.0);
}

TEST_CASE("zero-area face raises a degeneracy error") {
  Mesh m = single_triangle();
  m.vertices.row(2) = m.vertices.row(1);  // collapses the triangle
  CHECK_THROWS(face_unit_normals(m));
}

TEST_CASE("edge_set is sorted and unique") {
  CHECK(edge_set(single_triangle()) ==
        std::vector<std::pair<int, int>>{{0, 1}, {0, 2}, {1, 2}});
  CHECK(edge_set(tetrahedron()).size() == 6);
}

TEST_CASE("closed tube obeys the watertight edge relation") {
  SyntheticSpec spec;
  spec.n_theta = 8;
  spec.n_len = 5;
  detail::TubeShape shape{0.6, 0.6, 0.5, 0.7, 0.0};
  Mesh tube = generate_tube(spec, shape);
  const auto edges = edge_set(tube);
  CHECK(edges.size() == static_cast<std::size_t>(3 * tube.num_faces() / 2));
  SparseMatrix a = build_adjacency(tube);
  CHECK(a.nnz() == 2 * edges.size());
}

TEST_CASE("normals of generated meshes are unit length") {
  SyntheticSpec spec;
  spec.n_theta = 10;
  spec.n_len = 8;
  detail::TubeShape shape{0.5, 1.2, 0.5, 0.6, 0.4};
  Mesh tube = generate_tube(spec, shape);
  Eigen::MatrixXd n = face_unit_normals(tube);
  for (Eigen::Index f = 0; f < n.rows(); ++f)
    CHECK(std::abs(n.row(f).norm() - 1.0) < 1e-12);
}

TEST_CASE("shared-topology validation names the offender") {
  Mesh a = tetrahedron(), b = tetrahedron(), c = tetrahedron();
  b.vertices.array() += 0.25;
  CHECK_NOTHROW(validate_shared_topology({a, b, c}));
  CHECK_NOTHROW(validate_shared_topology({a}));

  Mesh perm = tetrahedron();
  perm.faces.row(0).swap(perm.faces.row(1));
  try {
    validate_shared_topology({a, b, perm});
    FAIL("expected mismatch error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find('2') != std::string::npos);
  }
}

TEST_CASE("chamfer distance matches hand-computed point sets") {
  Eigen::MatrixXd x(2, 3), y(2, 3);
  x << 0, 0, 0, 1, 0, 0;
  y << 0, 0, 0.5, 1, 0, 0;
  // Nearest for (0,0,0) is (0,0,0.5): 0.25. Others pair exactly.
  CHECK(chamfer_distance(x, y) == Catch::Approx(0.25 + 0.25).margin(1e-15));
  CHECK(chamfer_distance(x, x) == 0.0);
}
