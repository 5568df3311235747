#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "meshvae/checkpoint.hpp"
#include "meshvae/config.hpp"
#include "meshvae/csv.hpp"
#include "meshvae/experiment.hpp"
#include "meshvae/mesh.hpp"
#include "meshvae/synthetic.hpp"

using namespace meshvae;

namespace {

std::filesystem::path scratch_dir() {
  std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "meshvae_test_harness";
  std::filesystem::create_directories(dir);
  return dir;
}

SyntheticSpec small_spec(int count, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_theta = 5;
  spec.n_len = 8;
  spec.length = 4.0;
  spec.neck_radius = {0.4, 0.5};
  spec.sac_radius = {0.8, 1.0};
  spec.corpus_size = count;
  spec.seed = seed;
  return spec;
}

ExperimentConfig smoke_config() {
  ExperimentConfig ec;
  ec.model.latent_dim = 2;
  ec.model.cheb_order = 2;
  ec.model.channels = {3, 4, 4, 4, 6};
  ec.model.hidden_dense_width = 8;
  ec.folds = 2;
  ec.epochs = 1;
  ec.arm = AugmentArm::none;
  ec.latent_sweep = {2};
  ec.beta_sweep = {8.5e-3};
  ec.seed = 5;
  return ec;
}

Model smoke_model(const std::vector<Mesh>& corpus) {
  ModelConfig mc = smoke_config().model;
  return build_model(mc, build_hierarchy(corpus_template(corpus), 4, mc.pooling_factor), 11);
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("k-fold split partitions the index range") {
  SECTION("sixty into ten folds of six") {
    auto folds = kfold_split(60, 10, 1);
    REQUIRE(folds.size() == 10);
    for (const auto& f : folds) CHECK(f.size() == 6);
  }

  SECTION("leave-one-out") {
    auto folds = kfold_split(10, 10, 2);
    REQUIRE(folds.size() == 10);
    for (const auto& f : folds) CHECK(f.size() == 1);
  }

  SECTION("partition property with uneven sizes") {
    auto folds = kfold_split(23, 5, 3);
    REQUIRE(folds.size() == 5);
    std::set<int> seen;
    std::size_t smallest = 23, largest = 0;
    for (const auto& f : folds) {
      smallest = std::min(smallest, f.size());
      largest = std::max(largest, f.size());
      for (int idx : f) {
        CHECK(idx >= 0);
        CHECK(idx < 23);
        CHECK(seen.insert(idx).second);  // pairwise disjoint
      }
    }
    CHECK(seen.size() == 23);
    CHECK(largest - smallest <= 1);
  }

  SECTION("deterministic in the seed") {
    CHECK(kfold_split(30, 4, 7) == kfold_split(30, 4, 7));
    CHECK(kfold_split(30, 4, 7) != kfold_split(30, 4, 8));
  }

  CHECK_THROWS_AS(kfold_split(5, 6, 0), std::invalid_argument);
  CHECK_THROWS_AS(kfold_split(5, 1, 0), std::invalid_argument);
}

TEST_CASE("synthetic corpus meshes are watertight and shared-topology") {
  SyntheticSpec spec;
  spec.n_theta = 8;
  spec.n_len = 10;
  spec.corpus_size = 6;
  spec.seed = 9;
  std::vector<Mesh> corpus = generate_corpus(spec);
  REQUIRE(corpus.size() == 6);
  validate_shared_topology(corpus);
  for (const Mesh& m : corpus) {
    CHECK(m.num_vertices() == 82);
    CHECK(m.num_faces() == 160);
    const auto edges = edge_set(m);
    CHECK(m.num_vertices() - static_cast<int>(edges.size()) + m.num_faces() == 2);
  }
}

TEST_CASE("synthetic corpus generation is bitwise deterministic") {
  SyntheticSpec spec = small_spec(5, 14);
  std::vector<Mesh> a = generate_corpus(spec);
  std::vector<Mesh> b = generate_corpus(spec);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].vertices == b[i].vertices);
    CHECK(a[i].faces == b[i].faces);
  }
  // A different seed moves at least the first mesh.
  spec.seed = 15;
  CHECK(generate_corpus(spec)[0].vertices != a[0].vertices);
}

TEST_CASE("degenerate tube parameters give a straight cylinder") {
  SyntheticSpec spec;
  spec.n_theta = 6;
  spec.n_len = 5;
  spec.length = 3.0;
  Mesh tube = generate_tube(spec, detail::TubeShape{0.5, 0.5, 0.5, 0.7, 0.0});
  // Every ring vertex sits at the neck radius from the straight z-axis.
  for (int i = 0; i < spec.n_len * spec.n_theta; ++i) {
    const double r = tube.vertices.row(i).head<2>().norm();
    CHECK(r == Catch::Approx(0.5).margin(1e-12));
  }
  // Apexes cap the axis ends.
  CHECK(tube.vertices.row(30) == Eigen::RowVector3d(0, 0, 0));
  CHECK((tube.vertices.row(31) - Eigen::RowVector3d(0, 0, 3.0)).norm() < 1e-12);
}

TEST_CASE("tube generation rejects self-intersecting and invalid parameters") {
  SyntheticSpec spec;
  spec.n_theta = 6;
  spec.n_len = 8;
  spec.length = 2.0;
  // kappa_max = bend pi^2 / L^2; radius 1.2 with bend 0.5 exceeds the guard.
  CHECK_THROWS_WITH(generate_tube(spec, detail::TubeShape{0.8, 1.2, 0.5, 0.7, 0.5}),
                    Catch::Matchers::ContainsSubstring("self-intersect"));
  CHECK_THROWS_AS(generate_tube(spec, detail::TubeShape{0.8, 0.5, 0.5, 0.7, 0.0}),
                  std::invalid_argument);  // sac below neck
  CHECK_THROWS_AS(generate_tube(spec, detail::TubeShape{0.0, 0.5, 0.5, 0.7, 0.0}),
                  std::invalid_argument);  // nonpositive neck

  SyntheticSpec bad = small_spec(2, 0);
  bad.sac_radius = {0.45, 1.0};  // overlaps the neck range
  CHECK_THROWS_AS(generate_corpus(bad), std::invalid_argument);
  bad = small_spec(0, 0);
  CHECK_THROWS_AS(generate_corpus(bad), std::invalid_argument);
}

TEST_CASE("experiment smoke run produces per-fold rows and exact aggregates") {
  std::vector<Mesh> corpus = generate_corpus(small_spec(8, 16));
  ExperimentConfig ec = smoke_config();

  ExperimentReport report = run_experiment(ec, corpus);
  REQUIRE(report.cells.size() == 1);
  const CellReport& cell = report.cells[0];
  REQUIRE(cell.folds.size() == 2);
  CHECK(cell.latent_dim == 2);
  CHECK(cell.arm == AugmentArm::none);

  // Aggregate rows are exact arithmetic over the fold rows.
  const double mean_rcd = (cell.folds[0].metrics.rcd + cell.folds[1].metrics.rcd) / 2.0;
  CHECK(cell.mean.rcd == Catch::Approx(mean_rcd).margin(1e-15));
  const double dev = cell.folds[0].metrics.rcd - mean_rcd;
  CHECK(cell.stddev.rcd == Catch::Approx(std::sqrt(dev * dev)).margin(1e-12));

  CsvTable table = cell_csv(cell);
  REQUIRE(table.rows.size() == 4);  // 2 folds + mean + std
  CHECK(table.rows[2][0] == "mean");
  CHECK(table.rows[3][0] == "std");
  CHECK(cell_csv_name(cell) == "metrics_latent2_beta0.0085_none.csv");

  // Identical seeds, identical CSV bytes.
  ExperimentReport again = run_experiment(ec, corpus);
  CHECK(cell_csv(again.cells[0]).str() == table.str());
}

TEST_CASE("experiment failures name the fold") {
  std::vector<Mesh> corpus = generate_corpus(small_spec(6, 17));
  ExperimentConfig ec = smoke_config();
  ec.latent_sweep = {0};  // invalid latent width surfaces inside fold 0
  CHECK_THROWS_WITH(run_experiment(ec, corpus),
                    Catch::Matchers::ContainsSubstring("fold 0 failed"));

  ExperimentConfig empty_sweep = smoke_config();
  empty_sweep.latent_sweep = {};
  CHECK_THROWS_AS(run_experiment(empty_sweep, corpus), std::invalid_argument);
}

TEST_CASE("procaug arm runs end to end on a smoke corpus") {
  std::vector<Mesh> corpus = generate_corpus(small_spec(8, 18));
  ExperimentConfig ec = smoke_config();
  ec.arm = AugmentArm::procaug;
  ExperimentReport report = run_experiment(ec, corpus);
  REQUIRE(report.cells.size() == 1);
  for (const FoldRow& row : report.cells[0].folds) {
    CHECK(std::isfinite(row.metrics.rcd));
    CHECK(std::isfinite(row.metrics.l2));
    CHECK(row.metrics.e_percent <= 100.0);
  }
}

TEST_CASE("linear baseline shares the fold protocol") {
  // Train folds of six support up to five principal directions.
  std::vector<Mesh> corpus = generate_corpus(small_spec(12, 19));
  ExperimentConfig ec = smoke_config();
  ec.latent_sweep = {2, 4};

  ExperimentReport report = run_pca_baseline(ec, corpus);
  REQUIRE(report.cells.size() == 2);
  for (const CellReport& cell : report.cells) {
    CHECK(cell.beta == 0.0);
    CHECK(cell.arm == AugmentArm::none);
    REQUIRE(cell.folds.size() == 2);
    for (const FoldRow& row : cell.folds) {
      CHECK(std::isfinite(row.metrics.rcd));
      CHECK(row.metrics.e_percent <= 100.0);
    }
  }
  // More principal directions never hurt the mean linear fit.
  CHECK(report.cells[1].mean.e_percent >= report.cells[0].mean.e_percent - 1e-9);

  ExperimentReport again = run_pca_baseline(ec, corpus);
  CHECK(cell_csv(again.cells[0]).str() == cell_csv(report.cells[0]).str());
}

TEST_CASE("latent extrapolation collapses to the mean decode at zero scale") {
  std::vector<Mesh> corpus = generate_corpus(small_spec(4, 20));
  Model model = smoke_model(corpus);
  const Mesh& probe = corpus[0];

  Eigen::MatrixXd mean_decode = decode(model, encode(model, probe.vertices).mu);

  RandomStream rng(1);
  SampleSet at_zero = extrapolate(model, probe, 0.0, 4, rng);
  REQUIRE(at_zero.meshes.size() == 4);
  REQUIRE(at_zero.rcd_maps.size() == 4);
  REQUIRE(at_zero.rcd.size() == 4);
  for (const Mesh& m : at_zero.meshes) {
    CHECK(m.vertices == mean_decode);
    CHECK(m.faces == probe.faces);
  }
  for (const Eigen::VectorXd& map : at_zero.rcd_maps) CHECK(map.size() == probe.num_vertices());

  RandomStream rng_a(2), rng_b(2);
  SampleSet sa = extrapolate(model, probe, 0.5, 3, rng_a);
  SampleSet sb = extrapolate(model, probe, 0.5, 3, rng_b);
  for (int i = 0; i < 3; ++i) {
    CHECK(sa.meshes[static_cast<std::size_t>(i)].vertices ==
          sb.meshes[static_cast<std::size_t>(i)].vertices);
    CHECK(sa.rcd[static_cast<std::size_t>(i)] == sb.rcd[static_cast<std::size_t>(i)]);
  }
  CHECK(sa.meshes[0].vertices != mean_decode);

  RandomStream rng_c(3);
  CHECK_THROWS_AS(extrapolate(model, probe, -0.1, 2, rng_c), std::invalid_argument);
  CHECK_THROWS_AS(extrapolate(model, probe, 0.5, 0, rng_c), std::invalid_argument);
}

TEST_CASE("latent interpolation hits both endpoints exactly") {
  std::vector<Mesh> corpus = generate_corpus(small_spec(4, 24));
  Model model = smoke_model(corpus);
  const Mesh& a = corpus[0];
  const Mesh& b = corpus[1];

  std::vector<Mesh> path = interpolate(model, a, b, 4);
  REQUIRE(path.size() == 5);
  CHECK(path.front().vertices == decode(model, encode(model, a.vertices).mu));
  CHECK(path.back().vertices == decode(model, encode(model, b.vertices).mu));
  for (const Mesh& m : path) CHECK(m.faces == a.faces);

  std::vector<Mesh> self_path = interpolate(model, a, a, 3);
  REQUIRE(self_path.size() == 4);
  for (const Mesh& m : self_path) CHECK(m.vertices == self_path.front().vertices);

  CHECK_THROWS_AS(interpolate(model, a, b, 0), std::invalid_argument);
}

TEST_CASE("checkpoint round trip preserves the whole model state") {
  std::vector<Mesh> corpus = generate_corpus(small_spec(4, 25));
  Model model = smoke_model(corpus);
  const std::filesystem::path path = scratch_dir() / "roundtrip.ckpt";

  CheckpointMeta meta;
  meta.seed = 77;
  meta.epoch = 13;
  save_checkpoint(path.string(), model, meta);
  LoadedCheckpoint loaded = load_checkpoint(path.string());

  CHECK(loaded.meta.seed == 77);
  CHECK(loaded.meta.epoch == 13);
  CHECK(loaded.model.config.latent_dim == model.config.latent_dim);
  CHECK(loaded.model.config.beta == model.config.beta);
  CHECK(loaded.model.config.channels == model.config.channels);

  // Bitwise-equal tensors, in identical visit order.
  std::vector<std::pair<std::string, Eigen::MatrixXd>> before, after;
  model.params.visit([&](const std::string& n, const Eigen::MatrixXd& t) {
    before.emplace_back(n, t);
  });
  loaded.model.params.visit([&](const std::string& n, const Eigen::MatrixXd& t) {
    after.emplace_back(n, t);
  });
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(before[i].first == after[i].first);
    CHECK(before[i].second == after[i].second);
  }

  // Hierarchy state restores exactly.
  REQUIRE(loaded.model.hierarchy.num_levels() == model.hierarchy.num_levels());
  for (std::size_t l = 0; l < model.hierarchy.meshes.size(); ++l) {
    CHECK(loaded.model.hierarchy.meshes[l].vertices == model.hierarchy.meshes[l].vertices);
    CHECK(loaded.model.hierarchy.meshes[l].faces == model.hierarchy.meshes[l].faces);
  }

  // Resuming with zero extra training reproduces the metrics bitwise.
  MetricsReport m0 = evaluate_mesh(model, corpus[0]);
  MetricsReport m1 = evaluate_mesh(loaded.model, corpus[0]);
  CHECK(m0.e_percent == m1.e_percent);
  CHECK(m0.chamfer == m1.chamfer);
  CHECK(m0.kl == m1.kl);
}

TEST_CASE("checkpoint loader rejects malformed files") {
  std::vector<Mesh> corpus = generate_corpus(small_spec(4, 26));
  Model model = smoke_model(corpus);
  const std::filesystem::path dir = scratch_dir();
  const std::filesystem::path good = dir / "good.ckpt";
  CheckpointMeta meta;
  save_checkpoint(good.string(), model, meta);
  const std::string bytes = read_file(good);

  SECTION("bad magic") {
    std::string corrupt = bytes;
    corrupt[0] = 'X';
    write_text_file((dir / "magic.ckpt").string(), corrupt);
    CHECK_THROWS_WITH(load_checkpoint((dir / "magic.ckpt").string()),
                      Catch::Matchers::ContainsSubstring("bad magic"));
  }

  SECTION("truncation at several depths") {
    // Cutting inside the magic reads as a magic failure, not truncation.
    write_text_file((dir / "trunc_4.ckpt").string(), bytes.substr(0, 4));
    CHECK_THROWS_WITH(load_checkpoint((dir / "trunc_4.ckpt").string()),
                      Catch::Matchers::ContainsSubstring("bad magic"));
    for (std::size_t keep : {12ul, 40ul, bytes.size() - 9}) {
      const std::filesystem::path p = dir / ("trunc_" + std::to_string(keep) + ".ckpt");
      write_text_file(p.string(), bytes.substr(0, keep));
      CHECK_THROWS_WITH(load_checkpoint(p.string()),
                        Catch::Matchers::ContainsSubstring("truncated"));
    }
  }

  SECTION("version mismatch is explicit") {
    nlohmann::json header;
    header["format_version"] = kCheckpointVersion + 1;
    const std::string dump = header.dump();
    std::string fabricated(kCheckpointMagic, sizeof kCheckpointMagic);
    std::uint64_t len = dump.size();
    for (int i = 0; i < 8; ++i)
      fabricated.push_back(static_cast<char>((len >> (8 * i)) & 0xFF));
    fabricated += dump;
    write_text_file((dir / "version.ckpt").string(), fabricated);
    CHECK_THROWS_WITH(load_checkpoint((dir / "version.ckpt").string()),
                      Catch::Matchers::ContainsSubstring("format version"));
  }

  SECTION("missing file") {
    CHECK_THROWS_WITH(load_checkpoint((dir / "absent.ckpt").string()),
                      Catch::Matchers::ContainsSubstring("cannot open"));
  }
}

TEST_CASE("config parser fills defaults and rejects unknown keys") {
  SECTION("empty object keeps defaults") {
    AppConfig app = parse_config(nlohmann::json::object());
    CHECK(app.experiment.folds == 10);
    CHECK(app.experiment.epochs == 300);
    CHECK(app.experiment.arm == AugmentArm::procaug);
    CHECK(app.experiment.latent_sweep == std::vector<int>{8});
    CHECK(app.synthetic.n_theta == 16);
    CHECK(app.experiment.model.beta == Catch::Approx(8.5e-3));
  }

  SECTION("full document round trip") {
    nlohmann::json root = {
        {"synthetic",
         {{"n_theta", 8},
          {"n_len", 10},
          {"neck_radius", {0.4, 0.5}},
          {"sac_radius", {0.9, 1.1}},
          {"corpus_size", 12},
          {"seed", 3}}},
        {"model",
         {{"latent_dim", 4}, {"beta", 1e-3}, {"channels", {3, 4, 4, 4, 6}}, {"cheb_order", 3}}},
        {"experiment",
         {{"folds", 3},
          {"epochs", 5},
          {"arm", "rotation-only"},
          {"latent_sweep", {2, 4}},
          {"beta_sweep", {1e-3, 8.5e-3}},
          {"seed", 21},
          {"batch_size", 4},
          {"learning_rate", 5e-4}}}};
    AppConfig app = parse_config(root);
    CHECK(app.synthetic.n_theta == 8);
    CHECK(app.synthetic.neck_radius.lo == 0.4);
    CHECK(app.synthetic.neck_radius.hi == 0.5);
    CHECK(app.experiment.model.latent_dim == 4);
    CHECK(app.experiment.model.cheb_order == 3);
    CHECK(app.experiment.folds == 3);
    CHECK(app.experiment.arm == AugmentArm::rotation_only);
    CHECK(app.experiment.latent_sweep == std::vector<int>{2, 4});
    CHECK(app.experiment.beta_sweep == std::vector<double>{1e-3, 8.5e-3});
    CHECK(app.experiment.settings.batch_size == 4);
    CHECK(app.experiment.settings.learning_rate == 5e-4);
  }

  SECTION("unknown keys are named") {
    nlohmann::json root = {{"synthetic", {{"n_tehta", 8}}}};
    CHECK_THROWS_WITH(parse_config(root), Catch::Matchers::ContainsSubstring("n_tehta"));
    root = {{"model", {{"latent", 4}}}};
    CHECK_THROWS_WITH(parse_config(root), Catch::Matchers::ContainsSubstring("latent"));
    root = {{"experiment", {{"fold", 4}}}};
    CHECK_THROWS_WITH(parse_config(root), Catch::Matchers::ContainsSubstring("fold"));
    root = {{"stnhetic", nlohmann::json::object()}};
    CHECK_THROWS_WITH(parse_config(root), Catch::Matchers::ContainsSubstring("stnhetic"));
  }

  SECTION("malformed values are rejected") {
    CHECK_THROWS_AS(parse_config({{"experiment", {{"folds", 1}}}}), std::invalid_argument);
    CHECK_THROWS_AS(parse_config({{"experiment", {{"latent_sweep", nlohmann::json::array()}}}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(parse_config({{"experiment", {{"arm", "both"}}}}), std::invalid_argument);
    CHECK_THROWS_AS(parse_config({{"synthetic", {{"neck_radius", {0.4}}}}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(parse_config({{"synthetic", {{"neck_radius", 0.4}}}}),
                    std::invalid_argument);
  }

  SECTION("file loading reports parse failures") {
    const std::filesystem::path dir = scratch_dir();
    const std::filesystem::path bad = dir / "bad.json";
    write_text_file(bad.string(), "{ not json");
    CHECK_THROWS_AS(load_config(bad.string()), std::runtime_error);
    CHECK_THROWS_AS(load_config((dir / "missing.json").string()), std::runtime_error);

    const std::filesystem::path good = dir / "good.json";
    write_text_file(good.string(), R"({"experiment": {"folds": 4}})");
    CHECK(load_config(good.string()).experiment.folds == 4);
  }
}

TEST_CASE("csv writer is deterministic and strict") {
  CHECK(csv_double(1.0) == "1");
  CHECK(csv_double(0.1) == "0.10000000000000001");
  CHECK(csv_double(8.5e-3) == "0.0085000000000000006");

  CsvTable t;
  t.header = {"a", "b"};
  t.add_row({"1", "2"});
  t.add_row({csv_double(0.5), "x"});
  CHECK(t.str() == "a,b\n1,2\n0.5,x\n");

  CHECK_THROWS_AS(t.add_row({"only-one"}), std::invalid_argument);
  CHECK_THROWS_AS(t.add_row({"with,comma", "y"}), std::invalid_argument);
  CHECK_THROWS_AS(t.add_row({"with\nnewline", "y"}), std::invalid_argument);

  const std::filesystem::path dir = scratch_dir();
  write_csv((dir / "table.csv").string(), t);
  CHECK(read_file(dir / "table.csv") == t.str());

  Eigen::VectorXd v(3);
  v << 0.25, 1.0, -2.5;
  write_scalar_lines((dir / "scalars.txt").string(), v);
  CHECK(read_file(dir / "scalars.txt") == "0.25\n1\n-2.5\n");
}
