// Command-line front end: corpus synthesis, training, evaluation, ablations,
// sweeps, latent-space tools, and the linear baseline. All subcommands honor
// --config/--seed/--out and write deterministic CSV/mesh artifacts.

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "meshvae/analysis.hpp"
#include "meshvae/checkpoint.hpp"
#include "meshvae/config.hpp"
#include "meshvae/csv.hpp"
#include "meshvae/experiment.hpp"
#include "meshvae/mesh.hpp"
#include "meshvae/model.hpp"
#include "meshvae/procrustes.hpp"
#include "meshvae/synthetic.hpp"
#include "meshvae/train.hpp"

namespace {

using namespace meshvae;

struct Options {
  std::string config_path;
  std::string out_dir = ".";
  std::string data_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string checkpoint_path;
  std::string format = "off";
  int mesh_index = 0;
  int mesh_a = 0;
  int mesh_b = 1;
  int steps = 10;
  int count = 32;
  std::vector<double> noise_scales = {0.25, 0.5, 0.75};
};

std::string zero_padded(const char* prefix, int i, const std::string& ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%03d.%s", prefix, i, ext.c_str());
  return buf;
}

std::filesystem::path out_path(const Options& opt, const std::string& name) {
  return std::filesystem::path(opt.out_dir) / name;
}

AppConfig resolve_config(const Options& opt) {
  AppConfig config;
  if (!opt.config_path.empty()) config = load_config(opt.config_path);
  if (opt.seed_given) {
    config.synthetic.seed = opt.seed;
    config.experiment.seed = opt.seed;
  }
  return config;
}

std::vector<Mesh> load_corpus_dir(const std::string& dir) {
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".off" || ext == ".obj") paths.push_back(entry.path());
  }
  if (paths.empty()) throw std::runtime_error("no .off/.obj meshes found in " + dir);
  std::sort(paths.begin(), paths.end());
  std::vector<Mesh> corpus;
  corpus.reserve(paths.size());
  for (const auto& p : paths) corpus.push_back(load_mesh(p.string()));
  validate_shared_topology(corpus);
  return corpus;
}

std::vector<Mesh> resolve_corpus(const Options& opt, const AppConfig& config) {
  if (!opt.data_dir.empty()) return load_corpus_dir(opt.data_dir);
  return generate_corpus(config.synthetic);
}

Model load_model_checked(const Options& opt, const std::vector<Mesh>& corpus) {
  if (opt.checkpoint_path.empty()) throw std::runtime_error("--checkpoint is required");
  Model model = load_checkpoint(opt.checkpoint_path).model;
  std::vector<Mesh> topo_check = {model.hierarchy.meshes.front()};
  topo_check.insert(topo_check.end(), corpus.begin(), corpus.end());
  validate_shared_topology(topo_check);
  return model;
}

CsvTable summary_table() {
  CsvTable t;
  t.header = {"arm",      "latent_dim", "beta",   "mean_l2", "std_l2",
              "mean_rcd", "std_rcd",    "mean_e", "std_e",   "mean_det_r_100",
              "std_det_r_100", "degenerate_det_folds"};
  return t;
}

void add_summary_row(CsvTable& t, const CellReport& cell) {
  t.add_row({to_string(cell.arm), std::to_string(cell.latent_dim), csv_double(cell.beta),
             csv_double(cell.mean.l2), csv_double(cell.stddev.l2), csv_double(cell.mean.rcd),
             csv_double(cell.stddev.rcd), csv_double(cell.mean.e_percent),
             csv_double(cell.stddev.e_percent), csv_double(cell.mean.det_r_100),
             csv_double(cell.stddev.det_r_100), std::to_string(cell.degenerate_det_folds)});
}

void write_report(const Options& opt, const ExperimentReport& report,
                  const std::string& summary_name, const std::string& cell_prefix) {
  CsvTable summary = summary_table();
  for (const CellReport& cell : report.cells) {
    write_csv(out_path(opt, cell_prefix + cell_csv_name(cell)).string(), cell_csv(cell));
    add_summary_row(summary, cell);
  }
  write_csv(out_path(opt, summary_name).string(), summary);
}

void cmd_gen_data(const Options& opt) {
  AppConfig config = resolve_config(opt);
  std::vector<Mesh> corpus = generate_corpus(config.synthetic);
  CsvTable manifest;
  manifest.header = {"id", "file", "vertices", "faces"};
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const std::string name = zero_padded("mesh_", static_cast<int>(i), opt.format);
    save_mesh(corpus[i], out_path(opt, name).string());
    manifest.add_row({std::to_string(i), name, std::to_string(corpus[i].num_vertices()),
                      std::to_string(corpus[i].num_faces())});
  }
  write_csv(out_path(opt, "corpus_manifest.csv").string(), manifest);
  std::cout << "wrote " << corpus.size() << " meshes to " << opt.out_dir << "\n";
}

void cmd_align_report(const Options& opt) {
  AppConfig config = resolve_config(opt);
  std::vector<Mesh> corpus = resolve_corpus(opt, config);
  const Mesh& reference = median_norm_member(corpus);
  CsvTable t;
  t.header = {"mesh_id", "l2_before", "l2_after", "chamfer_before", "chamfer_after"};
  for (const AlignmentRow& row : alignment_report(corpus, reference))
    t.add_row({std::to_string(row.mesh_id), csv_double(row.l2_before), csv_double(row.l2_after),
               csv_double(row.chamfer_before), csv_double(row.chamfer_after)});
  write_csv(out_path(opt, "alignment.csv").string(), t);
  std::cout << "wrote alignment.csv for " << corpus.size() << " meshes\n";
}

void cmd_train(const Options& opt) {
  AppConfig config = resolve_config(opt);
  std::vector<Mesh> corpus = resolve_corpus(opt, config);
  const ExperimentConfig& ec = config.experiment;

  Mesh tmpl = corpus_template(corpus);
  const int stages = static_cast<int>(ec.model.channels.size()) - 1;
  PoolingHierarchy hierarchy = build_hierarchy(tmpl, stages, ec.model.pooling_factor);

  AugmentPolicy policy;
  if (ec.arm != AugmentArm::none) policy = fit_policy(corpus, median_norm_member(corpus));

  Model model = build_model(ec.model, std::move(hierarchy), derive_seed(ec.seed, "init"));
  TrainSettings settings = ec.settings;
  settings.epochs = ec.epochs;
  std::vector<EpochRecord> log =
      train(model, corpus, {}, policy, ec.arm, settings, derive_seed(ec.seed, "train"));

  CsvTable t;
  t.header = {"epoch", "train_loss", "kl",    "vertex", "chamfer",
              "edge",  "normal",     "val_e", "val_rcd"};
  for (const EpochRecord& r : log)
    t.add_row({std::to_string(r.epoch), csv_double(r.train_loss), csv_double(r.kl),
               csv_double(r.vertex), csv_double(r.chamfer), csv_double(r.edge),
               csv_double(r.normal), csv_double(r.val_e), csv_double(r.val_rcd)});
  write_csv(out_path(opt, "training_log.csv").string(), t);

  CheckpointMeta meta;
  meta.seed = ec.seed;
  meta.epoch = ec.epochs;
  save_checkpoint(out_path(opt, "model.ckpt").string(), model, meta);
  std::cout << "trained " << ec.epochs << " epochs on " << corpus.size()
            << " meshes; wrote model.ckpt and training_log.csv\n";
}

void cmd_eval(const Options& opt) {
  AppConfig config = resolve_config(opt);
  std::vector<Mesh> corpus = resolve_corpus(opt, config);
  Model model = load_model_checked(opt, corpus);

  CsvTable t;
  t.header = {"mesh_id", "e_percent", "chamfer", "rcd", "kl", "l2"};
  double sum_e = 0, sum_ch = 0, sum_rcd = 0, sum_kl = 0, sum_l2 = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    MetricsReport rep = evaluate_mesh(model, corpus[i]);
    Eigen::MatrixXd recon = decode(model, encode(model, corpus[i].vertices).mu);
    const double l2 = metric_l2_rms(recon, corpus[i].vertices);
    t.add_row({std::to_string(i), csv_double(rep.e_percent), csv_double(rep.chamfer),
               csv_double(rep.rcd), csv_double(rep.kl), csv_double(l2)});
    write_scalar_lines(out_path(opt, zero_padded("rcd_", static_cast<int>(i), "txt")).string(),
                       rep.per_vertex);
    sum_e += rep.e_percent;
    sum_ch += rep.chamfer;
    sum_rcd += rep.rcd;
    sum_kl += rep.kl;
    sum_l2 += l2;
  }
  const double n = static_cast<double>(corpus.size());
  t.add_row({"mean", csv_double(sum_e / n), csv_double(sum_ch / n), csv_double(sum_rcd / n),
             csv_double(sum_kl / n), csv_double(sum_l2 / n)});
  write_csv(out_path(opt, "eval.csv").string(), t);

  double det = 0.0;
  bool degenerate = false;
  Eigen::MatrixXd latents = latent_matrix(model, corpus);
  try {
    det = correlation_det(latents).det_times_100;
  } catch (const std::runtime_error&) {
    degenerate = true;
  }
  CsvTable s;
  s.header = {"det_r_100", "det_degenerate", "mean_e", "mean_rcd"};
  s.add_row({csv_double(det), degenerate ? "1" : "0", csv_double(sum_e / n),
             csv_double(sum_rcd / n)});
  write_csv(out_path(opt, "eval_summary.csv").string(), s);

  CsvTable h;
  h.header = {"dim", "bin", "bin_left", "bin_width", "density", "ref_density"};
  std::vector<HistogramDim> hist = latent_histograms(latents, 20);
  for (std::size_t dim = 0; dim < hist.size(); ++dim)
    for (std::size_t b = 0; b < hist[dim].density.size(); ++b)
      h.add_row({std::to_string(dim), std::to_string(b), csv_double(hist[dim].bin_left[b]),
                 csv_double(hist[dim].bin_width), csv_double(hist[dim].density[b]),
                 csv_double(hist[dim].ref_density[b])});
  write_csv(out_path(opt, "latent_histograms.csv").string(), h);
  std::cout << "wrote eval.csv, eval_summary.csv, latent_histograms.csv, and "
            << corpus.size() << " rcd sidecars\n";
}

void cmd_ablate(const Options& opt) {
  AppConfig config = resolve_config(opt);
  std::vector<Mesh> corpus = resolve_corpus(opt, config);
  CsvTable summary = summary_table();
  for (AugmentArm arm : {AugmentArm::procaug, AugmentArm::scale_only, AugmentArm::rotation_only,
                         AugmentArm::none}) {
    ExperimentConfig ec = config.experiment;
    ec.arm = arm;
    ExperimentReport report = run_experiment(ec, corpus);
    for (const CellReport& cell : report.cells) {
      write_csv(out_path(opt, cell_csv_name(cell)).string(), cell_csv(cell));
      add_summary_row(summary, cell);
    }
    std::cout << "arm " << to_string(arm) << " done\n";
  }
  write_csv(out_path(opt, "ablation_summary.csv").string(), summary);
  std::cout << "wrote ablation_summary.csv\n";
}

void cmd_sweep(const Options& opt) {
  AppConfig config = resolve_config(opt);
  std::vector<Mesh> corpus = resolve_corpus(opt, config);
  ExperimentReport report = run_experiment(config.experiment, corpus);
  write_report(opt, report, "sweep_summary.csv", "");
  std::cout << "wrote sweep_summary.csv and " << report.cells.size() << " cell tables\n";
}

void cmd_rank_modes(const Options& opt) {
  AppConfig config = resolve_config(opt);
  std::vector<Mesh> corpus = resolve_corpus(opt, config);
  Model model = load_model_checked(opt, corpus);
  ModeRanking ranking = rank_modes(model, corpus);
  CsvTable t;
  t.header = {"rank", "mode", "cumulative_e", "cumulative_chamfer"};
  for (std::size_t r = 0; r < ranking.ranked.size(); ++r)
    t.add_row({std::to_string(r), std::to_string(ranking.ranked[r]),
               csv_double(ranking.cumulative_e[r]), csv_double(ranking.cumulative_chamfer[r])});
  write_csv(out_path(opt, "mode_ranking.csv").string(), t);
  std::cout << "wrote mode_ranking.csv\n";
}

void cmd_extrapolate(const Options& opt) {
  AppConfig config = resolve_config(opt);
  std::vector<Mesh> corpus = resolve_corpus(opt, config);
  Model model = load_model_checked(opt, corpus);
  if (opt.mesh_index < 0 || opt.mesh_index >= static_cast<int>(corpus.size()))
    throw std::runtime_error("--mesh-index out of range");
  const Mesh& mesh = corpus[static_cast<std::size_t>(opt.mesh_index)];

  CsvTable t;
  t.header = {"noise_scale", "sample", "rcd"};
  for (std::size_t si = 0; si < opt.noise_scales.size(); ++si) {
    const double s = opt.noise_scales[si];
    RandomStream rng(derive_seed(config.experiment.seed, "extrapolate", si));
    SampleSet set = extrapolate(model, mesh, s, opt.count, rng);
    for (int k = 0; k < opt.count; ++k) {
      char prefix[64];
      std::snprintf(prefix, sizeof prefix, "extrap_s%g_", s);
      const std::string name = zero_padded(prefix, k, opt.format);
      save_mesh(set.meshes[static_cast<std::size_t>(k)], out_path(opt, name).string());
      write_scalar_lines(
          out_path(opt, zero_padded((std::string(prefix) + "rcd_").c_str(), k, "txt")).string(),
          set.rcd_maps[static_cast<std::size_t>(k)]);
      t.add_row({csv_double(s), std::to_string(k), csv_double(set.rcd[static_cast<std::size_t>(k)])});
    }
  }
  write_csv(out_path(opt, "extrapolation.csv").string(), t);
  std::cout << "wrote extrapolation.csv and " << opt.noise_scales.size() * opt.count
            << " sample meshes\n";
}

void cmd_interpolate(const Options& opt) {
  AppConfig config = resolve_config(opt);
  std::vector<Mesh> corpus = resolve_corpus(opt, config);
  Model model = load_model_checked(opt, corpus);
  const int n = static_cast<int>(corpus.size());
  if (opt.mesh_a < 0 || opt.mesh_a >= n || opt.mesh_b < 0 || opt.mesh_b >= n)
    throw std::runtime_error("--mesh-a/--mesh-b out of range");
  const Mesh& a = corpus[static_cast<std::size_t>(opt.mesh_a)];
  const Mesh& b = corpus[static_cast<std::size_t>(opt.mesh_b)];
  std::vector<Mesh> steps = interpolate(model, a, b, opt.steps);
  CsvTable t;
  t.header = {"step", "t", "rcd_to_a", "rcd_to_b"};
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const std::string name = zero_padded("interp_", static_cast<int>(i), opt.format);
    save_mesh(steps[i], out_path(opt, name).string());
    t.add_row({std::to_string(i),
               csv_double(static_cast<double>(i) / static_cast<double>(opt.steps)),
               csv_double(metric_rcd(steps[i].vertices, a.vertices)),
               csv_double(metric_rcd(steps[i].vertices, b.vertices))});
  }
  write_csv(out_path(opt, "interpolation.csv").string(), t);
  std::cout << "wrote interpolation.csv and " << steps.size() << " meshes\n";
}

void cmd_pca_baseline(const Options& opt) {
  AppConfig config = resolve_config(opt);
  std::vector<Mesh> corpus = resolve_corpus(opt, config);
  ExperimentReport report = run_pca_baseline(config.experiment, corpus);
  write_report(opt, report, "pca_summary.csv", "pca_");
  std::cout << "wrote pca_summary.csv and " << report.cells.size() << " cell tables\n";
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  CLI::App app{"Graph-convolutional mesh autoencoder pipeline"};
  app.require_subcommand(1);

  app.add_option("--config", opt.config_path, "JSON configuration file");
  auto* seed_opt =
      app.add_option("--seed", opt.seed, "Master seed; overrides the config file seeds");
  app.add_option("--out", opt.out_dir, "Output directory, created if missing");
  app.add_option("--data", opt.data_dir,
                 "Directory of .off/.obj meshes; omitted means synthesize from config");

  auto add_sub = [&](const char* name, const char* desc) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->fallthrough();
    return sub;
  };

  CLI::App* gen = add_sub("gen-data", "Generate a synthetic corpus of capped-tube meshes");
  gen->add_option("--format", opt.format, "Mesh output format: off or obj")
      ->check(CLI::IsMember({"off", "obj"}));

  add_sub("align-report", "Per-mesh alignment error against the median-norm reference");

  add_sub("train", "Train one model on the full corpus and write a checkpoint");

  CLI::App* eval = add_sub("eval", "Reconstruction metrics for a trained checkpoint");
  eval->add_option("--checkpoint", opt.checkpoint_path, "Checkpoint file")->required();

  add_sub("ablate", "Run the four augmentation arms through k-fold experiments");
  add_sub("sweep", "Run the (latent, beta) sweep through k-fold experiments");

  CLI::App* rank = add_sub("rank-modes", "Greedy latent-mode importance ranking");
  rank->add_option("--checkpoint", opt.checkpoint_path, "Checkpoint file")->required();

  CLI::App* extrap = add_sub("extrapolate", "Sample around one mesh's latent encoding");
  extrap->add_option("--checkpoint", opt.checkpoint_path, "Checkpoint file")->required();
  extrap->add_option("--mesh-index", opt.mesh_index, "Corpus index of the seed mesh");
  extrap->add_option("--noise-scale", opt.noise_scales, "Noise scales to sweep");
  extrap->add_option("--count", opt.count, "Samples per noise scale");
  extrap->add_option("--format", opt.format, "Mesh output format: off or obj")
      ->check(CLI::IsMember({"off", "obj"}));

  CLI::App* interp = add_sub("interpolate", "Decode the latent line between two meshes");
  interp->add_option("--checkpoint", opt.checkpoint_path, "Checkpoint file")->required();
  interp->add_option("--mesh-a", opt.mesh_a, "Corpus index of the first endpoint");
  interp->add_option("--mesh-b", opt.mesh_b, "Corpus index of the second endpoint");
  interp->add_option("--steps", opt.steps, "Number of segments (emits steps+1 meshes)");
  interp->add_option("--format", opt.format, "Mesh output format: off or obj")
      ->check(CLI::IsMember({"off", "obj"}));

  add_sub("pca-baseline", "k-fold linear eigenbasis baseline over the latent sweep");

  CLI11_PARSE(app, argc, argv);
  opt.seed_given = seed_opt->count() > 0;

  try {
    std::filesystem::create_directories(opt.out_dir);
    if (app.got_subcommand("gen-data")) cmd_gen_data(opt);
    else if (app.got_subcommand("align-report")) cmd_align_report(opt);
    else if (app.got_subcommand("train")) cmd_train(opt);
    else if (app.got_subcommand("eval")) cmd_eval(opt);
    else if (app.got_subcommand("ablate")) cmd_ablate(opt);
    else if (app.got_subcommand("sweep")) cmd_sweep(opt);
    else if (app.got_subcommand("rank-modes")) cmd_rank_modes(opt);
    else if (app.got_subcommand("extrapolate")) cmd_extrapolate(opt);
    else if (app.got_subcommand("interpolate")) cmd_interpolate(opt);
    else if (app.got_subcommand("pca-baseline")) cmd_pca_baseline(opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
