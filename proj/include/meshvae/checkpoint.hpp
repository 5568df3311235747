#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "meshvae/mesh.hpp"
#include "meshvae/model.hpp"
#include "meshvae/pooling.hpp"
#include "meshvae/sparse.hpp"
#include "meshvae/spectral.hpp"

namespace meshvae {

/// Checkpoint layout, version 1:
///   bytes 0..7   magic "MVAECKPT"
///   bytes 8..15  little-endian uint64: header length H in bytes
///   bytes 16..16+H-1  JSON header (format_version, config, seed, epoch,
///                     hierarchy and tensor manifests with payload offsets)
///   remainder    little-endian float64 payload; face indices and sparse
///                triplets are stored as exact integral doubles
inline constexpr char kCheckpointMagic[8] = {'M', 'V', 'A', 'E', 'C', 'K', 'P', 'T'};
inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint64_t seed = 0;
  int epoch = 0;
};

namespace detail {

inline void append_f64(std::vector<double>& payload, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) payload.push_back(m(i, j));
}

inline nlohmann::json mesh_manifest(const Mesh& mesh, std::vector<double>& payload) {
  nlohmann::json j;
  j["vertices"] = mesh.num_vertices();
  j["faces"] = mesh.num_faces();
  j["offset"] = payload.size();
  append_f64(payload, mesh.vertices);
  for (int f = 0; f < mesh.num_faces(); ++f)
    for (int k = 0; k < 3; ++k) payload.push_back(static_cast<double>(mesh.faces(f, k)));
  return j;
}

inline nlohmann::json sparse_manifest(const SparseMatrix& m, std::vector<double>& payload) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["nnz"] = m.nnz();
  j["offset"] = payload.size();
  for (const Triplet& t : m.entries()) {
    payload.push_back(static_cast<double>(t.row));
    payload.push_back(static_cast<double>(t.col));
    payload.push_back(t.value);
  }
  return j;
}

class PayloadReader {
 public:
  PayloadReader(const std::vector<double>& data, std::size_t header_end)
      : data_(data), header_end_(header_end) {}

  Eigen::MatrixXd matrix(std::size_t offset, Eigen::Index rows, Eigen::Index cols) const {
    check(offset, static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
    Eigen::MatrixXd m(rows, cols);
    std::size_t p = offset;
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = data_[p++];
    return m;
  }

  Mesh mesh(const nlohmann::json& j) const {
    const auto nv = j.at("vertices").get<Eigen::Index>();
    const auto nf = j.at("faces").get<Eigen::Index>();
    const auto offset = j.at("offset").get<std::size_t>();
    check(offset, static_cast<std::size_t>(nv) * 3 + static_cast<std::size_t>(nf) * 3);
    Mesh m;
    m.vertices = matrix(offset, nv, 3);
    m.faces.resize(nf, 3);
    std::size_t p = offset + static_cast<std::size_t>(nv) * 3;
    for (Eigen::Index f = 0; f < nf; ++f)
      for (int k = 0; k < 3; ++k) m.faces(f, k) = static_cast<int>(data_[p++]);
    return m;
  }

  SparseMatrix sparse(const nlohmann::json& j) const {
    const auto rows = j.at("rows").get<int>();
    const auto cols = j.at("cols").get<int>();
    const auto nnz = j.at("nnz").get<std::size_t>();
    const auto offset = j.at("offset").get<std::size_t>();
    check(offset, nnz * 3);
    std::vector<Triplet> tr;
    tr.reserve(nnz);
    std::size_t p = offset;
    for (std::size_t e = 0; e < nnz; ++e) {
      const int r = static_cast<int>(data_[p]);
      const int c = static_cast<int>(data_[p + 1]);
      tr.push_back({r, c, data_[p + 2]});
      p += 3;
    }
    return SparseMatrix(rows, cols, std::move(tr));
  }

 private:
  void check(std::size_t offset, std::size_t count) const {
    if (offset + count > data_.size())
      throw std::runtime_error(
          "checkpoint: payload segment out of range at byte offset " +
          std::to_string(header_end_ + offset * sizeof(double)));
  }

  const std::vector<double>& data_;
  std::size_t header_end_;
};

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Model& model,
                            const CheckpointMeta& meta) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["seed"] = meta.seed;
  header["epoch"] = meta.epoch;

  const ModelConfig& c = model.config;
  header["config"] = {
      {"latent_dim", c.latent_dim},
      {"beta", c.beta},
      {"cheb_order", c.cheb_order},
      {"channels", c.channels},
      {"pooling_factor", c.pooling_factor},
      {"hidden_dense_width", c.hidden_dense_width},
      {"alpha_vertex", c.alpha_vertex},
      {"alpha_chamfer", c.alpha_chamfer},
      {"alpha_edge", c.alpha_edge},
      {"alpha_normal", c.alpha_normal},
      {"cheb_bias", c.cheb_bias},
      {"signed_normal_loss", c.signed_normal_loss},
  };

  std::vector<double> payload;
  nlohmann::json hier;
  hier["factor"] = model.hierarchy.factor;
  hier["meshes"] = nlohmann::json::array();
  for (const Mesh& m : model.hierarchy.meshes)
    hier["meshes"].push_back(detail::mesh_manifest(m, payload));
  hier["q_down"] = nlohmann::json::array();
  hier["q_up"] = nlohmann::json::array();
  for (const PoolingLevel& level : model.hierarchy.levels) {
    hier["q_down"].push_back(detail::sparse_manifest(level.q_down, payload));
    hier["q_up"].push_back(detail::sparse_manifest(level.q_up, payload));
  }
  header["hierarchy"] = std::move(hier);

  nlohmann::json tensors = nlohmann::json::array();
  model.params.visit([&](const std::string& name, const Eigen::MatrixXd& t) {
    tensors.push_back({{"name", name},
                       {"rows", t.rows()},
                       {"cols", t.cols()},
                       {"offset", payload.size()}});
    detail::append_f64(payload, t);
  });
  header["tensors"] = std::move(tensors);

  const std::string header_str = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out.write(kCheckpointMagic, 8);
  const std::uint64_t hlen = header_str.size();
  char lenbuf[8];
  for (int i = 0; i < 8; ++i) lenbuf[i] = static_cast<char>((hlen >> (8 * i)) & 0xFF);
  out.write(lenbuf, 8);
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (double value : payload) {
    char buf[8];
    std::memcpy(buf, &value, 8);
    out.write(buf, 8);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

struct LoadedCheckpoint {
  Model model;
  CheckpointMeta meta;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic at byte offset 0");
  char lenbuf[8];
  if (!in.read(lenbuf, 8))
    throw std::runtime_error("checkpoint: truncated header length at byte offset 8");
  std::uint64_t hlen = 0;
  for (int i = 0; i < 8; ++i)
    hlen |= static_cast<std::uint64_t>(static_cast<unsigned char>(lenbuf[i])) << (8 * i);
  std::string header_str(hlen, '\0');
  if (!in.read(header_str.data(), static_cast<std::streamsize>(hlen)))
    throw std::runtime_error("checkpoint: truncated header at byte offset 16");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("checkpoint: header parse error at byte offset " +
                             std::to_string(16 + e.byte) + ": " + e.what());
  }
  const int version = header.at("format_version").get<int>();
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: format version " + std::to_string(version) +
                             " is not supported (expected " +
                             std::to_string(kCheckpointVersion) + ")");

  std::vector<double> payload;
  {
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (raw.size() % 8 != 0)
      throw std::runtime_error("checkpoint: payload truncated at byte offset " +
                               std::to_string(16 + hlen + raw.size()));
    payload.resize(raw.size() / 8);
    std::memcpy(payload.data(), raw.data(), raw.size());
  }
  detail::PayloadReader reader(payload, 16 + hlen);

  LoadedCheckpoint result;
  result.meta.seed = header.at("seed").get<std::uint64_t>();
  result.meta.epoch = header.at("epoch").get<int>();

  const nlohmann::json& jc = header.at("config");
  ModelConfig config;
  config.latent_dim = jc.at("latent_dim").get<int>();
  config.beta = jc.at("beta").get<double>();
  config.cheb_order = jc.at("cheb_order").get<int>();
  config.channels = jc.at("channels").get<std::vector<int>>();
  config.pooling_factor = jc.at("pooling_factor").get<double>();
  config.hidden_dense_width = jc.at("hidden_dense_width").get<int>();
  config.alpha_vertex = jc.at("alpha_vertex").get<double>();
  config.alpha_chamfer = jc.at("alpha_chamfer").get<double>();
  config.alpha_edge = jc.at("alpha_edge").get<double>();
  config.alpha_normal = jc.at("alpha_normal").get<double>();
  config.cheb_bias = jc.at("cheb_bias").get<bool>();
  config.signed_normal_loss = jc.at("signed_normal_loss").get<bool>();

  const nlohmann::json& jh = header.at("hierarchy");
  PoolingHierarchy hierarchy;
  hierarchy.factor = jh.at("factor").get<double>();
  for (const nlohmann::json& jm : jh.at("meshes")) hierarchy.meshes.push_back(reader.mesh(jm));
  const auto& jqd = jh.at("q_down");
  const auto& jqu = jh.at("q_up");
  if (jqd.size() != jqu.size() || jqd.size() + 1 != jh.at("meshes").size())
    throw std::runtime_error("checkpoint: inconsistent hierarchy manifest");
  for (std::size_t l = 0; l < jqd.size(); ++l) {
    PoolingLevel level;
    level.mesh_fine = hierarchy.meshes[l];
    level.mesh_coarse = hierarchy.meshes[l + 1];
    level.q_down = reader.sparse(jqd[l]);
    level.q_up = reader.sparse(jqu[l]);
    hierarchy.levels.push_back(std::move(level));
  }
  // Laplacians and spectral bounds are deterministic functions of the
  // meshes; recompute instead of storing.
  for (const Mesh& m : hierarchy.meshes) {
    SparseMatrix lap = normalized_laplacian(build_adjacency(m));
    LambdaMaxResult lm = estimate_lambda_max(lap);
    hierarchy.scaled_laplacians.push_back(scale_laplacian(lap, lm.converged ? lm.value : 2.0));
    hierarchy.lambda_max.push_back(lm.converged ? lm.value : 2.0);
    hierarchy.lambda_converged.push_back(lm.converged);
  }

  result.model = build_model(config, std::move(hierarchy), result.meta.seed);
  std::size_t tensor_idx = 0;
  const nlohmann::json& jt = header.at("tensors");
  result.model.params.visit([&](const std::string& name, Eigen::MatrixXd& t) {
    if (tensor_idx >= jt.size())
      throw std::runtime_error("checkpoint: tensor manifest too short (missing " + name + ")");
    const nlohmann::json& entry = jt[tensor_idx];
    if (entry.at("name").get<std::string>() != name)
      throw std::runtime_error("checkpoint: tensor order mismatch at '" + name + "'");
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    if (rows != t.rows() || cols != t.cols())
      throw std::runtime_error("checkpoint: tensor shape mismatch at '" + name + "'");
    t = reader.matrix(entry.at("offset").get<std::size_t>(), rows, cols);
    ++tensor_idx;
  });
  if (tensor_idx != jt.size())
    throw std::runtime_error("checkpoint: tensor manifest has extra entries");
  return result;
}

}  // namespace meshvae
