#pragma once

#include <Eigen/Core>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace meshvae {

/// Shortest round-trippable decimal form so reruns diff clean.
inline std::string csv_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> cells) {
    if (cells.size() != header.size())
      throw std::invalid_argument("csv: row width " + std::to_string(cells.size()) +
                                  " does not match header width " +
                                  std::to_string(header.size()));
    for (const std::string& c : cells)
      if (c.find_first_of(",\n\"") != std::string::npos)
        throw std::invalid_argument("csv: cell needs quoting, which this writer refuses: " + c);
    rows.push_back(std::move(cells));
  }

  std::string str() const {
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) out += ',';
      out += header[i];
    }
    out += '\n';
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out += ',';
        out += row[i];
      }
      out += '\n';
    }
    return out;
  }
};

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline void write_csv(const std::string& path, const CsvTable& table) {
  write_text_file(path, table.str());
}

/// One value per line; used for per-vertex distance sidecars.
inline void write_scalar_lines(const std::string& path, const Eigen::VectorXd& values) {
  std::string out;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    out += csv_double(values(i));
    out += '\n';
  }
  write_text_file(path, out);
}

}  // namespace meshvae
