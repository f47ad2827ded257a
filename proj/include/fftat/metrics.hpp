#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "fftat/common.hpp"

namespace fftat {

// Per-step training metrics, one JSON object per line. Numbers are printed
// with %.17g so an f64 run's log is bitwise reproducible.
class MetricsLog {
 public:
  // append = resume mode: earlier lines stay in place
  explicit MetricsLog(const std::string& path, bool append = false);

  void step_record(std::uint64_t step, double l_clc, double l_dis, double l_pat, double mi,
                   double total, double lr);

 private:
  std::ofstream out_;
  std::string path_;
};

// Periodic accuracy rows: step,split,accuracy.
class SummaryCsv {
 public:
  explicit SummaryCsv(const std::string& path, bool append = false);

  void row(std::uint64_t step, const std::string& split, double accuracy);

 private:
  std::ofstream out_;
  std::string path_;
};

// Graph matrix as CSV: p rows of p comma-separated entries, row-major,
// 6 significant digits.
void write_graph_csv(const std::string& path, const std::vector<double>& m, std::size_t p);

std::vector<double> read_graph_csv(const std::string& path, std::size_t& p_out);

// intensity grid over [0,1]; one text row per matrix row
std::string ascii_heatmap(const std::vector<double>& m, std::size_t p);

}  // namespace fftat
