#include "fftat/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace fftat {

namespace {

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

MetricsLog::MetricsLog(const std::string& path, bool append)
    : out_(path, append ? std::ios::app : std::ios::out), path_(path) {
  check(out_.good(), "cannot open metrics log '", path, "' for writing");
}

void MetricsLog::step_record(std::uint64_t step, double l_clc, double l_dis, double l_pat,
                             double mi, double total, double lr) {
  out_ << "{\"step\":" << step << ",\"l_clc\":" << g17(l_clc) << ",\"l_dis\":" << g17(l_dis)
       << ",\"l_pat\":" << g17(l_pat) << ",\"mi\":" << g17(mi) << ",\"total\":" << g17(total)
       << ",\"lr\":" << g17(lr) << "}\n";
  out_.flush();
  check(out_.good(), "write failed on metrics log '", path_, "'");
}

SummaryCsv::SummaryCsv(const std::string& path, bool append)
    : out_(path, append ? std::ios::app : std::ios::out), path_(path) {
  check(out_.good(), "cannot open summary '", path, "' for writing");
  if (!append) out_ << "step,split,accuracy\n";
}

void SummaryCsv::row(std::uint64_t step, const std::string& split, double accuracy) {
  out_ << step << "," << split << "," << g17(accuracy) << "\n";
  out_.flush();
  check(out_.good(), "write failed on summary '", path_, "'");
}

void write_graph_csv(const std::string& path, const std::vector<double>& m, std::size_t p) {
  check(m.size() == p * p, "graph csv: ", m.size(), " values for a ", p, "x", p, " matrix");
  std::ofstream out(path);
  check(out.good(), "cannot open graph csv '", path, "' for writing");
  char buf[64];
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      std::snprintf(buf, sizeof(buf), "%.6g", m[i * p + j]);
      out << buf << (j + 1 < p ? "," : "\n");
    }
  }
  check(out.good(), "write failed on graph csv '", path, "'");
}

std::vector<double> read_graph_csv(const std::string& path, std::size_t& p_out) {
  std::ifstream in(path);
  check(in.good(), "cannot open graph csv '", path, "'");
  std::vector<double> vals;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::size_t c = 0;
    while (std::getline(ls, cell, ',')) {
      try {
        vals.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error(strcat("'", path, "': bad number '", cell, "'"));
      }
      ++c;
    }
    if (rows == 0) cols = c;
    check(c == cols, "'", path, "': ragged row ", rows);
    ++rows;
  }
  check(rows == cols && rows > 0, "'", path, "': want a square matrix, got ", rows, "x", cols);
  p_out = rows;
  return vals;
}

std::string ascii_heatmap(const std::vector<double>& m, std::size_t p) {
  check(m.size() == p * p, "heatmap: ", m.size(), " values for a ", p, "x", p, " matrix");
  static const char ramp[] = " .:-=+*#%@";  // 10 levels over [0,1]
  std::string out;
  out.reserve(p * (p + 1));
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      double v = m[i * p + j];
      int idx = int(v * 10.0);
      if (idx < 0) idx = 0;
      if (idx > 9) idx = 9;
      out.push_back(ramp[idx]);
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace fftat
