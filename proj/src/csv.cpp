#include "dmmd/csv.hpp"

#include "dmmd/error.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dmmd {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& s, long line) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw FormatError("bad number '" + s + "' on CSV line " + std::to_string(line));
  return v;
}

} // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_particles(std::ostream& out, const ParticleSet& x) {
  out << "particle_id";
  for (Eigen::Index k = 0; k < x.cols(); ++k) out << ",dim_" << k;
  out << '\n';
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out << i;
    for (Eigen::Index k = 0; k < x.cols(); ++k) out << ',' << format_double(x(i, k));
    out << '\n';
  }
}

void write_particles(const std::string& path, const ParticleSet& x) {
  auto out = open_out(path);
  write_particles(out, x);
}

ParticleSet read_particles(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty particle CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  if (header.empty() || header[0] != "particle_id") throw FormatError("particle CSV header must start with particle_id");
  const auto dim = static_cast<Eigen::Index>(header.size() - 1);
  for (Eigen::Index k = 0; k < dim; ++k)
    if (header[static_cast<std::size_t>(k + 1)] != "dim_" + std::to_string(k))
      throw FormatError("unexpected particle CSV column '" + header[static_cast<std::size_t>(k + 1)] + "'");
  std::vector<double> values;
  long row = 0;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (static_cast<Eigen::Index>(cells.size()) != dim + 1)
      throw FormatError("wrong number of columns on CSV line " + std::to_string(lineno));
    for (Eigen::Index k = 0; k < dim; ++k)
      values.push_back(parse_double(cells[static_cast<std::size_t>(k + 1)], lineno));
    ++row;
  }
  ParticleSet x(row, dim);
  for (long i = 0; i < row; ++i)
    for (Eigen::Index k = 0; k < dim; ++k) x(i, k) = values[static_cast<std::size_t>(i * dim + k)];
  return x;
}

ParticleSet read_particles(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  return read_particles(in);
}

void write_train_log(const std::string& path, const std::vector<TrainLogRow>& rows) {
  auto out = open_out(path);
  out << "iter,mean_loss,mean_mmd2,mean_grad_penalty,mean_l2\n";
  for (const auto& r : rows)
    out << r.iter << ',' << format_double(r.mean_loss) << ',' << format_double(r.mean_divergence)
        << ',' << format_double(r.mean_grad_penalty) << ',' << format_double(r.mean_l2) << '\n';
}

void write_metrics(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "run_id,metric,value,stderr\n";
  for (const auto& r : rows)
    out << r.run_id << ',' << r.metric << ',' << format_double(r.value) << ','
        << format_double(r.std_error) << '\n';
}

void write_metrics(const std::string& path, const std::vector<MetricRow>& rows) {
  auto out = open_out(path);
  write_metrics(out, rows);
}

void write_bandwidth_table(std::ostream& out, const std::vector<BandwidthRow>& rows) {
  out << "alpha_star,mu_norm,sigma,d\n";
  for (const auto& r : rows)
    out << format_double(r.alpha_star) << ',' << format_double(r.mu_norm) << ','
        << format_double(r.sigma) << ',' << r.d << '\n';
}

void write_mean_flow(std::ostream& out, const MeanFlowResult& result, MeanFlowMode mode) {
  out << "step,mu_norm,alpha_t,mode\n";
  for (std::size_t i = 0; i < result.mu_norm.size(); ++i) {
    out << i << ',' << format_double(result.mu_norm[i]) << ',';
    if (i > 0) out << format_double(result.alpha[i - 1]);
    out << ',' << to_string(mode) << '\n';
  }
}

} // namespace dmmd
