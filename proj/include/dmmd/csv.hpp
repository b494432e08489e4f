#pragma once

#include "dmmd/gaussian.hpp"
#include "dmmd/training.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace dmmd {

/// Shortest text that round-trips a double exactly.
std::string format_double(double v);

/// particle_id,dim_0,...,dim_{d-1}
void write_particles(std::ostream& out, const ParticleSet& x);
void write_particles(const std::string& path, const ParticleSet& x);
ParticleSet read_particles(std::istream& in);
ParticleSet read_particles(const std::string& path);

/// iter,mean_loss,mean_mmd2,mean_grad_penalty,mean_l2
void write_train_log(const std::string& path, const std::vector<TrainLogRow>& rows);

struct MetricRow {
  std::string run_id;
  std::string metric;
  double value = 0.0;
  double std_error = 0.0;
};

/// run_id,metric,value,stderr
void write_metrics(std::ostream& out, const std::vector<MetricRow>& rows);
void write_metrics(const std::string& path, const std::vector<MetricRow>& rows);

struct BandwidthRow {
  double alpha_star;
  double mu_norm;
  double sigma;
  int d;
};

/// alpha_star,mu_norm,sigma,d
void write_bandwidth_table(std::ostream& out, const std::vector<BandwidthRow>& rows);

/// step,mu_norm,alpha_t,mode (alpha_t is empty on the initial row)
void write_mean_flow(std::ostream& out, const MeanFlowResult& result, MeanFlowMode mode);

} // namespace dmmd
