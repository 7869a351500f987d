#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "subviews/composition.hpp"
#include "subviews/pipeline.hpp"

namespace subviews {

enum class SimSetting { normal, compositional };
enum class Correlation { within_group, among_group };

struct SimDesignSpec {
  std::string name = "custom";
  SimSetting setting = SimSetting::normal;
  Index n = 500;
  Index q = 5;
  std::vector<Index> group_sizes;
  std::vector<Index> true_ranks;
  double rho_x = 0.0;
  Correlation correlation = Correlation::among_group;
  std::vector<double> log_means;   // compositional only, length p
  double snr = 0.2;
  std::optional<double> noise_sd;  // fixed noise level instead of SNR calibration
  bool scale_coefficients = true;  // max |B*| = 1
  bool fixed_design = false;       // X and B* drawn once, E per replication
  bool union_baseline = false;     // response-wise union test in the same loop
  std::optional<double> xi;        // score tuning for this design, overrides the pipeline's
  std::uint64_t seed = 1;

  Index p() const;
  Index num_groups() const { return static_cast<Index>(group_sizes.size()); }
  void validate() const;  // ValidationError naming the offending field
};

std::vector<std::string> preset_names();
SimDesignSpec preset(const std::string& name);

using Rng = std::mt19937_64;

/// B*_k = J_k R_k' with standard normal factors; whole B* rescaled to max |entry| = 1
/// when spec.scale_coefficients.
std::vector<Matrix> gen_coefficients(const SimDesignSpec& spec, Rng& rng);

/// Rows i.i.d. N(0, Sigma) with AR(1) correlation rho^|i-j| within each group
/// (block diagonal) or across all p columns.
Matrix gen_normal_design(const SimDesignSpec& spec, Rng& rng);

/// Counts exp(N_p(mu, (rho^|i-j|))) normalized within each group.
SubCompositionalDataset gen_compositional(const SimDesignSpec& spec, Rng& rng);

/// Normal or compositional design as the setting asks, without intercept.
MultiViewDesign gen_design(const SimDesignSpec& spec, Rng& rng);

/// Pooled within-response sample sd of the linear predictor, divided by snr.
/// Each response column is centered first, so offsets between responses do
/// not count as signal.
double calibrate_noise(const Matrix& linear_pred, double snr);

struct SimInstance {
  MultiViewDesign design;
  std::vector<Matrix> b_star;
  Matrix noise;
  Matrix y;
  double sigma = 0.0;
};

/// Design and truth from the master seed (fixed design) or the replication
/// stream; noise always from the replication stream.
SimInstance generate_instance(const SimDesignSpec& spec, std::size_t rep);

struct ReplicationRecord {
  std::size_t rep = 0;
  bool ok = false;
  std::string failure;
  double sigma = NAN;
  double sigma_hat = NAN;
  double lambda = NAN;
  std::vector<double> p_multi;
  std::vector<int> reject_multi;
  std::vector<double> d1_diag;
  std::vector<double> pivotal;
  std::vector<double> df;
  std::vector<double> p_union;
  std::vector<int> reject_union;

  double sigma_ratio() const { return sigma_hat / sigma - 1.0; }
};

struct GroupRates {
  std::string name;
  bool active = false;
  double rate_multi = NAN;  // TP for active groups, FP otherwise
  double rate_union = NAN;
  double mean_d1 = NAN;
  double df = NAN;
  double mean_pivotal = NAN;
};

struct ReplicationSummary {
  SimDesignSpec spec;
  std::size_t requested = 0;
  std::size_t completed = 0;
  std::size_t failed = 0;
  double alpha = 0.05;
  std::vector<GroupRates> groups;
  double sigma_ratio_mean = NAN;
  double sigma_ratio_sd = NAN;
  double abs_sigma_ratio_mean = NAN;
  double abs_sigma_ratio_sd = NAN;
  std::vector<double> qq_sigma;                 // sqrt(2nq)(sigma_hat/sigma - 1)
  std::vector<std::vector<double>> qq_pivotal;  // per group
  std::vector<ReplicationRecord> records;
};

/// One replication: generate, tune, fit, score and test every group.
ReplicationRecord run_replication(const SimDesignSpec& spec, std::size_t rep,
                                  const PipelineConfig& config,
                                  const std::vector<ScoreOutcome>* scores = nullptr,
                                  const std::vector<ScoreOutcome>* univariate = nullptr);

/// Replications are independent; the aggregate does not depend on `exec`.
ReplicationSummary run_replications(const SimDesignSpec& spec, std::size_t reps,
                                    const PipelineConfig& config,
                                    Execution exec = Execution::parallel);

ReplicationSummary summarize(const SimDesignSpec& spec, double alpha,
                             std::vector<ReplicationRecord> records);

}  // namespace subviews
