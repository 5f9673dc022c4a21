#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ggfa/fit.hpp"
#include "ggfa/model.hpp"
#include "ggfa/rng.hpp"
#include "ggfa/types.hpp"

namespace ggfa {

// Synthetic-data protocol: latent Gaussian with a random correlation matrix
// (Gamma eigenvalues + Gram-Schmidt basis), designated columns dichotomized
// at uniform quantile thresholds, rejection filters on the result.
struct SynthSpec {
  int p_cont = 5;
  int p_bin = 5;
  int n = 1000;
  int n_datasets = 500;
  double gamma_shape = 1.0;
  double gamma_rate = 1.0;
  std::uint64_t seed = 0;
  // Acceptance requires max |corr(x,y)| > min_xy_corr AND
  // max |corr(y,y')| > min_yy_corr (each filter skipped when no such pair).
  double min_xy_corr = 0.5;
  double min_yy_corr = 0.5;
};

// Ground truth accompanying a generated dataset.
struct SynthTruth {
  Eigen::MatrixXd corr;        // correlation matrix of the latent Gaussian
  Eigen::VectorXd thresholds;  // quantile level u per binary column; P(y=1) = 1-u
};

// Random correlation matrix: eigenvalues ~ Gamma(shape, rate), eigenbasis by
// Gram-Schmidt of a standard-normal matrix, then standardized to unit
// diagonal. Redraws on near-zero eigenvalues or Gram-Schmidt breakdown,
// capped at 100 attempts.
Eigen::MatrixXd gen_correlation_matrix(int p, double gamma_shape, double gamma_rate,
                                       Rng& rng);

// One accepted dataset (or throws NumericalError with the last rejection
// reason after 1000 attempts). Each attempt draws a fresh correlation matrix,
// fresh thresholds, and fresh samples.
Dataset gen_mixed_dataset(const SynthSpec& spec, Rng& rng, SynthTruth* truth = nullptr);

// Correlation-reproducibility experiment: per accepted dataset and per latent
// dimension, fit the proposed model and the dummy-coded baseline, plus the
// rank-reduced variant of a full-dimension baseline fit; score each with the
// lower-triangle R^2 against the empirical correlations.
struct ReproSummaryRow {
  int dataset = 0;
  std::string model;  // "proposed" | "quant" | "quant_reduced"
  int p_z = 0;
  double r2 = 0.0;
};

struct ReproPairRow {
  int dataset = 0;
  std::string model;
  int p_z = 0;
  int i = 0, j = 0;        // column indices, i > j
  std::string pair_type;   // cont-cont | cont-bin | bin-bin
  std::string var_bucket;  // binary minority-share bucket: low | mid | high | na
  double r_emp = 0.0;
  double r_model = 0.0;
};

struct ReproReport {
  std::vector<ReproSummaryRow> summary;
  std::vector<ReproPairRow> pairs;
  int n_accepted = 0;
  std::vector<std::string> failures;
};

// full_minus_one selects whether the "full" baseline fit used for reduction
// has p_cont + p_bin latent dimensions or one fewer.
ReproReport run_reproducibility_experiment(const SynthSpec& spec,
                                           const std::vector<int>& p_z_list,
                                           const FitConfig& fit_config,
                                           bool full_minus_one = false);

// Sampling-distribution experiment: repeatedly sample from a known canonical
// truth at several sample sizes, fit, canonicalize, and record the parameter
// vectors (column order and sign pinned by the canonical form).
struct SamplingDistSpec {
  ModelParams truth;
  std::vector<int> sizes{1000, 3000, 9000};
  int replicates = 1000;
  std::uint64_t seed = 0;
  int n_threads = 1;
};

struct SamplingDistResult {
  std::vector<std::string> param_names;
  Eigen::VectorXd truth_values;
  std::vector<int> sizes;
  // One matrix per size: replicates x #params; failed replicates are NaN rows.
  std::vector<Eigen::MatrixXd> estimates;
  std::vector<std::string> failures;
};

SamplingDistResult run_sampling_distribution(const SamplingDistSpec& spec,
                                             const FitConfig& fit_config);

// Canonical-parameter vector layout used by the sampling-distribution arrays:
// mu_x, psi, b, c, W_hat row-major, G_hat row-major.
Eigen::VectorXd flatten_params(const ModelParams& params);
std::vector<std::string> param_names(const ModelParams& params);

}  // namespace ggfa
