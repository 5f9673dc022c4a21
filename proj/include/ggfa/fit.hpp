#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ggfa/model.hpp"
#include "ggfa/types.hpp"

namespace ggfa {

// Unconstrained parameterization the optimizer works in:
//   psi = exp(log_psi), c = exp(rho),
//   W_hat rows = V_w rows / their norms, G_hat rows = V_g rows / their norms.
// Flattened coordinate order: mu_x, log_psi, b, rho, V_w (row-major),
// V_g (row-major).
struct FreeParams {
  Eigen::VectorXd mu_x;
  Eigen::VectorXd log_psi;
  Eigen::VectorXd b;
  double rho = 0.0;
  Eigen::MatrixXd V_w;
  Eigen::MatrixXd V_g;

  int p_x() const { return static_cast<int>(mu_x.size()); }
  int q() const { return static_cast<int>(b.size()); }
  int p_z() const {
    return static_cast<int>(V_w.rows() > 0 ? V_w.cols() : V_g.cols());
  }
  int size() const { return 2 * p_x() + q() + 1 + (p_x() + q()) * p_z(); }

  Eigen::VectorXd flatten() const;
  static FreeParams unflatten(const Eigen::VectorXd& theta, int p_x, int q, int p_z);

  // Pure mapping to the constrained parameters. Throws NumericalError when a
  // V row norm falls below 1e-8 (direction undefined).
  ModelParams to_model() const;

  // Same mapping with log_psi clamped from below at `log_psi_floor`
  // (elementwise); sets *floor_hit when any coordinate was clamped.
  ModelParams to_model_floored(const Eigen::VectorXd& log_psi_floor,
                               bool* floor_hit = nullptr) const;
};

struct FitConfig {
  int n_restarts = 100;
  std::uint64_t seed = 0;
  int max_iters = 2000;
  double grad_tol = 1e-6;
  double rel_ll_tol = 1e-9;
  double init_scale = 0.5;
  int n_threads = 1;
};

struct FitResult {
  ModelParams params;
  double log_lik = 0.0;
  double bic = 0.0;
  int n_params = 0;
  Eigen::VectorXd restart_logliks;
  int best_restart = 0;
  int iterations = 0;
  bool converged = false;
  bool psi_floor_hit = false;
  std::vector<double> ll_trace;  // accepted-step log-likelihoods, best restart
};

// Total log-likelihood: log_joint_observed over complete rows and
// log_marginal_partial over rows with missing cells, compensated summation in
// input order. Reference implementation; fit() uses a batched equivalent.
double log_likelihood(const Dataset& data, const ModelParams& params);

// Gradient of log_likelihood(data, free.to_model()) with respect to every
// FreeParams coordinate (flattened order), propagated through the row
// normalization and the exp reparameterizations.
Eigen::VectorXd grad_log_likelihood(const Dataset& data, const FreeParams& free);

// Multi-start norm-constrained maximum likelihood. Restart r draws its
// initial point from seed^r; optimization is limited-memory quasi-Newton with
// a backtracking line search (monotone ascent). The returned parameters are
// NOT canonicalized. Deterministic given (config.seed, n_restarts), ties
// broken by lowest restart index.
FitResult fit(const Dataset& data, int p_z, const FitConfig& config = {});

double bic(double log_lik, int n_params, int n_rows);

// Free-parameter count used in the BIC: mu_x and psi (2 p_x), b (q), c (1),
// loading entries (p_x+q) p_z minus one norm constraint per row minus the
// p_z(p_z-1)/2 rotational gauge.
int count_free_params(int p_x, int q, int p_z);

struct BicScanRow {
  int p_z = 0;
  double log_lik = 0.0;
  double bic = 0.0;
  bool ok = false;
  std::string error;
};

struct BicScanResult {
  std::vector<BicScanRow> rows;
  int best_p_z = 0;  // argmin BIC over successful rows, ties to smaller p_z
};

BicScanResult bic_scan(const Dataset& data, int min_p_z, int max_p_z,
                       const FitConfig& config = {});

}  // namespace ggfa
