#pragma once

#include <Eigen/Dense>

#include "ggfa/model.hpp"

namespace ggfa {

// Model in its canonical gauge: M^T M diagonal with descending eigenvalues
// omega_sq and nonnegative column sums of M.
struct CanonicalModel {
  ModelParams params;
  Eigen::VectorXd omega_sq;   // eigenvalues of M^T M, descending
  Eigen::VectorXd P;          // contribution ratios
  Eigen::VectorXd C;          // cumulative contribution ratios
  Eigen::VectorXd h;          // communalities, one per continuous feature
  Eigen::MatrixXd rotation;   // orthogonal matrix applied to the loadings
  bool unique = true;         // false when a degeneracy tie-break fired
};

// Rotates the loadings into the canonical gauge: eigendecompose M^T M, sort
// eigenpairs descending, flip each eigenvector so the corresponding column
// sum of M R is nonnegative. Near-degenerate eigenvalues (gap < 1e-8 * the
// largest) and exactly-zero column sums are resolved deterministically and
// flagged via `unique = false`. Idempotent; preserves M M^T and hence the
// likelihood.
CanonicalModel canonicalize(const ModelParams& params);

// P_s = omega_s^2 / sum_t omega_t^2 and its cumulative sums. Throws
// NumericalError when all eigenvalues vanish.
void contribution_ratios(const Eigen::VectorXd& omega_sq, Eigen::VectorXd* P,
                         Eigen::VectorXd* C);

// Shared communality sqrt(c^2 / (1 + c^2)) for every continuous feature.
Eigen::VectorXd communalities(const ModelParams& params);

// General per-row form for loadings without the shared-norm constraint:
// h = r / sqrt(1 + r^2) for a dimensionless row norm r.
double communality_from_row_norm(double row_norm);

// Zero-noise projection limit of the factor score (continuous-only models):
//   m = mu_z + (W_hat^T W_hat)^{-1} W_hat^T diag(Sigma_x)^{-1/2} (x - mu_x).
// Requires q = 0; throws NumericalError when W_hat is rank deficient.
Eigen::VectorXd pca_limit_scores(const ModelParams& params, const Eigen::VectorXd& x);

struct IdentifiabilityReport {
  bool latent_dim_ok = false;      // p_z <= p_x + q
  bool equal_row_norms_ok = false; // diag(M M^T) = c^2
  bool mtm_diagonal_ok = false;
  bool descending_ok = false;
  bool nondegenerate_ok = false;   // eigenvalues nonzero with clear gaps
  bool column_signs_ok = false;    // column sums of M >= -1e-9
  bool rank_check_applicable = false;  // p_z < p_x + q
  double smallest_eig = 0.0;           // of M M^T - c^2 I
  bool rank_check_ok = false;          // smallest eig = -c^2

  bool all_ok() const {
    return latent_dim_ok && equal_row_norms_ok && mtm_diagonal_ok &&
           descending_ok && nondegenerate_ok && column_signs_ok &&
           (!rank_check_applicable || rank_check_ok);
  }
};

// Checks every identifiability condition on (presumably canonical) params,
// plus the rank identity: when p_z < p_x + q the smallest eigenvalue of
// M M^T - c^2 I must equal -c^2. Report only, never throws on violations.
IdentifiabilityReport verify_identifiability_conditions(const ModelParams& params);

}  // namespace ggfa
