#pragma once

#include <Eigen/Dense>

#include "ggfa/fit.hpp"
#include "ggfa/model.hpp"
#include "ggfa/types.hpp"

namespace ggfa {

// Gaussian factor model fitted to dummy-coded data under the same shared
// row-norm constraint. Rows of W_bar are the dimensionless loadings scaled by
// the communality, so every row norm is <= 1 and the implied covariance
//   Sigma = [I - diag(W_bar W_bar^T)] D + D^{1/2} W_bar W_bar^T D^{1/2},
// with D = diag(sigma_diag), reproduces sigma_diag on the diagonal exactly.
struct QuantModel {
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma_diag;
  Eigen::MatrixXd W_bar;

  int p() const { return static_cast<int>(mu.size()); }
  int p_z() const { return static_cast<int>(W_bar.cols()); }
  Eigen::MatrixXd implied_sigma() const;
};

// Reinterprets binary columns as real 0/1 columns; schema becomes
// all-continuous (continuous block first, then the former binary block).
// Requires a complete dataset.
Dataset quantify(const Dataset& data);

// Norm-constrained Gaussian ML fit on the dummy-coded data (the q = 0
// special case of fit()), repackaged with W_bar = sqrt(c^2/(1+c^2)) W_hat and
// sigma_diag = (1+c^2) psi.
QuantModel fit_quant(const Dataset& data, int p_z, const FitConfig& config = {});

// Rank reduction keeping the top-d singular components of W_bar. The implied
// covariance diagonal is unchanged by construction; off-diagonals shrink.
// d = p_z returns the model unchanged.
QuantModel reduce_dims(const QuantModel& model, int d);

// R^2 over the strict lower triangle: 1 - sum (r - r_hat)^2 / sum (r - rbar)^2
// with rbar the mean of the empirical lower-triangle entries. Throws
// NumericalError when all empirical correlations are equal.
double r_squared(const Eigen::MatrixXd& empirical_corr,
                 const Eigen::MatrixXd& model_corr);

Eigen::MatrixXd reproduced_corr(const QuantModel& model);
Eigen::MatrixXd reproduced_corr(const ModelParams& params);

// Gaussian log-likelihood of the (dummy-coded) rows under N(mu, implied Sigma).
double quant_log_likelihood(const Dataset& data, const QuantModel& model);

// Sample Pearson correlation matrix of a complete dataset, binary columns as
// 0/1 dummies. Throws DataError on zero-variance columns.
Eigen::MatrixXd empirical_corr(const Dataset& data);

}  // namespace ggfa
