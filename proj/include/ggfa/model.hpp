#pragma once

#include <Eigen/Dense>

#include "ggfa/types.hpp"

namespace ggfa {

// Full parameter set of the mixed continuous/binary factor model.
//
// Stored parameters: mu_x, psi (diagonal of the unique variance), b (binary
// bias), c (shared row norm of the dimensionless loadings), and the
// row-normalized loading matrices W_hat (p_x x p_z) and G_hat (q x p_z).
// Everything else is derived:
//   W    = Psi^{1/2} * c * W_hat          (continuous loadings)
//   G    = c * G_hat                      (binary loadings)
//   M    = c * [W_hat; G_hat]             (combined dimensionless loadings)
//   mu_z = -1/2 * sum_j g_j               (latent mean; gauge Sigma_z = I)
//   Sigma_x = Psi + W W^T
struct ModelParams {
  Eigen::VectorXd mu_x;
  Eigen::VectorXd psi;
  Eigen::VectorXd b;
  double c = 0.0;
  Eigen::MatrixXd W_hat;
  Eigen::MatrixXd G_hat;

  int p_x() const { return static_cast<int>(mu_x.size()); }
  int q() const { return static_cast<int>(b.size()); }
  int p_z() const {
    return static_cast<int>(W_hat.rows() > 0 ? W_hat.cols() : G_hat.cols());
  }

  Eigen::MatrixXd W() const;
  Eigen::MatrixXd G() const;
  Eigen::MatrixXd M() const;  // (p_x+q) x p_z
  Eigen::VectorXd mu_z() const;
  Eigen::MatrixXd sigma_x() const;

  // Shape coherence, unit row norms (1e-10), psi > 0, c >= 0, finiteness.
  // Throws NumericalError / DataError.
  void validate() const;
};

// Log mixing weights over all 2^q binary states, indexed by BitState integer.
struct MixingTable {
  Eigen::VectorXd log_pi;   // length 2^q
  double log_partition = 0.0;
};

// Latent posterior for one observed row: N(m, cov). cov depends only on the
// parameters, never on the data point.
struct PosteriorResult {
  Eigen::VectorXd m;
  Eigen::MatrixXd cov;
};

// Model-implied moments of the observed vector (continuous block first,
// binary block second; binary treated as 0/1 dummies).
struct MomentSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::MatrixXd corr;
};

}  // namespace ggfa
