#pragma once

#include <cstdint>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "ggfa/model.hpp"
#include "ggfa/types.hpp"

namespace ggfa {

// Log mixing weights over all 2^q binary states:
//   log pi_k = 1_k^T b + 1/2 ||G^T 1_k||^2 - log Z,
// computed with max-shifted logsumexp. q = 0 yields the single empty state.
MixingTable mixing_table(const ModelParams& params);

// log p(x, y) = log pi_y + log N(x | mu_x + W G^T y, Sigma_x).
double log_joint_observed(const ModelParams& params, const Eigen::VectorXd& x,
                          const BitState& y);

// log p(x, y | z) = log N(x | mu_x + W(z - mu_z), Psi)
//                 + sum_j log Ber(y_j | sigm(b_j + g_j^T (z - mu_z))).
double log_conditional_given_z(const ModelParams& params, const Eigen::VectorXd& x,
                               const BitState& y, const Eigen::VectorXd& z);

// log p(z) = logsumexp_k [ log pi_k + log N(z | mu_z + G^T 1_k, I) ].
double log_prior_z(const ModelParams& params, const Eigen::VectorXd& z);

// Latent posterior N(m, cov) given a complete row:
//   cov = (I + W^T Psi^{-1} W)^{-1}
//   m   = mu_z + cov (W^T Psi^{-1} (x - mu_x) + G^T y).
PosteriorResult posterior(const ModelParams& params, const Eigen::VectorXd& x,
                          const BitState& y);

// log p(x, z, y) = log pi_y + log N(x | mu_x + W(z - mu_z), Psi)
//               + log N(z | mu_z + G^T y, I).
double log_joint_full(const ModelParams& params, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& z, const BitState& y);

// Marginal log-density of the observed cells of a partially observed row:
// the unobserved binary block is summed out and the unobserved continuous
// block marginalized through the Gaussian sub-blocks. Reduces to
// log_joint_observed on complete rows. Throws DataError when nothing is
// observed.
double log_marginal_partial(const ModelParams& params, const Row& row);

// Model-implied mean / covariance / correlation of (x, y), binary columns as
// 0/1 dummies. Throws DataError when a binary coordinate is degenerate.
MomentSummary model_moments(const ModelParams& params);

// Exact sampler: y by inverse CDF over the mixing table, then
// x ~ N(mu_x + W G^T y, Sigma_x) through a Cholesky factor. Deterministic
// given seed; returns a complete dataset with schema x1..xp, y1..yq.
Dataset sample(const ModelParams& params, int n, std::uint64_t seed);

// Caches the per-parameter factorizations shared by repeated density
// evaluations: Sigma_x Cholesky, mixing table, posterior covariance.
// Immutable after construction and safe to share across threads.
class Evaluator {
 public:
  explicit Evaluator(const ModelParams& params);

  const ModelParams& params() const { return params_; }
  const MixingTable& mixing() const { return mixing_; }
  const Eigen::MatrixXd& W() const { return W_; }
  const Eigen::MatrixXd& G() const { return G_; }
  const Eigen::VectorXd& mu_z() const { return mu_z_; }
  const Eigen::LLT<Eigen::MatrixXd>& sigma_x_llt() const { return sigma_x_llt_; }
  double sigma_x_logdet() const { return sigma_x_logdet_; }
  const Eigen::MatrixXd& posterior_cov() const { return post_cov_; }

  double log_joint(const Eigen::VectorXd& x, const BitState& y) const;
  double log_marginal(const Row& row) const;
  PosteriorResult posterior(const Eigen::VectorXd& x, const BitState& y) const;

  // Mixing-table moments E[Y] and E[YY^T].
  Eigen::VectorXd mean_y() const;
  Eigen::MatrixXd second_moment_y() const;

 private:
  ModelParams params_;
  Eigen::MatrixXd W_, G_;
  Eigen::VectorXd mu_z_;
  MixingTable mixing_;
  Eigen::MatrixXd sigma_x_;
  Eigen::LLT<Eigen::MatrixXd> sigma_x_llt_;
  double sigma_x_logdet_ = 0.0;
  Eigen::MatrixXd post_cov_;
};

// log N(x | mean, cov) through a precomputed Cholesky factorization.
double log_gaussian(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                    const Eigen::LLT<Eigen::MatrixXd>& llt, double logdet);

// Convenience: factorizes cov on the spot.
double log_gaussian(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                    const Eigen::MatrixXd& cov);

}  // namespace ggfa
