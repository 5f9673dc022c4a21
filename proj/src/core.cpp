#include "ggfa/core.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <vector>

#include "ggfa/rng.hpp"
#include "ggfa/stats.hpp"

namespace ggfa {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112353;
}

double log_gaussian(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                    const Eigen::LLT<Eigen::MatrixXd>& llt, double logdet) {
  Eigen::VectorXd r = x - mean;
  llt.matrixL().solveInPlace(r);
  return -0.5 * (static_cast<double>(x.size()) * kLog2Pi + logdet + r.squaredNorm());
}

double log_gaussian(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                    const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw NumericalError("covariance is not positive definite");
  double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return log_gaussian(x, mean, llt, logdet);
}

MixingTable mixing_table(const ModelParams& params) {
  const int q = params.q();
  check_binary_capacity(q);
  MixingTable t;
  if (q == 0) {
    t.log_pi = Eigen::VectorXd::Zero(1);
    t.log_partition = 0.0;
    return t;
  }
  const Eigen::MatrixXd G = params.G();
  const int p_z = static_cast<int>(G.cols());
  const std::uint32_t n_states = 1u << q;
  t.log_pi.resize(n_states);
  Eigen::VectorXd acc(p_z);
  for (std::uint32_t k = 0; k < n_states; ++k) {
    double sb = 0.0;
    acc.setZero();
    for (std::uint32_t rest = k; rest != 0; rest &= rest - 1) {
      int j = std::countr_zero(rest);
      sb += params.b(j);
      acc += G.row(j).transpose();
    }
    t.log_pi(k) = sb + 0.5 * acc.squaredNorm();
  }
  t.log_partition = logsumexp(t.log_pi);
  t.log_pi.array() -= t.log_partition;
  return t;
}

Evaluator::Evaluator(const ModelParams& params)
    : params_(params), W_(params.W()), G_(params.G()), mu_z_(params.mu_z()),
      mixing_(mixing_table(params)) {
  const int p = params_.p_x();
  if (p > 0) {
    sigma_x_ = params_.sigma_x();
    sigma_x_llt_.compute(sigma_x_);
    if (sigma_x_llt_.info() != Eigen::Success)
      throw NumericalError("Sigma_x is not positive definite");
    sigma_x_logdet_ = 2.0 * sigma_x_llt_.matrixLLT().diagonal().array().log().sum();
    // (I + W^T Psi^{-1} W)^{-1}, positive definite by construction.
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(params_.p_z(), params_.p_z());
    A.noalias() += W_.transpose() * params_.psi.cwiseInverse().asDiagonal() * W_;
    post_cov_ = Eigen::LLT<Eigen::MatrixXd>(A).solve(
        Eigen::MatrixXd::Identity(params_.p_z(), params_.p_z()));
  } else {
    post_cov_ = Eigen::MatrixXd::Identity(params_.p_z(), params_.p_z());
  }
}

double Evaluator::log_joint(const Eigen::VectorXd& x, const BitState& y) const {
  if (x.size() != params_.p_x()) throw DataError("x length mismatch");
  if (y.q != params_.q()) throw DataError("y length mismatch");
  if (!x.allFinite()) throw DataError("non-finite x");
  double out = mixing_.log_pi(y.index);
  if (params_.p_x() > 0) {
    Eigen::VectorXd mean = params_.mu_x;
    if (params_.q() > 0) mean.noalias() += W_ * (G_.transpose() * y.bits());
    out += log_gaussian(x, mean, sigma_x_llt_, sigma_x_logdet_);
  }
  return out;
}

PosteriorResult Evaluator::posterior(const Eigen::VectorXd& x, const BitState& y) const {
  Eigen::VectorXd h = Eigen::VectorXd::Zero(params_.p_z());
  if (params_.p_x() > 0)
    h.noalias() += W_.transpose() * ((x - params_.mu_x).cwiseQuotient(params_.psi));
  if (params_.q() > 0) h.noalias() += G_.transpose() * y.bits();
  PosteriorResult r;
  r.cov = post_cov_;
  r.m = mu_z_ + post_cov_ * h;
  return r;
}

double Evaluator::log_marginal(const Row& row) const {
  const int p = params_.p_x(), q = params_.q();
  if (static_cast<int>(row.x_obs.size()) != p || static_cast<int>(row.y_obs.size()) != q)
    throw DataError("row does not match model shape");
  if (!row.any_observed()) throw DataError("no observed cells in row");

  std::vector<int> K;  // observed continuous indices
  for (int j = 0; j < p; ++j)
    if (row.x_obs[static_cast<size_t>(j)]) K.push_back(j);
  std::vector<int> U;  // unobserved binary indices
  std::uint32_t base = 0;
  for (int j = 0; j < q; ++j) {
    if (row.y_obs[static_cast<size_t>(j)]) {
      if (row.y(j)) base |= (1u << j);
    } else {
      U.push_back(j);
    }
  }

  const int nk = static_cast<int>(K.size());
  Eigen::VectorXd x_K(nk);
  Eigen::VectorXd mu_K(nk);
  Eigen::MatrixXd W_K(nk, params_.p_z());
  Eigen::LLT<Eigen::MatrixXd> llt_K;
  double logdet_K = 0.0;
  if (nk > 0) {
    Eigen::MatrixXd S_KK(nk, nk);
    for (int a = 0; a < nk; ++a) {
      x_K(a) = row.x(K[static_cast<size_t>(a)]);
      mu_K(a) = params_.mu_x(K[static_cast<size_t>(a)]);
      W_K.row(a) = W_.row(K[static_cast<size_t>(a)]);
      for (int bcol = 0; bcol < nk; ++bcol)
        S_KK(a, bcol) = sigma_x_(K[static_cast<size_t>(a)], K[static_cast<size_t>(bcol)]);
    }
    llt_K.compute(S_KK);
    if (llt_K.info() != Eigen::Success)
      throw NumericalError("observed-block covariance is not positive definite");
    logdet_K = 2.0 * llt_K.matrixLLT().diagonal().array().log().sum();
  }

  const std::uint32_t n_completions = 1u << U.size();
  Eigen::VectorXd terms(n_completions);
  for (std::uint32_t u = 0; u < n_completions; ++u) {
    std::uint32_t k = base;
    for (size_t s = 0; s < U.size(); ++s)
      if ((u >> s) & 1u) k |= (1u << U[s]);
    double t = mixing_.log_pi(k);
    if (nk > 0) {
      Eigen::VectorXd mean = mu_K;
      if (q > 0) mean.noalias() += W_K * (G_.transpose() * BitState{k, q}.bits());
      t += log_gaussian(x_K, mean, llt_K, logdet_K);
    }
    terms(u) = t;
  }
  return logsumexp(terms);
}

Eigen::VectorXd Evaluator::mean_y() const {
  const int q = params_.q();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(q);
  for (std::uint32_t k = 0; k < static_cast<std::uint32_t>(mixing_.log_pi.size()); ++k) {
    double pi_k = std::exp(mixing_.log_pi(k));
    for (std::uint32_t rest = k; rest != 0; rest &= rest - 1)
      m(std::countr_zero(rest)) += pi_k;
  }
  return m;
}

Eigen::MatrixXd Evaluator::second_moment_y() const {
  const int q = params_.q();
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(q, q);
  std::vector<int> onbits;
  for (std::uint32_t k = 0; k < static_cast<std::uint32_t>(mixing_.log_pi.size()); ++k) {
    double pi_k = std::exp(mixing_.log_pi(k));
    onbits.clear();
    for (std::uint32_t rest = k; rest != 0; rest &= rest - 1)
      onbits.push_back(std::countr_zero(rest));
    for (int a : onbits)
      for (int bidx : onbits) s(a, bidx) += pi_k;
  }
  return s;
}

double log_joint_observed(const ModelParams& params, const Eigen::VectorXd& x,
                          const BitState& y) {
  return Evaluator(params).log_joint(x, y);
}

double log_conditional_given_z(const ModelParams& params, const Eigen::VectorXd& x,
                               const BitState& y, const Eigen::VectorXd& z) {
  if (z.size() != params.p_z()) throw DataError("z length mismatch");
  const Eigen::VectorXd zc = z - params.mu_z();
  double out = 0.0;
  if (params.p_x() > 0) {
    Eigen::VectorXd mean = params.mu_x + params.W() * zc;
    Eigen::VectorXd r = x - mean;
    out += -0.5 * (params.p_x() * kLog2Pi + params.psi.array().log().sum() +
                   (r.array().square() / params.psi.array()).sum());
  }
  if (params.q() > 0) {
    Eigen::VectorXd a = params.b + params.G() * zc;
    for (int j = 0; j < params.q(); ++j)
      out += y.bit(j) * a(j) - softplus(a(j));
  }
  return out;
}

double log_prior_z(const ModelParams& params, const Eigen::VectorXd& z) {
  if (z.size() != params.p_z()) throw DataError("z length mismatch");
  MixingTable t = mixing_table(params);
  const Eigen::VectorXd mu_z = params.mu_z();
  const Eigen::MatrixXd G = params.G();
  const int q = params.q();
  Eigen::VectorXd terms(t.log_pi.size());
  for (std::uint32_t k = 0; k < static_cast<std::uint32_t>(t.log_pi.size()); ++k) {
    Eigen::VectorXd mean = mu_z;
    if (q > 0) mean.noalias() += G.transpose() * BitState{k, q}.bits();
    terms(k) = t.log_pi(k) -
               0.5 * (params.p_z() * kLog2Pi + (z - mean).squaredNorm());
  }
  return logsumexp(terms);
}

PosteriorResult posterior(const ModelParams& params, const Eigen::VectorXd& x,
                          const BitState& y) {
  return Evaluator(params).posterior(x, y);
}

double log_joint_full(const ModelParams& params, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& z, const BitState& y) {
  MixingTable t = mixing_table(params);
  const Eigen::VectorXd mu_z = params.mu_z();
  double out = t.log_pi(y.index);
  if (params.p_x() > 0) {
    Eigen::VectorXd mean = params.mu_x + params.W() * (z - mu_z);
    Eigen::VectorXd r = x - mean;
    out += -0.5 * (params.p_x() * kLog2Pi + params.psi.array().log().sum() +
                   (r.array().square() / params.psi.array()).sum());
  }
  Eigen::VectorXd zmean = mu_z;
  if (params.q() > 0) zmean.noalias() += params.G().transpose() * y.bits();
  out += -0.5 * (params.p_z() * kLog2Pi + (z - zmean).squaredNorm());
  return out;
}

double log_marginal_partial(const ModelParams& params, const Row& row) {
  return Evaluator(params).log_marginal(row);
}

MomentSummary model_moments(const ModelParams& params) {
  Evaluator ev(params);
  const int p = params.p_x(), q = params.q();
  MomentSummary s;
  s.mean.resize(p + q);
  s.cov.resize(p + q, p + q);

  Eigen::VectorXd ey = ev.mean_y();
  Eigen::MatrixXd eyy = ev.second_moment_y();
  Eigen::MatrixXd cov_y = eyy - ey * ey.transpose();

  if (q > 0) s.mean.tail(q) = ey;
  if (p > 0) {
    Eigen::VectorXd ex = params.mu_x;
    if (q > 0) ex.noalias() += ev.W() * (ev.G().transpose() * ey);
    s.mean.head(p) = ex;
    Eigen::MatrixXd cov_x = params.sigma_x();
    if (q > 0) {
      Eigen::MatrixXd WG = ev.W() * ev.G().transpose();  // p x q
      cov_x.noalias() += WG * cov_y * WG.transpose();
      s.cov.topRightCorner(p, q).noalias() = WG * cov_y;
      s.cov.bottomLeftCorner(q, p) = s.cov.topRightCorner(p, q).transpose();
    }
    s.cov.topLeftCorner(p, p) = cov_x;
  }
  if (q > 0) s.cov.bottomRightCorner(q, q) = cov_y;

  Eigen::VectorXd sd(p + q);
  for (int j = 0; j < p + q; ++j) {
    double v = s.cov(j, j);
    if (!(v > 1e-30))
      throw DataError("degenerate variance: correlation undefined for column " +
                      std::to_string(j + 1));
    sd(j) = std::sqrt(v);
  }
  s.corr = sd.cwiseInverse().asDiagonal() * s.cov * sd.cwiseInverse().asDiagonal();
  s.corr.diagonal().setOnes();
  return s;
}

Dataset sample(const ModelParams& params, int n, std::uint64_t seed) {
  if (n < 1) throw UsageError("sample size must be >= 1");
  Evaluator ev(params);
  const int p = params.p_x(), q = params.q();

  // Cumulative mixing distribution for inverse-CDF draws.
  Eigen::VectorXd cum(ev.mixing().log_pi.size());
  double run = 0.0;
  for (int k = 0; k < cum.size(); ++k) {
    run += std::exp(ev.mixing().log_pi(k));
    cum(k) = run;
  }
  cum(cum.size() - 1) = 1.0;

  Eigen::MatrixXd L;
  if (p > 0) L = ev.sigma_x_llt().matrixL();

  Rng rng(seed);
  Dataset d;
  d.schema = Schema::mixed(p, q);
  d.rows.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::uint32_t k = 0;
    if (q > 0) {
      double u = rng.uniform();
      k = static_cast<std::uint32_t>(
          std::upper_bound(cum.data(), cum.data() + cum.size(), u) - cum.data());
      if (k >= static_cast<std::uint32_t>(cum.size()))
        k = static_cast<std::uint32_t>(cum.size()) - 1;
    }
    BitState y{k, q};
    Eigen::VectorXd x(p);
    if (p > 0) {
      Eigen::VectorXd xi(p);
      for (int j = 0; j < p; ++j) xi(j) = rng.normal();
      x = params.mu_x + L * xi;
      if (q > 0) x.noalias() += ev.W() * (ev.G().transpose() * y.bits());
    }
    d.rows.push_back(Row::complete_row(x, y.bits_int()));
  }
  return d;
}

}  // namespace ggfa
