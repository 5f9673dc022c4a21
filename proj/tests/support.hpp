#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

#include "ggfa/core.hpp"
#include "ggfa/fit.hpp"
#include "ggfa/model.hpp"
#include "ggfa/rng.hpp"
#include "ggfa/types.hpp"

namespace ggfa::test {

inline Eigen::MatrixXd random_unit_rows(int rows, int cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int j = 0; j < rows; ++j) {
    do {
      for (int s = 0; s < cols; ++s) m(j, s) = rng.normal();
    } while (m.row(j).norm() < 1e-6);
    m.row(j) /= m.row(j).norm();
  }
  return m;
}

inline ModelParams random_model(int p_x, int q, int p_z, Rng& rng,
                                double c_lo = 0.2, double c_hi = 1.5) {
  ModelParams m;
  m.mu_x.resize(p_x);
  m.psi.resize(p_x);
  for (int j = 0; j < p_x; ++j) {
    m.mu_x(j) = rng.normal();
    m.psi(j) = std::exp(0.5 * rng.normal());
  }
  m.b.resize(q);
  for (int j = 0; j < q; ++j) m.b(j) = rng.normal();
  m.c = c_lo + (c_hi - c_lo) * rng.uniform();
  m.W_hat = random_unit_rows(p_x, p_z, rng);
  m.G_hat = random_unit_rows(q, p_z, rng);
  m.validate();
  return m;
}

inline FreeParams random_free(int p_x, int q, int p_z, Rng& rng) {
  FreeParams f;
  f.mu_x.resize(p_x);
  f.log_psi.resize(p_x);
  for (int j = 0; j < p_x; ++j) {
    f.mu_x(j) = rng.normal();
    f.log_psi(j) = 0.5 * rng.normal();
  }
  f.b.resize(q);
  for (int j = 0; j < q; ++j) f.b(j) = rng.normal();
  f.rho = 0.5 * rng.normal();
  f.V_w.resize(p_x, p_z);
  f.V_g.resize(q, p_z);
  for (int j = 0; j < p_x; ++j)
    for (int s = 0; s < p_z; ++s) f.V_w(j, s) = rng.normal() + 0.1;
  for (int j = 0; j < q; ++j)
    for (int s = 0; s < p_z; ++s) f.V_g(j, s) = rng.normal() + 0.1;
  return f;
}

// Random orthogonal matrix via Householder QR with positive R diagonal.
inline Eigen::MatrixXd random_orthogonal(int d, Rng& rng) {
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd Q = qr.householderQ();
  Eigen::MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < d; ++j)
    if (R(j, j) < 0) Q.col(j) = -Q.col(j);
  return Q;
}

// Independent mixing-weight oracle: unnormalized weights in plain arithmetic
// (vector products + direct exp), no log-space tricks.
inline Eigen::VectorXd oracle_pi(const ModelParams& m) {
  const auto states = enumerate_states(m.q());
  const Eigen::MatrixXd G = m.G();
  Eigen::VectorXd w(static_cast<int>(states.size()));
  for (size_t k = 0; k < states.size(); ++k) {
    const Eigen::VectorXd y = states[k].bits();
    w(static_cast<int>(k)) =
        std::exp(y.dot(m.b) + 0.5 * (G.transpose() * y).squaredNorm());
  }
  return w / w.sum();
}

// Masks cells at random (never leaving a row fully unobserved).
inline Dataset inject_missing(Dataset d, double prob, Rng& rng) {
  for (auto& row : d.rows) {
    for (auto& o : row.x_obs)
      if (rng.uniform() < prob) o = 0;
    for (auto& o : row.y_obs)
      if (rng.uniform() < prob) o = 0;
    if (!row.any_observed()) {
      if (!row.x_obs.empty())
        row.x_obs[0] = 1;
      else
        row.y_obs[0] = 1;
    }
  }
  return d;
}

inline double max_abs(const Eigen::MatrixXd& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

}  // namespace ggfa::test
