#include "ggfa/model.hpp"

#include <cmath>

namespace ggfa {

Eigen::MatrixXd ModelParams::W() const {
  return psi.array().sqrt().matrix().asDiagonal() * (c * W_hat);
}

Eigen::MatrixXd ModelParams::G() const { return c * G_hat; }

Eigen::MatrixXd ModelParams::M() const {
  Eigen::MatrixXd m(p_x() + q(), p_z());
  if (p_x() > 0) m.topRows(p_x()) = W_hat;
  if (q() > 0) m.bottomRows(q()) = G_hat;
  return c * m;
}

Eigen::VectorXd ModelParams::mu_z() const {
  if (q() == 0) return Eigen::VectorXd::Zero(p_z());
  return -0.5 * G().colwise().sum().transpose();
}

Eigen::MatrixXd ModelParams::sigma_x() const {
  Eigen::MatrixXd Wm = W();
  Eigen::MatrixXd s = Wm * Wm.transpose();
  s.diagonal() += psi;
  return s;
}

void ModelParams::validate() const {
  const int p = p_x(), nq = q(), d = p_z();
  if (p + nq < 1) throw DataError("model has no observed variables");
  if (d < 1 || d > p + nq)
    throw DataError("latent dimension must satisfy 1 <= p_z <= p_x + q");
  if (psi.size() != p || W_hat.rows() != p)
    throw DataError("continuous parameter shapes disagree");
  if (G_hat.rows() != nq) throw DataError("binary parameter shapes disagree");
  if (p > 0 && nq > 0 && W_hat.cols() != G_hat.cols())
    throw DataError("W_hat and G_hat latent dimensions disagree");
  if (!(c >= 0.0) || !std::isfinite(c))
    throw NumericalError("loading norm c must be finite and nonnegative");
  for (int j = 0; j < p; ++j) {
    if (!(psi(j) > 0.0) || !std::isfinite(psi(j)))
      throw NumericalError("psi must be strictly positive and finite");
  }
  if (!mu_x.allFinite() || !b.allFinite() || !W_hat.allFinite() || !G_hat.allFinite())
    throw NumericalError("non-finite model parameter");
  for (int j = 0; j < p; ++j)
    if (std::abs(W_hat.row(j).norm() - 1.0) > 1e-10)
      throw NumericalError("W_hat row " + std::to_string(j + 1) + " is not unit norm");
  for (int j = 0; j < nq; ++j)
    if (std::abs(G_hat.row(j).norm() - 1.0) > 1e-10)
      throw NumericalError("G_hat row " + std::to_string(j + 1) + " is not unit norm");
}

}  // namespace ggfa
