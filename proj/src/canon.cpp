#include "ggfa/canon.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "ggfa/types.hpp"

namespace ggfa {

CanonicalModel canonicalize(const ModelParams& params) {
  params.validate();
  const int p_z = params.p_z();
  const Eigen::MatrixXd M = params.M();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M.transpose() * M);
  if (es.info() != Eigen::Success)
    throw NumericalError("eigendecomposition of M^T M failed");

  // Descending order (solver returns ascending).
  Eigen::VectorXd lam(p_z);
  Eigen::MatrixXd R(p_z, p_z);
  for (int s = 0; s < p_z; ++s) {
    lam(s) = std::max(es.eigenvalues()(p_z - 1 - s), 0.0);
    R.col(s) = es.eigenvectors().col(p_z - 1 - s);
  }

  CanonicalModel out;
  out.unique = true;

  // Near-degenerate blocks get a deterministic secondary order: first
  // coordinate of M v, descending.
  const double gap_tol = 1e-8 * std::max(lam(0), 0.0);
  int s = 0;
  while (s < p_z) {
    int e = s;
    while (e + 1 < p_z && lam(e) - lam(e + 1) < gap_tol) ++e;
    if (e > s) {
      out.unique = false;
      std::vector<int> idx(static_cast<size_t>(e - s + 1));
      std::iota(idx.begin(), idx.end(), s);
      Eigen::VectorXd score(p_z);
      for (int t = s; t <= e; ++t) score(t) = (M * R.col(t))(0);
      std::stable_sort(idx.begin(), idx.end(),
                       [&](int a, int b) { return score(a) > score(b); });
      Eigen::MatrixXd block(p_z, e - s + 1);
      Eigen::VectorXd lam_block(e - s + 1);
      for (size_t t = 0; t < idx.size(); ++t) {
        block.col(static_cast<int>(t)) = R.col(idx[t]);
        lam_block(static_cast<int>(t)) = lam(idx[t]);
      }
      R.middleCols(s, e - s + 1) = block;
      lam.segment(s, e - s + 1) = lam_block;
    }
    s = e + 1;
  }
  // Sign rule: column sums of M R nonnegative.
  for (int t = 0; t < p_z; ++t) {
    const double colsum = (M * R.col(t)).sum();
    if (colsum < 0.0) {
      R.col(t) = -R.col(t);
    } else if (colsum == 0.0) {
      out.unique = false;
      Eigen::VectorXd mv = M * R.col(t);
      int arg = 0;
      mv.cwiseAbs().maxCoeff(&arg);
      if (mv(arg) < 0.0) R.col(t) = -R.col(t);
    }
  }

  out.params = params;
  if (params.p_x() > 0) {
    out.params.W_hat = params.W_hat * R;
    for (int j = 0; j < params.p_x(); ++j)
      out.params.W_hat.row(j) /= out.params.W_hat.row(j).norm();
  }
  if (params.q() > 0) {
    out.params.G_hat = params.G_hat * R;
    for (int j = 0; j < params.q(); ++j)
      out.params.G_hat.row(j) /= out.params.G_hat.row(j).norm();
  }
  out.omega_sq = lam;
  contribution_ratios(lam, &out.P, &out.C);
  out.h = communalities(params);
  out.rotation = R;
  return out;
}

void contribution_ratios(const Eigen::VectorXd& omega_sq, Eigen::VectorXd* P,
                         Eigen::VectorXd* C) {
  if (omega_sq.size() == 0) throw UsageError("empty eigenvalue vector");
  if (omega_sq.minCoeff() < 0.0)
    throw NumericalError("negative eigenvalue in contribution ratios");
  const double total = omega_sq.sum();
  if (!(total > 0.0))
    throw NumericalError("all eigenvalues are zero: contribution ratios undefined");
  *P = omega_sq / total;
  C->resize(omega_sq.size());
  double run = 0.0;
  for (int s = 0; s < omega_sq.size(); ++s) {
    run += (*P)(s);
    (*C)(s) = run;
  }
}

Eigen::VectorXd communalities(const ModelParams& params) {
  return Eigen::VectorXd::Constant(params.p_x(), communality_from_row_norm(params.c));
}

double communality_from_row_norm(double row_norm) {
  return row_norm / std::sqrt(1.0 + row_norm * row_norm);
}

Eigen::VectorXd pca_limit_scores(const ModelParams& params, const Eigen::VectorXd& x) {
  if (params.q() != 0)
    throw UsageError("projection-limit scores are defined for continuous-only models");
  if (x.size() != params.p_x()) throw DataError("x length mismatch");
  const Eigen::MatrixXd& Wh = params.W_hat;
  const Eigen::MatrixXd gram = Wh.transpose() * Wh;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  if (es.info() != Eigen::Success ||
      es.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff()))
    throw NumericalError("W_hat is rank deficient");
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  const Eigen::VectorXd d =
      ((1.0 + params.c * params.c) * params.psi.array()).rsqrt();
  return params.mu_z() +
         llt.solve(Wh.transpose() * (d.array() * (x - params.mu_x).array()).matrix());
}

IdentifiabilityReport verify_identifiability_conditions(const ModelParams& params) {
  IdentifiabilityReport rep;
  const Eigen::MatrixXd M = params.M();
  const int p = static_cast<int>(M.rows()), p_z = params.p_z();
  const double c2 = params.c * params.c;

  rep.latent_dim_ok = p_z <= p;

  rep.equal_row_norms_ok = true;
  for (int j = 0; j < p; ++j)
    if (std::abs(M.row(j).squaredNorm() - c2) > 1e-9 * std::max(1.0, c2))
      rep.equal_row_norms_ok = false;

  const Eigen::MatrixXd A = M.transpose() * M;
  const double scale = std::max(1.0, A.diagonal().maxCoeff());
  rep.mtm_diagonal_ok = true;
  for (int i = 0; i < p_z; ++i)
    for (int j = 0; j < p_z; ++j)
      if (i != j && std::abs(A(i, j)) > 1e-8 * scale) rep.mtm_diagonal_ok = false;

  rep.descending_ok = true;
  for (int s = 0; s + 1 < p_z; ++s)
    if (A(s, s) < A(s + 1, s + 1) - 1e-10 * scale) rep.descending_ok = false;

  rep.nondegenerate_ok = true;
  for (int s = 0; s < p_z; ++s)
    if (A(s, s) <= 1e-12 * scale) rep.nondegenerate_ok = false;
  for (int s = 0; s + 1 < p_z; ++s)
    if (A(s, s) - A(s + 1, s + 1) < 1e-8 * A(0, 0)) rep.nondegenerate_ok = false;

  rep.column_signs_ok = true;
  for (int s = 0; s < p_z; ++s)
    if (M.col(s).sum() < -1e-9) rep.column_signs_ok = false;

  rep.rank_check_applicable = p_z < p;
  if (rep.rank_check_applicable) {
    Eigen::MatrixXd B = M * M.transpose();
    B.diagonal().array() -= c2;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
    rep.smallest_eig = es.eigenvalues()(0);
    rep.rank_check_ok = std::abs(rep.smallest_eig + c2) <= 1e-8 * std::max(1.0, c2);
  }
  return rep;
}

}  // namespace ggfa
