#include "ggfa/baseline.hpp"

#include <cmath>

#include <Eigen/SVD>

#include "ggfa/core.hpp"
#include "ggfa/stats.hpp"

namespace ggfa {

Eigen::MatrixXd QuantModel::implied_sigma() const {
  const Eigen::VectorXd d_sqrt = sigma_diag.array().sqrt();
  Eigen::MatrixXd wwt = W_bar * W_bar.transpose();
  Eigen::MatrixXd sigma = d_sqrt.asDiagonal() * wwt * d_sqrt.asDiagonal();
  sigma.diagonal() =
      (Eigen::VectorXd::Ones(p()) - wwt.diagonal()).cwiseProduct(sigma_diag) +
      sigma.diagonal();
  return sigma;
}

Dataset quantify(const Dataset& data) {
  data.validate();
  if (!data.complete())
    throw DataError("dummy-coded baseline requires a complete dataset");
  const int p = data.schema.p_x(), q = data.schema.q();
  Dataset out;
  for (const auto& name : data.schema.continuous_names())
    out.schema.columns.push_back({name, ColumnKind::Continuous});
  for (const auto& name : data.schema.binary_names())
    out.schema.columns.push_back({name, ColumnKind::Continuous});
  out.rows.reserve(data.rows.size());
  for (const auto& row : data.rows) {
    Eigen::VectorXd x(p + q);
    x.head(p) = row.x;
    x.tail(q) = row.y.cast<double>();
    out.rows.push_back(Row::complete_row(x, Eigen::VectorXi()));
  }
  return out;
}

QuantModel fit_quant(const Dataset& data, int p_z, const FitConfig& config) {
  Dataset cont = data.schema.q() == 0 ? data : quantify(data);
  FitResult r = fit(cont, p_z, config);
  QuantModel m;
  m.mu = r.params.mu_x;
  const double c2 = r.params.c * r.params.c;
  m.sigma_diag = (1.0 + c2) * r.params.psi;
  m.W_bar = std::sqrt(c2 / (1.0 + c2)) * r.params.W_hat;
  return m;
}

QuantModel reduce_dims(const QuantModel& model, int d) {
  if (d < 1 || d > model.p_z())
    throw UsageError("reduced dimension must satisfy 1 <= d <= p_z");
  if (d == model.p_z()) return model;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(model.W_bar,
                                        Eigen::ComputeThinU | Eigen::ComputeThinV);
  QuantModel out = model;
  out.W_bar = svd.matrixU().leftCols(d) *
              svd.singularValues().head(d).asDiagonal() *
              svd.matrixV().leftCols(d).transpose();
  return out;
}

double r_squared(const Eigen::MatrixXd& empirical_corr,
                 const Eigen::MatrixXd& model_corr) {
  const int p = static_cast<int>(empirical_corr.rows());
  if (empirical_corr.cols() != p || model_corr.rows() != p || model_corr.cols() != p)
    throw UsageError("correlation matrices must be square with matching shape");
  if (p < 2) throw UsageError("need at least two variables for R^2");
  double mean = 0.0;
  int count = 0;
  for (int i = 1; i < p; ++i)
    for (int j = 0; j < i; ++j) {
      mean += empirical_corr(i, j);
      ++count;
    }
  mean /= count;
  double num = 0.0, den = 0.0;
  for (int i = 1; i < p; ++i)
    for (int j = 0; j < i; ++j) {
      const double d1 = empirical_corr(i, j) - model_corr(i, j);
      const double d0 = empirical_corr(i, j) - mean;
      num += d1 * d1;
      den += d0 * d0;
    }
  if (!(den > 0.0))
    throw NumericalError("all empirical correlations are equal: R^2 undefined");
  return 1.0 - num / den;
}

namespace {

Eigen::MatrixXd corr_from_cov(const Eigen::MatrixXd& cov) {
  const int p = static_cast<int>(cov.rows());
  Eigen::VectorXd sd(p);
  for (int j = 0; j < p; ++j) {
    if (!(cov(j, j) > 1e-30))
      throw DataError("degenerate variance: correlation undefined for column " +
                      std::to_string(j + 1));
    sd(j) = std::sqrt(cov(j, j));
  }
  Eigen::MatrixXd corr =
      sd.cwiseInverse().asDiagonal() * cov * sd.cwiseInverse().asDiagonal();
  corr.diagonal().setOnes();
  return corr;
}

}  // namespace

Eigen::MatrixXd reproduced_corr(const QuantModel& model) {
  return corr_from_cov(model.implied_sigma());
}

Eigen::MatrixXd reproduced_corr(const ModelParams& params) {
  return model_moments(params).corr;
}

double quant_log_likelihood(const Dataset& data, const QuantModel& model) {
  if (!data.complete())
    throw DataError("dummy-coded baseline requires a complete dataset");
  const int p = data.schema.p_x(), q = data.schema.q();
  if (p + q != model.p()) throw DataError("dataset does not match model dimension");
  Eigen::MatrixXd sigma = model.implied_sigma();
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw NumericalError("implied covariance is not positive definite");
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  KahanSum total;
  Eigen::VectorXd v(p + q);
  for (const auto& row : data.rows) {
    v.head(p) = row.x;
    v.tail(q) = row.y.cast<double>();
    total.add(log_gaussian(v, model.mu, llt, logdet));
  }
  return total.value();
}

Eigen::MatrixXd empirical_corr(const Dataset& data) {
  data.validate();
  if (!data.complete()) throw DataError("empirical correlation requires complete data");
  const int p = data.schema.p_x(), q = data.schema.q(), n = data.n();
  if (n < 2) throw DataError("need at least two rows for a correlation");
  Eigen::MatrixXd Z(n, p + q);
  for (int i = 0; i < n; ++i) {
    Z.row(i).head(p) = data.rows[static_cast<size_t>(i)].x;
    Z.row(i).tail(q) = data.rows[static_cast<size_t>(i)].y.cast<double>().transpose();
  }
  const Eigen::RowVectorXd mean = Z.colwise().mean();
  Z.rowwise() -= mean;
  Eigen::MatrixXd cov = (Z.transpose() * Z) / static_cast<double>(n);
  return corr_from_cov(cov);
}

}  // namespace ggfa
