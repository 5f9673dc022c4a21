#include "ggfa/fit.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Cholesky>

#include "ggfa/core.hpp"
#include "ggfa/rng.hpp"
#include "ggfa/stats.hpp"

namespace ggfa {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112353;
constexpr double kMinRowNorm = 1e-8;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}  // namespace

Eigen::VectorXd FreeParams::flatten() const {
  Eigen::VectorXd theta(size());
  int at = 0;
  theta.segment(at, p_x()) = mu_x;
  at += p_x();
  theta.segment(at, p_x()) = log_psi;
  at += p_x();
  theta.segment(at, q()) = b;
  at += q();
  theta(at++) = rho;
  for (int j = 0; j < p_x(); ++j, at += p_z())
    theta.segment(at, p_z()) = V_w.row(j);
  for (int j = 0; j < q(); ++j, at += p_z())
    theta.segment(at, p_z()) = V_g.row(j);
  return theta;
}

FreeParams FreeParams::unflatten(const Eigen::VectorXd& theta, int p_x, int q, int p_z) {
  FreeParams f;
  int at = 0;
  f.mu_x = theta.segment(at, p_x);
  at += p_x;
  f.log_psi = theta.segment(at, p_x);
  at += p_x;
  f.b = theta.segment(at, q);
  at += q;
  f.rho = theta(at++);
  f.V_w.resize(p_x, p_z);
  for (int j = 0; j < p_x; ++j, at += p_z)
    f.V_w.row(j) = theta.segment(at, p_z);
  f.V_g.resize(q, p_z);
  for (int j = 0; j < q; ++j, at += p_z)
    f.V_g.row(j) = theta.segment(at, p_z);
  return f;
}

ModelParams FreeParams::to_model() const {
  return to_model_floored(Eigen::VectorXd::Constant(p_x(), kNegInf));
}

ModelParams FreeParams::to_model_floored(const Eigen::VectorXd& log_psi_floor,
                                         bool* floor_hit) const {
  ModelParams m;
  m.mu_x = mu_x;
  m.psi.resize(p_x());
  bool hit = false;
  for (int j = 0; j < p_x(); ++j) {
    double lp = log_psi(j);
    if (lp < log_psi_floor(j)) {
      lp = log_psi_floor(j);
      hit = true;
    }
    m.psi(j) = std::exp(lp);
  }
  if (floor_hit) *floor_hit = hit;
  m.b = b;
  m.c = std::exp(rho);
  m.W_hat.resize(p_x(), p_z());
  for (int j = 0; j < p_x(); ++j) {
    double nv = V_w.row(j).norm();
    if (!(nv >= kMinRowNorm))
      throw NumericalError("loading row direction undefined (norm < 1e-8)");
    m.W_hat.row(j) = V_w.row(j) / nv;
  }
  m.G_hat.resize(q(), p_z());
  for (int j = 0; j < q(); ++j) {
    double nv = V_g.row(j).norm();
    if (!(nv >= kMinRowNorm))
      throw NumericalError("loading row direction undefined (norm < 1e-8)");
    m.G_hat.row(j) = V_g.row(j) / nv;
  }
  return m;
}

namespace {

// Dataset rearranged for repeated likelihood evaluation: complete rows as
// dense blocks, incomplete rows kept individually.
struct DataBlocks {
  int p_x = 0, q = 0, n = 0, nc = 0;
  Eigen::MatrixXd Xc;                 // nc x p_x
  Eigen::MatrixXd Yc;                 // nc x q, 0/1 as doubles
  std::vector<std::uint32_t> state;   // per complete row
  Eigen::VectorXd state_counts;       // 2^q
  Eigen::VectorXd sum_y;              // over complete rows
  Eigen::MatrixXd sum_yy;
  std::vector<int> complete_pos;      // original index of each complete row
  std::vector<int> missing_pos;
  std::vector<Row> missing;

  explicit DataBlocks(const Dataset& d) {
    p_x = d.schema.p_x();
    q = d.schema.q();
    n = d.n();
    check_binary_capacity(q);
    for (int i = 0; i < n; ++i) {
      if (d.rows[static_cast<size_t>(i)].complete())
        complete_pos.push_back(i);
      else {
        missing_pos.push_back(i);
        missing.push_back(d.rows[static_cast<size_t>(i)]);
      }
    }
    nc = static_cast<int>(complete_pos.size());
    Xc.resize(nc, p_x);
    Yc.resize(nc, q);
    state.resize(static_cast<size_t>(nc));
    state_counts = Eigen::VectorXd::Zero(1ll << q);
    sum_y = Eigen::VectorXd::Zero(q);
    sum_yy = Eigen::MatrixXd::Zero(q, q);
    for (int i = 0; i < nc; ++i) {
      const Row& r = d.rows[static_cast<size_t>(complete_pos[static_cast<size_t>(i)])];
      Xc.row(i) = r.x;
      Eigen::VectorXd yb = r.y.cast<double>();
      Yc.row(i) = yb;
      state[static_cast<size_t>(i)] = BitState::from_bits(r.y).index;
      state_counts(state[static_cast<size_t>(i)]) += 1.0;
      sum_y += yb;
      sum_yy += yb * yb.transpose();
    }
  }
};

void mixing_moments(const Eigen::VectorXd& log_pi, int q, Eigen::VectorXd* ey,
                    Eigen::MatrixXd* eyy) {
  *ey = Eigen::VectorXd::Zero(q);
  *eyy = Eigen::MatrixXd::Zero(q, q);
  std::vector<int> onbits;
  for (std::uint32_t k = 0; k < static_cast<std::uint32_t>(log_pi.size()); ++k) {
    double pi_k = std::exp(log_pi(k));
    onbits.clear();
    for (std::uint32_t rest = k; rest != 0; rest &= rest - 1)
      onbits.push_back(std::countr_zero(rest));
    for (int a : onbits) {
      (*ey)(a) += pi_k;
      for (int c : onbits) (*eyy)(a, c) += pi_k;
    }
  }
}

// Log-likelihood (and optionally its FreeParams gradient) of the dataset in
// `db` at `free`, with the psi floor applied when given.
double eval_free(const DataBlocks& db, const FreeParams& free,
                 const Eigen::VectorXd* log_psi_floor, Eigen::VectorXd* grad,
                 bool* floor_hit = nullptr) {
  const int p = db.p_x, q = db.q, p_z = free.p_z();
  ModelParams model =
      log_psi_floor ? free.to_model_floored(*log_psi_floor, floor_hit) : free.to_model();
  std::vector<std::uint8_t> floored(static_cast<size_t>(p), 0);
  if (log_psi_floor)
    for (int j = 0; j < p; ++j)
      floored[static_cast<size_t>(j)] = free.log_psi(j) < (*log_psi_floor)(j);

  const Eigen::MatrixXd W = model.W();
  const Eigen::MatrixXd G = model.G();
  const MixingTable mix = mixing_table(model);

  Eigen::MatrixXd sigma_x;
  Eigen::LLT<Eigen::MatrixXd> llt;
  Eigen::MatrixXd sigma_inv;
  double logdet = 0.0;
  if (p > 0) {
    sigma_x = model.sigma_x();
    llt.compute(sigma_x);
    if (llt.info() != Eigen::Success)
      throw NumericalError("Sigma_x lost positive definiteness");
    logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    if (grad) sigma_inv = llt.solve(Eigen::MatrixXd::Identity(p, p));
  }

  std::vector<double> row_ll(static_cast<size_t>(db.n), 0.0);

  // Model-level gradient accumulators.
  Eigen::VectorXd Gmu = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd Abar = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd GWmean = Eigen::MatrixXd::Zero(p, p_z);
  Eigen::VectorXd Sy_w = Eigen::VectorXd::Zero(q);
  Eigen::MatrixXd Syy_w = Eigen::MatrixXd::Zero(q, q);
  Eigen::MatrixXd GGmean = Eigen::MatrixXd::Zero(q, p_z);

  // Complete rows, batched.
  if (db.nc > 0) {
    Eigen::MatrixXd Qt;  // p x nc, Sigma_x^{-1} r_i in columns
    Eigen::MatrixXd R;
    if (p > 0) {
      R = db.Xc.rowwise() - model.mu_x.transpose();
      if (q > 0) R.noalias() -= db.Yc * (G * W.transpose());
      Qt = llt.solve(R.transpose());
      const double base = -0.5 * (p * kLog2Pi + logdet);
      for (int i = 0; i < db.nc; ++i)
        row_ll[static_cast<size_t>(db.complete_pos[static_cast<size_t>(i)])] =
            base - 0.5 * R.row(i).dot(Qt.col(i));
    }
    if (q > 0)
      for (int i = 0; i < db.nc; ++i)
        row_ll[static_cast<size_t>(db.complete_pos[static_cast<size_t>(i)])] +=
            mix.log_pi(db.state[static_cast<size_t>(i)]);
    if (grad) {
      if (p > 0) {
        Gmu += Qt.rowwise().sum();
        Abar.noalias() += Qt * Qt.transpose();
        Abar.noalias() -= static_cast<double>(db.nc) * sigma_inv;
        if (q > 0) {
          GWmean.noalias() += Qt * (db.Yc * G);
          GGmean.noalias() += db.Yc.transpose() * (Qt.transpose() * W);
        }
      }
      Sy_w += db.sum_y;
      Syy_w += db.sum_yy;
    }
  }

  // Incomplete rows, one at a time: weighted average over completions of the
  // unobserved binary block, Gaussian marginal on the observed continuous
  // block.
  for (size_t mi = 0; mi < db.missing.size(); ++mi) {
    const Row& row = db.missing[mi];
    if (!row.any_observed()) throw DataError("no observed cells in row");
    std::vector<int> K;
    for (int j = 0; j < p; ++j)
      if (row.x_obs[static_cast<size_t>(j)]) K.push_back(j);
    std::vector<int> U;
    std::uint32_t base_state = 0;
    for (int j = 0; j < q; ++j) {
      if (row.y_obs[static_cast<size_t>(j)]) {
        if (row.y(j)) base_state |= (1u << j);
      } else {
        U.push_back(j);
      }
    }
    const int nk = static_cast<int>(K.size());
    Eigen::VectorXd x_K(nk), mu_K(nk);
    Eigen::MatrixXd W_K(nk, p_z), S_KK(nk, nk);
    for (int a = 0; a < nk; ++a) {
      x_K(a) = row.x(K[static_cast<size_t>(a)]);
      mu_K(a) = model.mu_x(K[static_cast<size_t>(a)]);
      W_K.row(a) = W.row(K[static_cast<size_t>(a)]);
      for (int c2 = 0; c2 < nk; ++c2)
        S_KK(a, c2) = sigma_x(K[static_cast<size_t>(a)], K[static_cast<size_t>(c2)]);
    }
    Eigen::LLT<Eigen::MatrixXd> llt_K;
    Eigen::MatrixXd S_KK_inv;
    double logdet_K = 0.0;
    if (nk > 0) {
      llt_K.compute(S_KK);
      if (llt_K.info() != Eigen::Success)
        throw NumericalError("observed-block covariance lost positive definiteness");
      logdet_K = 2.0 * llt_K.matrixLLT().diagonal().array().log().sum();
      if (grad) S_KK_inv = llt_K.solve(Eigen::MatrixXd::Identity(nk, nk));
    }

    const std::uint32_t n_comp = 1u << U.size();
    Eigen::VectorXd terms(n_comp);
    Eigen::MatrixXd Qs(nk, n_comp);
    std::vector<Eigen::VectorXd> ys(n_comp);
    for (std::uint32_t u = 0; u < n_comp; ++u) {
      std::uint32_t k = base_state;
      for (size_t s = 0; s < U.size(); ++s)
        if ((u >> s) & 1u) k |= (1u << U[s]);
      BitState st{k, q};
      ys[u] = st.bits();
      double t = q > 0 ? mix.log_pi(k) : 0.0;
      if (nk > 0) {
        Eigen::VectorXd r = x_K - mu_K;
        if (q > 0) r.noalias() -= W_K * (G.transpose() * ys[u]);
        Eigen::VectorXd qv = llt_K.solve(r);
        Qs.col(u) = qv;
        t += -0.5 * (nk * kLog2Pi + logdet_K + r.dot(qv));
      }
      terms(u) = t;
    }
    const double marg = logsumexp(terms);
    row_ll[static_cast<size_t>(db.missing_pos[mi])] = marg;

    if (grad) {
      Eigen::VectorXd w = (terms.array() - marg).exp();
      if (nk > 0) {
        Eigen::VectorXd Qbar = Qs * w;  // sum_k w_k Q_k
        Eigen::MatrixXd QQbar = Qs * w.asDiagonal() * Qs.transpose();
        for (int a = 0; a < nk; ++a) {
          Gmu(K[static_cast<size_t>(a)]) += Qbar(a);
          for (int c2 = 0; c2 < nk; ++c2)
            Abar(K[static_cast<size_t>(a)], K[static_cast<size_t>(c2)]) +=
                QQbar(a, c2) - S_KK_inv(a, c2);
        }
      }
      if (q > 0) {
        for (std::uint32_t u = 0; u < n_comp; ++u) {
          Sy_w += w(u) * ys[u];
          Syy_w.noalias() += w(u) * (ys[u] * ys[u].transpose());
          if (nk > 0) {
            Eigen::RowVectorXd qtw = Qs.col(u).transpose() * W_K;  // 1 x p_z
            GGmean.noalias() += w(u) * (ys[u] * qtw);
          }
        }
        if (nk > 0) {
          // sum_k w_k Q_k (G^T y_k)^T scattered into the K rows
          Eigen::MatrixXd GY(n_comp, p_z);
          for (std::uint32_t u = 0; u < n_comp; ++u)
            GY.row(u) = (G.transpose() * ys[u]).transpose();
          Eigen::MatrixXd contrib = Qs * w.asDiagonal() * GY;  // nk x p_z
          for (int a = 0; a < nk; ++a)
            GWmean.row(K[static_cast<size_t>(a)]) += contrib.row(a);
        }
      }
    }
  }

  KahanSum total;
  for (double v : row_ll) total.add(v);
  const double ll = total.value();

  if (grad) {
    Eigen::VectorXd ey;
    Eigen::MatrixXd eyy;
    mixing_moments(mix.log_pi, q, &ey, &eyy);

    Eigen::MatrixXd GW = GWmean;
    GW.noalias() += Abar * W;
    Eigen::MatrixXd GGm = GGmean;
    GGm.noalias() += (Syy_w - static_cast<double>(db.n) * eyy) * G;
    Eigen::VectorXd Gb = Sy_w - static_cast<double>(db.n) * ey;

    grad->resize(free.size());
    int at = 0;
    grad->segment(at, p) = Gmu;
    at += p;
    for (int j = 0; j < p; ++j) {
      double g = floored[static_cast<size_t>(j)]
                     ? 0.0
                     : model.psi(j) * 0.5 * Abar(j, j) + 0.5 * GW.row(j).dot(W.row(j));
      (*grad)(at + j) = g;
    }
    at += p;
    grad->segment(at, q) = Gb;
    at += q;
    (*grad)(at++) = GW.cwiseProduct(W).sum() + GGm.cwiseProduct(G).sum();

    const double c = model.c;
    for (int j = 0; j < p; ++j, at += p_z) {
      Eigen::RowVectorXd g = c * std::sqrt(model.psi(j)) * GW.row(j);
      const Eigen::RowVectorXd& wh = model.W_hat.row(j);
      grad->segment(at, p_z) =
          ((g - (g.dot(wh)) * wh) / free.V_w.row(j).norm()).transpose();
    }
    for (int j = 0; j < q; ++j, at += p_z) {
      Eigen::RowVectorXd g = c * GGm.row(j);
      const Eigen::RowVectorXd& gh = model.G_hat.row(j);
      grad->segment(at, p_z) =
          ((g - (g.dot(gh)) * gh) / free.V_g.row(j).norm()).transpose();
    }
  }
  return ll;
}

}  // namespace

double log_likelihood(const Dataset& data, const ModelParams& params) {
  if (data.schema.p_x() != params.p_x() || data.schema.q() != params.q())
    throw DataError("dataset schema does not match model dimensions");
  Evaluator ev(params);
  KahanSum total;
  for (const auto& row : data.rows) {
    if (row.complete())
      total.add(ev.log_joint(row.x, BitState::from_bits(row.y)));
    else
      total.add(ev.log_marginal(row));
  }
  return total.value();
}

Eigen::VectorXd grad_log_likelihood(const Dataset& data, const FreeParams& free) {
  DataBlocks db(data);
  if (db.p_x != free.p_x() || db.q != free.q())
    throw DataError("dataset schema does not match free-parameter dimensions");
  Eigen::VectorXd grad;
  eval_free(db, free, nullptr, &grad);
  return grad;
}

namespace {

struct OptOutcome {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  int iters = 0;
  bool converged = false;
  std::vector<double> trace;  // objective (negated) after each accepted step
};

// Limited-memory BFGS minimization with backtracking Armijo line search.
// fn returns +inf on evaluation failure; gradient is filled only when the
// value is finite.
OptOutcome lbfgs_minimize(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>& fn,
    Eigen::VectorXd x0, int max_iters, double grad_tol, double rel_tol) {
  constexpr int kHistory = 10;
  constexpr double kArmijo = 1e-4;

  OptOutcome out;
  const int dim = static_cast<int>(x0.size());
  Eigen::VectorXd x = std::move(x0), g(dim);
  double f = fn(x, &g);
  if (!std::isfinite(f)) {
    out.x = x;
    out.f = f;
    return out;
  }

  std::vector<Eigen::VectorXd> S, Y;
  std::vector<double> rho_h;
  int flat_count = 0;

  for (int iter = 0; iter < max_iters; ++iter) {
    if (g.lpNorm<Eigen::Infinity>() <= grad_tol) {
      out.converged = true;
      break;
    }

    // Two-loop recursion.
    Eigen::VectorXd d = -g;
    const int h = static_cast<int>(S.size());
    std::vector<double> alpha(static_cast<size_t>(h));
    for (int i = h - 1; i >= 0; --i) {
      alpha[static_cast<size_t>(i)] =
          rho_h[static_cast<size_t>(i)] * S[static_cast<size_t>(i)].dot(d);
      d -= alpha[static_cast<size_t>(i)] * Y[static_cast<size_t>(i)];
    }
    if (h > 0) {
      const auto& s = S.back();
      const auto& y = Y.back();
      d *= s.dot(y) / y.squaredNorm();
    }
    for (int i = 0; i < h; ++i) {
      double beta = rho_h[static_cast<size_t>(i)] * Y[static_cast<size_t>(i)].dot(d);
      d += (alpha[static_cast<size_t>(i)] - beta) * S[static_cast<size_t>(i)];
    }
    double gd = g.dot(d);
    if (!(gd < 0.0)) {
      d = -g;
      gd = g.dot(d);
    }

    // Backtracking line search with steepest-descent fallback.
    double step = (iter == 0) ? std::min(1.0, 1.0 / std::max(1.0, g.lpNorm<Eigen::Infinity>()))
                              : 1.0;
    Eigen::VectorXd x_new(dim), g_new(dim);
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      double a = step;
      for (int bt = 0; bt < 60; ++bt) {
        x_new = x + a * d;
        f_new = fn(x_new, &g_new);
        if (std::isfinite(f_new) && f_new <= f + kArmijo * a * gd) {
          accepted = true;
          break;
        }
        a *= 0.5;
      }
      if (!accepted && attempt == 0) {
        d = -g;
        gd = g.dot(d);
        step = 1.0 / std::max(1.0, g.lpNorm<Eigen::Infinity>());
      }
    }
    if (!accepted) break;  // line search exhausted; keep best point found

    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd yv = g_new - g;
    double sy = s.dot(yv);
    if (sy > 1e-10 * s.norm() * yv.norm()) {
      S.push_back(std::move(s));
      Y.push_back(std::move(yv));
      rho_h.push_back(1.0 / sy);
      if (static_cast<int>(S.size()) > kHistory) {
        S.erase(S.begin());
        Y.erase(Y.begin());
        rho_h.erase(rho_h.begin());
      }
    }

    const double rel_change = std::abs(f - f_new) / (1.0 + std::abs(f_new));
    flat_count = rel_change <= rel_tol ? flat_count + 1 : 0;

    x = std::move(x_new);
    g = g_new;
    f = f_new;
    out.iters = iter + 1;
    out.trace.push_back(-f);

    if (flat_count >= 5) {
      out.converged = true;
      break;
    }
  }
  if (g.lpNorm<Eigen::Infinity>() <= grad_tol) out.converged = true;

  out.x = std::move(x);
  out.f = f;
  return out;
}

struct ColumnStats {
  Eigen::VectorXd mean;       // continuous columns, observed cells
  Eigen::VectorXd var;
  Eigen::VectorXd log_floor;  // psi floor per column
};

ColumnStats column_stats(const Dataset& data) {
  const int p = data.schema.p_x();
  ColumnStats cs;
  cs.mean = Eigen::VectorXd::Zero(p);
  cs.var = Eigen::VectorXd::Zero(p);
  cs.log_floor = Eigen::VectorXd::Zero(p);
  const auto cont_names = data.schema.continuous_names();
  for (int j = 0; j < p; ++j) {
    KahanSum s1, s2;
    long n_obs = 0;
    for (const auto& row : data.rows) {
      if (!row.x_obs[static_cast<size_t>(j)]) continue;
      ++n_obs;
      s1.add(row.x(j));
    }
    if (n_obs == 0)
      throw DataError("continuous column '" + cont_names[static_cast<size_t>(j)] +
                      "' has no observed cells");
    double m = s1.value() / static_cast<double>(n_obs);
    for (const auto& row : data.rows) {
      if (!row.x_obs[static_cast<size_t>(j)]) continue;
      double d = row.x(j) - m;
      s2.add(d * d);
    }
    double v = s2.value() / static_cast<double>(n_obs);
    cs.mean(j) = m;
    cs.var(j) = v;
    cs.log_floor(j) = v > 0.0 ? std::log(1e-8 * v) : std::log(1e-8);
  }
  return cs;
}

void check_binary_columns(const Dataset& data) {
  const int q = data.schema.q();
  const auto bin_names = data.schema.binary_names();
  for (int j = 0; j < q; ++j) {
    long ones = 0, zeros = 0;
    for (const auto& row : data.rows) {
      if (!row.y_obs[static_cast<size_t>(j)]) continue;
      (row.y(j) ? ones : zeros)++;
    }
    if (ones == 0 || zeros == 0)
      throw DataError("binary column '" + bin_names[static_cast<size_t>(j)] +
                      "' is constant across observed cells");
  }
}

FreeParams random_init(int p_x, int q, int p_z, const ColumnStats& cs,
                       double init_scale, Rng& rng) {
  FreeParams f;
  f.mu_x = cs.mean;
  f.log_psi.resize(p_x);
  for (int j = 0; j < p_x; ++j)
    f.log_psi(j) = std::log(std::max(cs.var(j), 1e-8));
  f.b.resize(q);
  for (int j = 0; j < q; ++j) f.b(j) = init_scale * rng.normal();
  f.rho = init_scale * rng.normal();
  f.V_w.resize(p_x, p_z);
  for (int j = 0; j < p_x; ++j) {
    do {
      for (int s = 0; s < p_z; ++s) f.V_w(j, s) = init_scale * rng.normal();
    } while (f.V_w.row(j).norm() < kMinRowNorm);
  }
  f.V_g.resize(q, p_z);
  for (int j = 0; j < q; ++j) {
    do {
      for (int s = 0; s < p_z; ++s) f.V_g(j, s) = init_scale * rng.normal();
    } while (f.V_g.row(j).norm() < kMinRowNorm);
  }
  return f;
}

}  // namespace

FitResult fit(const Dataset& data, int p_z, const FitConfig& config) {
  data.validate();
  const int p_x = data.schema.p_x();
  const int q = data.schema.q();
  if (p_z < 1 || p_z > p_x + q)
    throw UsageError("latent dimension must satisfy 1 <= p_z <= p_x + q");
  if (data.n() < p_x + q)
    throw DataError("need at least p_x + q rows to fit");
  if (config.n_restarts < 1 || config.max_iters < 1 || config.grad_tol <= 0.0 ||
      config.rel_ll_tol <= 0.0 || config.init_scale <= 0.0)
    throw UsageError("fit configuration values must be positive");
  check_binary_columns(data);
  const ColumnStats cs = column_stats(data);
  const DataBlocks db(data);

  struct RestartOutcome {
    double ll = kNegInf;
    Eigen::VectorXd theta;
    int iters = 0;
    bool converged = false;
    std::vector<double> trace;
    bool ok = false;
  };
  std::vector<RestartOutcome> outcomes(static_cast<size_t>(config.n_restarts));

  auto objective = [&](const Eigen::VectorXd& theta, Eigen::VectorXd* g) -> double {
    try {
      FreeParams f = FreeParams::unflatten(theta, p_x, q, p_z);
      double ll = eval_free(db, f, &cs.log_floor, g);
      if (g) *g = -*g;
      return -ll;
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  parallel_for(config.n_restarts, config.n_threads, [&](int r) {
    Rng rng(config.seed ^ static_cast<std::uint64_t>(r));
    FreeParams init = random_init(p_x, q, p_z, cs, config.init_scale, rng);
    OptOutcome opt = lbfgs_minimize(objective, init.flatten(), config.max_iters,
                                    config.grad_tol, config.rel_ll_tol);
    RestartOutcome& ro = outcomes[static_cast<size_t>(r)];
    if (std::isfinite(opt.f)) {
      ro.ok = true;
      ro.ll = -opt.f;
      ro.theta = std::move(opt.x);
      ro.iters = opt.iters;
      ro.converged = opt.converged;
      ro.trace = std::move(opt.trace);
    }
  });

  int best = -1;
  for (int r = 0; r < config.n_restarts; ++r) {
    if (!outcomes[static_cast<size_t>(r)].ok) continue;
    if (best < 0 || outcomes[static_cast<size_t>(r)].ll > outcomes[static_cast<size_t>(best)].ll)
      best = r;
  }
  if (best < 0)
    throw NumericalError("all " + std::to_string(config.n_restarts) +
                         " restarts failed to produce a finite log-likelihood");

  FitResult res;
  RestartOutcome& bo = outcomes[static_cast<size_t>(best)];
  FreeParams f = FreeParams::unflatten(bo.theta, p_x, q, p_z);
  res.params = f.to_model_floored(cs.log_floor, &res.psi_floor_hit);
  res.params.validate();
  res.log_lik = bo.ll;
  res.n_params = count_free_params(p_x, q, p_z);
  res.bic = bic(res.log_lik, res.n_params, data.n());
  res.restart_logliks.resize(config.n_restarts);
  for (int r = 0; r < config.n_restarts; ++r)
    res.restart_logliks(r) = outcomes[static_cast<size_t>(r)].ll;
  res.best_restart = best;
  res.iterations = bo.iters;
  res.converged = bo.converged;
  res.ll_trace = std::move(bo.trace);
  return res;
}

double bic(double log_lik, int n_params, int n_rows) {
  if (n_rows < 1) throw UsageError("BIC needs at least one row");
  return -2.0 * log_lik + static_cast<double>(n_params) * std::log(n_rows);
}

int count_free_params(int p_x, int q, int p_z) {
  return 2 * p_x + q + 1 + (p_x + q) * p_z - (p_x + q) - p_z * (p_z - 1) / 2;
}

BicScanResult bic_scan(const Dataset& data, int min_p_z, int max_p_z,
                       const FitConfig& config) {
  if (min_p_z < 1 || max_p_z < min_p_z)
    throw UsageError("invalid latent-dimension range");
  BicScanResult out;
  for (int d = min_p_z; d <= max_p_z; ++d) {
    BicScanRow row;
    row.p_z = d;
    try {
      FitResult r = fit(data, d, config);
      row.log_lik = r.log_lik;
      row.bic = r.bic;
      row.ok = true;
    } catch (const Error& e) {
      row.error = e.what();
    }
    out.rows.push_back(std::move(row));
  }
  out.best_p_z = 0;
  double best_bic = std::numeric_limits<double>::infinity();
  for (const auto& row : out.rows) {
    if (row.ok && row.bic < best_bic) {
      best_bic = row.bic;
      out.best_p_z = row.p_z;
    }
  }
  if (out.best_p_z == 0) throw NumericalError("no latent dimension could be fitted");
  return out;
}

}  // namespace ggfa
