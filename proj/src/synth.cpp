#include "ggfa/synth.hpp"

#include <cmath>
#include <limits>
#include <mutex>

#include <Eigen/Cholesky>

#include "ggfa/baseline.hpp"
#include "ggfa/canon.hpp"
#include "ggfa/core.hpp"
#include "ggfa/stats.hpp"

namespace ggfa {

Eigen::MatrixXd gen_correlation_matrix(int p, double gamma_shape, double gamma_rate,
                                       Rng& rng) {
  if (p < 1) throw UsageError("correlation matrix needs p >= 1");
  for (int attempt = 0; attempt < 100; ++attempt) {
    Eigen::VectorXd lam(p);
    bool ok = true;
    for (int j = 0; j < p; ++j) {
      lam(j) = rng.gamma(gamma_shape, gamma_rate);
      if (lam(j) < 1e-10) ok = false;
    }
    if (!ok) continue;

    // Gram-Schmidt on a standard-normal draw.
    Eigen::MatrixXd Q(p, p);
    for (int j = 0; j < p && ok; ++j) {
      Eigen::VectorXd v(p);
      for (int i = 0; i < p; ++i) v(i) = rng.normal();
      for (int k = 0; k < j; ++k) v -= Q.col(k).dot(v) * Q.col(k);
      const double nv = v.norm();
      if (nv < 1e-10) {
        ok = false;
        break;
      }
      Q.col(j) = v / nv;
    }
    if (!ok) continue;

    Eigen::MatrixXd A = Q * lam.asDiagonal() * Q.transpose();
    const Eigen::VectorXd d = A.diagonal().array().rsqrt();
    Eigen::MatrixXd R = d.asDiagonal() * A * d.asDiagonal();
    R = 0.5 * (R + R.transpose());
    R.diagonal().setOnes();
    return R;
  }
  throw NumericalError("could not generate a positive-definite correlation matrix");
}

Dataset gen_mixed_dataset(const SynthSpec& spec, Rng& rng, SynthTruth* truth) {
  if (spec.p_cont < 0 || spec.p_bin < 0 || spec.p_cont + spec.p_bin < 1)
    throw UsageError("need at least one variable");
  if (spec.n < 2) throw UsageError("need at least two rows");
  const int p = spec.p_cont + spec.p_bin;

  std::string reason;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Eigen::MatrixXd R = gen_correlation_matrix(p, spec.gamma_shape, spec.gamma_rate, rng);
    Eigen::LLT<Eigen::MatrixXd> llt(R);
    if (llt.info() != Eigen::Success) {
      reason = "correlation matrix lost positive definiteness";
      continue;
    }
    Eigen::VectorXd u(spec.p_bin), thresh(spec.p_bin);
    for (int j = 0; j < spec.p_bin; ++j) {
      u(j) = rng.uniform_open();
      thresh(j) = normal_quantile(u(j));
    }

    Dataset d;
    d.schema = Schema::mixed(spec.p_cont, spec.p_bin);
    d.rows.reserve(static_cast<size_t>(spec.n));
    const Eigen::MatrixXd L = llt.matrixL();
    Eigen::VectorXd xi(p), w(p);
    for (int i = 0; i < spec.n; ++i) {
      for (int j = 0; j < p; ++j) xi(j) = rng.normal();
      w.noalias() = L * xi;
      Eigen::VectorXd x = w.head(spec.p_cont);
      Eigen::VectorXi y(spec.p_bin);
      for (int j = 0; j < spec.p_bin; ++j)
        y(j) = w(spec.p_cont + j) > thresh(j) ? 1 : 0;
      d.rows.push_back(Row::complete_row(x, y));
    }

    bool degenerate = false;
    for (int j = 0; j < spec.p_bin && !degenerate; ++j) {
      int ones = 0;
      for (const auto& row : d.rows) ones += row.y(j);
      if (ones == 0 || ones == spec.n) degenerate = true;
    }
    if (degenerate) {
      reason = "degenerate binary column (all zeros or all ones)";
      continue;
    }

    if (spec.p_bin > 0 && (spec.p_cont > 0 || spec.p_bin > 1)) {
      const Eigen::MatrixXd corr = empirical_corr(d);
      if (spec.p_cont > 0) {
        double max_xy = 0.0;
        for (int i = 0; i < spec.p_cont; ++i)
          for (int j = spec.p_cont; j < p; ++j)
            max_xy = std::max(max_xy, std::abs(corr(i, j)));
        if (!(max_xy > spec.min_xy_corr)) {
          reason = "max |corr(x,y)| = " + std::to_string(max_xy) +
                   " does not exceed the filter threshold";
          continue;
        }
      }
      if (spec.p_bin > 1) {
        double max_yy = 0.0;
        for (int i = spec.p_cont; i < p; ++i)
          for (int j = spec.p_cont; j < i; ++j)
            max_yy = std::max(max_yy, std::abs(corr(i, j)));
        if (!(max_yy > spec.min_yy_corr)) {
          reason = "max |corr(y,y')| = " + std::to_string(max_yy) +
                   " does not exceed the filter threshold";
          continue;
        }
      }
    }

    if (truth) {
      truth->corr = R;
      truth->thresholds = u;
    }
    return d;
  }
  throw NumericalError("no dataset accepted after 1000 attempts; last rejection: " +
                       reason);
}

namespace {

std::string pair_bucket(const Dataset& d, int p_cont, int i, int j) {
  // Bucket by the smallest minority share among the binary members.
  double share = 1.0;
  bool any_bin = false;
  for (int col : {i, j}) {
    if (col < p_cont) continue;
    any_bin = true;
    double mean = 0.0;
    for (const auto& row : d.rows) mean += row.y(col - p_cont);
    mean /= static_cast<double>(d.n());
    share = std::min(share, std::min(mean, 1.0 - mean));
  }
  if (!any_bin) return "na";
  if (share <= 0.1) return "low";
  if (share <= 0.3) return "mid";
  return "high";
}

void emit_rows(ReproReport* rep, const Dataset& d, const Eigen::MatrixXd& emp,
               const Eigen::MatrixXd& model_corr, int dataset, const std::string& model,
               int p_z, int p_cont) {
  const int p = static_cast<int>(emp.rows());
  rep->summary.push_back({dataset, model, p_z, r_squared(emp, model_corr)});
  for (int i = 1; i < p; ++i)
    for (int j = 0; j < i; ++j) {
      ReproPairRow row;
      row.dataset = dataset;
      row.model = model;
      row.p_z = p_z;
      row.i = i;
      row.j = j;
      row.pair_type = (i < p_cont) ? "cont-cont"
                      : (j < p_cont) ? "cont-bin"
                                     : "bin-bin";
      row.var_bucket = pair_bucket(d, p_cont, i, j);
      row.r_emp = emp(i, j);
      row.r_model = model_corr(i, j);
      rep->pairs.push_back(std::move(row));
    }
}

}  // namespace

ReproReport run_reproducibility_experiment(const SynthSpec& spec,
                                           const std::vector<int>& p_z_list,
                                           const FitConfig& fit_config,
                                           bool full_minus_one) {
  if (p_z_list.empty()) throw UsageError("empty latent-dimension list");
  ReproReport rep;
  const int p = spec.p_cont + spec.p_bin;
  const int full_dim = full_minus_one ? p - 1 : p;

  for (int ds = 0; ds < spec.n_datasets; ++ds) {
    Rng rng(derived_seed(spec.seed, static_cast<std::uint64_t>(ds)));
    Dataset d;
    try {
      d = gen_mixed_dataset(spec, rng);
    } catch (const Error& e) {
      rep.failures.push_back("dataset " + std::to_string(ds) + ": " + e.what());
      continue;
    }
    ++rep.n_accepted;
    const Eigen::MatrixXd emp = empirical_corr(d);

    FitConfig cfg = fit_config;
    QuantModel full_quant;
    bool have_full = false;
    try {
      cfg.seed = derived_seed(fit_config.seed, 0x10000u + static_cast<std::uint64_t>(ds));
      full_quant = fit_quant(d, full_dim, cfg);
      have_full = true;
    } catch (const Error& e) {
      rep.failures.push_back("dataset " + std::to_string(ds) +
                             " full quant fit: " + e.what());
    }

    for (int p_z : p_z_list) {
      try {
        cfg.seed = derived_seed(fit_config.seed,
                                (static_cast<std::uint64_t>(ds) << 8) |
                                    static_cast<std::uint64_t>(p_z));
        FitResult fr = fit(d, p_z, cfg);
        emit_rows(&rep, d, emp, reproduced_corr(fr.params), ds, "proposed", p_z,
                  spec.p_cont);
      } catch (const Error& e) {
        rep.failures.push_back("dataset " + std::to_string(ds) + " proposed p_z=" +
                               std::to_string(p_z) + ": " + e.what());
      }
      try {
        cfg.seed = derived_seed(fit_config.seed,
                                (static_cast<std::uint64_t>(ds) << 8) | 0x40u |
                                    static_cast<std::uint64_t>(p_z));
        QuantModel qm = fit_quant(d, p_z, cfg);
        emit_rows(&rep, d, emp, reproduced_corr(qm), ds, "quant", p_z, spec.p_cont);
      } catch (const Error& e) {
        rep.failures.push_back("dataset " + std::to_string(ds) + " quant p_z=" +
                               std::to_string(p_z) + ": " + e.what());
      }
      if (have_full && p_z <= full_quant.p_z()) {
        emit_rows(&rep, d, emp, reproduced_corr(reduce_dims(full_quant, p_z)), ds,
                  "quant_reduced", p_z, spec.p_cont);
      }
    }
  }
  return rep;
}

Eigen::VectorXd flatten_params(const ModelParams& params) {
  const int p = params.p_x(), q = params.q(), d = params.p_z();
  Eigen::VectorXd v(2 * p + q + 1 + (p + q) * d);
  int at = 0;
  v.segment(at, p) = params.mu_x;
  at += p;
  v.segment(at, p) = params.psi;
  at += p;
  v.segment(at, q) = params.b;
  at += q;
  v(at++) = params.c;
  for (int j = 0; j < p; ++j, at += d) v.segment(at, d) = params.W_hat.row(j);
  for (int j = 0; j < q; ++j, at += d) v.segment(at, d) = params.G_hat.row(j);
  return v;
}

std::vector<std::string> param_names(const ModelParams& params) {
  std::vector<std::string> names;
  const int p = params.p_x(), q = params.q(), d = params.p_z();
  for (int j = 0; j < p; ++j) names.push_back("mu_x" + std::to_string(j + 1));
  for (int j = 0; j < p; ++j) names.push_back("psi" + std::to_string(j + 1));
  for (int j = 0; j < q; ++j) names.push_back("b" + std::to_string(j + 1));
  names.push_back("c");
  for (int j = 0; j < p; ++j)
    for (int s = 0; s < d; ++s)
      names.push_back("W" + std::to_string(j + 1) + "_" + std::to_string(s + 1));
  for (int j = 0; j < q; ++j)
    for (int s = 0; s < d; ++s)
      names.push_back("G" + std::to_string(j + 1) + "_" + std::to_string(s + 1));
  return names;
}

SamplingDistResult run_sampling_distribution(const SamplingDistSpec& spec,
                                             const FitConfig& fit_config) {
  spec.truth.validate();
  if (spec.replicates < 1) throw UsageError("need at least one replicate");
  for (size_t i = 1; i < spec.sizes.size(); ++i)
    if (spec.sizes[i] <= spec.sizes[i - 1])
      throw UsageError("sample sizes must be strictly ascending");

  SamplingDistResult out;
  out.param_names = param_names(spec.truth);
  out.truth_values = flatten_params(spec.truth);
  out.sizes = spec.sizes;
  const int n_coord = static_cast<int>(out.truth_values.size());
  const int p_z = spec.truth.p_z();

  std::mutex fail_mu;
  for (size_t si = 0; si < spec.sizes.size(); ++si) {
    Eigen::MatrixXd est = Eigen::MatrixXd::Constant(
        spec.replicates, n_coord, std::numeric_limits<double>::quiet_NaN());
    parallel_for(spec.replicates, spec.n_threads, [&](int rep) {
      const std::uint64_t s =
          derived_seed(derived_seed(spec.seed, static_cast<std::uint64_t>(si)),
                       static_cast<std::uint64_t>(rep));
      try {
        Dataset d = sample(spec.truth, spec.sizes[si], s);
        FitConfig cfg = fit_config;
        cfg.seed = s;
        cfg.n_threads = 1;
        FitResult fr = fit(d, p_z, cfg);
        est.row(rep) = flatten_params(canonicalize(fr.params).params);
      } catch (const Error& e) {
        std::lock_guard<std::mutex> lk(fail_mu);
        out.failures.push_back("size " + std::to_string(spec.sizes[si]) +
                               " replicate " + std::to_string(rep) + ": " + e.what());
      }
    });
    out.estimates.push_back(std::move(est));
  }
  return out;
}

}  // namespace ggfa
