#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>

#include "ggfa/baseline.hpp"
#include "ggfa/biplot.hpp"
#include "ggfa/canon.hpp"
#include "ggfa/core.hpp"
#include "ggfa/fit.hpp"
#include "ggfa/io.hpp"
#include "ggfa/model.hpp"
#include "ggfa/synth.hpp"
#include "ggfa/types.hpp"

namespace {

using namespace ggfa;

std::string num17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out_file(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  return out;
}

struct DataFlags {
  std::string data_path;
  std::string schema_path;
  std::vector<std::string> log_columns;
};

void add_data_flags(CLI::App* cmd, DataFlags* flags) {
  cmd->add_option("--data", flags->data_path, "input CSV file")->required();
  cmd->add_option("--schema", flags->schema_path, "schema sidecar file")->required();
  cmd->add_option("--log-columns", flags->log_columns,
                  "continuous columns to natural-log transform")
      ->delimiter(',');
}

Dataset load_data(const DataFlags& flags) {
  const Schema schema = load_schema(flags.schema_path);
  Dataset data = load_csv(flags.data_path, schema);
  if (!flags.log_columns.empty()) log_transform_columns(&data, flags.log_columns);
  return data;
}

struct FitFlags {
  int restarts = 100;
  std::uint64_t seed = 0;
  int max_iters = 2000;
  double grad_tol = 1e-6;
  double rel_ll_tol = 1e-9;
  double init_scale = 0.5;
  int threads = 1;
};

void add_fit_flags(CLI::App* cmd, FitFlags* flags) {
  cmd->add_option("--restarts", flags->restarts, "random restarts");
  cmd->add_option("--max-iters", flags->max_iters, "iteration cap per restart");
  cmd->add_option("--grad-tol", flags->grad_tol, "gradient norm tolerance");
  cmd->add_option("--rel-ll-tol", flags->rel_ll_tol,
                  "relative log-likelihood plateau tolerance");
  cmd->add_option("--init-scale", flags->init_scale, "restart initialization scale");
  cmd->add_option("--threads", flags->threads, "worker threads");
}

FitConfig to_config(const FitFlags& flags) {
  FitConfig cfg;
  cfg.n_restarts = flags.restarts;
  cfg.seed = flags.seed;
  cfg.max_iters = flags.max_iters;
  cfg.grad_tol = flags.grad_tol;
  cfg.rel_ll_tol = flags.rel_ll_tol;
  cfg.init_scale = flags.init_scale;
  cfg.n_threads = flags.threads;
  return cfg;
}

int cmd_fit(const DataFlags& dflags, const FitFlags& fflags, int p_z,
            const std::string& out_path, bool canonical) {
  const Dataset data = load_data(dflags);
  const FitConfig cfg = to_config(fflags);
  const FitResult result = fit(data, p_z, cfg);

  ModelFile mf;
  mf.schema = data.schema;
  mf.canonical = canonical;
  FitMeta meta;
  meta.log_lik = result.log_lik;
  meta.bic = result.bic;
  meta.n_params = result.n_params;
  meta.seed = cfg.seed;
  meta.restarts = cfg.n_restarts;
  mf.fit = meta;

  std::printf("log_lik  %s\n", num17(result.log_lik).c_str());
  std::printf("bic      %s\n", num17(result.bic).c_str());
  std::printf("n_params %d\n", result.n_params);
  if (result.psi_floor_hit)
    std::fprintf(stderr, "warning: a unique variance hit its lower floor\n");

  if (canonical) {
    const CanonicalModel canon = canonicalize(result.params);
    mf.params = canon.params;
    std::printf("c        %s\n", num17(canon.params.c).c_str());
    if (canon.h.size() > 0)
      std::printf("communality %s\n", num17(canon.h(0)).c_str());
    for (int s = 0; s < canon.P.size(); ++s)
      std::printf("z%d  P %.6f  C %.6f\n", s + 1, canon.P(s), canon.C(s));
    if (!canon.unique)
      std::fprintf(stderr, "warning: canonical form not unique (degenerate spectrum)\n");
  } else {
    mf.params = result.params;
    std::printf("c        %s\n", num17(result.params.c).c_str());
  }

  save_model(mf, out_path);
  std::printf("model written to %s\n", out_path.c_str());
  return 0;
}

int cmd_bic_scan(const DataFlags& dflags, const FitFlags& fflags, int min_dims,
                 int max_dims, const std::string& out_path) {
  const Dataset data = load_data(dflags);
  const BicScanResult scan = bic_scan(data, min_dims, max_dims, to_config(fflags));

  std::ofstream out;
  if (!out_path.empty()) out = open_out_file(out_path);
  auto emit = [&](const std::string& line) {
    std::printf("%s\n", line.c_str());
    if (out.is_open()) out << line << "\n";
  };
  emit("p_z,log_lik,bic,ok,error");
  for (const auto& row : scan.rows) {
    std::string line = std::to_string(row.p_z) + ",";
    if (row.ok)
      line += num17(row.log_lik) + "," + num17(row.bic) + ",1,";
    else
      line += ",,0," + row.error;
    emit(line);
  }
  std::printf("selected p_z %d\n", scan.best_p_z);
  return 0;
}

int cmd_score(const std::string& model_path, const DataFlags& dflags,
              const std::string& out_path, const std::string& cov_path) {
  const ModelFile mf = load_model(model_path);
  const Schema schema = load_schema(dflags.schema_path);
  Dataset data = load_csv(dflags.data_path, schema);
  if (!dflags.log_columns.empty()) log_transform_columns(&data, dflags.log_columns);
  if (schema.p_x() != mf.params.p_x() || schema.q() != mf.params.q())
    throw DataError("data schema does not match the model dimensions");
  for (int i = 0; i < data.n(); ++i)
    if (!data.rows[static_cast<size_t>(i)].complete())
      throw DataError("row " + std::to_string(i + 1) +
                      " has missing cells; scores need complete rows");

  const Evaluator ev(mf.params);
  const int p_z = mf.params.p_z();
  std::ofstream out = open_out_file(out_path);
  out << "row";
  for (int s = 0; s < p_z; ++s) out << ",z" << s + 1;
  out << "\n";
  for (int i = 0; i < data.n(); ++i) {
    const Row& row = data.rows[static_cast<size_t>(i)];
    const PosteriorResult post = ev.posterior(row.x, BitState::from_bits(row.y));
    out << i + 1;
    for (int s = 0; s < p_z; ++s) out << "," << num17(post.m(s));
    out << "\n";
  }

  const Eigen::MatrixXd& cov = ev.posterior_cov();
  std::printf("shared posterior covariance (%d x %d):\n", p_z, p_z);
  for (int i = 0; i < p_z; ++i) {
    for (int j = 0; j < p_z; ++j)
      std::printf("%s%s", j ? "," : "", num17(cov(i, j)).c_str());
    std::printf("\n");
  }
  if (!cov_path.empty()) {
    std::ofstream cov_out = open_out_file(cov_path);
    for (int i = 0; i < p_z; ++i) {
      for (int j = 0; j < p_z; ++j) cov_out << (j ? "," : "") << num17(cov(i, j));
      cov_out << "\n";
    }
  }
  std::printf("scores for %d rows written to %s\n", data.n(), out_path.c_str());
  return 0;
}

int cmd_simulate(const std::string& model_path, int n, std::uint64_t seed,
                 const std::string& out_path) {
  if (n < 1) throw UsageError("--n must be positive");
  const ModelFile mf = load_model(model_path);
  Dataset data = sample(mf.params, n, seed);
  data.schema = mf.schema;  // same block layout, original declared names/order
  save_csv(data, out_path);
  std::printf("%d rows written to %s\n", n, out_path.c_str());
  return 0;
}

int cmd_synth(const SynthSpec& spec, int emit_datasets, const std::string& prefix) {
  if (emit_datasets < 1) throw UsageError("--datasets must be positive");
  const Schema schema = Schema::mixed(spec.p_cont, spec.p_bin);
  save_schema(schema, prefix + "schema.txt");
  for (int k = 0; k < emit_datasets; ++k) {
    Rng rng(derived_seed(spec.seed, static_cast<std::uint64_t>(k)));
    SynthTruth truth;
    const Dataset data = gen_mixed_dataset(spec, rng, &truth);
    const std::string stem = prefix + "data" + std::to_string(k + 1);
    save_csv(data, stem + ".csv");
    std::ofstream tf = open_out_file(stem + "_truth.csv");
    tf << "# latent correlation matrix rows, then the threshold quantiles\n";
    for (int i = 0; i < truth.corr.rows(); ++i) {
      for (int j = 0; j < truth.corr.cols(); ++j)
        tf << (j ? "," : "") << num17(truth.corr(i, j));
      tf << "\n";
    }
    tf << "thresholds";
    for (int j = 0; j < truth.thresholds.size(); ++j)
      tf << "," << num17(truth.thresholds(j));
    tf << "\n";
    std::printf("dataset %d: %d rows -> %s.csv\n", k + 1, data.n(), stem.c_str());
  }
  return 0;
}

int cmd_compare_quant(const SynthSpec& spec, const std::vector<int>& dims,
                      const FitFlags& fflags, bool full_minus_one,
                      const std::string& summary_path, const std::string& pairs_path) {
  if (dims.empty()) throw UsageError("--dims must list at least one latent dimension");
  const ReproReport rep =
      run_reproducibility_experiment(spec, dims, to_config(fflags), full_minus_one);

  std::ofstream sum = open_out_file(summary_path);
  sum << "dataset,model,p_z,r2\n";
  for (const auto& row : rep.summary)
    sum << row.dataset << "," << row.model << "," << row.p_z << ","
        << num17(row.r2) << "\n";

  if (!pairs_path.empty()) {
    std::ofstream pf = open_out_file(pairs_path);
    pf << "dataset,model,p_z,i,j,pair_type,var_bucket,r_emp,r_model\n";
    for (const auto& pr : rep.pairs)
      pf << pr.dataset << "," << pr.model << "," << pr.p_z << "," << pr.i << ","
         << pr.j << "," << pr.pair_type << "," << pr.var_bucket << ","
         << num17(pr.r_emp) << "," << num17(pr.r_model) << "\n";
  }

  std::printf("accepted datasets %d, summary rows %zu\n", rep.n_accepted,
              rep.summary.size());
  for (const auto& f : rep.failures)
    std::fprintf(stderr, "fit failure: %s\n", f.c_str());
  return 0;
}

int cmd_sampling_dist(const std::string& model_path, std::vector<int> sizes,
                      int replicates, std::uint64_t seed, const FitFlags& fflags,
                      const std::string& prefix) {
  const ModelFile mf = load_model(model_path);
  SamplingDistSpec spec;
  spec.truth = mf.params;
  if (!sizes.empty()) spec.sizes = std::move(sizes);
  spec.replicates = replicates;
  spec.seed = seed;
  spec.n_threads = fflags.threads;

  const SamplingDistResult res = run_sampling_distribution(spec, to_config(fflags));

  {
    std::ofstream tf = open_out_file(prefix + "truth.csv");
    for (size_t j = 0; j < res.param_names.size(); ++j)
      tf << (j ? "," : "") << res.param_names[j];
    tf << "\n";
    for (int j = 0; j < res.truth_values.size(); ++j)
      tf << (j ? "," : "") << num17(res.truth_values(j));
    tf << "\n";
  }
  for (size_t s = 0; s < res.sizes.size(); ++s) {
    const std::string path = prefix + "n" + std::to_string(res.sizes[s]) + ".csv";
    std::ofstream out = open_out_file(path);
    for (size_t j = 0; j < res.param_names.size(); ++j)
      out << (j ? "," : "") << res.param_names[j];
    out << "\n";
    const Eigen::MatrixXd& est = res.estimates[s];
    for (int r = 0; r < est.rows(); ++r) {
      for (int j = 0; j < est.cols(); ++j) out << (j ? "," : "") << num17(est(r, j));
      out << "\n";
    }
    std::printf("size %d: %d replicates -> %s\n", res.sizes[s],
                static_cast<int>(est.rows()), path.c_str());
  }
  for (const auto& f : res.failures) std::fprintf(stderr, "replicate failure: %s\n", f.c_str());
  return 0;
}

int cmd_biplot(const std::string& model_path, const DataFlags& dflags,
               std::vector<int> axes, const std::string& color_by,
               double arrow_scale, const std::string& svg_path,
               const std::string& csv_path) {
  const ModelFile mf = load_model(model_path);
  const Schema schema = load_schema(dflags.schema_path);
  Dataset data = load_csv(dflags.data_path, schema);
  if (!dflags.log_columns.empty()) log_transform_columns(&data, dflags.log_columns);

  const CanonicalModel canon = canonicalize(mf.params);
  BiplotSpec spec;
  if (!axes.empty()) {
    if (axes.size() != 2) throw UsageError("--axes needs exactly two indices");
    spec.axis1 = axes[0];
    spec.axis2 = axes[1];
  }
  spec.color_by = color_by;
  spec.arrow_scale = arrow_scale;

  const Biplot b = make_biplot(canon, schema, data, spec);
  if (!csv_path.empty()) write_biplot_csv(b, csv_path);
  if (!svg_path.empty()) write_biplot_svg(b, svg_path);
  std::printf("biplot of %d rows on axes %d,%d (circle radius %s)\n",
              static_cast<int>(b.scores.rows()), spec.axis1, spec.axis2,
              num17(b.circle_radius).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Identifiable factor analysis for mixed continuous/binary data"};
  app.require_subcommand(1);

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "maximum-likelihood fit");
  DataFlags fit_data;
  FitFlags fit_flags;
  int fit_dims = 0;
  std::string fit_out = "model.json";
  bool no_canonical = false;
  add_data_flags(fit_cmd, &fit_data);
  add_fit_flags(fit_cmd, &fit_flags);
  fit_cmd->add_option("--seed", fit_flags.seed, "RNG seed");
  fit_cmd->add_option("--latent-dims", fit_dims, "latent dimension")->required();
  fit_cmd->add_option("--out", fit_out, "output model file");
  fit_cmd->add_flag("--no-canonical", no_canonical, "skip canonical rotation");

  // bic-scan
  auto* scan_cmd = app.add_subcommand("bic-scan", "BIC over a latent-dimension range");
  DataFlags scan_data;
  FitFlags scan_flags;
  int min_dims = 1, max_dims = 1;
  std::string scan_out;
  add_data_flags(scan_cmd, &scan_data);
  add_fit_flags(scan_cmd, &scan_flags);
  scan_cmd->add_option("--seed", scan_flags.seed, "RNG seed");
  scan_cmd->add_option("--min-dims", min_dims, "smallest latent dimension")->required();
  scan_cmd->add_option("--max-dims", max_dims, "largest latent dimension")->required();
  scan_cmd->add_option("--out", scan_out, "optional CSV table path");

  // score
  auto* score_cmd = app.add_subcommand("score", "factor scores for each row");
  DataFlags score_data;
  std::string score_model, score_out = "scores.csv", score_cov;
  add_data_flags(score_cmd, &score_data);
  score_cmd->add_option("--model", score_model, "model file")->required();
  score_cmd->add_option("--out", score_out, "output CSV");
  score_cmd->add_option("--cov-out", score_cov, "optional posterior covariance CSV");

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "sample rows from a model");
  std::string sim_model, sim_out = "simulated.csv";
  int sim_n = 1000;
  std::uint64_t sim_seed = 0;
  sim_cmd->add_option("--model", sim_model, "model file")->required();
  sim_cmd->add_option("--n", sim_n, "number of rows");
  sim_cmd->add_option("--seed", sim_seed, "RNG seed");
  sim_cmd->add_option("--out", sim_out, "output CSV");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "synthetic mixed datasets");
  SynthSpec synth_spec;
  int synth_emit = 1;
  std::string synth_prefix = "synth_";
  synth_cmd->add_option("--cont", synth_spec.p_cont, "continuous columns");
  synth_cmd->add_option("--bin", synth_spec.p_bin, "binary columns");
  synth_cmd->add_option("--n", synth_spec.n, "rows per dataset");
  synth_cmd->add_option("--datasets", synth_emit, "datasets to emit");
  synth_cmd->add_option("--gamma-shape", synth_spec.gamma_shape, "eigenvalue Gamma shape");
  synth_cmd->add_option("--gamma-rate", synth_spec.gamma_rate, "eigenvalue Gamma rate");
  synth_cmd->add_option("--min-xy-corr", synth_spec.min_xy_corr,
                        "acceptance threshold on max |corr(x,y)|");
  synth_cmd->add_option("--min-yy-corr", synth_spec.min_yy_corr,
                        "acceptance threshold on max |corr(y,y')|");
  synth_cmd->add_option("--seed", synth_spec.seed, "RNG seed");
  synth_cmd->add_option("--out-prefix", synth_prefix, "output file prefix");

  // compare-quant
  auto* cq_cmd = app.add_subcommand(
      "compare-quant", "correlation-reproducibility experiment vs the baseline");
  SynthSpec cq_spec;
  FitFlags cq_flags;
  std::vector<int> cq_dims{1, 2, 3};
  bool cq_full_minus_one = false;
  std::string cq_summary = "compare_summary.csv", cq_pairs;
  cq_cmd->add_option("--cont", cq_spec.p_cont, "continuous columns");
  cq_cmd->add_option("--bin", cq_spec.p_bin, "binary columns");
  cq_cmd->add_option("--n", cq_spec.n, "rows per dataset");
  cq_cmd->add_option("--datasets", cq_spec.n_datasets, "accepted datasets");
  cq_cmd->add_option("--gamma-shape", cq_spec.gamma_shape, "eigenvalue Gamma shape");
  cq_cmd->add_option("--gamma-rate", cq_spec.gamma_rate, "eigenvalue Gamma rate");
  cq_cmd->add_option("--min-xy-corr", cq_spec.min_xy_corr, "acceptance threshold");
  cq_cmd->add_option("--min-yy-corr", cq_spec.min_yy_corr, "acceptance threshold");
  cq_cmd->add_option("--seed", cq_spec.seed, "RNG seed");
  cq_cmd->add_option("--dims", cq_dims, "latent dimensions to score")->delimiter(',');
  cq_cmd->add_flag("--full-minus-one", cq_full_minus_one,
                   "reduce from a (p-1)-dimensional full fit instead of p");
  cq_cmd->add_option("--out-summary", cq_summary, "summary CSV path");
  cq_cmd->add_option("--out-pairs", cq_pairs, "per-pair CSV path");
  add_fit_flags(cq_cmd, &cq_flags);

  // sampling-dist
  auto* sd_cmd = app.add_subcommand("sampling-dist",
                                    "sampling distribution of the estimator");
  std::string sd_model, sd_prefix = "sampling_";
  std::vector<int> sd_sizes;
  int sd_replicates = 1000;
  std::uint64_t sd_seed = 0;
  FitFlags sd_flags;
  sd_cmd->add_option("--model", sd_model, "truth model file")->required();
  sd_cmd->add_option("--sizes", sd_sizes, "sample sizes (default 1000,3000,9000)")
      ->delimiter(',');
  sd_cmd->add_option("--replicates", sd_replicates, "replicates per size");
  sd_cmd->add_option("--seed", sd_seed, "RNG seed");
  sd_cmd->add_option("--out-prefix", sd_prefix, "output file prefix");
  add_fit_flags(sd_cmd, &sd_flags);

  // biplot
  auto* bp_cmd = app.add_subcommand("biplot", "factor-score biplot (SVG + CSV)");
  DataFlags bp_data;
  std::string bp_model, bp_svg = "biplot.svg", bp_csv = "biplot.csv", bp_color;
  std::vector<int> bp_axes;
  double bp_arrow_scale = 0.0;
  add_data_flags(bp_cmd, &bp_data);
  bp_cmd->add_option("--model", bp_model, "model file")->required();
  bp_cmd->add_option("--axes", bp_axes, "two 1-based latent axes (default 1,2)")
      ->delimiter(',');
  bp_cmd->add_option("--color-by", bp_color, "continuous column for the color ramp");
  bp_cmd->add_option("--arrow-scale", bp_arrow_scale,
                     "arrow multiplier (<= 0 selects automatic)");
  bp_cmd->add_option("--svg", bp_svg, "SVG output path");
  bp_cmd->add_option("--csv", bp_csv, "CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (fit_cmd->parsed())
      return cmd_fit(fit_data, fit_flags, fit_dims, fit_out, !no_canonical);
    if (scan_cmd->parsed())
      return cmd_bic_scan(scan_data, scan_flags, min_dims, max_dims, scan_out);
    if (score_cmd->parsed())
      return cmd_score(score_model, score_data, score_out, score_cov);
    if (sim_cmd->parsed()) return cmd_simulate(sim_model, sim_n, sim_seed, sim_out);
    if (synth_cmd->parsed()) return cmd_synth(synth_spec, synth_emit, synth_prefix);
    if (cq_cmd->parsed()) {
      cq_flags.seed = cq_spec.seed;
      return cmd_compare_quant(cq_spec, cq_dims, cq_flags, cq_full_minus_one,
                               cq_summary, cq_pairs);
    }
    if (sd_cmd->parsed()) {
      sd_flags.seed = sd_seed;
      return cmd_sampling_dist(sd_model, sd_sizes, sd_replicates, sd_seed, sd_flags,
                               sd_prefix);
    }
    if (bp_cmd->parsed())
      return cmd_biplot(bp_model, bp_data, bp_axes, bp_color, bp_arrow_scale,
                        bp_svg, bp_csv);
    std::fprintf(stderr, "no command given\n");
    return 2;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const CapacityError& e) {
    std::fprintf(stderr, "capacity error: %s\n", e.what());
    return 3;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
}
