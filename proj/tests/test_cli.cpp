#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <Eigen/Dense>

#include "ggfa/canon.hpp"
#include "ggfa/core.hpp"
#include "ggfa/io.hpp"
#include "ggfa/rng.hpp"
#include "ggfa/types.hpp"
#include "support.hpp"

using namespace ggfa;
namespace fs = std::filesystem;

namespace {

const char* kCli = GGFA_CLI_PATH;

struct Scratch {
  fs::path dir;
  Scratch() : dir(fs::path("cli_scratch") / std::to_string(counter()++)) {
    fs::create_directories(dir);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

int run_cli(const std::string& args, const Scratch& s, std::string* out = nullptr) {
  const std::string out_path = s / "stdout.txt";
  const std::string cmd =
      std::string(kCli) + " " + args + " >" + out_path + " 2>" + (s / "stderr.txt");
  const int status = std::system(cmd.c_str());
  if (out) {
    std::ifstream in(out_path);
    std::ostringstream ss;
    ss << in.rdbuf();
    *out = ss.str();
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

size_t count_lines(const std::string& text) {
  size_t n = 0;
  for (char ch : text)
    if (ch == '\n') ++n;
  return n;
}

// Writes a small mixed dataset + schema and returns the paths.
void write_small_dataset(const Scratch& s, std::string* data_path,
                         std::string* schema_path, int n = 200) {
  Rng rng(251);
  const ModelParams truth = test::random_model(2, 2, 1, rng, 0.9, 1.2);
  const Dataset data = sample(truth, n, 612);
  *data_path = s / "data.csv";
  *schema_path = s / "schema.txt";
  save_csv(data, *data_path);
  save_schema(data.schema, *schema_path);
}

}  // namespace

TEST_CASE("cli: fit happy path, determinism, canonical output") {
  Scratch s;
  std::string data, schema;
  write_small_dataset(s, &data, &schema);

  const std::string base = "fit --data " + data + " --schema " + schema +
                           " --latent-dims 1 --restarts 3 --seed 5 --max-iters 200";
  std::string out;
  CHECK(run_cli(base + " --out " + (s / "m1.json"), s, &out) == 0);
  CHECK(out.find("log_lik") != std::string::npos);
  CHECK(out.find("communality") != std::string::npos);

  const ModelFile mf = load_model(s / "m1.json");
  CHECK(mf.canonical);
  REQUIRE(mf.fit.has_value());
  CHECK(mf.fit->restarts == 3);
  CHECK(mf.fit->seed == 5);
  const IdentifiabilityReport rep = verify_identifiability_conditions(mf.params);
  CHECK(rep.all_ok());

  // Same flags and seed → byte-identical model file.
  CHECK(run_cli(base + " --out " + (s / "m2.json"), s) == 0);
  CHECK(slurp(s / "m1.json") == slurp(s / "m2.json"));

  // Different seed → different bytes.
  const std::string other = "fit --data " + data + " --schema " + schema +
                            " --latent-dims 1 --restarts 3 --seed 6 --max-iters 200" +
                            " --out " + (s / "m3.json");
  CHECK(run_cli(other, s) == 0);
  CHECK(slurp(s / "m1.json") != slurp(s / "m3.json"));
}

TEST_CASE("cli: exit codes for usage, data and missing-file failures") {
  Scratch s;
  std::string data, schema;
  write_small_dataset(s, &data, &schema, 60);

  // Latent dimension 0 is a usage error.
  CHECK(run_cli("fit --data " + data + " --schema " + schema +
                    " --latent-dims 0 --restarts 2",
                s) == 2);
  // Unknown flag / missing subcommand are parse errors.
  CHECK(run_cli("fit --nope 1", s) == 2);
  CHECK(run_cli("", s) == 2);
  // Help succeeds.
  CHECK(run_cli("--help", s) == 0);

  // Binary cell outside {0,1} is a data error (exit 3).
  {
    std::ofstream bad(s / "bad.csv");
    bad << "x1,x2,y1,y2\n1.0,2.0,0,2\n";
  }
  CHECK(run_cli("fit --data " + (s / "bad.csv") + " --schema " + schema +
                    " --latent-dims 1",
                s) == 3);

  // Missing model file.
  CHECK(run_cli("score --model " + (s / "none.json") + " --data " + data +
                    " --schema " + schema + " --out " + (s / "sc.csv"),
                s) == 3);
}

TEST_CASE("cli: simulate emits a lossless CSV equal to the library sampler") {
  Scratch s;
  Rng rng(257);
  ModelFile mf;
  mf.params = test::random_model(2, 2, 1, rng);
  mf.schema = Schema::mixed(2, 2);
  save_model(mf, s / "truth.json");

  CHECK(run_cli("simulate --model " + (s / "truth.json") +
                    " --n 40 --seed 99 --out " + (s / "sim.csv"),
                s) == 0);

  const Dataset want = sample(mf.params, 40, 99);
  const Dataset got = load_csv(s / "sim.csv", mf.schema);
  REQUIRE(got.n() == 40);
  for (int i = 0; i < 40; ++i) {
    CHECK(got.rows[static_cast<size_t>(i)].x == want.rows[static_cast<size_t>(i)].x);
    CHECK(got.rows[static_cast<size_t>(i)].y == want.rows[static_cast<size_t>(i)].y);
  }

  // Same seed → identical file bytes.
  CHECK(run_cli("simulate --model " + (s / "truth.json") +
                    " --n 40 --seed 99 --out " + (s / "sim2.csv"),
                s) == 0);
  CHECK(slurp(s / "sim.csv") == slurp(s / "sim2.csv"));
}

TEST_CASE("cli: score matches the library posterior per row") {
  Scratch s;
  std::string data, schema;
  write_small_dataset(s, &data, &schema, 50);

  Rng rng(263);
  ModelFile mf;
  mf.params = test::random_model(2, 2, 2, rng);
  mf.schema = Schema::mixed(2, 2);
  save_model(mf, s / "model.json");

  CHECK(run_cli("score --model " + (s / "model.json") + " --data " + data +
                    " --schema " + schema + " --out " + (s / "scores.csv") +
                    " --cov-out " + (s / "cov.csv"),
                s) == 0);

  const std::string text = slurp(s / "scores.csv");
  REQUIRE(count_lines(text) == 51);  // header + one line per row

  const Dataset d = load_csv(data, mf.schema);
  const Evaluator ev(mf.params);
  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "row,z1,z2");
  for (int i = 0; i < 50; ++i) {
    REQUIRE(std::getline(lines, line));
    std::istringstream cells(line);
    std::string cell;
    std::getline(cells, cell, ',');
    CHECK(std::stoi(cell) == i + 1);
    const Row& row = d.rows[static_cast<size_t>(i)];
    const PosteriorResult post = ev.posterior(row.x, BitState::from_bits(row.y));
    for (int t = 0; t < 2; ++t) {
      REQUIRE(std::getline(cells, cell, ','));
      CHECK(std::abs(std::stod(cell) - post.m(t)) <= 1e-12);
    }
  }

  // Covariance file round trips the shared posterior covariance.
  const std::string cov_text = slurp(s / "cov.csv");
  std::istringstream cov_lines(cov_text);
  for (int i = 0; i < 2; ++i) {
    REQUIRE(std::getline(cov_lines, line));
    std::istringstream cells(line);
    std::string cell;
    for (int j = 0; j < 2; ++j) {
      REQUIRE(std::getline(cells, cell, ','));
      CHECK(std::abs(std::stod(cell) - ev.posterior_cov()(i, j)) <= 1e-15);
    }
  }

  // A coupling-free model scores every row at mu_z = 0.
  ModelFile flat = mf;
  flat.params.c = 0.0;
  save_model(flat, s / "flat.json");
  CHECK(run_cli("score --model " + (s / "flat.json") + " --data " + data +
                    " --schema " + schema + " --out " + (s / "flat_scores.csv"),
                s) == 0);
  std::istringstream fl(slurp(s / "flat_scores.csv"));
  std::getline(fl, line);
  while (std::getline(fl, line)) {
    std::istringstream cells(line);
    std::string cell;
    std::getline(cells, cell, ',');
    while (std::getline(cells, cell, ',')) CHECK(std::stod(cell) == 0.0);
  }
}

TEST_CASE("cli: biplot arrows equal the canonical loading rows") {
  Scratch s;
  std::string data, schema;
  write_small_dataset(s, &data, &schema, 80);

  CHECK(run_cli("fit --data " + data + " --schema " + schema +
                    " --latent-dims 2 --restarts 3 --seed 7 --max-iters 200 --out " +
                    (s / "m.json"),
                s) == 0);
  CHECK(run_cli("biplot --model " + (s / "m.json") + " --data " + data +
                    " --schema " + schema + " --svg " + (s / "b.svg") + " --csv " +
                    (s / "b.csv"),
                s) == 0);

  const ModelFile mf = load_model(s / "m.json");
  const Eigen::MatrixXd M = mf.params.M();  // already canonical from cmd_fit
  const double radius = mf.params.c;

  const std::string csv = slurp(s / "b.csv");
  std::istringstream lines(csv);
  std::string line;
  int arrows_seen = 0;
  while (std::getline(lines, line)) {
    if (line.rfind("arrow,", 0) != 0) continue;
    std::istringstream cells(line);
    std::string rec, name, v1, v2;
    std::getline(cells, rec, ',');
    std::getline(cells, name, ',');
    std::getline(cells, v1, ',');
    std::getline(cells, v2, ',');
    const int j = arrows_seen++;
    CHECK(std::abs(std::stod(v1) - M(j, 0)) <= 1e-8);
    CHECK(std::abs(std::stod(v2) - M(j, 1)) <= 1e-8);
    const double len = std::hypot(std::stod(v1), std::stod(v2));
    CHECK(len <= radius + 1e-8);
  }
  CHECK(arrows_seen == 4);
  CHECK(csv.find("circle,") != std::string::npos);

  const std::string svg = slurp(s / "b.svg");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("stroke-dasharray") != std::string::npos);

  // Out-of-range axes give a usage error.
  CHECK(run_cli("biplot --model " + (s / "m.json") + " --data " + data +
                    " --schema " + schema + " --axes 1,5 --svg " + (s / "x.svg"),
                s) == 2);
}

TEST_CASE("cli: synth defaults and experiment drivers emit well-formed tables") {
  Scratch s;
  // Defaults: 5 continuous, 5 binary, 1000 rows, one dataset.
  CHECK(run_cli("synth --seed 3 --out-prefix " + (s / "d_"), s) == 0);
  const Schema schema = load_schema(s / "d_schema.txt");
  CHECK(schema.p_x() == 5);
  CHECK(schema.q() == 5);
  const Dataset d = load_csv(s / "d_data1.csv", schema);
  CHECK(d.n() == 1000);
  CHECK(slurp(s / "d_data1_truth.csv").find("thresholds,") != std::string::npos);

  // compare-quant writes one summary row per (dataset, model, p_z).
  CHECK(run_cli("compare-quant --cont 2 --bin 2 --n 300 --datasets 1 --dims 1 "
                "--restarts 2 --max-iters 120 --seed 11 --out-summary " +
                    (s / "sum.csv") + " --out-pairs " + (s / "pairs.csv"),
                s) == 0);
  const std::string sum = slurp(s / "sum.csv");
  CHECK(count_lines(sum) == 1 + 3);
  CHECK(sum.find("proposed") != std::string::npos);
  CHECK(sum.find("quant_reduced") != std::string::npos);
  CHECK(count_lines(slurp(s / "pairs.csv")) == 1 + 3 * 6);

  // sampling-dist writes one matrix per size plus the truth row.
  Rng rng(269);
  ModelFile truth;
  truth.params = test::random_model(2, 1, 1, rng, 0.9, 1.1);
  truth.schema = Schema::mixed(2, 1);
  save_model(truth, s / "t.json");
  CHECK(run_cli("sampling-dist --model " + (s / "t.json") +
                    " --sizes 150,300 --replicates 2 --restarts 2 --max-iters 120"
                    " --seed 13 --out-prefix " +
                    (s / "sd_"),
                s) == 0);
  const std::string n150 = slurp(s / "sd_n150.csv");
  const std::string n300 = slurp(s / "sd_n300.csv");
  CHECK(count_lines(n150) == 3);
  CHECK(count_lines(n300) == 3);
  CHECK(count_lines(slurp(s / "sd_truth.csv")) == 2);
  CHECK(n150.rfind("mu_x1,", 0) == 0);
}

TEST_CASE("cli: log-columns transform applies before fitting") {
  Scratch s;
  // Two positive continuous columns; one gets log-transformed.
  Schema schema;
  schema.columns = {{"a", ColumnKind::Continuous}, {"b", ColumnKind::Continuous}};
  Dataset d;
  d.schema = schema;
  Rng rng(271);
  for (int i = 0; i < 80; ++i) {
    Eigen::VectorXd x(2);
    x << std::exp(rng.normal()), std::exp(rng.normal() + 1.0);
    d.rows.push_back(Row::complete_row(x, Eigen::VectorXi()));
  }
  save_csv(d, s / "pos.csv");
  save_schema(schema, s / "pos_schema.txt");

  const std::string args = " --data " + (s / "pos.csv") + " --schema " +
                           (s / "pos_schema.txt") +
                           " --latent-dims 1 --restarts 2 --seed 2 --max-iters 150";
  CHECK(run_cli("fit" + args + " --log-columns a,b --out " + (s / "log.json"), s) == 0);
  CHECK(run_cli("fit" + args + " --out " + (s / "raw.json"), s) == 0);

  const ModelFile logged = load_model(s / "log.json");
  const ModelFile raw = load_model(s / "raw.json");
  // The log model's means are the means of the logs, not the raw means.
  Dataset manual = d;
  log_transform_columns(&manual, {"a", "b"});
  double mean_log_a = 0.0;
  for (const auto& row : manual.rows) mean_log_a += row.x(0) / manual.n();
  CHECK(std::abs(logged.params.mu_x(0) - mean_log_a) <= 0.2);
  CHECK(logged.params.mu_x(0) != raw.params.mu_x(0));

  // Nonpositive values under --log-columns are a data error.
  d.rows[0].x(0) = -1.0;
  save_csv(d, s / "neg.csv");
  CHECK(run_cli("fit --data " + (s / "neg.csv") + " --schema " +
                    (s / "pos_schema.txt") +
                    " --latent-dims 1 --log-columns a --out " + (s / "z.json"),
                s) == 3);
}
