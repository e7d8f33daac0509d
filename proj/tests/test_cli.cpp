#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "milr/cli.hpp"
#include "milr/io.hpp"

using namespace milr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(MILR_TEST_DATA_DIR) / "cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::size_t line_count(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

}  // namespace

TEST_CASE("gen writes a dataset and a manifest") {
  unsetenv("MILR_SEED");
  const fs::path dir = scratch("gen");
  const std::string out = (dir / "d.csv").string();
  const Outcome r = run({"gen", "--n", "2", "--rho", "0.8", "--samples", "1000", "--seed", "7", "--out", out});
  REQUIRE(r.code == cli::kOk);
  const Dataset d = dataset_from_csv(read_file(out));
  CHECK(d.size() == 1000);
  CHECK(d.input_dim == 2);
  const auto manifest = nlohmann::json::parse(read_file(out + ".manifest.json"));
  CHECK(manifest["schema_version"] == cli::kManifestSchemaVersion);
  CHECK(manifest["seed"] == 7);
  CHECK(manifest["subcommand"] == "gen");
  CHECK(manifest["config"]["--rho"] == "0.8");
  CHECK(manifest["outputs"][0]["sha256"] == sha256_hex(read_file(out)));
  CHECK(manifest["wall_time_seconds"].get<double>() >= 0.0);
}

TEST_CASE("validation errors name the flag") {
  unsetenv("MILR_SEED");
  const fs::path dir = scratch("validation");
  const std::string out = (dir / "x.csv").string();
  Outcome r = run({"gen", "--rho", "1.0", "--samples", "5", "--seed", "1", "--out", out});
  CHECK(r.code == cli::kValidation);
  CHECK(r.err.find("--rho") != std::string::npos);
  CHECK(r.err.find("(0, 1)") != std::string::npos);
  CHECK_FALSE(fs::exists(out));

  r = run({"train", "--loss", "milr", "--lambda-ent", "-1", "--seed", "1", "--out", out});
  CHECK(r.code == cli::kValidation);
  CHECK(r.err.find("--lambda-ent") != std::string::npos);

  r = run({"train", "--iterations", "0", "--seed", "1", "--out", out});
  CHECK(r.code == cli::kValidation);
  r = run({"train", "--sigma-min", "0", "--seed", "1", "--out", out});
  CHECK(r.code == cli::kValidation);
  r = run({"gen", "--model", "scalar", "--noise-sigma", "0", "--beta", "1", "--samples", "3", "--seed", "1", "--out", out});
  CHECK(r.code == cli::kValidation);
  r = run({"convergence", "--lr", "2", "--seed", "1", "--out", out});
  CHECK(r.code == cli::kValidation);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("seed comes from the flag or the environment") {
  const fs::path dir = scratch("seed");
  const std::string out = (dir / "x.csv").string();
  unsetenv("MILR_SEED");
  Outcome r = run({"gen", "--samples", "5", "--out", out});
  CHECK(r.code == cli::kValidation);
  CHECK(r.err.find("--seed") != std::string::npos);
  setenv("MILR_SEED", "31", 1);
  r = run({"gen", "--samples", "5", "--out", out});
  CHECK(r.code == cli::kOk);
  const std::string from_env = read_file(out);
  unsetenv("MILR_SEED");
  r = run({"gen", "--samples", "5", "--seed", "31", "--out", out});
  CHECK(read_file(out) == from_env);
  CHECK(nlohmann::json::parse(read_file(out + ".manifest.json"))["seed"] == 31);
}

TEST_CASE("usage errors") {
  CHECK(run({"gen", "--bogus"}).code == cli::kUsage);
  CHECK(run({"gen", "--seed", "1", "--out", "x.csv"}).code == cli::kUsage);
  CHECK(run({}).code == cli::kUsage);
  CHECK(run({"frobnicate"}).code == cli::kUsage);
  CHECK(run({"gen", "--samples", "ten", "--seed", "1", "--out", "x"}).code == cli::kUsage);
}

TEST_CASE("help lists flags with defaults and units") {
  for (const std::string sub : {"gen", "train", "eval", "infer", "mi", "bounds", "complexity", "convergence",
                                "concentration", "gradcheck", "plot", "replay"}) {
    const Outcome r = run({sub, "--help"});
    INFO(sub);
    CHECK(r.code == cli::kOk);
    CHECK(r.out.find("Options:") != std::string::npos);
  }
  const std::string train = run({"train", "--help"}).out;
  for (const std::string flag : {"--lr", "--iterations", "--batch-size", "--lambda-ent", "--sigma-min", "--hidden"})
    CHECK(train.find(flag) != std::string::npos);
  CHECK(train.find("[0.05]") != std::string::npos);
  CHECK(train.find("[5000]") != std::string::npos);
  CHECK(train.find("label units") != std::string::npos);
}

TEST_CASE("io failures exit with the io code and leave no output") {
  unsetenv("MILR_SEED");
  const fs::path dir = scratch("io");
  CHECK(run({"gen", "--samples", "5", "--seed", "1", "--out", (dir / "no" / "such" / "d.csv").string()}).code ==
        cli::kIo);
  const std::string out = (dir / "e.csv").string();
  CHECK(run({"eval", "--model", (dir / "missing.json").string(), "--seed", "1", "--out", out}).code == cli::kIo);
  CHECK_FALSE(fs::exists(out));
  write_file_atomic(dir / "bad.json", "{\"schema_version\": 1, \"surprise\": true}");
  CHECK(run({"eval", "--model", (dir / "bad.json").string(), "--seed", "1", "--out", out}).code == cli::kValidation);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("bounds table shape") {
  const fs::path dir = scratch("bounds");
  const std::string out = (dir / "b.csv").string();
  REQUIRE(run({"bounds", "--n", "1:50", "--rho", "0.5,0.9702835,0.99", "--out", out}).code == cli::kOk);
  const std::string csv = read_file(out);
  CHECK(csv.rfind("n,rho,mi_exact,b_paper,b_tight,regime,log_slope\n", 0) == 0);
  CHECK(line_count(csv) == 151);
  REQUIRE(run({"bounds", "--n", "1,2,3", "--rho", "threshold", "--out", out}).code == cli::kOk);
  const CsvTable t = parse_csv(read_file(out));
  for (const auto& row : t.rows) CHECK(row[t.column("regime")] == "constant");
}

TEST_CASE("train, eval, infer and mi compose") {
  unsetenv("MILR_SEED");
  const fs::path dir = scratch("pipeline");
  const auto p = [&](const char* name) { return (dir / name).string(); };
  REQUIRE(run({"gen", "--n", "1", "--rho", "0.8", "--samples", "4000", "--seed", "2", "--out", p("held.csv")}).code ==
          0);
  REQUIRE(run({"train", "--loss", "mse", "--n", "1", "--rho", "0.8", "--iterations", "1500", "--seed", "3", "--out",
               p("mse.json")})
              .code == 0);
  const Outcome e = run({"eval", "--model", p("mse.json"), "--data", p("held.csv"), "--out", p("eval.csv")});
  REQUIRE(e.code == 0);
  CHECK(e.out.find("risk") != std::string::npos);
  const CsvTable risk = parse_csv(read_file(p("eval.csv")));
  const double r = parse_double(risk.rows[0][risk.column("risk")]);
  const double se = parse_double(risk.rows[0][risk.column("std_error")]);
  // A trained mean predictor approaches the Bayes risk 1 - rho^2.
  CHECK(std::abs(r - 0.36) <= 3 * se + 0.02);

  REQUIRE(run({"train", "--n", "1", "--rho", "0.8", "--iterations", "1500", "--seed", "4", "--out", p("mil.json"),
               "--trace", p("trace.csv")})
              .code == 0);
  CHECK(line_count(read_file(p("trace.csv"))) == 1501);
  const Outcome mi = run({"mi", "--data", p("held.csv"), "--model", p("mil.json"), "--marginal", "mixture", "--out",
                          p("mi.csv")});
  REQUIRE(mi.code == 0);
  CHECK(mi.out.find("I_hat") != std::string::npos);
  CHECK(mi.out.find("ln N cap") != std::string::npos);
  const CsvTable t = parse_csv(read_file(p("mi.csv")));
  CHECK(parse_double(t.rows[0][t.column("mi_estimate")]) <= std::log(4000.0));
  CHECK(run({"mi", "--data", p("held.csv"), "--model", p("mse.json"), "--marginal", "parametric", "--out",
             p("mi2.csv")})
            .code == cli::kValidation);

  REQUIRE(run({"infer", "--model", p("mil.json"), "--data", p("held.csv"), "--out", p("pred.csv")}).code == 0);
  const CsvTable pred = parse_csv(read_file(p("pred.csv")));
  CHECK(pred.header == std::vector<std::string>{"mu_1", "sigma_1"});
  CHECK(pred.rows.size() == 4000);

  REQUIRE(run({"plot", "--in", p("trace.csv"), "--x", "t", "--y", "loss", "--out", p("trace.svg")}).code == 0);
  CHECK(read_file(p("trace.svg")).find("<polyline") != std::string::npos);
}

TEST_CASE("replay reproduces outputs and detects tampering") {
  unsetenv("MILR_SEED");
  const fs::path dir = scratch("replay");
  const std::string out = (dir / "g.csv").string();
  REQUIRE(run({"gradcheck", "--seed", "5", "--trials", "3", "--out", out}).code == 0);
  Outcome r = run({"replay", "--manifest", out + ".manifest.json", "--out-dir", (dir / "again").string()});
  CHECK(r.code == 0);
  CHECK(read_file(dir / "again" / "g.csv") == read_file(out));

  auto manifest = nlohmann::json::parse(read_file(out + ".manifest.json"));
  manifest["outputs"][0]["sha256"] = std::string(64, '0');
  write_file_atomic(dir / "tampered.json", manifest.dump());
  r = run({"replay", "--manifest", (dir / "tampered.json").string(), "--out-dir", (dir / "t").string()});
  CHECK(r.code == cli::kInternal);
  CHECK(r.out.find("DIFFERS") != std::string::npos);

  setenv("MILR_SEED", "77", 1);
  REQUIRE(run({"gen", "--samples", "4", "--out", (dir / "env.csv").string()}).code == 0);
  unsetenv("MILR_SEED");
  CHECK(run({"replay", "--manifest", (dir / "env.csv.manifest.json").string(), "--out-dir", (dir / "e").string()})
            .code == 0);
}
