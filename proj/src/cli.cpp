#include "milr/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "milr/data_model.hpp"
#include "milr/density_models.hpp"
#include "milr/info_bounds.hpp"
#include "milr/io.hpp"
#include "milr/mil_loss.hpp"
#include "milr/plot.hpp"
#include "milr/sgd_trainer.hpp"

namespace milr::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

/// Raised for a breached internal invariant (exit code 5).
class InternalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void check(bool ok, const std::string& flag, const std::string& requirement) {
  if (!ok) throw ValidationError(flag + " " + requirement);
}

void check_open_unit(double v, const std::string& flag) {
  check(v > 0.0 && v < 1.0, flag, "must lie in the open interval (0, 1), got " + format_double(v));
}

void check_positive(double v, const std::string& flag) {
  check(v > 0.0 && std::isfinite(v), flag, "must be > 0, got " + format_double(v));
}

std::vector<std::size_t> parse_widths(const std::string& text, const std::string& flag) {
  std::vector<std::size_t> out;
  if (text == "none" || text.empty()) return out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t value = 0;
    std::size_t used = 0;
    try {
      value = std::stoul(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    check(used == item.size() && value > 0, flag, "must be a comma-separated list of positive widths or 'none'");
    out.push_back(value);
  }
  return out;
}

/// "a:b" (inclusive range) or a comma-separated list.
std::vector<std::size_t> parse_dimension_list(const std::string& text, const std::string& flag) {
  if (const auto colon = text.find(':'); colon != std::string::npos) {
    std::size_t lo = 0, hi = 0;
    try {
      lo = std::stoul(text.substr(0, colon));
      hi = std::stoul(text.substr(colon + 1));
    } catch (const std::exception&) {
      throw ValidationError(flag + " range must look like 1:50");
    }
    check(lo >= 1 && hi >= lo, flag, "range must satisfy 1 <= first <= last");
    std::vector<std::size_t> out;
    for (std::size_t n = lo; n <= hi; ++n) out.push_back(n);
    return out;
  }
  return parse_widths(text, flag);
}

std::string join(const std::vector<std::string>& items, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? std::string(1, sep) : "") + items[i];
  return out;
}

struct StagedFile {
  std::string flag;
  fs::path path;
  std::string content;
};

/// Collects outputs so that nothing is written until the command succeeded.
class RunContext {
 public:
  RunContext(std::vector<std::string> args, std::ostream& out) : args_(std::move(args)), out_(out) {}

  std::ostream& out() { return out_; }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void stage(const std::string& flag, const fs::path& path, std::string content) {
    files_.push_back({flag, path, std::move(content)});
  }

  void commit(const std::string& subcommand, const json& config, double wall_seconds) {
    if (files_.empty()) throw InternalError("command produced no output file");
    json manifest;
    manifest["schema_version"] = kManifestSchemaVersion;
    manifest["command_line"] = args_;
    manifest["subcommand"] = subcommand;
    manifest["config"] = config;
    manifest["seed"] = seed_ ? json(*seed_) : json(nullptr);
    json outputs = json::array();
    for (const auto& f : files_) {
      outputs.push_back({{"flag", f.flag}, {"path", f.path.string()}, {"sha256", sha256_hex(f.content)}});
    }
    manifest["outputs"] = outputs;
    manifest["wall_time_seconds"] = wall_seconds;
    for (const auto& f : files_) write_file_atomic(f.path, f.content);
    fs::path manifest_path = files_.front().path;
    manifest_path += ".manifest.json";
    write_file_atomic(manifest_path, manifest.dump(2) + "\n");
  }

 private:
  std::vector<std::string> args_;
  std::ostream& out_;
  std::optional<std::uint64_t> seed_;
  std::vector<StagedFile> files_;
};

json resolved_config(const CLI::App& sub) {
  json config = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_name();
    if (name == "--help" || name.empty()) continue;
    if (opt->count() > 0 || !opt->empty()) {
      config[name] = join(opt->results());
    } else {
      config[name] = opt->get_default_str();
    }
  }
  return config;
}

// Shared flag groups.

struct SeedFlag {
  std::uint64_t value = 0;
  CLI::Option* option = nullptr;

  void add(CLI::App* sub) {
    option = sub->add_option("--seed", value, "RNG seed (64-bit unsigned); falls back to $MILR_SEED")
                 ->envname("MILR_SEED");
  }
  std::uint64_t require(RunContext& ctx) const {
    check(option != nullptr && !option->empty(), "--seed", "is required (or set MILR_SEED)");
    ctx.set_seed(value);
    return value;
  }
};

struct GeneratorFlags {
  std::string model = "joint";
  std::size_t n = 1;
  double rho = 0.5;
  std::size_t input_dim = 1;
  std::string truth = "linear";
  std::vector<double> beta;
  double noise_sigma = 1.0;

  void add(CLI::App* sub) {
    sub->add_option("--model", model, "data model: joint (correlated Gaussian) or scalar (y = f(x) + noise)")
        ->check(CLI::IsMember({"joint", "scalar"}));
    sub->add_option("--n", n, "joint model dimension of X and Y");
    sub->add_option("--rho", rho, "joint model correlation, open interval (0, 1)");
    sub->add_option("--input-dim", input_dim, "scalar model input dimension");
    sub->add_option("--truth", truth, "scalar model truth function: linear, quadratic or sine");
    sub->add_option("--beta", beta, "scalar linear coefficients, comma-separated (input-dim entries)")
        ->delimiter(',');
    sub->add_option("--noise-sigma", noise_sigma, "scalar model noise standard deviation (label units)");
  }

  SampleSource source() const {
    if (model == "joint") {
      check(n >= 1, "--n", "must be >= 1");
      check_open_unit(rho, "--rho");
      return OnlineJointGaussian{{n, rho}};
    }
    check(input_dim >= 1, "--input-dim", "must be >= 1");
    check_positive(noise_sigma, "--noise-sigma");
    ScalarRegressionSpec spec{input_dim, truth_kind_from_string(truth), beta, noise_sigma};
    if (spec.truth == TruthKind::linear) {
      check(beta.size() == input_dim, "--beta", "must have --input-dim entries for the linear truth function");
    } else {
      spec.beta.clear();
    }
    spec.validate();
    return OnlineScalarRegression{spec};
  }
};

Dataset generate(const SampleSource& source, std::size_t count, Rng& rng) {
  if (const auto* s = std::get_if<OnlineJointGaussian>(&source)) return sample_joint_gaussian(s->spec, count, rng);
  return sample_scalar_regression(std::get<OnlineScalarRegression>(source).spec, count, rng);
}

ModelDocument load_model(const std::string& path) { return model_from_json(read_file(path)); }
Dataset load_dataset(const std::string& path) { return dataset_from_csv(read_file(path)); }

// --- gen -------------------------------------------------------------------

struct GenCommand {
  GeneratorFlags gen;
  std::size_t samples = 0;
  SeedFlag seed;
  std::string out;

  void add(CLI::App* sub) {
    gen.add(sub);
    sub->add_option("--samples", samples, "number of rows to draw")->required();
    seed.add(sub);
    sub->add_option("--out", out, "output dataset CSV path")->required();
  }

  void validate() const {
    gen.source();
    check(samples >= 1, "--samples", "must be >= 1");
  }

  void execute(RunContext& ctx) const {
    Rng rng(seed.require(ctx));
    const Dataset data = generate(gen.source(), samples, rng);
    ctx.stage("--out", out, dataset_to_csv(data));
    ctx.out() << "wrote " << data.size() << " rows (" << data.input_dim << " inputs, " << data.label_dim
              << " labels) to " << out << "\n";
  }
};

// --- train -----------------------------------------------------------------

struct TrainCommand {
  std::string loss = "milr";
  std::string data;
  GeneratorFlags gen;
  std::string hidden = std::to_string(kDefaultHiddenWidth);
  std::string activation = "tanh";
  double sigma_min = kDefaultSigmaMin;
  double sigma_max = kDefaultSigmaMax;
  std::size_t iterations = 5000;
  std::size_t batch_size = 128;
  double lr = 0.05;
  std::string lr_schedule = "constant";
  double lambda_ent = kDefaultLambdaEnt;
  SeedFlag seed;
  std::string out;
  std::string trace;

  void add(CLI::App* sub) {
    sub->add_option("--loss", loss, "objective: milr (conditional + marginal cross-entropy) or mse")
        ->check(CLI::IsMember({"milr", "mse"}));
    sub->add_option("--data", data, "train by resampling this dataset CSV; otherwise draw online from --model");
    gen.add(sub);
    sub->add_option("--hidden", hidden, "hidden layer widths, comma-separated, or 'none'");
    sub->add_option("--activation", activation, "hidden activation: tanh or identity");
    sub->add_option("--sigma-min", sigma_min, "lower clamp on predicted sigma (label units)");
    sub->add_option("--sigma-max", sigma_max, "upper clamp on predicted sigma (label units)");
    sub->add_option("--iterations", iterations, "number of SGD iterations T");
    sub->add_option("--batch-size", batch_size, "examples per iteration N");
    sub->add_option("--lr", lr, "learning rate eta (constant) or eta_0 (inverse-sqrt)");
    sub->add_option("--lr-schedule", lr_schedule, "constant or inverse-sqrt (eta_0 / sqrt(t + 1))")
        ->check(CLI::IsMember({"constant", "inverse-sqrt"}));
    sub->add_option("--lambda-ent", lambda_ent, "weight of the marginal cross-entropy term (>= 0)");
    seed.add(sub);
    sub->add_option("--out", out, "output model JSON path")->required();
    sub->add_option("--trace", trace, "optional per-iteration trace CSV path");
  }

  void validate() const {
    check(lambda_ent >= 0.0 && std::isfinite(lambda_ent), "--lambda-ent", "must be >= 0, got " + format_double(lambda_ent));
    check(iterations >= 1, "--iterations", "must be >= 1");
    check(batch_size >= 1, "--batch-size", "must be >= 1");
    check(lr >= 0.0 && std::isfinite(lr), "--lr", "must be >= 0");
    check_positive(sigma_min, "--sigma-min");
    check(sigma_max >= sigma_min && std::isfinite(sigma_max), "--sigma-max", "must be finite and >= --sigma-min");
    parse_widths(hidden, "--hidden");
    activation_from_string(activation);
    if (data.empty()) gen.source();
    check(trace != out, "--trace", "must differ from --out");
  }

  void execute(RunContext& ctx) const {
    const std::uint64_t base = seed.require(ctx);
    std::optional<Dataset> dataset;
    SampleSource source = OnlineJointGaussian{};
    if (!data.empty()) {
      dataset = load_dataset(data);
      source = DatasetResampling{&*dataset};
    } else {
      source = gen.source();
    }
    Rng probe(0);
    BatchSampler dims(source, probe);

    ConditionalGaussianHead head(dims.input_dim(), dims.label_dim(), parse_widths(hidden, "--hidden"),
                                 activation_from_string(activation), SigmaClamp{sigma_min, sigma_max});
    Rng init(derive_seed(base, 0));
    head.initialize(init);

    SgdConfig config;
    config.iterations = iterations;
    config.batch_size = batch_size;
    config.lr = {lr_schedule == "constant" ? LrKind::constant : LrKind::inverse_sqrt, lr};
    config.lambda_ent = lambda_ent;
    config.seed = derive_seed(base, 1);

    ModelDocument model{head, std::nullopt};
    TrainTrace result_trace;
    if (loss == "milr") {
      TrainResult r = sgd_train(config, source, head, MarginalGaussian(dims.label_dim(), head.clamp()));
      model = {std::move(r.head), std::move(r.marginal)};
      result_trace = std::move(r.trace);
    } else {
      MseTrainResult r = mse_train(config, source, head);
      model = {std::move(r.head), std::nullopt};
      result_trace = std::move(r.trace);
    }
    ctx.stage("--out", out, model_to_json(model));
    if (!trace.empty()) ctx.stage("--trace", trace, trace_to_csv(result_trace.records));
    ctx.out() << "trained " << loss << " model for " << iterations << " iterations; final batch loss "
              << format_double(result_trace.records.back().loss) << "\n";
  }
};

// --- eval ------------------------------------------------------------------

struct EvalCommand {
  std::string model;
  std::string data;
  std::size_t n = 1;
  double rho = 0.5;
  std::size_t samples = 100000;
  SeedFlag seed;
  std::string out;

  void add(CLI::App* sub) {
    sub->add_option("--model", model, "model JSON path")->required();
    sub->add_option("--data", data, "held-out dataset CSV; without it, fresh joint-model draws are used");
    sub->add_option("--n", n, "joint model dimension (no --data)");
    sub->add_option("--rho", rho, "joint model correlation in (0, 1) (no --data)");
    sub->add_option("--samples", samples, "Monte-Carlo sample count (no --data)");
    seed.add(sub);
    sub->add_option("--out", out, "output CSV path (samples,risk,std_error)")->required();
  }

  void validate() const {
    if (data.empty()) {
      check_open_unit(rho, "--rho");
      check(n >= 1, "--n", "must be >= 1");
      check(samples >= 2, "--samples", "must be >= 2");
    }
  }

  void execute(RunContext& ctx) const {
    const ModelDocument doc = load_model(model);
    McEstimate risk;
    std::size_t count = 0;
    if (!data.empty()) {
      const Dataset held_out = load_dataset(data);
      check(held_out.input_dim == doc.head.input_dim() && held_out.label_dim == doc.head.label_dim(), "--data",
            "dimensions do not match the model");
      check(held_out.size() >= 2, "--data", "needs at least two rows");
      Vector losses(held_out.size());
      for (std::size_t i = 0; i < held_out.size(); ++i) {
        const Vector mu = doc.head.predict(held_out.input(i));
        const auto y = held_out.label(i);
        double acc = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) acc += (y[k] - mu[k]) * (y[k] - mu[k]);
        losses[i] = acc;
      }
      risk = mean_with_std_error(losses);
      count = held_out.size();
    } else {
      check(doc.head.input_dim() == n && doc.head.label_dim() == n, "--n", "does not match the model dimensions");
      Rng rng(seed.require(ctx));
      const auto& head = doc.head;
      risk = population_risk_mc([&head](std::span<const double> x) { return head.predict(x); }, {n, rho}, samples,
                                rng);
      count = samples;
    }
    ctx.stage("--out", out,
              "samples,risk,std_error\n" + std::to_string(count) + "," + format_double(risk.estimate) + "," +
                  format_double(risk.std_error) + "\n");
    ctx.out() << "risk " << format_double(risk.estimate) << " +- " << format_double(risk.std_error) << " (" << count
              << " samples)\n";
  }
};

// --- infer -----------------------------------------------------------------

struct InferCommand {
  std::string model;
  std::string data;
  std::string out;

  void add(CLI::App* sub) {
    sub->add_option("--model", model, "model JSON path")->required();
    sub->add_option("--data", data, "CSV with columns x_1..x_d (label columns are ignored)")->required();
    sub->add_option("--out", out, "output CSV path (mu_1..,sigma_1..)")->required();
  }

  void validate() const {}

  void execute(RunContext& ctx) const {
    const ModelDocument doc = load_model(model);
    const CsvTable table = parse_csv(read_file(data));
    const std::size_t d = doc.head.input_dim();
    std::vector<std::size_t> columns;
    for (std::size_t k = 0; k < d; ++k) columns.push_back(table.column("x_" + std::to_string(k + 1)));
    std::string csv;
    for (std::size_t k = 0; k < doc.head.label_dim(); ++k) csv += (k ? ",mu_" : "mu_") + std::to_string(k + 1);
    for (std::size_t k = 0; k < doc.head.label_dim(); ++k) csv += ",sigma_" + std::to_string(k + 1);
    csv += '\n';
    Vector x(d);
    for (const auto& row : table.rows) {
      for (std::size_t k = 0; k < d; ++k) x[k] = parse_double(row[columns[k]]);
      const GaussianParams p = doc.head.forward(x);
      std::vector<std::string> fields;
      for (double v : p.mu) fields.push_back(format_double(v));
      for (double v : p.sigma) fields.push_back(format_double(v));
      csv += join(fields) + '\n';
    }
    ctx.stage("--out", out, csv);
    ctx.out() << "wrote predictions for " << table.rows.size() << " rows to " << out << "\n";
  }
};

// --- mi --------------------------------------------------------------------

struct MiCommand {
  std::string model;
  std::string data;
  std::string marginal = "mixture";
  std::string out;

  void add(CLI::App* sub) {
    sub->add_option("--model", model, "model JSON path")->required();
    sub->add_option("--data", data, "dataset CSV")->required();
    sub->add_option("--marginal", marginal,
                    "mixture (batch average of the head, O(N^2)) or parametric (the model's trained marginal)")
        ->check(CLI::IsMember({"mixture", "parametric"}));
    sub->add_option("--out", out, "output CSV path")->required();
  }

  void validate() const {}

  void execute(RunContext& ctx) const {
    const ModelDocument doc = load_model(model);
    const Dataset dataset = load_dataset(data);
    MarginalChoice choice = MixtureMarginal{};
    if (marginal == "parametric") {
      check(doc.marginal.has_value(), "--marginal", "parametric needs a model trained with --loss milr");
      choice = *doc.marginal;
    }
    const LossReport r = mil_loss_batch(doc.head, choice, dataset, 1.0);
    const double cap = std::log(static_cast<double>(dataset.size()));
    if (marginal == "mixture" && r.mi_estimate > cap + 1e-9) {
      throw InternalError("mixture MI estimate exceeds log N");
    }
    ctx.stage("--out", out,
              "samples,marginal,conditional_ce,marginal_ce,mi_estimate,ln_n_cap\n" + std::to_string(dataset.size()) +
                  "," + marginal + "," + format_double(r.conditional_ce) + "," + format_double(r.marginal_ce) + "," +
                  format_double(r.mi_estimate) + "," + format_double(cap) + "\n");
    ctx.out() << "I_hat " << format_double(r.mi_estimate) << " nats (h(Y) " << format_double(r.marginal_ce)
              << ", h(Y|X) " << format_double(r.conditional_ce) << "); ln N cap " << format_double(cap) << "\n";
  }
};

// --- bounds ----------------------------------------------------------------

struct BoundsCommand {
  std::string n = "1:50";
  std::vector<std::string> rho{"0.5", "threshold", "0.99"};
  std::string out;

  void add(CLI::App* sub) {
    sub->add_option("--n", n, "dimensions: range a:b or comma-separated list");
    sub->add_option("--rho", rho, "correlations in (0, 1), comma-separated; 'threshold' = sqrt(1 - 1/(2 pi e))")
        ->delimiter(',');
    sub->add_option("--out", out, "output CSV path")->required();
  }

  std::vector<double> rhos() const {
    std::vector<double> values;
    for (const auto& text : rho) {
      const double v = text == "threshold" ? threshold_rho() : parse_double(text);
      check_open_unit(v, "--rho");
      values.push_back(v);
    }
    check(!values.empty(), "--rho", "needs at least one value");
    return values;
  }

  void validate() const {
    parse_dimension_list(n, "--n");
    rhos();
  }

  void execute(RunContext& ctx) const {
    const auto dims = parse_dimension_list(n, "--n");
    std::string csv = "n,rho,mi_exact,b_paper,b_tight,regime,log_slope\n";
    std::size_t rows = 0;
    for (double r : rhos()) {
      const RegimeLabel label = asymptotic_regime(r);
      for (std::size_t d : dims) {
        csv += std::to_string(d) + "," + format_double(r) + "," + format_double(mutual_information_exact(d, r)) + "," +
               format_double(fano_bound_paper(d, r)) + "," + format_double(fano_bound_tight(d, r)) + "," +
               to_string(label.regime) + "," + format_double(label.log_slope) + "\n";
        ++rows;
      }
    }
    ctx.stage("--out", out, csv);
    ctx.out() << "wrote " << rows << " bound rows to " << out << "\n";
  }
};

// --- complexity ------------------------------------------------------------

struct ComplexityCommand {
  ComplexityInputs in;
  std::string out;

  void add(CLI::App* sub) {
    sub->add_option("--epsilon", in.epsilon, "squared-norm gradient accuracy epsilon (also t for the single-density size)");
    sub->add_option("--delta", in.delta, "failure probability delta in (0, 1)");
    sub->add_option("--l-tilde", in.l_tilde, "Lipschitz constant of q(y|x)");
    sub->add_option("--q0-tilde", in.q0_tilde, "lower bound of q(y|x)");
    sub->add_option("--l-bar", in.l_bar, "Lipschitz constant of q(y)");
    sub->add_option("--q0-bar", in.q0_bar, "lower bound of q(y)");
    sub->add_option("--lambda-ent", in.lambda_ent, "marginal cross-entropy weight (>= 0)");
    sub->add_option("--m", in.m, "number of conditional-model parameters");
    sub->add_option("--m-prime", in.m_prime, "number of marginal-model parameters");
    sub->add_option("--out", out, "output CSV path")->required();
  }

  void validate() const {
    check_positive(in.epsilon, "--epsilon");
    check_open_unit(in.delta, "--delta");
    check_positive(in.l_tilde, "--l-tilde");
    check_positive(in.q0_tilde, "--q0-tilde");
    check_positive(in.l_bar, "--l-bar");
    check_positive(in.q0_bar, "--q0-bar");
    check(in.lambda_ent >= 0.0, "--lambda-ent", "must be >= 0");
    check(in.m >= 1, "--m", "must be >= 1");
    check(in.m_prime >= 1, "--m-prime", "must be >= 1");
  }

  void execute(RunContext& ctx) const {
    const ComplexityResult r = sample_complexity_thm43(in);
    const auto lemma = sample_complexity_lemma42(in.epsilon, in.delta, in.l_tilde, in.q0_tilde, in.m);
    ctx.stage("--out", out,
              "epsilon,delta,lambda_ent,m,m_prime,n1,n2,n,lemma42\n" + format_double(in.epsilon) + "," +
                  format_double(in.delta) + "," + format_double(in.lambda_ent) + "," + std::to_string(in.m) + "," +
                  std::to_string(in.m_prime) + "," + std::to_string(r.n1) + "," + std::to_string(r.n2) + "," +
                  std::to_string(r.n) + "," + std::to_string(lemma) + "\n");
    ctx.out() << "N1 " << r.n1 << ", N2 " << r.n2 << ", N " << r.n << ", single-density N " << lemma << "\n";
  }
};

// --- convergence -----------------------------------------------------------

struct ProblemFlags {
  std::size_t dim = 1;
  std::vector<double> beta{1.0};
  double noise_sigma = 1.0;

  void add(CLI::App* sub) {
    sub->add_option("--dim", dim, "testbed input dimension");
    sub->add_option("--beta", beta, "testbed coefficients beta*, comma-separated (dim entries)")->delimiter(',');
    sub->add_option("--noise-sigma", noise_sigma, "testbed noise standard deviation");
  }

  LinearGaussianProblem problem() const {
    check(dim >= 1, "--dim", "must be >= 1");
    check(beta.size() == dim, "--beta", "must have --dim entries");
    check_positive(noise_sigma, "--noise-sigma");
    return {dim, beta, noise_sigma};
  }
};

struct ConvergenceCommand {
  ProblemFlags problem;
  double lr = 0.5;
  double epsilon = 0.1;
  std::size_t batch_size = 64;
  std::size_t seed_runs = 30;
  std::size_t delta0_samples = 1000000;
  std::size_t max_iterations = 2000000;
  SeedFlag seed;
  std::string out;
  std::string trace;

  void add(CLI::App* sub) {
    problem.add(sub);
    sub->add_option("--lr", lr, "constant step size, must lie in (0, 2/s) with s = 1");
    sub->add_option("--epsilon", epsilon, "target for the average squared gradient norm");
    sub->add_option("--batch-size", batch_size, "examples per iteration N");
    sub->add_option("--seed-runs", seed_runs, "extra derived-seed runs averaged at the final T");
    sub->add_option("--delta0-samples", delta0_samples, "sample count used to estimate L(theta_0)");
    sub->add_option("--max-iterations", max_iterations, "stop raising T beyond this many iterations");
    seed.add(sub);
    sub->add_option("--out", out, "output summary CSV path")->required();
    sub->add_option("--trace", trace, "optional per-iteration CSV path");
  }

  void validate() const {
    problem.problem();
    check(lr > 0.0 && lr < 2.0 / LinearGaussianProblem::kSmoothness, "--lr", "must lie in (0, 2/s) = (0, 2)");
    check_positive(epsilon, "--epsilon");
    check(batch_size >= 1, "--batch-size", "must be >= 1");
    check(delta0_samples >= 2, "--delta0-samples", "must be >= 2");
  }

  void execute(RunContext& ctx) const {
    ConvergenceSettings settings;
    settings.lr = {LrKind::constant, lr};
    settings.epsilon = epsilon;
    settings.batch_size = batch_size;
    settings.seed = seed.require(ctx);
    settings.delta0_samples = delta0_samples;
    settings.seed_average_runs = seed_runs;
    settings.max_iterations = max_iterations;
    const ConvergenceReport r = convergence_check(problem.problem(), settings);
    const bool passed = r.bound_satisfied() && r.mean_grad_norm_sq <= epsilon;
    ctx.stage("--out", out,
              "alpha,delta0,iterations,deviation_sum,bound,mean_grad_norm_sq,epsilon,passed,"
              "seed_average_grad_norm_sq,seed_average_deviation_sum\n" +
                  format_double(r.alpha) + "," + format_double(r.delta0) + "," + std::to_string(r.iterations) + "," +
                  format_double(r.deviation_sum) + "," + format_double(r.bound) + "," +
                  format_double(r.mean_grad_norm_sq) + "," + format_double(epsilon) + "," + (passed ? "1" : "0") +
                  "," + format_double(r.seed_average_grad_norm_sq) + "," +
                  format_double(r.seed_average_deviation_sum) + "\n");
    if (!trace.empty()) {
      std::string csv = "t,loss,grad_norm_sq,lr,exact_grad_norm_sq,deviation_sq\n";
      for (std::size_t t = 0; t < r.run.records.size(); ++t) {
        const auto& rec = r.run.records[t];
        csv += std::to_string(rec.t) + "," + format_double(rec.loss) + "," + format_double(rec.grad_norm_sq) + "," +
               format_double(rec.lr) + "," + format_double(r.run.exact_grad_norm_sq[t]) + "," +
               format_double(r.run.deviation_sq[t]) + "\n";
      }
      ctx.stage("--trace", trace, csv);
    }
    ctx.out() << "T " << r.iterations << " (bound " << format_double(r.bound) << "), mean |grad L|^2 "
              << format_double(r.mean_grad_norm_sq) << (passed ? " <= " : " > ") << "epsilon "
              << format_double(epsilon) << "\n";
  }
};

// --- concentration ---------------------------------------------------------

struct ConcentrationCommand {
  ProblemFlags problem;
  std::vector<double> theta{2.0};
  std::vector<std::size_t> batch_sizes{64, 256};
  std::size_t trials = 1000;
  double epsilon = 0.05;
  bool lemma_n = false;
  double l_tilde = 1.0;
  double q0_tilde = 0.1;
  double delta = 0.05;
  SeedFlag seed;
  std::string out;

  void add(CLI::App* sub) {
    problem.add(sub);
    sub->add_option("--theta", theta, "parameter at which gradients are compared, comma-separated")->delimiter(',');
    sub->add_option("--batch-sizes", batch_sizes, "batch sizes N, comma-separated")->delimiter(',');
    sub->add_option("--trials", trials, "independent batches per N (>= 30)");
    sub->add_option("--epsilon", epsilon, "threshold for p_below on the squared deviation");
    sub->add_flag("--lemma-n", lemma_n, "append the single-density sample complexity N (t = epsilon, m = dim)");
    sub->add_option("--l-tilde", l_tilde, "Lipschitz constant used for --lemma-n");
    sub->add_option("--q0-tilde", q0_tilde, "density lower bound used for --lemma-n");
    sub->add_option("--delta", delta, "failure probability used for --lemma-n");
    seed.add(sub);
    sub->add_option("--out", out, "output CSV path (N,mean_dev_sq,p_below)")->required();
  }

  void validate() const {
    const auto p = problem.problem();
    check(theta.size() == p.dim, "--theta", "must have --dim entries");
    check(!batch_sizes.empty(), "--batch-sizes", "needs at least one value");
    for (auto n : batch_sizes) check(n >= 1, "--batch-sizes", "entries must be >= 1");
    check(trials >= 30, "--trials", "must be >= 30");
    check_positive(epsilon, "--epsilon");
    check_positive(l_tilde, "--l-tilde");
    check_positive(q0_tilde, "--q0-tilde");
    check_open_unit(delta, "--delta");
  }

  void execute(RunContext& ctx) const {
    const auto p = problem.problem();
    std::vector<std::size_t> sizes = batch_sizes;
    if (lemma_n) sizes.push_back(sample_complexity_lemma42(epsilon, delta, l_tilde, q0_tilde, p.dim));
    const auto rows = gradient_deviation_experiment(p, theta, sizes, trials, epsilon, seed.require(ctx));
    std::string csv = "N,mean_dev_sq,p_below\n";
    for (const auto& r : rows) {
      csv += std::to_string(r.batch_size) + "," + format_double(r.mean_dev_sq) + "," + format_double(r.p_below) + "\n";
      ctx.out() << "N " << r.batch_size << ": mean dev^2 " << format_double(r.mean_dev_sq) << ", P(dev^2 <= eps) "
                << format_double(r.p_below) << "\n";
    }
    ctx.stage("--out", out, csv);
  }
};

// --- gradcheck -------------------------------------------------------------

struct GradcheckCommand {
  std::size_t input_dim = 2;
  std::size_t label_dim = 2;
  std::string hidden = "8";
  std::size_t batch_size = 8;
  double lambda_ent = kDefaultLambdaEnt;
  double step = 1e-5;
  std::size_t trials = 10;
  SeedFlag seed;
  std::string out;

  void add(CLI::App* sub) {
    sub->add_option("--input-dim", input_dim, "input dimension of the random heads");
    sub->add_option("--label-dim", label_dim, "label dimension of the random heads");
    sub->add_option("--hidden", hidden, "hidden widths, comma-separated, or 'none'");
    sub->add_option("--batch-size", batch_size, "rows per random batch");
    sub->add_option("--lambda-ent", lambda_ent, "marginal cross-entropy weight (>= 0)");
    sub->add_option("--step", step, "central-difference step");
    sub->add_option("--trials", trials, "number of random instances");
    seed.add(sub);
    sub->add_option("--out", out, "output CSV path (trial,mil_max_error,mse_max_error)")->required();
  }

  void validate() const {
    check(input_dim >= 1, "--input-dim", "must be >= 1");
    check(label_dim >= 1, "--label-dim", "must be >= 1");
    parse_widths(hidden, "--hidden");
    check(batch_size >= 1, "--batch-size", "must be >= 1");
    check(lambda_ent >= 0.0, "--lambda-ent", "must be >= 0");
    check_positive(step, "--step");
    check(trials >= 1, "--trials", "must be >= 1");
  }

  void execute(RunContext& ctx) const {
    const std::uint64_t base = seed.require(ctx);
    std::string csv = "trial,mil_max_error,mse_max_error\n";
    double worst = 0.0;
    for (std::size_t k = 0; k < trials; ++k) {
      const auto inst = random_gradcheck_instance(input_dim, label_dim, parse_widths(hidden, "--hidden"), batch_size,
                                                  derive_seed(base, k));
      const double mil = finite_difference_check(inst.head, inst.marginal, inst.batch, lambda_ent, step);
      const double mse = finite_difference_check_mse(inst.head, inst.batch, step);
      worst = std::max({worst, mil, mse});
      csv += std::to_string(k) + "," + format_double(mil) + "," + format_double(mse) + "\n";
    }
    ctx.stage("--out", out, csv);
    ctx.out() << "worst finite-difference error over " << trials << " instances: " << format_double(worst) << "\n";
  }
};

// --- plot ------------------------------------------------------------------

struct PlotCommand {
  std::string in;
  std::string x;
  std::vector<std::string> y;
  std::string title;
  bool log_y = false;
  std::string out;

  void add(CLI::App* sub) {
    sub->add_option("--in", in, "input CSV written by another command")->required();
    sub->add_option("--x", x, "x-axis column")->required();
    sub->add_option("--y", y, "y-axis columns, comma-separated")->required()->delimiter(',');
    sub->add_option("--title", title, "chart title");
    sub->add_flag("--log-y", log_y, "log10 y axis");
    sub->add_option("--out", out, "output SVG path")->required();
  }

  void validate() const {}

  void execute(RunContext& ctx) const {
    const CsvTable table = parse_csv(read_file(in));
    ctx.stage("--out", out, svg_line_chart(table, x, y, {title, log_y}));
    ctx.out() << "wrote " << out << "\n";
  }
};

// --- replay ----------------------------------------------------------------

int run_impl(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct ReplayCommand {
  std::string manifest;
  std::string out_dir;

  void add(CLI::App* sub) {
    sub->add_option("--manifest", manifest, "run manifest to replay")->required();
    sub->add_option("--out-dir", out_dir, "directory receiving the replayed outputs")->required();
  }

  int execute(std::ostream& out, std::ostream& err) const {
    json doc;
    try {
      doc = json::parse(read_file(manifest));
    } catch (const json::exception& e) {
      throw ValidationError(std::string("--manifest is not a valid manifest: ") + e.what());
    }
    check(doc.value("schema_version", 0) == kManifestSchemaVersion, "--manifest", "has an unsupported schema_version");
    std::vector<std::string> args = doc.at("command_line").get<std::vector<std::string>>();
    check(!args.empty() && args.front() != "replay", "--manifest", "must describe a non-replay command");
    const fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "'");

    std::vector<std::pair<fs::path, std::string>> expected;
    for (const auto& o : doc.at("outputs")) {
      const std::string flag = o.at("flag").get<std::string>();
      const fs::path target = dir / fs::path(o.at("path").get<std::string>()).filename();
      bool replaced = false;
      for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == flag && i + 1 < args.size()) {
          args[i + 1] = target.string();
          replaced = true;
        } else if (args[i].rfind(flag + "=", 0) == 0) {
          args[i] = flag + "=" + target.string();
          replaced = true;
        }
      }
      if (!replaced) throw ValidationError("--manifest output flag " + flag + " not found in its command line");
      expected.emplace_back(target, o.at("sha256").get<std::string>());
    }
    const bool has_seed_flag = std::any_of(args.begin(), args.end(), [](const std::string& a) {
      return a == "--seed" || a.rfind("--seed=", 0) == 0;
    });
    if (!doc.at("seed").is_null() && !has_seed_flag) {
      args.push_back("--seed");
      args.push_back(std::to_string(doc.at("seed").get<std::uint64_t>()));
    }

    std::ostringstream sink;
    const int code = run_impl(args, sink, err);
    if (code != kOk) {
      err << "replayed command failed with exit code " << code << "\n";
      return code;
    }
    bool all_match = true;
    for (const auto& [path, sha] : expected) {
      const bool match = sha256_hex(read_file(path)) == sha;
      all_match = all_match && match;
      out << (match ? "identical " : "DIFFERS   ") << path.string() << "\n";
    }
    return all_match ? kOk : kInternal;
  }
};

int run_impl(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mutual-information-learned regression toolkit", "milr"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  GenCommand gen;
  TrainCommand train;
  EvalCommand eval;
  InferCommand infer;
  MiCommand mi;
  BoundsCommand bounds;
  ComplexityCommand complexity;
  ConvergenceCommand convergence;
  ConcentrationCommand concentration;
  GradcheckCommand gradcheck;
  PlotCommand plot;
  ReplayCommand replay;

  gen.add(app.add_subcommand("gen", "generate a synthetic dataset CSV"));
  train.add(app.add_subcommand("train", "train a Gaussian-head model by SGD (MIL or MSE loss)"));
  eval.add(app.add_subcommand("eval", "estimate the squared-error risk of a model's mean prediction"));
  infer.add(app.add_subcommand("infer", "emit per-row (mu, sigma) predictions"));
  mi.add(app.add_subcommand("mi", "estimate I(X;Y) as marginal minus conditional cross-entropy"));
  bounds.add(app.add_subcommand("bounds", "tabulate exact MI and risk lower bounds for the joint model"));
  complexity.add(app.add_subcommand("complexity", "batch sizes for accurate gradient estimates"));
  convergence.add(app.add_subcommand("convergence", "check the SGD iteration bound on the linear testbed"));
  concentration.add(app.add_subcommand("concentration", "measure gradient deviation versus batch size"));
  gradcheck.add(app.add_subcommand("gradcheck", "finite-difference check of the analytic gradients"));
  plot.add(app.add_subcommand("plot", "render CSV columns to an SVG line chart"));
  replay.add(app.add_subcommand("replay", "re-run a command from its manifest and compare checksums"));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  if (name == "replay") return replay.execute(out, err);

  RunContext ctx(args, out);
  const auto start = std::chrono::steady_clock::now();
  auto dispatch = [&](auto& command) {
    command.validate();
    command.execute(ctx);
  };
  if (name == "gen") dispatch(gen);
  else if (name == "train") dispatch(train);
  else if (name == "eval") dispatch(eval);
  else if (name == "infer") dispatch(infer);
  else if (name == "mi") dispatch(mi);
  else if (name == "bounds") dispatch(bounds);
  else if (name == "complexity") dispatch(complexity);
  else if (name == "convergence") dispatch(convergence);
  else if (name == "concentration") dispatch(concentration);
  else if (name == "gradcheck") dispatch(gradcheck);
  else if (name == "plot") dispatch(plot);
  else throw InternalError("unhandled subcommand " + name);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ctx.commit(name, resolved_config(*sub), wall);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return run_impl(args, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}

}  // namespace milr::cli
