#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "altpp/errors.hpp"
#include "altpp/experiment.hpp"

namespace ex = altpp::experiment;

namespace {

struct CommonArgs {
  std::string config;
  std::string preset;
  std::string out;
  std::string checkpoint;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<bool> deterministic;
};

void add_common(CLI::App* sub, CommonArgs& a) {
  sub->add_option("--config", a.config, "JSON config file");
  sub->add_option("--preset", a.preset, "density or imputation");
  sub->add_option("--seed", a.seed, "Master seed");
  sub->add_option("--out", a.out, "Output directory");
  sub->add_option("--checkpoint", a.checkpoint, "Checkpoint path (default <out>/model.bin)");
  sub->add_option("--deterministic", a.deterministic, "Deterministic mode (single-threaded, fixed reduction order)");
  sub->add_option("--set", a.sets, "Override a config key, e.g. --set train.epochs=50")->take_all();
}

ex::RunConfig resolve(const CommonArgs& a) {
  ex::Json file;
  if (!a.config.empty()) {
    std::ifstream f(a.config);
    if (!f) throw altpp::IoError("cannot open config " + a.config);
    try {
      file = ex::Json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
      throw altpp::ConfigError("config " + a.config + ": " + e.what());
    }
  }
  ex::Json over = ex::Json::object();
  if (!a.preset.empty()) over["preset"] = a.preset;
  if (a.seed) over["seed"] = *a.seed;
  if (!a.out.empty()) over["out"] = a.out;
  if (!a.checkpoint.empty()) over["checkpoint"] = a.checkpoint;
  if (a.deterministic) over["deterministic"] = *a.deterministic;
  for (const auto& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw altpp::ConfigError("--set expects key=value, got '" + kv + "'");
    ex::set_dotted(over, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return ex::resolve_config(file, over);
}

void print_metrics(const std::vector<ex::MetricRecord>& records) {
  for (const auto& r : records) std::cout << ex::to_json(r).dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Alternator++ sequence model: training, sampling and evaluation"};
  app.require_subcommand(1);

  CommonArgs args;
  bool quiet = false;
  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  auto* generate = app.add_subcommand("generate", "Sample sequences from a checkpoint");
  auto* encode = app.add_subcommand("encode", "Encode test sequences into latent means");
  auto* impute = app.add_subcommand("impute", "Imputation sweep over missing rates");
  auto* forecast = app.add_subcommand("forecast", "Ensemble forecasts with CRPS");
  auto* eval = app.add_subcommand("eval-density", "MMD of samples against held-out data");
  for (auto* sub : {train, generate, encode, impute, forecast, eval}) add_common(sub, args);
  train->add_flag("--quiet", quiet, "Do not echo per-epoch losses");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const ex::RunConfig cfg = resolve(args);
    if (train->parsed()) {
      const auto outputs = ex::run_train(cfg, quiet ? nullptr : &std::cout);
      std::cout << "checkpoint: " << outputs.checkpoint.string() << '\n';
    } else if (generate->parsed()) {
      std::cout << "samples: " << ex::run_generate(cfg).string() << '\n';
    } else if (encode->parsed()) {
      std::cout << "latents: " << ex::run_encode(cfg).string() << '\n';
    } else if (impute->parsed()) {
      print_metrics(ex::run_impute(cfg));
    } else if (forecast->parsed()) {
      print_metrics(ex::run_forecast(cfg));
    } else if (eval->parsed()) {
      print_metrics(ex::run_eval_density(cfg));
    }
  } catch (const altpp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const altpp::DimensionError& e) {
    std::cerr << "dimension error: " << e.what() << '\n';
    return 2;
  } catch (const altpp::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const altpp::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
