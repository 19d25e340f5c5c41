#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "altpp/data.hpp"
#include "altpp/metrics.hpp"
#include "altpp/model.hpp"
#include "altpp/training.hpp"

namespace altpp::experiment {

using Json = nlohmann::ordered_json;

struct DataSpec {
  std::string source = "synth_bimodal";  // synth_bimodal | synth_ar1 | synth_sines | csv
  std::string path;
  std::size_t n = 500;
  std::size_t length = 50;
  double noise_std = 0.1;
  double phi = 0.9;
  std::vector<double> periods = {12.0, 24.0};
  std::uint64_t seed = 1;
  bool normalize = false;
  double split_train = 0.8;
  double split_val = 0.1;
  double split_test = 0.1;
};

struct ScheduleSpec {
  double sigma_x = 0.3;
  double sigma_z = 0.15;
  bool vanilla = false;
  // Endpoints default to [0.1, 1] * (1 - sigma^2) when absent.
  std::optional<double> beta_lo, beta_hi, alpha_lo, alpha_hi;
};

struct ImputeSpec {
  std::vector<double> rates = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::size_t samples = 1;
  bool per_channel = false;
};

struct ForecastSpec {
  std::size_t horizon = 7;
  std::size_t members = 50;
};

struct EvalSpec {
  std::size_t n_samples = 0;  // 0: as many as the test split
  std::string baseline_checkpoint;
  bool encode_mean_propagation = true;
};

struct RunConfig {
  std::string task;
  std::string preset = "density";
  DataSpec data;
  ModelShape model;  // dim_x is taken from the data
  ScheduleSpec schedule;
  TrainConfig train;
  ImputeSpec impute;
  ForecastSpec forecast;
  EvalSpec eval;
  std::string out = "run";
  std::string checkpoint;  // default: <out>/model.bin
  std::uint64_t seed = 0;
  bool deterministic = true;

  std::filesystem::path checkpoint_path() const;
};

// Hyperparameter presets: "density" (D_z 32, batch 100, 1000 epochs, lr
// 1e-3 -> 1e-5, sigma_x 0.3, sigma_z 0.15) and "imputation" (D_z 64, batch 32,
// 800 epochs, lr 5e-4 -> 5e-6, sigma_x = sigma_z = 0.15).
RunConfig preset_config(const std::string& preset);

Json to_json(const RunConfig& cfg);
// Applies `doc` on top of `base`; unknown keys raise ConfigError.
RunConfig apply_json(RunConfig base, const Json& doc);
// defaults(preset) < file < overrides. The preset is read from overrides, then
// the file, then "density".
RunConfig resolve_config(const Json& file, const Json& overrides);
// Sets a dotted key ("train.epochs") in a JSON document; the value is parsed
// as JSON when possible and kept as a string otherwise.
void set_dotted(Json& doc, const std::string& key, const std::string& value);

struct PreparedData {
  SeriesDataset all;
  DatasetSplit split;
};
PreparedData prepare_data(const RunConfig& cfg);
NoiseSchedule build_schedule(const RunConfig& cfg, std::size_t length);
// Freshly initialized model for the config (the training starting point).
AlternatorModel initial_model(const RunConfig& cfg, std::size_t dim_x, std::size_t length);

// One line of a metrics file.
struct MetricRecord {
  std::string task;
  MetricReport report;
  std::uint64_t seed = 0;
};
Json to_json(const MetricRecord& r);

struct TrainOutputs {
  TrainResult result;
  std::filesystem::path checkpoint;
  std::filesystem::path loss_log;
  std::filesystem::path config;
};

// Each run writes <out>/<task>_config.json with the fully resolved config.
TrainOutputs run_train(const RunConfig& cfg, std::ostream* log = nullptr);
std::vector<MetricRecord> run_eval_density(const RunConfig& cfg);
std::vector<MetricRecord> run_impute(const RunConfig& cfg);
std::vector<MetricRecord> run_forecast(const RunConfig& cfg);
std::filesystem::path run_generate(const RunConfig& cfg);
std::filesystem::path run_encode(const RunConfig& cfg);

Json epoch_json(const EpochRecord& rec);

}  // namespace altpp::experiment
