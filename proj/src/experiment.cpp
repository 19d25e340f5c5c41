#include "altpp/experiment.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "altpp/checkpoint.hpp"
#include "altpp/errors.hpp"
#include "altpp/rng.hpp"
#include "altpp/tasks.hpp"

namespace altpp::experiment {

std::filesystem::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? std::filesystem::path(out) / "model.bin" : std::filesystem::path(checkpoint);
}

RunConfig preset_config(const std::string& preset) {
  RunConfig c;
  c.preset = preset;
  if (preset == "density") {
    c.model.dim_z = 32;
    c.train.batch_size = 100;
    c.train.epochs = 1000;
    c.train.lr_max = 1e-3;
    c.train.lr_min = 1e-5;
    c.schedule.sigma_x = 0.3;
    c.schedule.sigma_z = 0.15;
  } else if (preset == "imputation") {
    c.model.dim_z = 64;
    c.train.batch_size = 32;
    c.train.epochs = 800;
    c.train.lr_max = 5e-4;
    c.train.lr_min = 5e-6;
    c.schedule.sigma_x = 0.15;
    c.schedule.sigma_z = 0.15;
    c.data.source = "synth_sines";
  } else {
    throw ConfigError("unknown preset '" + preset + "' (expected density or imputation)");
  }
  return c;
}

namespace {

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

double resolved_lo(const std::optional<double>& v, double sigma) { return v ? *v : 0.1 * (1.0 - sigma * sigma); }
double resolved_hi(const std::optional<double>& v, double sigma) { return v ? *v : 1.0 - sigma * sigma; }

class Reader {
 public:
  Reader(const Json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw ConfigError(where_ + " must be an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [k, v] : obj_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown config key " + where_ + "." + k);
    }
  }
  template <class T>
  void get(const char* key, T& field) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      field = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config key " + where_ + "." + key + ": " + e.what());
    }
  }
  void get_opt(const char* key, std::optional<double>& field) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    if (it->is_null()) {
      field.reset();
    } else if (it->is_number()) {
      field = it->get<double>();
    } else {
      throw ConfigError("config key " + where_ + "." + key + " must be a number or null");
    }
  }
  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

 private:
  const Json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

Json to_json(const RunConfig& c) {
  const auto& s = c.schedule;
  Json j;
  j["task"] = c.task;
  j["preset"] = c.preset;
  j["seed"] = c.seed;
  j["out"] = c.out;
  j["checkpoint"] = c.checkpoint;
  j["deterministic"] = c.deterministic;
  j["data"] = {{"source", c.data.source},        {"path", c.data.path},
               {"n", c.data.n},                  {"length", c.data.length},
               {"noise_std", c.data.noise_std},  {"phi", c.data.phi},
               {"periods", c.data.periods},      {"seed", c.data.seed},
               {"normalize", c.data.normalize},  {"split_train", c.data.split_train},
               {"split_val", c.data.split_val},  {"split_test", c.data.split_test}};
  j["model"] = {{"d_z", c.model.dim_z},
                {"variant", to_string(c.model.variant)},
                {"network",
                 {{"kind", to_string(c.model.kind)},
                  {"hidden_dim", c.model.hidden_dim},
                  {"depth", c.model.depth},
                  {"activation", to_string(c.model.activation)},
                  {"tokens", c.model.tokens}}}};
  if (s.vanilla) {
    j["schedule"] = {{"sigma_x", s.sigma_x}, {"sigma_z", s.sigma_z}, {"vanilla", true},
                     {"beta_lo", opt(s.beta_lo)}, {"beta_hi", opt(s.beta_hi)},
                     {"alpha_lo", opt(s.alpha_lo)}, {"alpha_hi", opt(s.alpha_hi)}};
  } else {
    j["schedule"] = {{"sigma_x", s.sigma_x},
                     {"sigma_z", s.sigma_z},
                     {"vanilla", false},
                     {"beta_lo", resolved_lo(s.beta_lo, s.sigma_x)},
                     {"beta_hi", resolved_hi(s.beta_hi, s.sigma_x)},
                     {"alpha_lo", resolved_lo(s.alpha_lo, s.sigma_z)},
                     {"alpha_hi", resolved_hi(s.alpha_hi, s.sigma_z)}};
  }
  const auto& t = c.train;
  j["train"] = {{"lambda", t.lambda},
                {"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"lr_max", t.lr_max},
                {"lr_min", t.lr_min},
                {"adam_beta1", t.adam_beta1},
                {"adam_beta2", t.adam_beta2},
                {"adam_eps", t.adam_eps},
                {"noise_target_mode", to_string(t.noise_target_mode)},
                {"free_running", t.free_running},
                {"latent_samples", t.latent_samples}};
  j["impute"] = {{"rates", c.impute.rates}, {"samples", c.impute.samples}, {"per_channel", c.impute.per_channel}};
  j["forecast"] = {{"horizon", c.forecast.horizon}, {"members", c.forecast.members}};
  j["eval"] = {{"n_samples", c.eval.n_samples},
               {"baseline_checkpoint", c.eval.baseline_checkpoint},
               {"encode_mean_propagation", c.eval.encode_mean_propagation}};
  return j;
}

RunConfig apply_json(RunConfig c, const Json& doc) {
  Reader root(doc, "config");
  root.get("task", c.task);
  root.get("preset", c.preset);
  root.get("seed", c.seed);
  root.get("out", c.out);
  root.get("checkpoint", c.checkpoint);
  root.get("deterministic", c.deterministic);
  if (const Json* d = root.child("data")) {
    Reader r(*d, "data");
    r.get("source", c.data.source);
    r.get("path", c.data.path);
    r.get("n", c.data.n);
    r.get("length", c.data.length);
    r.get("noise_std", c.data.noise_std);
    r.get("phi", c.data.phi);
    r.get("periods", c.data.periods);
    r.get("seed", c.data.seed);
    r.get("normalize", c.data.normalize);
    r.get("split_train", c.data.split_train);
    r.get("split_val", c.data.split_val);
    r.get("split_test", c.data.split_test);
  }
  if (const Json* m = root.child("model")) {
    Reader r(*m, "model");
    r.get("d_z", c.model.dim_z);
    std::string variant = to_string(c.model.variant);
    r.get("variant", variant);
    c.model.variant = parse_model_variant(variant);
    if (const Json* n = r.child("network")) {
      Reader nr(*n, "model.network");
      std::string kind = to_string(c.model.kind), act = to_string(c.model.activation);
      nr.get("kind", kind);
      nr.get("hidden_dim", c.model.hidden_dim);
      nr.get("depth", c.model.depth);
      nr.get("activation", act);
      nr.get("tokens", c.model.tokens);
      c.model.kind = parse_network_kind(kind);
      c.model.activation = parse_activation(act);
    }
  }
  if (const Json* s = root.child("schedule")) {
    Reader r(*s, "schedule");
    r.get("sigma_x", c.schedule.sigma_x);
    r.get("sigma_z", c.schedule.sigma_z);
    r.get("vanilla", c.schedule.vanilla);
    r.get_opt("beta_lo", c.schedule.beta_lo);
    r.get_opt("beta_hi", c.schedule.beta_hi);
    r.get_opt("alpha_lo", c.schedule.alpha_lo);
    r.get_opt("alpha_hi", c.schedule.alpha_hi);
  }
  if (const Json* t = root.child("train")) {
    Reader r(*t, "train");
    r.get("lambda", c.train.lambda);
    r.get("epochs", c.train.epochs);
    r.get("batch_size", c.train.batch_size);
    r.get("lr_max", c.train.lr_max);
    r.get("lr_min", c.train.lr_min);
    r.get("adam_beta1", c.train.adam_beta1);
    r.get("adam_beta2", c.train.adam_beta2);
    r.get("adam_eps", c.train.adam_eps);
    std::string mode = to_string(c.train.noise_target_mode);
    r.get("noise_target_mode", mode);
    c.train.noise_target_mode = parse_noise_target_mode(mode);
    r.get("free_running", c.train.free_running);
    r.get("latent_samples", c.train.latent_samples);
  }
  if (const Json* i = root.child("impute")) {
    Reader r(*i, "impute");
    r.get("rates", c.impute.rates);
    r.get("samples", c.impute.samples);
    r.get("per_channel", c.impute.per_channel);
  }
  if (const Json* f = root.child("forecast")) {
    Reader r(*f, "forecast");
    r.get("horizon", c.forecast.horizon);
    r.get("members", c.forecast.members);
  }
  if (const Json* e = root.child("eval")) {
    Reader r(*e, "eval");
    r.get("n_samples", c.eval.n_samples);
    r.get("baseline_checkpoint", c.eval.baseline_checkpoint);
    r.get("encode_mean_propagation", c.eval.encode_mean_propagation);
  }
  c.train.seed = c.seed;
  return c;
}

RunConfig resolve_config(const Json& file, const Json& overrides) {
  std::string preset = "density";
  if (file.is_object() && file.contains("preset")) preset = file["preset"].get<std::string>();
  if (overrides.is_object() && overrides.contains("preset")) preset = overrides["preset"].get<std::string>();
  RunConfig c = preset_config(preset);
  if (!file.is_null()) c = apply_json(std::move(c), file);
  if (!overrides.is_null()) c = apply_json(std::move(c), overrides);
  c.preset = preset;
  return c;
}

void set_dotted(Json& doc, const std::string& key, const std::string& value) {
  if (!doc.is_object()) doc = Json::object();
  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("malformed config key '" + key + "'");
    if (dot == std::string::npos) {
      Json parsed = Json::parse(value, nullptr, false);
      (*node)[part] = parsed.is_discarded() ? Json(value) : parsed;
      return;
    }
    Json& next = (*node)[part];
    if (!next.is_object()) next = Json::object();
    node = &next;
    start = dot + 1;
  }
}

PreparedData prepare_data(const RunConfig& cfg) {
  const auto& d = cfg.data;
  SeriesDataset ds;
  if (d.source == "synth_bimodal") {
    ds = synth_bimodal(d.n, d.length, d.noise_std, d.seed);
  } else if (d.source == "synth_ar1") {
    ds = synth_ar1(d.n, d.length, d.phi, d.noise_std, d.seed);
  } else if (d.source == "synth_sines") {
    ds = synth_sines(d.n, d.length, d.noise_std, d.seed, d.periods);
  } else if (d.source == "csv") {
    if (d.path.empty()) throw ConfigError("data.path is required for csv data");
    ds = load_csv(d.path);
  } else {
    throw ConfigError("unknown data source '" + d.source + "'");
  }
  if (d.normalize) ds = normalize_minmax(ds);
  PreparedData out{ds, split_dataset(ds, d.split_train, d.split_val, d.split_test, derive_seed(d.seed, 99))};
  if (out.split.train.count() == 0) throw ConfigError("training split is empty");
  return out;
}

NoiseSchedule build_schedule(const RunConfig& cfg, std::size_t length) {
  const auto& s = cfg.schedule;
  NoiseSchedule sched;
  if (s.vanilla) {
    sched = vanilla_schedule(length, s.sigma_x, s.sigma_z);
  } else {
    sched.sigma_x = s.sigma_x;
    sched.sigma_z = s.sigma_z;
    sched.beta = linear_schedule(length, resolved_lo(s.beta_lo, s.sigma_x), resolved_hi(s.beta_hi, s.sigma_x));
    sched.alpha = linear_schedule(length, resolved_lo(s.alpha_lo, s.sigma_z), resolved_hi(s.alpha_hi, s.sigma_z));
  }
  require_valid(sched);
  return sched;
}

AlternatorModel initial_model(const RunConfig& cfg, std::size_t dim_x, std::size_t length) {
  ModelShape shape = cfg.model;
  shape.dim_x = dim_x;
  return make_model(shape, build_schedule(cfg, length), derive_seed(cfg.seed, 0xA17));
}

Json to_json(const MetricRecord& r) {
  Json j;
  j["task"] = r.task;
  j["metric"] = r.report.name;
  j["value"] = r.report.value;
  j["std_error"] = r.report.std_error ? Json(*r.report.std_error) : Json(nullptr);
  j["n"] = r.report.n;
  j["seed"] = r.seed;
  return j;
}

Json epoch_json(const EpochRecord& rec) {
  Json j;
  j["epoch"] = rec.epoch;
  j["lr"] = rec.lr;
  j["total"] = rec.loss.total;
  j["alt_z"] = rec.loss.alt_z;
  j["alt_x"] = rec.loss.alt_x;
  j["nm_z"] = rec.loss.nm_z;
  j["nm_x"] = rec.loss.nm_x;
  return j;
}

namespace {

std::filesystem::path ensure_out(const RunConfig& cfg) {
  std::filesystem::path out(cfg.out);
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory " + out.string() + ": " + ec.message());
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

void write_config(const RunConfig& cfg, const std::filesystem::path& out) {
  write_text(out / (cfg.task + "_config.json"), to_json(cfg).dump(2) + "\n");
}

void write_metrics(const std::vector<MetricRecord>& records, const std::filesystem::path& path) {
  std::string text;
  for (const auto& r : records) text += to_json(r).dump() + "\n";
  write_text(path, text);
}

AlternatorModel load_compatible(const RunConfig& cfg, const std::filesystem::path& path, std::size_t dim_x,
                                std::size_t length) {
  AlternatorModel m = load_model(path);
  if (m.dim_x != dim_x) {
    throw DimensionError("checkpoint D_x " + std::to_string(m.dim_x) + " does not match data channels " +
                         std::to_string(dim_x));
  }
  if (m.dim_z != cfg.model.dim_z) {
    throw DimensionError("checkpoint D_z " + std::to_string(m.dim_z) + " does not match config d_z " +
                         std::to_string(cfg.model.dim_z));
  }
  if (m.horizon() < length) {
    throw DimensionError("checkpoint schedule covers " + std::to_string(m.horizon()) + " steps, data has " +
                         std::to_string(length));
  }
  return m;
}

std::string fmt_rate(double r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << r;
  return os.str();
}

struct Moments {
  double sum = 0.0, sum_sq = 0.0;
  std::size_t n = 0;
  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++n;
  }
  double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
  std::optional<double> std_error() const {
    if (n < 2) return std::nullopt;
    const double m = mean();
    const double var = std::max(0.0, (sum_sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1));
    return std::sqrt(var / static_cast<double>(n));
  }
  MetricReport report(std::string name) const { return {std::move(name), mean(), std_error(), std::max<std::size_t>(n, 1)}; }
};

const SeriesDataset& eval_split(const PreparedData& d) {
  return d.split.test.count() ? d.split.test : d.split.train;
}

}  // namespace

TrainOutputs run_train(const RunConfig& cfg_in, std::ostream* log) {
  RunConfig cfg = cfg_in;
  cfg.task = "train";
  cfg.train.seed = cfg.seed;
  cfg.train.validate();
  const auto out = ensure_out(cfg);
  const PreparedData data = prepare_data(cfg);
  AlternatorModel model = initial_model(cfg, data.all.channels(), data.all.length());
  write_config(cfg, out);

  TrainOutputs outputs;
  outputs.loss_log = out / "loss_history.jsonl";
  outputs.checkpoint = cfg.checkpoint_path();
  outputs.config = out / "train_config.json";
  std::ofstream loss(outputs.loss_log, std::ios::trunc | std::ios::binary);
  if (!loss) throw IoError("cannot open " + outputs.loss_log.string());
  outputs.result = train(model, data.split.train, cfg.train, [&](const EpochRecord& rec) {
    const std::string line = epoch_json(rec).dump();
    loss << line << '\n';
    if (log) *log << line << '\n';
  });
  loss.flush();
  if (!loss) throw IoError("failed writing " + outputs.loss_log.string());
  save_model(model, outputs.checkpoint);
  return outputs;
}

std::vector<MetricRecord> run_eval_density(const RunConfig& cfg_in) {
  RunConfig cfg = cfg_in;
  cfg.task = "eval-density";
  const auto out = ensure_out(cfg);
  const PreparedData data = prepare_data(cfg);
  const SeriesDataset& held_out = eval_split(data);
  const std::size_t length = data.all.length();
  const AlternatorModel model = load_compatible(cfg, cfg.checkpoint_path(), data.all.channels(), length);
  const AlternatorModel baseline = cfg.eval.baseline_checkpoint.empty()
                                       ? initial_model(cfg, data.all.channels(), length)
                                       : load_compatible(cfg, cfg.eval.baseline_checkpoint, data.all.channels(), length);
  write_config(cfg, out);

  const std::size_t n = cfg.eval.n_samples ? cfg.eval.n_samples : held_out.count();
  auto sample_set = [&](const AlternatorModel& m, std::uint64_t stream) {
    std::vector<std::uint64_t> seeds(n);
    for (std::size_t i = 0; i < n; ++i) seeds[i] = derive_seed(cfg.seed, stream, i);
    const auto trajs = generate_batch(m, length, seeds);
    Tensor xs(Shape{n, length, m.dim_x});
    for (std::size_t i = 0; i < n; ++i)
      std::copy(trajs[i].xs.values().begin(), trajs[i].xs.values().end(),
                xs.values().begin() + static_cast<std::ptrdiff_t>(i * length * m.dim_x));
    return xs;
  };
  const Tensor model_samples = sample_set(model, 0xD1);
  const Tensor baseline_samples = sample_set(baseline, 0xD2);
  const double mmd_model = mmd_rbf(model_samples, held_out.data);
  const double mmd_base = mmd_rbf(baseline_samples, held_out.data);
  std::vector<MetricRecord> records;
  records.push_back({cfg.task, {"mmd", mmd_model, std::nullopt, n}, cfg.seed});
  records.push_back({cfg.task, {"mmd_baseline", mmd_base, std::nullopt, n}, cfg.seed});
  records.push_back({cfg.task, {"mmd_ratio", mmd_base > 0.0 ? mmd_model / mmd_base : 0.0, std::nullopt, n}, cfg.seed});
  records.push_back({cfg.task, {"mmd_marginal", mmd_rbf_marginal(model_samples, held_out.data), std::nullopt, n}, cfg.seed});
  records.push_back(
      {cfg.task, {"mmd_marginal_baseline", mmd_rbf_marginal(baseline_samples, held_out.data), std::nullopt, n}, cfg.seed});
  write_metrics(records, out / "metrics_eval-density.jsonl");
  return records;
}

std::vector<MetricRecord> run_impute(const RunConfig& cfg_in) {
  RunConfig cfg = cfg_in;
  cfg.task = "impute";
  const auto out = ensure_out(cfg);
  const PreparedData data = prepare_data(cfg);
  const SeriesDataset& test = eval_split(data);
  const std::size_t length = data.all.length(), d = data.all.channels();
  const AlternatorModel model = load_compatible(cfg, cfg.checkpoint_path(), d, length);
  write_config(cfg, out);
  for (double r : cfg.impute.rates)
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("imputation rates must lie in [0, 1]");

  std::vector<MetricRecord> records;
  std::ostringstream csv;
  csv << std::setprecision(17) << "series_id,t,rate,observed";
  for (std::size_t j = 0; j < d; ++j) csv << ",v" << (j + 1);
  csv << '\n';
  for (std::size_t ri = 0; ri < cfg.impute.rates.size(); ++ri) {
    const double rate = cfg.impute.rates[ri];
    Moments mae, mse, cc, base_mae, base_mse, base_cc;
    for (std::size_t i = 0; i < test.count(); ++i) {
      const Tensor truth = test.sequence(i);
      const auto masked = apply_mar_mask(truth, rate, derive_seed(cfg.seed, 0x1A + ri, i), cfg.impute.per_channel);
      const Tensor filled =
          impute(model, masked.values, masked.mask, derive_seed(cfg.seed, 0x1B + ri, i), ImputeOptions{cfg.impute.samples});
      const Tensor baseline = mean_fill(masked.values, masked.mask);
      const auto pm = pointwise_metrics(truth.values(), filled.values());
      const auto pb = pointwise_metrics(truth.values(), baseline.values());
      mae.add(pm.mae);
      mse.add(pm.mse);
      if (pm.cc) cc.add(*pm.cc);
      base_mae.add(pb.mae);
      base_mse.add(pb.mse);
      if (pb.cc) base_cc.add(*pb.cc);
      for (std::size_t t = 0; t < length; ++t) {
        csv << i << ',' << (t + 1) << ',' << fmt_rate(rate) << ',' << (masked.mask.is_observed(t, 0) ? 1 : 0);
        for (std::size_t j = 0; j < d; ++j) csv << ',' << filled[t * d + j];
        csv << '\n';
      }
    }
    const std::string tag = "@" + fmt_rate(rate);
    records.push_back({cfg.task, mae.report("mae" + tag), cfg.seed});
    records.push_back({cfg.task, mse.report("mse" + tag), cfg.seed});
    if (cc.n) records.push_back({cfg.task, cc.report("cc" + tag), cfg.seed});
    records.push_back({cfg.task, base_mae.report("mae_meanfill" + tag), cfg.seed});
    records.push_back({cfg.task, base_mse.report("mse_meanfill" + tag), cfg.seed});
    if (base_cc.n) records.push_back({cfg.task, base_cc.report("cc_meanfill" + tag), cfg.seed});
  }
  write_metrics(records, out / "metrics_impute.jsonl");
  write_text(out / "imputed.csv", csv.str());
  return records;
}

std::vector<MetricRecord> run_forecast(const RunConfig& cfg_in) {
  RunConfig cfg = cfg_in;
  cfg.task = "forecast";
  const auto out = ensure_out(cfg);
  const PreparedData data = prepare_data(cfg);
  const SeriesDataset& test = eval_split(data);
  const std::size_t length = data.all.length(), d = data.all.channels();
  const std::size_t horizon = cfg.forecast.horizon;
  if (horizon == 0 || horizon >= length) {
    throw ConfigError("forecast horizon " + std::to_string(horizon) + " must lie in [1, " +
                      std::to_string(length - 1) + "]");
  }
  if (cfg.forecast.members == 0) throw ConfigError("forecast.members must be >= 1");
  const AlternatorModel model = load_compatible(cfg, cfg.checkpoint_path(), d, length);
  write_config(cfg, out);
  const std::size_t context = length - horizon;

  // Per-timestep climatology from the training split.
  const SeriesDataset& tr = data.split.train;
  Tensor clim(Shape{horizon, d});
  for (std::size_t i = 0; i < tr.count(); ++i)
    for (std::size_t h = 0; h < horizon; ++h)
      for (std::size_t j = 0; j < d; ++j) clim[h * d + j] += tr.data[(i * length + context + h) * d + j];
  for (auto& v : clim.values()) v /= static_cast<double>(tr.count());

  std::vector<Moments> crps(horizon), mse(horizon), clim_crps(horizon), clim_mse(horizon);
  Moments crps_all, mse_all, clim_crps_all, clim_mse_all;
  std::ostringstream csv;
  csv << std::setprecision(17) << "series_id,member,h";
  for (std::size_t j = 0; j < d; ++j) csv << ",v" << (j + 1);
  csv << '\n';
  for (std::size_t i = 0; i < test.count(); ++i) {
    const Tensor seq = test.sequence(i);
    Tensor ctx(Shape{context, d});
    std::copy_n(seq.values().begin(), context * d, ctx.values().begin());
    const auto ens = forecast_ensemble(model, ctx, horizon, cfg.forecast.members, derive_seed(cfg.seed, 0xF0, i));
    const Tensor mean = ens.mean();
    const std::size_t m = cfg.forecast.members;
    for (std::size_t h = 0; h < horizon; ++h) {
      Tensor members(Shape{m, d}), obs(Shape{d}), point(Shape{1, d});
      double se = 0.0, clim_se = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        obs[j] = seq[(context + h) * d + j];
        point[j] = clim[h * d + j];
        for (std::size_t k = 0; k < m; ++k) members[k * d + j] = ens.members[(k * horizon + h) * d + j];
        se += (mean[h * d + j] - obs[j]) * (mean[h * d + j] - obs[j]);
        clim_se += (point[j] - obs[j]) * (point[j] - obs[j]);
      }
      const double c = crps_ensemble(members, obs);
      const double cc = crps_ensemble(point, obs);
      crps[h].add(c);
      mse[h].add(se / static_cast<double>(d));
      clim_crps[h].add(cc);
      clim_mse[h].add(clim_se / static_cast<double>(d));
      crps_all.add(c);
      mse_all.add(se / static_cast<double>(d));
      clim_crps_all.add(cc);
      clim_mse_all.add(clim_se / static_cast<double>(d));
    }
    for (std::size_t k = 0; k < m; ++k)
      for (std::size_t h = 0; h < horizon; ++h) {
        csv << i << ',' << k << ',' << (h + 1);
        for (std::size_t j = 0; j < d; ++j) csv << ',' << ens.members[(k * horizon + h) * d + j];
        csv << '\n';
      }
  }
  std::vector<MetricRecord> records;
  for (std::size_t h = 0; h < horizon; ++h) {
    const std::string tag = "@h" + std::to_string(h + 1);
    records.push_back({cfg.task, crps[h].report("crps" + tag), cfg.seed});
    records.push_back({cfg.task, mse[h].report("mse" + tag), cfg.seed});
    records.push_back({cfg.task, clim_crps[h].report("crps_climatology" + tag), cfg.seed});
    records.push_back({cfg.task, clim_mse[h].report("mse_climatology" + tag), cfg.seed});
  }
  records.push_back({cfg.task, crps_all.report("crps"), cfg.seed});
  records.push_back({cfg.task, mse_all.report("mse"), cfg.seed});
  records.push_back({cfg.task, clim_crps_all.report("crps_climatology"), cfg.seed});
  records.push_back({cfg.task, clim_mse_all.report("mse_climatology"), cfg.seed});
  write_metrics(records, out / "metrics_forecast.jsonl");
  write_text(out / "ensemble.csv", csv.str());
  return records;
}

std::filesystem::path run_generate(const RunConfig& cfg_in) {
  RunConfig cfg = cfg_in;
  cfg.task = "generate";
  const auto out = ensure_out(cfg);
  const AlternatorModel model = load_model(cfg.checkpoint_path());
  write_config(cfg, out);
  const std::size_t n = cfg.eval.n_samples ? cfg.eval.n_samples : cfg.data.n;
  const std::size_t length = std::min(cfg.data.length, model.horizon());
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t i = 0; i < n; ++i) seeds[i] = derive_seed(cfg.seed, 0x6E, i);
  const auto trajs = generate_batch(model, length, seeds);
  SeriesDataset ds;
  ds.name = "samples";
  ds.data = Tensor(Shape{n, length, model.dim_x});
  for (std::size_t i = 0; i < n; ++i)
    std::copy(trajs[i].xs.values().begin(), trajs[i].xs.values().end(),
              ds.data.values().begin() + static_cast<std::ptrdiff_t>(i * length * model.dim_x));
  const auto path = out / "samples.csv";
  save_csv(ds, path);
  return path;
}

std::filesystem::path run_encode(const RunConfig& cfg_in) {
  RunConfig cfg = cfg_in;
  cfg.task = "encode";
  const auto out = ensure_out(cfg);
  const PreparedData data = prepare_data(cfg);
  const SeriesDataset& test = eval_split(data);
  const AlternatorModel model = load_compatible(cfg, cfg.checkpoint_path(), data.all.channels(), data.all.length());
  write_config(cfg, out);
  std::ostringstream csv;
  csv << std::setprecision(17) << "series_id,t";
  for (std::size_t j = 0; j < model.dim_z; ++j) csv << ",z" << (j + 1);
  csv << '\n';
  for (std::size_t i = 0; i < test.count(); ++i) {
    const Tensor mu = encode(model, test.sequence(i), derive_seed(cfg.seed, 0xE0, i),
                             EncodeOptions{cfg.eval.encode_mean_propagation});
    for (std::size_t t = 0; t < mu.dim(0); ++t) {
      csv << i << ',' << (t + 1);
      for (std::size_t j = 0; j < model.dim_z; ++j) csv << ',' << mu[t * model.dim_z + j];
      csv << '\n';
    }
  }
  const auto path = out / "latents.csv";
  write_text(path, csv.str());
  return path;
}

}  // namespace altpp::experiment
