// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion not marked --known-unattainable fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "altpp/experiment.hpp"
#include "altpp/gradcheck.hpp"
#include "altpp/metrics.hpp"
#include "altpp/model.hpp"
#include "altpp/rng.hpp"
#include "altpp/training.hpp"

using namespace altpp;
namespace ex = altpp::experiment;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

Tensor randn(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  return standard_normal(rng, std::move(shape));
}

fs::path work_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "altpp_acceptance" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

double metric(const std::vector<ex::MetricRecord>& records, const std::string& name) {
  for (const auto& r : records)
    if (r.report.name == name) return r.report.value;
  throw std::runtime_error("missing metric " + name);
}

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  ModelShape shape;
  shape.dim_x = 2;
  shape.dim_z = 2;
  // Toy width. At 32 some coordinates have |g| ~ 1e-7 and central differences
  // at h = 1e-5 are limited by round-off in a loss of order 10.
  shape.hidden_dim = 8;
  const AlternatorModel m = make_model(shape, default_schedule(2, 0.3, 0.15), 2024);
  const Tensor batch = randn({1, 2, 2}, 7);
  std::vector<Tensor> params;
  for (const Tensor* p : parameter_tensors(m)) params.push_back(*p);
  TrainConfig cfg;
  const auto r = finite_difference_check(
      [&](Tape&, const std::vector<Var>& leaves) {
        BoundModel bm(m, leaves);
        Rng rng(11);
        return total_loss(bm, batch, {}, cfg, rng).total;
      },
      params);
  const double secs = seconds_since(t0);
  return {r.max_rel_error <= 1e-4 && secs < 60.0,
          fmt("max rel err %.3e over %zu coordinates (<= 1e-4), %.1fs (< 60s)", r.max_rel_error, r.coordinates, secs)};
}

Outcome vanilla_degeneration() {
  const double sx = 0.3, sz = 0.15;
  const std::size_t steps = 6;
  ModelShape shape;
  shape.dim_x = 3;
  shape.dim_z = 4;
  const AlternatorModel m = make_model(shape, vanilla_schedule(steps, sx, sz), 5);
  bool coeffs_zero = true, bitwise = true;
  for (std::size_t t = 1; t <= steps; ++t) {
    coeffs_zero &= m.schedule.noise_coeff_x(t) == 0.0 && m.schedule.noise_coeff_z(t) == 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const Tensor z = randn({4}, derive_seed(s, t));
      const Tensor f = network_forward(m.f, z);
      const Tensor mu = mean_x(m, z, t);
      for (std::size_t j = 0; j < 3; ++j) bitwise &= mu[j] == std::sqrt(1.0 - sx * sx) * f[j];
    }
  }
  return {coeffs_zero && bitwise, fmt("noise coefficients exactly 0: %s; mean_x bitwise equal: %s",
                                      coeffs_zero ? "yes" : "no", bitwise ? "yes" : "no")};
}

Outcome metric_oracles() {
  double worst_mmd = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Tensor x = randn({20, 4}, derive_seed(s, 1));
    Tensor y = randn({20, 4}, derive_seed(s, 2));
    for (double& v : y.values()) v = 0.7 * v + 0.3;
    const double h = median_bandwidth(x, y);
    double xx = 0, yy = 0, xy = 0;
    auto k = [&](const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
      double d2 = 0;
      for (std::size_t c = 0; c < 4; ++c) d2 += (a.at(i, c) - b.at(j, c)) * (a.at(i, c) - b.at(j, c));
      return std::exp(-d2 / (2 * h * h));
    };
    for (std::size_t i = 0; i < 20; ++i)
      for (std::size_t j = 0; j < 20; ++j) {
        xx += k(x, i, x, j);
        yy += k(y, i, y, j);
        xy += k(x, i, y, j);
      }
    const double oracle = (xx + yy - 2 * xy) / 400.0;
    worst_mmd = std::max(worst_mmd, std::abs(mmd_rbf(x, y) - oracle));
  }
  // Exact values of the CRPS integral for M = 1, 2, 3.
  struct Case {
    std::vector<double> members;
    double y, expected;
  };
  const Case cases[] = {{{0.7}, -0.2, 0.9}, {{0.0, 2.0}, 1.0, 0.5}, {{-1.0, 0.5, 2.0}, 0.3, 0.4},
                        {{1.5, -0.25, 0.75}, 2.5, 13.0 / 9.0}};
  double worst_crps = 0.0;
  for (const auto& c : cases) worst_crps = std::max(worst_crps, std::abs(crps_ensemble(c.members, c.y) - c.expected));
  const Tensor x = randn({20, 4}, 99);
  const double self = std::abs(mmd_rbf(x, x));
  return {worst_mmd <= 1e-12 && worst_crps <= 1e-10 && self <= 1e-12,
          fmt("MMD vs oracle %.1e (<= 1e-12), CRPS vs exact %.1e (<= 1e-10), MMD(X,X) %.1e (<= 1e-12)", worst_mmd,
              worst_crps, self)};
}

Outcome loss_additivity() {
  ModelShape shape;
  shape.dim_x = 2;
  shape.dim_z = 3;
  shape.hidden_dim = 8;
  double worst = 0.0;
  bool lambda_zero_exact = true;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const AlternatorModel m = make_model(shape, default_schedule(6, 0.3, 0.15), s);
    const Tensor batch = randn({4, 6, 2}, derive_seed(s, 9));
    TrainConfig cfg;
    cfg.lambda = 0.1 + static_cast<double>(s % 10) * 0.3;
    const auto v = evaluate_loss(m, batch, cfg, s);
    worst = std::max(worst, std::abs(v.total - (v.alt_z + v.alt_x + cfg.lambda * (v.nm_z + v.nm_x))));
    cfg.lambda = 0.0;
    const auto z = evaluate_loss(m, batch, cfg, s);
    lambda_zero_exact &= z.total == z.alt_z + z.alt_x;
  }
  return {worst <= 1e-10 && lambda_zero_exact,
          fmt("max |total - sum| %.1e over 100 batches (<= 1e-10); lambda=0 exact: %s", worst,
              lambda_zero_exact ? "yes" : "no")};
}

ex::RunConfig density_config(const fs::path& out) {
  ex::Json over;
  over["out"] = out.string();
  over["seed"] = 0;
  over["data"] = {{"source", "synth_bimodal"}, {"n", 500}, {"length", 50}};
  over["model"] = {{"d_z", 8}};
  over["train"] = {{"epochs", 300}};
  return ex::resolve_config(nullptr, over);
}

struct DensityRun {
  Outcome mmd;
  std::vector<EpochRecord> history;
};

DensityRun density_estimation() {
  const auto t0 = Clock::now();
  const auto cfg = density_config(work_dir("density"));
  const auto trained = ex::run_train(cfg);
  const auto records = ex::run_eval_density(cfg);
  const double secs = seconds_since(t0);
  const double model = metric(records, "mmd"), base = metric(records, "mmd_baseline");
  return {{model <= 0.5 * base && secs < 600.0,
           fmt("MMD trained %.4f vs untrained %.4f, ratio %.3f (<= 0.5), %.0fs (< 600s)", model, base, model / base,
               secs)},
          trained.result.history};
}

ex::RunConfig imputation_config(const fs::path& out) {
  ex::Json over;
  over["out"] = out.string();
  over["preset"] = "imputation";
  over["seed"] = 0;
  over["data"] = {{"source", "synth_sines"}, {"n", 300}, {"length", 48}};
  over["model"] = {{"d_z", 16}};
  over["train"] = {{"epochs", 100}};
  return ex::resolve_config(nullptr, over);
}

Outcome imputation_sweep() {
  const auto t0 = Clock::now();
  const auto cfg = imputation_config(work_dir("impute"));
  ex::run_train(cfg);
  const auto records = ex::run_impute(cfg);
  const double secs = seconds_since(t0);
  bool all_better = true;
  std::string rows;
  for (double rate : cfg.impute.rates) {
    const std::string tag = fmt("@%.2f", rate);
    const double model = metric(records, "mse" + tag), base = metric(records, "mse_meanfill" + tag);
    all_better &= model < base;
    rows += fmt(" %.1f:%.3f/%.3f", rate, model, base);
  }
  return {all_better && secs < 600.0, "MSE model/mean-fill per rate" + rows + fmt(", %.0fs (< 600s)", secs)};
}

ex::RunConfig forecast_config(const fs::path& out) {
  ex::Json over;
  over["out"] = out.string();
  over["seed"] = 0;
  over["data"] = {{"source", "synth_ar1"}, {"n", 300}, {"length", 30}, {"phi", 0.9}, {"noise_std", 0.3}};
  over["model"] = {{"d_z", 8}};
  over["train"] = {{"epochs", 100}};
  over["forecast"] = {{"horizon", 7}, {"members", 50}};
  return ex::resolve_config(nullptr, over);
}

Outcome forecasting() {
  const auto t0 = Clock::now();
  const auto cfg = forecast_config(work_dir("forecast"));
  ex::run_train(cfg);
  const auto records = ex::run_forecast(cfg);
  const double secs = seconds_since(t0);
  const double model = metric(records, "crps"), clim = metric(records, "crps_climatology");
  return {model <= clim && secs < 600.0,
          fmt("CRPS ensemble %.4f vs climatology %.4f over 7 steps, M=50, %.0fs (< 600s)", model, clim, secs)};
}

Outcome determinism() {
  std::map<std::string, std::string> first;
  bool identical = true;
  std::size_t files = 0;
  std::string differing;
  // Same config both times, so the same output directory; it is wiped in between.
  for (int rep = 0; rep < 2; ++rep) {
    const auto out = work_dir("determinism");
    ex::Json over;
    over["out"] = out.string();
    over["seed"] = 17;
    over["deterministic"] = true;
    over["data"] = {{"source", "synth_ar1"}, {"n", 40}, {"length", 16}};
    over["model"] = {{"d_z", 4}, {"network", {{"hidden_dim", 8}}}};
    over["train"] = {{"epochs", 5}, {"batch_size", 16}};
    over["impute"] = {{"rates", {0.2, 0.6}}, {"samples", 3}};
    over["forecast"] = {{"horizon", 4}, {"members", 10}};
    const auto cfg = ex::resolve_config(nullptr, over);
    ex::run_train(cfg);
    ex::run_eval_density(cfg);
    ex::run_impute(cfg);
    ex::run_forecast(cfg);
    ex::run_generate(cfg);
    ex::run_encode(cfg);
    for (const auto& entry : fs::directory_iterator(out)) {
      const auto name = entry.path().filename().string();
      const auto bytes = slurp(entry.path());
      if (rep == 0) {
        first[name] = bytes;
      } else {
        ++files;
        if (!first.count(name) || first[name] != bytes) {
          identical = false;
          differing += " " + name;
        }
      }
    }
  }
  identical &= files == first.size();
  return {identical && files >= 10, fmt("%zu output files compared bitwise: %s", files, identical ? "identical" : ("DIFFER:" + differing).c_str())};
}

Outcome training_sanity(const std::vector<EpochRecord>& history) {
  if (history.empty()) return {false, "no history"};
  bool finite_nonneg = true;
  for (const auto& rec : history)
    for (double v : {rec.loss.total, rec.loss.alt_z, rec.loss.alt_x, rec.loss.nm_z, rec.loss.nm_x})
      finite_nonneg &= std::isfinite(v) && v >= 0.0;
  const double first = history.front().loss.total, last = history.back().loss.total;
  return {last <= 0.5 * first && finite_nonneg,
          fmt("epoch 1 total %.2f, epoch %zu total %.2f, ratio %.3f (<= 0.5); all terms finite and >= 0: %s", first,
              history.size(), last, last / first, finite_nonneg ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  // --known-unattainable N: criterion N is still run and reported, but its
  // failure does not set the exit status. Reasons live outside the code.
  std::set<int> known;
  for (int i = 1; i + 1 < argc; i += 2)
    if (std::string(argv[i]) == "--known-unattainable") known.insert(std::atoi(argv[i + 1]));

  int failures = 0, excused = 0;
  auto report = [&](int id, const char* title, const Outcome& o) {
    std::printf("%s criterion %d (%s): %s%s\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(),
                !o.pass && known.count(id) ? " [known unattainable]" : "");
    std::fflush(stdout);
    if (!o.pass) (known.count(id) ? excused : failures) += 1;
  };
  auto guarded = [](const std::function<Outcome()>& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      return Outcome{false, std::string("exception: ") + e.what()};
    }
  };

  report(1, "gradient correctness", guarded(gradient_correctness));
  report(2, "vanilla degeneration", guarded(vanilla_degeneration));
  report(3, "metric oracles", guarded(metric_oracles));
  report(4, "loss additivity", guarded(loss_additivity));
  DensityRun density;
  try {
    density = density_estimation();
  } catch (const std::exception& e) {
    density.mmd = {false, std::string("exception: ") + e.what()};
  }
  report(5, "synthetic density estimation", density.mmd);
  report(6, "imputation sweep", guarded(imputation_sweep));
  report(7, "forecasting", guarded(forecasting));
  report(8, "determinism", guarded(determinism));
  report(9, "training sanity", guarded([&] { return training_sanity(density.history); }));
  std::printf("%d of 9 criteria failed", failures + excused);
  if (excused) std::printf(" (%d known unattainable)", excused);
  std::printf("\n");
  return failures == 0 ? 0 : 1;
}
