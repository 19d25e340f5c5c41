#include "altpp/tasks.hpp"

#include <cmath>
#include <limits>

#include "altpp/errors.hpp"
#include "altpp/rng.hpp"

namespace altpp {

const double kMissingSentinel = std::numeric_limits<double>::quiet_NaN();

std::size_t MARMask::missing_count() const {
  std::size_t n = 0;
  for (auto o : observed) n += o ? 0 : 1;
  return n;
}

std::vector<unsigned char> MARMask::elementwise(std::size_t steps) const {
  std::vector<unsigned char> out(steps * channels);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t j = 0; j < channels; ++j) out[t * channels + j] = is_observed(t, j) ? 1 : 0;
  return out;
}

MaskedSeries apply_mar_mask(const Tensor& xs, double rate, std::uint64_t seed, bool per_channel) {
  if (xs.rank() != 2) throw DimensionError("MAR masking expects [T, D_x], got " + shape_str(xs.shape()));
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("missing rate must lie in [0, 1]");
  const std::size_t steps = xs.dim(0), d = xs.dim(1);
  MaskedSeries out{xs, MARMask{{}, per_channel, d, rate, seed}};
  Rng rng(seed);
  std::bernoulli_distribution missing(rate);
  out.mask.observed.resize(per_channel ? steps * d : steps);
  for (auto& o : out.mask.observed) o = missing(rng) ? 0 : 1;
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t j = 0; j < d; ++j)
      if (!out.mask.is_observed(t, j)) out.values[t * d + j] = kMissingSentinel;
  return out;
}

namespace {

void check_mask(const Tensor& xs, const MARMask& mask, std::size_t dim_x) {
  if (xs.rank() != 2 || xs.dim(1) != dim_x) {
    throw DimensionError("expected [T, " + std::to_string(dim_x) + "], got " + shape_str(xs.shape()));
  }
  const std::size_t expected = mask.per_channel ? xs.size() : xs.dim(0);
  if (mask.observed.size() != expected || mask.channels != xs.dim(1)) {
    throw DimensionError("mask does not match series shape " + shape_str(xs.shape()));
  }
}

}  // namespace

Tensor impute(const AlternatorModel& model, const Tensor& masked, const MARMask& mask, std::uint64_t seed,
              const ImputeOptions& opts) {
  check_mask(masked, mask, model.dim_x);
  if (opts.samples == 0) throw ConfigError("imputation needs samples >= 1");
  const std::size_t steps = masked.dim(0), d = masked.dim(1), k = opts.samples;
  const auto flags = mask.elementwise(steps);
  const bool mean_prop = k == 1 && opts.mean_propagation;
  // Sentinels are zeroed before the rollout; the mask routes mu_x into those
  // slots so the zeros are never read.
  Tensor batch(Shape{k, steps, d});
  std::vector<unsigned char> batch_mask(k * steps * d);
  std::vector<std::uint64_t> seeds(k);
  for (std::size_t s = 0; s < k; ++s) {
    for (std::size_t e = 0; e < steps * d; ++e) {
      batch[s * steps * d + e] = flags[e] ? masked[e] : 0.0;
      batch_mask[s * steps * d + e] = flags[e];
    }
    seeds[s] = derive_seed(seed, s);
  }
  const auto r = conditional_rollout(model, batch, batch_mask, seeds, EncodeOptions{mean_prop});
  Tensor out = masked;
  for (std::size_t e = 0; e < steps * d; ++e) {
    if (flags[e]) continue;
    double acc = 0.0;
    for (std::size_t s = 0; s < k; ++s) acc += r.mu_xs[s * steps * d + e];
    out[e] = acc / static_cast<double>(k);
  }
  return out;
}

Tensor mean_fill(const Tensor& masked, const MARMask& mask) {
  if (masked.rank() != 2) throw DimensionError("mean fill expects [T, D]");
  const std::size_t steps = masked.dim(0), d = masked.dim(1);
  check_mask(masked, mask, d);
  Tensor out = masked;
  for (std::size_t j = 0; j < d; ++j) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < steps; ++t)
      if (mask.is_observed(t, j)) {
        sum += masked[t * d + j];
        ++n;
      }
    const double fill = n ? sum / static_cast<double>(n) : 0.0;
    for (std::size_t t = 0; t < steps; ++t)
      if (!mask.is_observed(t, j)) out[t * d + j] = fill;
  }
  return out;
}

Tensor EnsembleForecast::mean() const {
  const std::size_t m = members.dim(0), h = members.dim(1), d = members.dim(2);
  Tensor out(Shape{h, d});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < h * d; ++k) out[k] += members[i * h * d + k];
  for (auto& v : out.values()) v /= static_cast<double>(m);
  return out;
}

std::vector<std::uint64_t> member_seeds(std::uint64_t seed, std::size_t members) {
  std::vector<std::uint64_t> out(members);
  for (std::size_t i = 0; i < members; ++i) out[i] = derive_seed(seed, i, 7);
  return out;
}

EnsembleForecast forecast_ensemble(const AlternatorModel& model, const Tensor& context, std::size_t horizon,
                                   std::size_t members, std::uint64_t seed) {
  if (members == 0) throw ConfigError("ensemble needs at least one member");
  const auto seeds = member_seeds(seed, members);
  return forecast_ensemble(model, context, horizon, seeds);
}

EnsembleForecast forecast_ensemble(const AlternatorModel& model, const Tensor& context, std::size_t horizon,
                                   std::span<const std::uint64_t> seeds) {
  if (context.rank() != 2 || context.dim(1) != model.dim_x) {
    throw DimensionError("forecast context must be [T_c, " + std::to_string(model.dim_x) + "]");
  }
  const std::size_t tc = context.dim(0), m = seeds.size(), dx = model.dim_x, dz = model.dim_z;
  if (tc == 0) throw ConfigError("forecast needs a context of at least one step");
  if (horizon == 0) throw ConfigError("forecast horizon must be >= 1");
  if (m == 0) throw ConfigError("ensemble needs at least one member");
  if (tc + horizon > model.horizon()) {
    throw ConfigError("context + horizon (" + std::to_string(tc + horizon) + ") exceeds schedule length " +
                      std::to_string(model.horizon()));
  }
  const std::uint64_t enc_seed[] = {0};
  const auto enc = conditional_rollout(model, context.reshaped(Shape{1, tc, dx}), {}, enc_seed,
                                       EncodeOptions{true});
  Tensor z(Shape{m, dz});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < dz; ++j) z[i * dz + j] = enc.z_last[j];

  std::vector<Rng> rngs;
  for (auto s : seeds) rngs.emplace_back(s);
  const auto& sched = model.schedule;
  EnsembleForecast out{Tensor(Shape{m, horizon, dx}), tc};
  for (std::size_t h = 0; h < horizon; ++h) {
    const std::size_t t = tc + h + 1;
    Tensor nx(Shape{m, dx}), nz(Shape{m, dz});
    for (std::size_t i = 0; i < m; ++i) {
      std::normal_distribution<double> normal(0.0, 1.0);
      for (std::size_t j = 0; j < dx; ++j) nx[i * dx + j] = normal(rngs[i]);
      for (std::size_t j = 0; j < dz; ++j) nz[i * dz + j] = normal(rngs[i]);
    }
    Tape tape(false);
    BoundModel bm(tape, model);
    Var zv = tape.constant(z);
    Var x = ops::add(bm.mean_x(zv, t).mean, ops::scale(tape.constant(std::move(nx)), sched.sigma_x));
    Var zn = ops::add(bm.mean_z(zv, x, t).mean, ops::scale(tape.constant(std::move(nz)), sched.sigma_z));
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < dx; ++j) out.members[(i * horizon + h) * dx + j] = xv[i * dx + j];
    z = zn.value();
  }
  return out;
}

}  // namespace altpp
