#include "altpp/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "altpp/data.hpp"
#include "altpp/errors.hpp"

namespace altpp {

std::string to_string(NoiseTargetMode m) { return m == NoiseTargetMode::kTrajectory ? "trajectory" : "literal"; }

NoiseTargetMode parse_noise_target_mode(const std::string& s) {
  if (s == "trajectory") return NoiseTargetMode::kTrajectory;
  if (s == "literal") return NoiseTargetMode::kLiteral;
  throw ConfigError("unknown noise target mode '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(lr_min >= 0.0) || !(lr_min <= lr_max)) throw ConfigError("learning rates must satisfy 0 <= lr_min <= lr_max");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (latent_samples == 0) throw ConfigError("latent_samples must be >= 1");
}

double gamma_weight(std::size_t dim_x, std::size_t dim_z, double sigma_x, double sigma_z, double alpha_t,
                    double beta_t) {
  if (dim_x == 0) throw ConfigError("gamma_t requires D_x >= 1");
  if (!(beta_t > 0.0)) throw ConfigError("gamma_t undefined for beta_t = 0");
  if (!(sigma_x > 0.0)) throw ConfigError("gamma_t undefined for sigma_x = 0");
  return (static_cast<double>(dim_z) * sigma_z * sigma_z * alpha_t) /
         (static_cast<double>(dim_x) * sigma_x * sigma_x * beta_t);
}

namespace {

Tensor step_slice(const Tensor& batch, std::size_t t) {
  const std::size_t b = batch.dim(0), steps = batch.dim(1), d = batch.dim(2);
  Tensor out(Shape{b, d});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = batch[(i * steps + t) * d + j];
  return out;
}

Tensor draw_rows(Rng& rng, std::size_t rows, std::size_t width) { return standard_normal(rng, Shape{rows, width}); }

}  // namespace

BatchRollout rollout_batch(const BoundModel& bm, const Tensor& batch, std::span<const unsigned char> mask,
                           const TrainConfig& cfg, Rng& rng) {
  const AlternatorModel& model = bm.model();
  if (batch.rank() != 3 || batch.dim(2) != model.dim_x) {
    throw DimensionError("training batch must be [B, T, " + std::to_string(model.dim_x) + "], got " +
                         shape_str(batch.shape()));
  }
  if (!mask.empty() && mask.size() != batch.size()) throw DimensionError("mask does not match batch");
  const std::size_t rows = batch.dim(0), steps = batch.dim(1);
  if (rows == 0 || steps == 0) throw DimensionError("empty training batch");
  if (steps > model.horizon()) {
    throw ConfigError("sequence length " + std::to_string(steps) + " exceeds schedule length " +
                      std::to_string(model.horizon()));
  }
  Tape& tape = *bm.f().leaves().front().tape;
  const auto& s = model.schedule;
  BatchRollout r;
  r.batch = rows;
  Var z_prev = tape.constant(draw_rows(rng, rows, model.dim_z));
  for (std::size_t t = 1; t <= steps; ++t) {
    Tensor datum = step_slice(batch, t - 1);
    Tensor nx = draw_rows(rng, rows, model.dim_x);
    Tensor nz = draw_rows(rng, rows, model.dim_z);
    auto xm = bm.mean_x(z_prev, t);
    Var x_data;
    Var x_in;
    if (mask.empty()) {
      x_data = tape.constant(std::move(datum));
      x_in = x_data;
    } else {
      Tensor m(Shape{rows, model.dim_x}), inv(Shape{rows, model.dim_x});
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < model.dim_x; ++j) {
          const bool seen = mask[(i * steps + (t - 1)) * model.dim_x + j] != 0;
          m[i * model.dim_x + j] = seen ? 1.0 : 0.0;
          inv[i * model.dim_x + j] = seen ? 0.0 : 1.0;
          if (!seen) datum[i * model.dim_x + j] = 0.0;
        }
      x_data = tape.constant(std::move(datum));
      Var mv = tape.constant(std::move(m));
      x_in = ops::add(x_data, ops::mul(xm.mean, tape.constant(std::move(inv))));
      r.x_mask.push_back(mv);
    }
    if (cfg.free_running) x_in = ops::add(xm.mean, ops::scale(tape.constant(std::move(nx)), s.sigma_x));
    auto zm = bm.mean_z(z_prev, x_in, t);
    Var z = ops::add(zm.mean, ops::scale(tape.constant(nz), s.sigma_z));
    r.data_x.push_back(x_data);
    r.mu_x.push_back(xm.mean);
    r.mu_z.push_back(zm.mean);
    r.z.push_back(z);
    r.eps_x_pred.push_back(xm.noise_pred);
    r.eps_z_pred.push_back(zm.noise_pred);
    r.z_noise.push_back(std::move(nz));
    z_prev = z;
  }
  return r;
}

namespace {

Var observed_residual(const BatchRollout& r, std::size_t i, Var diff) {
  return r.x_mask.empty() ? diff : ops::mul(diff, r.x_mask[i]);
}

}  // namespace

AlternatorTerms alternator_loss(const AlternatorModel& model, const BatchRollout& r) {
  const auto& s = model.schedule;
  if (!(s.sigma_x > 0.0)) throw ConfigError("alternator loss undefined for sigma_x = 0");
  const double weight = (static_cast<double>(model.dim_z) * s.sigma_z * s.sigma_z) /
                        (static_cast<double>(model.dim_x) * s.sigma_x * s.sigma_x);
  std::vector<Var> zs, xs;
  for (std::size_t i = 0; i < r.z.size(); ++i) {
    zs.push_back(ops::sum_squares(ops::sub(r.z[i], r.mu_z[i])));
    xs.push_back(ops::sum_squares(observed_residual(r, i, ops::sub(r.data_x[i], r.mu_x[i]))));
  }
  const double inv_b = 1.0 / static_cast<double>(r.batch);
  return {ops::scale(ops::add_n(zs), inv_b), ops::scale(ops::add_n(xs), weight * inv_b)};
}

NoiseMatchingTerms noise_matching_loss(const AlternatorModel& model, const BatchRollout& r, NoiseTargetMode mode,
                                       Rng& rng) {
  const auto& s = model.schedule;
  Tape& tape = *r.mu_x.front().tape;
  std::vector<Var> zs, xs;
  for (std::size_t i = 0; i < r.z.size(); ++i) {
    const std::size_t t = i + 1;
    Var z_target, x_target;
    if (mode == NoiseTargetMode::kTrajectory) {
      z_target = tape.constant(r.z_noise[i]);
      x_target = ops::scale(ops::sub(r.data_x[i], r.mu_x[i]), 1.0 / s.sigma_x);
    } else {
      z_target = tape.constant(draw_rows(rng, r.batch, model.dim_z));
      x_target = tape.constant(draw_rows(rng, r.batch, model.dim_x));
    }
    zs.push_back(ops::sum_squares(ops::sub(z_target, r.eps_z_pred[i])));
    const double beta = s.beta_at(t);
    // beta_t = 0 leaves gamma_t undefined; the step contributes nothing.
    if (beta > 0.0) {
      const double gamma = gamma_weight(model.dim_x, model.dim_z, s.sigma_x, s.sigma_z, s.alpha_at(t), beta);
      xs.push_back(ops::scale(ops::sum_squares(observed_residual(r, i, ops::sub(x_target, r.eps_x_pred[i]))), gamma));
    }
  }
  const double inv_b = 1.0 / static_cast<double>(r.batch);
  Var x_sum = xs.empty() ? tape.constant(Tensor::scalar(0.0)) : ops::add_n(xs);
  return {ops::scale(ops::add_n(zs), inv_b), ops::scale(x_sum, inv_b)};
}

LossBreakdown LossTerms::values() const {
  return {total.value().item(), alternator.z_term.value().item(), alternator.x_term.value().item(),
          noise_matching.z_term.value().item(), noise_matching.x_term.value().item()};
}

LossTerms total_loss(const BoundModel& model, const Tensor& batch, std::span<const unsigned char> mask,
                     const TrainConfig& cfg, Rng& rng) {
  BatchRollout r = rollout_batch(model, batch, mask, cfg, rng);
  LossTerms terms;
  terms.alternator = alternator_loss(model.model(), r);
  terms.noise_matching = noise_matching_loss(model.model(), r, cfg.noise_target_mode, rng);
  Var alt = ops::add(terms.alternator.z_term, terms.alternator.x_term);
  if (cfg.lambda == 0.0) {
    terms.total = alt;
  } else {
    terms.total =
        ops::add(alt, ops::scale(ops::add(terms.noise_matching.z_term, terms.noise_matching.x_term), cfg.lambda));
  }
  return terms;
}

LossBreakdown evaluate_loss(const AlternatorModel& model, const Tensor& batch, const TrainConfig& cfg,
                            std::uint64_t seed) {
  Tape tape(false);
  BoundModel bm(tape, model);
  Rng rng(seed);
  return total_loss(bm, batch, {}, cfg, rng).values();
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state, double lr,
               const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw DimensionError("adam: parameter and gradient counts differ");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->shape(), 0.0);
      state.v.emplace_back(p->shape(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam: state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape() || state.m[i].shape() != grads[i].shape()) {
      throw DimensionError("adam: shape mismatch for parameter " + std::to_string(i));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr_max, double lr_min) {
  if (total_epochs == 0) throw ConfigError("cosine schedule needs total_epochs >= 1");
  if (epoch > total_epochs) throw ConfigError("epoch beyond cosine schedule");
  const double frac = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

namespace {

Tensor gather_batch(const SeriesDataset& data, std::span<const std::size_t> idx, std::size_t repeats,
                    std::vector<unsigned char>& mask_out) {
  const std::size_t steps = data.length(), d = data.channels();
  const std::size_t stride = steps * d;
  Tensor out(Shape{idx.size() * repeats, steps, d});
  mask_out.clear();
  if (!data.mask.empty()) mask_out.resize(out.size());
  std::size_t row = 0;
  for (std::size_t rep = 0; rep < repeats; ++rep) {
    for (std::size_t i : idx) {
      std::copy_n(data.data.values().begin() + static_cast<std::ptrdiff_t>(i * stride), stride,
                  out.values().begin() + static_cast<std::ptrdiff_t>(row * stride));
      if (!data.mask.empty()) {
        for (std::size_t t = 0; t < steps; ++t)
          for (std::size_t j = 0; j < d; ++j) mask_out[row * stride + t * d + j] = data.mask[i * steps + t];
      }
      ++row;
    }
  }
  return out;
}

void check_finite(const LossBreakdown& l, std::size_t epoch) {
  const std::pair<const char*, double> terms[] = {
      {"alt_z", l.alt_z}, {"alt_x", l.alt_x}, {"nm_z", l.nm_z}, {"nm_x", l.nm_x}, {"total", l.total}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite loss term " + std::string(name) + " at epoch " + std::to_string(epoch));
    }
  }
}

}  // namespace

TrainResult train(AlternatorModel& model, const SeriesDataset& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  model.validate();
  data.validate();
  if (data.count() == 0) throw ConfigError("training dataset is empty");
  if (data.channels() != model.dim_x) {
    throw DimensionError("dataset has " + std::to_string(data.channels()) + " channels, model D_x is " +
                         std::to_string(model.dim_x));
  }
  const AdamConfig adam{cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
  AdamState state;
  TrainResult result;
  std::vector<std::size_t> order(data.count());
  std::vector<unsigned char> mask;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, std::max<std::size_t>(cfg.epochs - 1, 1), cfg.lr_max, cfg.lr_min);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, epoch, 0));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    LossBreakdown sum;
    std::size_t seen = 0;
    for (std::size_t start = 0, batch_index = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor batch = gather_batch(data, idx, cfg.latent_samples, mask);

      Tape tape;
      BoundModel bm(tape, model);
      Rng rng(derive_seed(cfg.seed, epoch, batch_index + 1));
      LossTerms terms;
      LossBreakdown values;
      try {
        terms = total_loss(bm, batch, mask, cfg, rng);
        values = terms.values();
        check_finite(values, epoch + 1);
        tape.backward(terms.total);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch + 1) + ": " + e.what());
      }
      std::vector<Tensor> grads;
      const auto leaves = bm.leaves();
      grads.reserve(leaves.size());
      for (Var v : leaves) grads.push_back(tape.grad(v));
      const auto params = parameter_tensors(model);
      adam_step(params, grads, state, lr, adam);

      const double w = static_cast<double>(idx.size());
      sum.total += w * values.total;
      sum.alt_z += w * values.alt_z;
      sum.alt_x += w * values.alt_x;
      sum.nm_z += w * values.nm_z;
      sum.nm_x += w * values.nm_x;
      seen += idx.size();
    }
    const double inv = 1.0 / static_cast<double>(seen);
    EpochRecord rec{epoch + 1, lr,
                    LossBreakdown{sum.total * inv, sum.alt_z * inv, sum.alt_x * inv, sum.nm_z * inv, sum.nm_x * inv}};
    check_finite(rec.loss, epoch + 1);
    for (const Tensor* p : parameter_tensors(std::as_const(model))) {
      if (!p->all_finite()) throw NumericError("non-finite parameters after epoch " + std::to_string(epoch + 1));
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

}  // namespace altpp
