#include "altpp/model.hpp"

#include <cmath>

#include "altpp/errors.hpp"
#include "altpp/rng.hpp"

namespace altpp {

std::string to_string(ModelVariant v) { return v == ModelVariant::kAlternatorPP ? "alternator_pp" : "alternator"; }

ModelVariant parse_model_variant(const std::string& s) {
  if (s == "alternator_pp" || s == "alternator++") return ModelVariant::kAlternatorPP;
  if (s == "alternator" || s == "vanilla") return ModelVariant::kAlternator;
  throw ConfigError("unknown model variant '" + s + "'");
}

void AlternatorModel::validate() const {
  if (dim_x == 0 || dim_z == 0) throw DimensionError("model dims must be >= 1");
  auto check = [](const Network& n, std::size_t in, std::size_t out, const char* name) {
    n.spec.validate();
    if (n.spec.input_dim != in || n.spec.output_dim != out) {
      throw DimensionError(std::string(name) + " maps " + std::to_string(n.spec.input_dim) + " -> " +
                           std::to_string(n.spec.output_dim) + ", expected " + std::to_string(in) + " -> " +
                           std::to_string(out));
    }
    const auto layout = zero_parameters(n.spec);
    if (layout.size() != n.params.size()) throw DimensionError(std::string(name) + " parameter count mismatch");
    for (std::size_t i = 0; i < layout.size(); ++i) {
      if (layout[i].shape() != n.params[i].shape()) throw DimensionError(std::string(name) + " parameter shape mismatch");
    }
  };
  check(f, dim_z, dim_x, "f");
  check(g, dim_x, dim_z, "g");
  check(eps_x, dim_z, dim_x, "eps_x");
  check(eps_z, dim_z + dim_x, dim_z, "eps_z");
  require_valid(schedule);
}

namespace {

NetworkSpec spec_for(const ModelShape& s, std::size_t in, std::size_t out) {
  NetworkSpec spec{s.kind, in, s.hidden_dim, out, s.depth, s.activation, s.tokens};
  spec.validate();
  return spec;
}

AlternatorModel layout(const ModelShape& shape, NoiseSchedule schedule) {
  AlternatorModel m;
  m.dim_x = shape.dim_x;
  m.dim_z = shape.dim_z;
  m.variant = shape.variant;
  m.f.spec = spec_for(shape, shape.dim_z, shape.dim_x);
  m.g.spec = spec_for(shape, shape.dim_x, shape.dim_z);
  m.eps_x.spec = spec_for(shape, shape.dim_z, shape.dim_x);
  m.eps_z.spec = spec_for(shape, shape.dim_z + shape.dim_x, shape.dim_z);
  m.schedule = std::move(schedule);
  return m;
}

}  // namespace

AlternatorModel make_model(const ModelShape& shape, NoiseSchedule schedule, std::uint64_t seed) {
  AlternatorModel m = layout(shape, std::move(schedule));
  m.f.params = init_parameters(m.f.spec, derive_seed(seed, 1));
  m.g.params = init_parameters(m.g.spec, derive_seed(seed, 2));
  m.eps_x.params = init_parameters(m.eps_x.spec, derive_seed(seed, 3));
  m.eps_z.params = init_parameters(m.eps_z.spec, derive_seed(seed, 4));
  m.validate();
  return m;
}

AlternatorModel make_zero_model(const ModelShape& shape, NoiseSchedule schedule) {
  AlternatorModel m = layout(shape, std::move(schedule));
  m.f.params = zero_parameters(m.f.spec);
  m.g.params = zero_parameters(m.g.spec);
  m.eps_x.params = zero_parameters(m.eps_x.spec);
  m.eps_z.params = zero_parameters(m.eps_z.spec);
  m.validate();
  return m;
}

BoundModel::BoundModel(Tape& tape, const AlternatorModel& model)
    : model_(&model), f_(tape, model.f), g_(tape, model.g), eps_x_(tape, model.eps_x), eps_z_(tape, model.eps_z) {}

namespace {

BoundNetwork bind_slice(const Network& net, std::span<const Var> leaves, std::size_t& offset) {
  const std::size_t n = net.params.size();
  if (offset + n > leaves.size()) throw DimensionError("not enough leaves for model parameters");
  std::vector<Var> slice(leaves.begin() + static_cast<std::ptrdiff_t>(offset),
                         leaves.begin() + static_cast<std::ptrdiff_t>(offset + n));
  offset += n;
  return BoundNetwork(net.spec, std::move(slice));
}

}  // namespace

BoundModel::BoundModel(const AlternatorModel& model, std::span<const Var> leaves)
    : BoundModel(model, leaves, 0) {}

BoundModel::BoundModel(const AlternatorModel& model, std::span<const Var> leaves, std::size_t offset)
    : model_(&model),
      f_(bind_slice(model.f, leaves, offset)),
      g_(bind_slice(model.g, leaves, offset)),
      eps_x_(bind_slice(model.eps_x, leaves, offset)),
      eps_z_(bind_slice(model.eps_z, leaves, offset)) {
  if (offset != leaves.size()) throw DimensionError("too many leaves for model parameters");
}

std::vector<Var> BoundModel::leaves() const {
  std::vector<Var> out;
  for (const BoundNetwork* n : {&f_, &g_, &eps_x_, &eps_z_}) out.insert(out.end(), n->leaves().begin(), n->leaves().end());
  return out;
}

std::vector<Tensor*> parameter_tensors(AlternatorModel& model) {
  std::vector<Tensor*> out;
  for (Network* n : {&model.f, &model.g, &model.eps_x, &model.eps_z})
    for (auto& p : n->params.tensors) out.push_back(&p.value);
  return out;
}

std::vector<const Tensor*> parameter_tensors(const AlternatorModel& model) {
  std::vector<const Tensor*> out;
  for (const Network* n : {&model.f, &model.g, &model.eps_x, &model.eps_z})
    for (const auto& p : n->params.tensors) out.push_back(&p.value);
  return out;
}

BoundModel::XMean BoundModel::mean_x(Var z_prev, std::size_t t) const {
  const auto& s = model_->schedule;
  Var f_out = f_.forward(z_prev);
  Var noise_pred = eps_x_.forward(z_prev);
  if (model_->variant == ModelVariant::kAlternator) {
    return {ops::scale(f_out, std::sqrt(1.0 - s.sigma_x * s.sigma_x)), f_out, noise_pred};
  }
  Var mean = ops::scale(f_out, std::sqrt(s.beta_at(t)));
  const double c = s.noise_coeff_x(t);
  if (c != 0.0) mean = ops::add(mean, ops::scale(noise_pred, c));
  return {mean, f_out, noise_pred};
}

BoundModel::ZMean BoundModel::mean_z(Var z_prev, Var x, std::size_t t) const {
  const auto& s = model_->schedule;
  Var g_out = g_.forward(x);
  Var noise_pred = eps_z_.forward(ops::concat_cols(z_prev, x));
  Var mean = ops::scale(g_out, std::sqrt(s.alpha_at(t)));
  const double c = s.noise_coeff_z(t);
  if (c != 0.0) {
    Var carried = model_->variant == ModelVariant::kAlternator ? z_prev : noise_pred;
    mean = ops::add(mean, ops::scale(carried, c));
  }
  return {mean, g_out, noise_pred};
}

namespace {

Tensor as_row(const Tensor& v, std::size_t width, const char* what) {
  if (v.size() != width) {
    throw DimensionError(std::string(what) + " has " + std::to_string(v.size()) + " values, expected " +
                         std::to_string(width));
  }
  return v.reshaped(Shape{1, width});
}

Tensor flat(const Tensor& row) { return row.reshaped(Shape{row.size()}); }

}  // namespace

Tensor mean_x(const AlternatorModel& model, const Tensor& z_prev, std::size_t t) {
  Tape tape(false);
  BoundModel bm(tape, model);
  return flat(bm.mean_x(tape.constant(as_row(z_prev, model.dim_z, "z_prev")), t).mean.value());
}

Tensor mean_z(const AlternatorModel& model, const Tensor& z_prev, const Tensor& x_t, std::size_t t) {
  Tape tape(false);
  BoundModel bm(tape, model);
  Var z = tape.constant(as_row(z_prev, model.dim_z, "z_prev"));
  Var x = tape.constant(as_row(x_t, model.dim_x, "x_t"));
  return flat(bm.mean_z(z, x, t).mean.value());
}

StepResult sample_step(const AlternatorModel& model, const Tensor& z_prev, std::size_t t, const Tensor& noise_x,
                       const Tensor& noise_z) {
  Tape tape(false);
  BoundModel bm(tape, model);
  const auto& s = model.schedule;
  Var z = tape.constant(as_row(z_prev, model.dim_z, "z_prev"));
  Var mu_x = bm.mean_x(z, t).mean;
  Var x = ops::add(mu_x, ops::scale(tape.constant(as_row(noise_x, model.dim_x, "noise_x")), s.sigma_x));
  Var mu_z = bm.mean_z(z, x, t).mean;
  Var z_next = ops::add(mu_z, ops::scale(tape.constant(as_row(noise_z, model.dim_z, "noise_z")), s.sigma_z));
  return {flat(x.value()), flat(z_next.value()), flat(mu_x.value()), flat(mu_z.value())};
}

std::vector<Trajectory> generate_batch(const AlternatorModel& model, std::size_t steps,
                                       std::span<const std::uint64_t> seeds) {
  if (steps == 0) throw ConfigError("generation horizon must be >= 1");
  if (steps > model.horizon()) {
    throw ConfigError("generation horizon " + std::to_string(steps) + " exceeds schedule length " +
                      std::to_string(model.horizon()));
  }
  const std::size_t batch = seeds.size();
  const std::size_t dx = model.dim_x, dz = model.dim_z;
  const auto& s = model.schedule;
  std::vector<Rng> rngs;
  rngs.reserve(batch);
  for (auto seed : seeds) rngs.emplace_back(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](std::size_t width) {
    Tensor t(Shape{batch, width});
    for (std::size_t b = 0; b < batch; ++b) {
      normal.reset();
      for (std::size_t j = 0; j < width; ++j) t[b * width + j] = normal(rngs[b]);
    }
    return t;
  };

  std::vector<Trajectory> out(batch);
  for (auto& tr : out) {
    tr.xs = Tensor(Shape{steps, dx});
    tr.zs = Tensor(Shape{steps + 1, dz});
    tr.mu_xs = Tensor(Shape{steps, dx});
    tr.mu_zs = Tensor(Shape{steps, dz});
  }
  auto scatter = [&](Tensor Trajectory::*field, const Tensor& rows, std::size_t t) {
    const std::size_t w = rows.dim(1);
    for (std::size_t b = 0; b < batch; ++b) {
      (out[b].*field).set_row(t, std::span<const double>(rows.values().data() + b * w, w));
    }
  };

  Tensor z = draw(dz);
  scatter(&Trajectory::zs, z, 0);
  for (std::size_t t = 1; t <= steps; ++t) {
    Tensor nx = draw(dx);
    Tensor nz = draw(dz);
    Tape tape(false);
    BoundModel bm(tape, model);
    Var zv = tape.constant(z);
    Var mu_x = bm.mean_x(zv, t).mean;
    Var x = ops::add(mu_x, ops::scale(tape.constant(std::move(nx)), s.sigma_x));
    Var mu_z = bm.mean_z(zv, x, t).mean;
    Var z_next = ops::add(mu_z, ops::scale(tape.constant(std::move(nz)), s.sigma_z));
    scatter(&Trajectory::xs, x.value(), t - 1);
    scatter(&Trajectory::mu_xs, mu_x.value(), t - 1);
    scatter(&Trajectory::mu_zs, mu_z.value(), t - 1);
    scatter(&Trajectory::zs, z_next.value(), t);
    z = z_next.value();
  }
  return out;
}

Trajectory generate(const AlternatorModel& model, std::size_t steps, std::uint64_t seed) {
  const std::uint64_t seeds[] = {seed};
  return std::move(generate_batch(model, steps, seeds).front());
}

ConditionalRollout conditional_rollout(const AlternatorModel& model, const Tensor& xs,
                                       std::span<const unsigned char> observed,
                                       std::span<const std::uint64_t> seeds, EncodeOptions opts) {
  if (xs.rank() != 3 || xs.dim(2) != model.dim_x) {
    throw DimensionError("expected sequences [B, T, " + std::to_string(model.dim_x) + "], got " + shape_str(xs.shape()));
  }
  const std::size_t batch = xs.dim(0), steps = xs.dim(1), dx = model.dim_x, dz = model.dim_z;
  if (seeds.size() != batch) throw DimensionError("one seed per sequence required");
  if (!observed.empty() && observed.size() != xs.size()) throw DimensionError("mask does not match sequence shape");
  if (steps == 0) throw DimensionError("empty sequence");
  if (steps > model.horizon()) {
    throw ConfigError("sequence length " + std::to_string(steps) + " exceeds schedule length " +
                      std::to_string(model.horizon()));
  }
  const auto& s = model.schedule;
  std::vector<Rng> rngs;
  for (auto seed : seeds) rngs.emplace_back(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  ConditionalRollout out;
  out.xs = Tensor(Shape{batch, steps, dx});
  out.mu_xs = Tensor(Shape{batch, steps, dx});
  out.mu_zs = Tensor(Shape{batch, steps, dz});

  Tensor z(Shape{batch, dz});
  if (!opts.mean_propagation) {
    for (std::size_t b = 0; b < batch; ++b) {
      normal.reset();
      for (std::size_t j = 0; j < dz; ++j) z[b * dz + j] = normal(rngs[b]);
    }
  }
  for (std::size_t t = 1; t <= steps; ++t) {
    Tape tape(false);
    BoundModel bm(tape, model);
    Var zv = tape.constant(z);
    const Tensor& mu_x = bm.mean_x(zv, t).mean.value();
    Tensor x(Shape{batch, dx});
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < dx; ++j) {
        const std::size_t src = (b * steps + (t - 1)) * dx + j;
        const bool seen = observed.empty() || observed[src];
        const double v = seen ? xs[src] : mu_x[b * dx + j];
        x[b * dx + j] = v;
        out.xs[src] = v;
        out.mu_xs[src] = mu_x[b * dx + j];
      }
    }
    Var mu_z = bm.mean_z(zv, tape.constant(std::move(x)), t).mean;
    const Tensor& mz = mu_z.value();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t j = 0; j < dz; ++j) out.mu_zs[(b * steps + (t - 1)) * dz + j] = mz[b * dz + j];
    z = mz;
    if (!opts.mean_propagation) {
      for (std::size_t b = 0; b < batch; ++b) {
        normal.reset();
        for (std::size_t j = 0; j < dz; ++j) z[b * dz + j] += s.sigma_z * normal(rngs[b]);
      }
    }
  }
  out.z_last = std::move(z);
  return out;
}

Tensor encode(const AlternatorModel& model, const Tensor& xs, std::uint64_t seed, EncodeOptions opts) {
  if (xs.rank() != 2) throw DimensionError("encode expects [T, D_x], got " + shape_str(xs.shape()));
  if (!xs.all_finite()) throw NumericError("encode input contains non-finite values");
  const std::uint64_t seeds[] = {seed};
  auto r = conditional_rollout(model, xs.reshaped(Shape{1, xs.dim(0), xs.dim(1)}), {}, seeds, opts);
  return r.mu_zs.reshaped(Shape{xs.dim(0), model.dim_z});
}

}  // namespace altpp
