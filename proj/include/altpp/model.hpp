#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "altpp/autodiff.hpp"
#include "altpp/network.hpp"
#include "altpp/schedule.hpp"
#include "altpp/tensor.hpp"

namespace altpp {

// kAlternatorPP uses the learned noise networks in both means. kAlternator is
// the original model: mu_x = sqrt(1 - sigma_x^2) f(z_prev) and
// mu_z = sqrt(alpha_t) g(x_t) + sqrt(1 - alpha_t - sigma_z^2) z_prev.
enum class ModelVariant { kAlternatorPP, kAlternator };

std::string to_string(ModelVariant v);
ModelVariant parse_model_variant(const std::string& s);

// The four networks plus the schedule. f: z -> x, g: x -> z, eps_x: z -> x
// (observation noise model), eps_z: [z_prev; x] -> z (latent noise model).
struct AlternatorModel {
  std::size_t dim_x = 1;
  std::size_t dim_z = 1;
  ModelVariant variant = ModelVariant::kAlternatorPP;
  Network f;
  Network g;
  Network eps_x;
  Network eps_z;
  NoiseSchedule schedule;

  // Throws DimensionError/ConfigError when networks disagree with the dims or
  // the schedule is invalid.
  void validate() const;
  std::size_t horizon() const { return schedule.length(); }
};

struct ModelShape {
  std::size_t dim_x = 1;
  std::size_t dim_z = 8;
  std::size_t hidden_dim = 32;
  std::size_t depth = 2;
  NetworkKind kind = NetworkKind::kMlp;
  Activation activation = Activation::kTanh;
  std::size_t tokens = 4;
  ModelVariant variant = ModelVariant::kAlternatorPP;
};

// Fan-in initialized model; each network gets its own stream derived from seed.
AlternatorModel make_model(const ModelShape& shape, NoiseSchedule schedule, std::uint64_t seed);
// Same layout with every parameter zero.
AlternatorModel make_zero_model(const ModelShape& shape, NoiseSchedule schedule);

// Model networks bound to a tape, with the two mean computations. Inputs are
// batched: z_prev [B, D_z], x [B, D_x].
class BoundModel {
 public:
  BoundModel(Tape& tape, const AlternatorModel& model);
  // Binds to existing leaves laid out as parameter_tensors(model).
  BoundModel(const AlternatorModel& model, std::span<const Var> leaves);
  // All parameter leaves in the order f, g, eps_x, eps_z.
  std::vector<Var> leaves() const;

  struct XMean {
    Var mean;
    Var f_out;
    Var noise_pred;  // eps_x(z_prev)
  };
  struct ZMean {
    Var mean;
    Var g_out;
    Var noise_pred;  // eps_z([z_prev; x])
  };

  XMean mean_x(Var z_prev, std::size_t t) const;
  ZMean mean_z(Var z_prev, Var x, std::size_t t) const;

  const AlternatorModel& model() const { return *model_; }
  const BoundNetwork& f() const { return f_; }
  const BoundNetwork& g() const { return g_; }
  const BoundNetwork& eps_x() const { return eps_x_; }
  const BoundNetwork& eps_z() const { return eps_z_; }

 private:
  BoundModel(const AlternatorModel& model, std::span<const Var> leaves, std::size_t offset);

  const AlternatorModel* model_;
  BoundNetwork f_, g_, eps_x_, eps_z_;
};

// Every parameter tensor of the model, in the order f, g, eps_x, eps_z.
std::vector<Tensor*> parameter_tensors(AlternatorModel& model);
std::vector<const Tensor*> parameter_tensors(const AlternatorModel& model);

// Unbatched evaluation helpers (vectors of length D_z / D_x).
Tensor mean_x(const AlternatorModel& model, const Tensor& z_prev, std::size_t t);
Tensor mean_z(const AlternatorModel& model, const Tensor& z_prev, const Tensor& x_t, std::size_t t);

struct StepResult {
  Tensor x;
  Tensor z;
  Tensor mu_x;
  Tensor mu_z;
};

// One generative step with caller-supplied standard-normal noise.
StepResult sample_step(const AlternatorModel& model, const Tensor& z_prev, std::size_t t, const Tensor& noise_x,
                       const Tensor& noise_z);

struct Trajectory {
  Tensor xs;     // [T, D_x]
  Tensor zs;     // [T + 1, D_z], row 0 is z_0
  Tensor mu_xs;  // [T, D_x]
  Tensor mu_zs;  // [T, D_z]
};

// Draws z_0 ~ N(0, I), then alternates sample_step for t = 1..T.
Trajectory generate(const AlternatorModel& model, std::size_t steps, std::uint64_t seed);
// One trajectory per seed, rolled out as a batch. Row n matches
// generate(model, steps, seeds[n]) exactly.
std::vector<Trajectory> generate_batch(const AlternatorModel& model, std::size_t steps,
                                       std::span<const std::uint64_t> seeds);

struct EncodeOptions {
  // Propagate z_t = mu_z (and z_0 = 0) instead of sampling; makes encoding
  // independent of the seed.
  bool mean_propagation = false;
};

// Latent means mu_z for t = 1..T with the given observations clamped in.
Tensor encode(const AlternatorModel& model, const Tensor& xs, std::uint64_t seed, EncodeOptions opts = {});

// Batched alternation with observations clamped where `observed` is nonzero
// (per element of xs) and the model's mu_x substituted elsewhere.
struct ConditionalRollout {
  Tensor xs;     // [B, T, D_x] observed values or substituted mu_x
  Tensor mu_xs;  // [B, T, D_x]
  Tensor mu_zs;  // [B, T, D_z]
  Tensor z_last; // [B, D_z] latent after the final step
};

// xs: [B, T, D_x]; observed: same element count, or empty for all observed.
ConditionalRollout conditional_rollout(const AlternatorModel& model, const Tensor& xs,
                                       std::span<const unsigned char> observed,
                                       std::span<const std::uint64_t> seeds, EncodeOptions opts);

}  // namespace altpp
