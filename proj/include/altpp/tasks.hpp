#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "altpp/model.hpp"
#include "altpp/tensor.hpp"

namespace altpp {

// Observed flags for a [T, D_x] sequence: one flag per timestep, or one per
// element when per_channel is set.
struct MARMask {
  std::vector<unsigned char> observed;
  bool per_channel = false;
  std::size_t channels = 1;
  double rate = 0.0;
  std::uint64_t seed = 0;

  bool is_observed(std::size_t t, std::size_t channel) const {
    return observed[per_channel ? t * channels + channel : t] != 0;
  }
  std::size_t missing_count() const;
  // Flags expanded to one per element of the [T, D_x] sequence.
  std::vector<unsigned char> elementwise(std::size_t steps) const;
};

struct MaskedSeries {
  Tensor values;  // missing entries hold kMissingSentinel
  MARMask mask;
};

// Quiet NaN: outside any data range, and any accidental read surfaces as a
// numeric error.
extern const double kMissingSentinel;

// Marks each timestep (or element) missing independently with probability rate.
MaskedSeries apply_mar_mask(const Tensor& xs, double rate, std::uint64_t seed, bool per_channel = false);

struct ImputeOptions {
  // >1 averages mu_x over that many sampled-latent rollouts.
  std::size_t samples = 1;
  // Single-sample imputation propagates latent means (deterministic).
  bool mean_propagation = true;
};

// Observed entries pass through unchanged; missing ones receive mu_x computed
// from the latent state at that step.
Tensor impute(const AlternatorModel& model, const Tensor& masked, const MARMask& mask, std::uint64_t seed,
              const ImputeOptions& opts = {});

// Per-series mean of observed values per channel (0 if nothing is observed).
Tensor mean_fill(const Tensor& masked, const MARMask& mask);

struct EnsembleForecast {
  Tensor members;  // [M, H, D_x]
  std::size_t conditioning_length = 0;

  Tensor mean() const;  // [H, D_x]
};

std::vector<std::uint64_t> member_seeds(std::uint64_t seed, std::size_t members);

// Encodes the context with latent-mean propagation, then rolls each member
// forward `horizon` steps with its own noise stream.
EnsembleForecast forecast_ensemble(const AlternatorModel& model, const Tensor& context, std::size_t horizon,
                                   std::size_t members, std::uint64_t seed);
EnsembleForecast forecast_ensemble(const AlternatorModel& model, const Tensor& context, std::size_t horizon,
                                   std::span<const std::uint64_t> seeds);

}  // namespace altpp
