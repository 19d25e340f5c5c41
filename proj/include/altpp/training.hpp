#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "altpp/autodiff.hpp"
#include "altpp/model.hpp"
#include "altpp/rng.hpp"
#include "altpp/tensor.hpp"

namespace altpp {

struct SeriesDataset;

// TRAJECTORY: latent targets are the noise injected when z_t was sampled and
// observation targets are (x_t - mu_x) / sigma_x. LITERAL: both targets are
// fresh standard normals.
enum class NoiseTargetMode { kTrajectory, kLiteral };

std::string to_string(NoiseTargetMode m);
NoiseTargetMode parse_noise_target_mode(const std::string& s);

struct TrainConfig {
  double lambda = 1.0;
  std::size_t epochs = 300;
  std::size_t batch_size = 100;
  double lr_max = 1e-3;
  double lr_min = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  NoiseTargetMode noise_target_mode = NoiseTargetMode::kTrajectory;
  // Feed the model's sampled x_t (instead of the datum) into the latent update.
  bool free_running = false;
  // Latent rollouts per sequence per epoch.
  std::size_t latent_samples = 1;

  void validate() const;
};

struct LossBreakdown {
  double total = 0.0;
  double alt_z = 0.0;
  double alt_x = 0.0;
  double nm_z = 0.0;
  double nm_x = 0.0;
};

// gamma_t = (D_z sigma_z^2 alpha_t) / (D_x sigma_x^2 beta_t). Throws ConfigError
// when beta_t or sigma_x is zero.
double gamma_weight(std::size_t dim_x, std::size_t dim_z, double sigma_x, double sigma_z, double alpha_t,
                    double beta_t);

// Tape-resident record of a training rollout over a batch [B, T, D_x].
struct BatchRollout {
  std::size_t batch = 0;
  std::vector<Var> data_x;      // datum x_t (constant), [B, D_x]
  std::vector<Var> mu_x;        // [B, D_x]
  std::vector<Var> mu_z;        // [B, D_z]
  std::vector<Var> z;           // sampled z_t, [B, D_z]
  std::vector<Var> eps_x_pred;  // eps_x(z_{t-1})
  std::vector<Var> eps_z_pred;  // eps_z(z_{t-1}, x_t)
  std::vector<Tensor> z_noise;  // standard normal injected into z_t
  std::vector<Var> x_mask;      // per-step observation mask, empty when fully observed
};

// Teacher-forced rollout: z_0 ~ N(0, I); the datum x_t feeds the latent update
// (unless cfg.free_running). `mask`, if non-empty, marks observed elements of
// `batch`; unobserved ones are replaced by mu_x and excluded from residuals.
BatchRollout rollout_batch(const BoundModel& model, const Tensor& batch, std::span<const unsigned char> mask,
                           const TrainConfig& cfg, Rng& rng);

struct AlternatorTerms {
  Var z_term;  // (1/B) sum_t ||z_t - mu_z||^2
  Var x_term;  // (1/B) (D_z sigma_z^2)/(D_x sigma_x^2) sum_t ||x_t - mu_x||^2
};
AlternatorTerms alternator_loss(const AlternatorModel& model, const BatchRollout& r);

struct NoiseMatchingTerms {
  Var z_term;  // (1/B) sum_t ||eps_z_target - eps_z_pred||^2
  Var x_term;  // (1/B) sum_t gamma_t ||eps_x_target - eps_x_pred||^2
};
// LITERAL mode draws its targets from rng.
NoiseMatchingTerms noise_matching_loss(const AlternatorModel& model, const BatchRollout& r, NoiseTargetMode mode,
                                       Rng& rng);

struct LossTerms {
  Var total;
  AlternatorTerms alternator;
  NoiseMatchingTerms noise_matching;
  LossBreakdown values() const;
};

// total = alt_z + alt_x + lambda (nm_z + nm_x). With lambda = 0 the
// noise-matching terms are evaluated but not connected to total.
LossTerms total_loss(const BoundModel& model, const Tensor& batch, std::span<const unsigned char> mask,
                     const TrainConfig& cfg, Rng& rng);

// Value-only evaluation with noise drawn from Rng(seed).
LossBreakdown evaluate_loss(const AlternatorModel& model, const Tensor& batch, const TrainConfig& cfg,
                            std::uint64_t seed);

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam, no weight decay. Moments are zero-initialized on the
// first call.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state, double lr,
               const AdamConfig& cfg = {});

// lr_min + (lr_max - lr_min) (1 + cos(pi epoch / total_epochs)) / 2
double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr_max, double lr_min);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  LossBreakdown loss;
};

struct TrainResult {
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Minibatch training with Adam and cosine-annealed learning rate. Epoch e
// (0-based) uses cosine_lr(e, epochs - 1). Throws NumericError naming the
// epoch and the offending term when a loss becomes non-finite.
TrainResult train(AlternatorModel& model, const SeriesDataset& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace altpp
