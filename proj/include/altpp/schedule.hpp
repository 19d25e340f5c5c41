#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace altpp {

// Per-timestep mixing coefficients for the observation (beta) and latent
// (alpha) updates, plus the base noise scales. Timesteps are 1-based in the
// accessors; index t-1 in the vectors.
struct NoiseSchedule {
  std::vector<double> beta;
  std::vector<double> alpha;
  double sigma_x = 0.3;
  double sigma_z = 0.15;

  std::size_t length() const { return beta.size(); }
  double beta_at(std::size_t t) const;
  double alpha_at(std::size_t t) const;
  // sqrt(1 - beta_t - sigma_x^2): weight of the observation noise network.
  double noise_coeff_x(std::size_t t) const;
  // sqrt(1 - alpha_t - sigma_z^2): weight of the latent noise network.
  double noise_coeff_z(std::size_t t) const;

  friend bool operator==(const NoiseSchedule&, const NoiseSchedule&) = default;
};

struct ScheduleViolation {
  std::size_t t = 0;  // 1-based; 0 for schedule-wide problems
  std::string term;
  double value = 0.0;
};

struct ScheduleReport {
  std::vector<ScheduleViolation> violations;
  bool ok() const { return violations.empty(); }
  std::string describe() const;
};

// Boundary values equal to 1 - sigma^2 are admitted; rounding slack of a few
// ulps is tolerated so that schedules built from 1 - sigma^2 validate.
inline constexpr double kScheduleSlack = 1e-12;

std::vector<double> linear_schedule(std::size_t length, double lo, double hi);
ScheduleReport validate_schedule(const NoiseSchedule& s);
// Throws ConfigError listing the violations.
void require_valid(const NoiseSchedule& s);

// beta_t = 1 - sigma_x^2 and alpha_t = 1 - sigma_z^2: both noise networks drop
// out and the dynamics are those of the original Alternator.
NoiseSchedule vanilla_schedule(std::size_t length, double sigma_x, double sigma_z);

// Linearly spaced beta in [beta_lo_frac, 1] * (1 - sigma_x^2) and alpha
// likewise, so the last step sits at the vanilla limit.
NoiseSchedule default_schedule(std::size_t length, double sigma_x, double sigma_z, double lo_frac = 0.1);

}  // namespace altpp
