#include "altpp/schedule.hpp"

#include <cmath>
#include <sstream>

#include "altpp/errors.hpp"

namespace altpp {
namespace {

double residual_coeff(double mix, double sigma) {
  const double r = 1.0 - mix - sigma * sigma;
  if (r <= kScheduleSlack) {
    if (r < -kScheduleSlack) throw ConfigError("noise schedule coefficient is negative");
    return 0.0;
  }
  return std::sqrt(r);
}

std::size_t checked_index(std::size_t t, std::size_t length) {
  if (t < 1 || t > length) {
    throw ConfigError("timestep " + std::to_string(t) + " outside schedule of length " + std::to_string(length));
  }
  return t - 1;
}

}  // namespace

double NoiseSchedule::beta_at(std::size_t t) const { return beta[checked_index(t, beta.size())]; }
double NoiseSchedule::alpha_at(std::size_t t) const { return alpha[checked_index(t, alpha.size())]; }
double NoiseSchedule::noise_coeff_x(std::size_t t) const { return residual_coeff(beta_at(t), sigma_x); }
double NoiseSchedule::noise_coeff_z(std::size_t t) const { return residual_coeff(alpha_at(t), sigma_z); }

std::string ScheduleReport::describe() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) os << "; ";
    const auto& v = violations[i];
    if (v.t) os << "t=" << v.t << ' ';
    os << v.term << " (" << v.value << ")";
  }
  return os.str();
}

std::vector<double> linear_schedule(std::size_t length, double lo, double hi) {
  if (length == 0) throw ConfigError("schedule length must be >= 1");
  if (lo < 0.0) throw ConfigError("schedule lower endpoint must be >= 0");
  if (lo > hi) throw ConfigError("schedule endpoints out of order: lo > hi");
  std::vector<double> out(length, lo);
  if (length == 1) return out;
  const double step = (hi - lo) / static_cast<double>(length - 1);
  for (std::size_t i = 1; i + 1 < length; ++i) out[i] = lo + step * static_cast<double>(i);
  out.back() = hi;
  return out;
}

ScheduleReport validate_schedule(const NoiseSchedule& s) {
  ScheduleReport r;
  auto check_sigma = [&](double sigma, const char* name) {
    if (!(sigma > 0.0) || !(sigma * sigma < 1.0)) r.violations.push_back({0, std::string(name) + " outside (0, 1)", sigma});
  };
  check_sigma(s.sigma_x, "sigma_x");
  check_sigma(s.sigma_z, "sigma_z");
  if (s.beta.size() != s.alpha.size()) {
    r.violations.push_back({0, "beta/alpha length mismatch", static_cast<double>(s.alpha.size())});
  }
  if (s.beta.empty()) r.violations.push_back({0, "empty schedule", 0.0});
  auto check_coeff = [&](const std::vector<double>& v, double sigma, const char* name) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!std::isfinite(v[i]) || v[i] < 0.0) {
        r.violations.push_back({i + 1, std::string(name) + " negative", v[i]});
      } else if (v[i] + sigma * sigma > 1.0 + kScheduleSlack) {
        r.violations.push_back({i + 1, std::string(name) + " + sigma^2 exceeds 1", v[i] + sigma * sigma});
      }
    }
  };
  check_coeff(s.beta, s.sigma_x, "beta");
  check_coeff(s.alpha, s.sigma_z, "alpha");
  return r;
}

void require_valid(const NoiseSchedule& s) {
  const auto report = validate_schedule(s);
  if (!report.ok()) throw ConfigError("invalid noise schedule: " + report.describe());
}

NoiseSchedule vanilla_schedule(std::size_t length, double sigma_x, double sigma_z) {
  if (length == 0) throw ConfigError("schedule length must be >= 1");
  NoiseSchedule s;
  s.sigma_x = sigma_x;
  s.sigma_z = sigma_z;
  s.beta.assign(length, 1.0 - sigma_x * sigma_x);
  s.alpha.assign(length, 1.0 - sigma_z * sigma_z);
  return s;
}

NoiseSchedule default_schedule(std::size_t length, double sigma_x, double sigma_z, double lo_frac) {
  NoiseSchedule s;
  s.sigma_x = sigma_x;
  s.sigma_z = sigma_z;
  const double bx = 1.0 - sigma_x * sigma_x;
  const double az = 1.0 - sigma_z * sigma_z;
  s.beta = linear_schedule(length, lo_frac * bx, bx);
  s.alpha = linear_schedule(length, lo_frac * az, az);
  return s;
}

}  // namespace altpp
