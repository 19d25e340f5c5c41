#include "altpp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "altpp/errors.hpp"

namespace altpp {
namespace {

struct Rows {
  const double* data;
  std::size_t count;
  std::size_t width;
  const double* row(std::size_t i) const { return data + i * width; }
};

Rows rows_of(const Tensor& t) {
  if (t.rank() == 0) return {t.values().data(), 1, 1};
  const std::size_t n = t.dim(0);
  return {t.values().data(), n, n ? t.size() / n : 0};
}

double sq_dist(const double* a, const double* b, std::size_t w) {
  double s = 0.0;
  for (std::size_t i = 0; i < w; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double median_of(std::vector<double>& v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    m = 0.5 * (m + lower);
  }
  return m;
}

double median_of_rows(const std::vector<Rows>& sets) {
  std::vector<const double*> all;
  std::size_t width = sets.front().width;
  for (const auto& s : sets) {
    if (s.width != width) throw DimensionError("sample widths differ");
    for (std::size_t i = 0; i < s.count; ++i) all.push_back(s.row(i));
  }
  if (all.size() < 2) throw DimensionError("median bandwidth needs at least two points");
  std::vector<double> d;
  d.reserve(all.size() * (all.size() - 1) / 2);
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j) d.push_back(std::sqrt(sq_dist(all[i], all[j], width)));
  const double m = median_of(d);
  return m > 0.0 ? m : 1.0;
}

double mean_kernel(const Rows& a, const Rows& b, double inv_two_h2) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.count; ++i)
    for (std::size_t j = 0; j < b.count; ++j) s += std::exp(-sq_dist(a.row(i), b.row(j), a.width) * inv_two_h2);
  return s / (static_cast<double>(a.count) * static_cast<double>(b.count));
}

}  // namespace

double median_bandwidth(const Tensor& points) { return median_of_rows({rows_of(points)}); }

double median_bandwidth(const Tensor& x, const Tensor& y) { return median_of_rows({rows_of(x), rows_of(y)}); }

double mmd_rbf(const Tensor& x, const Tensor& y, double bandwidth) {
  if (!(bandwidth > 0.0)) throw ConfigError("MMD bandwidth must be positive");
  const Rows a = rows_of(x), b = rows_of(y);
  if (a.count == 0 || b.count == 0) throw DimensionError("MMD needs at least one sample per set");
  if (a.width != b.width) {
    throw DimensionError("MMD sample widths differ: " + std::to_string(a.width) + " vs " + std::to_string(b.width));
  }
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  const double v = mean_kernel(a, a, inv) + mean_kernel(b, b, inv) - 2.0 * mean_kernel(a, b, inv);
  return std::max(v, 0.0);
}

double mmd_rbf(const Tensor& x, const Tensor& y) { return mmd_rbf(x, y, median_bandwidth(x, y)); }

double mmd_rbf_marginal(const Tensor& x, const Tensor& y) {
  if (x.rank() != 3 || y.rank() != 3 || x.dim(1) != y.dim(1) || x.dim(2) != y.dim(2)) {
    throw DimensionError("marginal MMD needs [N, T, D] sets with matching T and D");
  }
  const std::size_t steps = x.dim(1), d = x.dim(2);
  auto slice = [&](const Tensor& s, std::size_t t) {
    Tensor out(Shape{s.dim(0), d});
    for (std::size_t i = 0; i < s.dim(0); ++i)
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] = s[(i * steps + t) * d + j];
    return out;
  };
  double total = 0.0;
  for (std::size_t t = 0; t < steps; ++t) total += mmd_rbf(slice(x, t), slice(y, t));
  return total / static_cast<double>(steps);
}

double crps_ensemble(std::span<const double> members, double observation) {
  if (members.empty()) throw DimensionError("CRPS needs at least one ensemble member");
  const double m = static_cast<double>(members.size());
  double skill = 0.0;
  for (double x : members) skill += std::abs(x - observation);
  double spread = 0.0;
  for (double a : members)
    for (double b : members) spread += std::abs(a - b);
  return std::max(skill / m - spread / (2.0 * m * m), 0.0);
}

double crps_ensemble(const Tensor& members, const Tensor& observation) {
  if (members.rank() != 2 || members.dim(1) != observation.size()) {
    throw DimensionError("CRPS expects members [M, D] and observation [D]");
  }
  const std::size_t m = members.dim(0), d = members.dim(1);
  double total = 0.0;
  std::vector<double> column(m);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < m; ++i) column[i] = members[i * d + j];
    total += crps_ensemble(column, observation[j]);
  }
  return total / static_cast<double>(d);
}

PointwiseMetrics pointwise_metrics(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw DimensionError("pointwise metrics need equal lengths");
  if (y.empty()) throw DimensionError("pointwise metrics need at least one value");
  const double n = static_cast<double>(y.size());
  PointwiseMetrics out;
  double my = 0.0, mh = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - yhat[i];
    out.mae += std::abs(e);
    out.mse += e * e;
    my += y[i];
    mh += yhat[i];
  }
  out.mae /= n;
  out.mse /= n;
  my /= n;
  mh /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sxy += (y[i] - my) * (yhat[i] - mh);
    sxx += (y[i] - my) * (y[i] - my);
    syy += (yhat[i] - mh) * (yhat[i] - mh);
  }
  if (sxx > 0.0 && syy > 0.0) out.cc = sxy / std::sqrt(sxx * syy);
  return out;
}

}  // namespace altpp
