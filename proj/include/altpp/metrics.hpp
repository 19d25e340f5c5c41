#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "altpp/tensor.hpp"

namespace altpp {

struct MetricReport {
  std::string name;
  double value = 0.0;
  std::optional<double> std_error;
  std::size_t n = 1;
};

// Median pairwise Euclidean distance between distinct rows of points [N, d];
// 1 when the median is 0. Rows of higher-rank tensors are flattened.
double median_bandwidth(const Tensor& points);
// Median heuristic over the union of two sample sets.
double median_bandwidth(const Tensor& x, const Tensor& y);

// Biased (V-statistic) squared MMD with k(a, b) = exp(-|a - b|^2 / (2 h^2)).
// Each leading-axis row is one sample (sequences [N, T, D] compare as vectors
// of length T * D).
double mmd_rbf(const Tensor& x, const Tensor& y, double bandwidth);
// mmd_rbf with the median bandwidth of the union.
double mmd_rbf(const Tensor& x, const Tensor& y);
// Mean over timesteps of the MMD between per-timestep marginals of [N, T, D]
// sample sets, each with its own median bandwidth.
double mmd_rbf_marginal(const Tensor& x, const Tensor& y);

// (1/M) sum |x_i - y| - (1/(2 M^2)) sum_ij |x_i - x_j|
double crps_ensemble(std::span<const double> members, double observation);
// members [M, D] against observation [D]: CRPS averaged over coordinates.
double crps_ensemble(const Tensor& members, const Tensor& observation);

struct PointwiseMetrics {
  double mae = 0.0;
  double mse = 0.0;
  std::optional<double> cc;  // absent when either series is constant
};

PointwiseMetrics pointwise_metrics(std::span<const double> y, std::span<const double> yhat);

}  // namespace altpp
