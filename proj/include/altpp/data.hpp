#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "altpp/tensor.hpp"

namespace altpp {

struct ChannelRange {
  double min = 0.0;
  double max = 0.0;
  friend bool operator==(const ChannelRange&, const ChannelRange&) = default;
};

// N sequences of T steps with D channels.
struct SeriesDataset {
  Tensor data;                       // [N, T, D]
  std::vector<unsigned char> mask;   // [N, T] observed flags, or empty
  std::optional<std::vector<ChannelRange>> norm;
  std::string name;

  std::size_t count() const { return data.dim(0); }
  std::size_t length() const { return data.dim(1); }
  std::size_t channels() const { return data.dim(2); }

  // Sequence i as [T, D].
  Tensor sequence(std::size_t i) const { return data.row(i); }
  // Rows in the given order (mask and norm carried along).
  SeriesDataset subset(std::span<const std::size_t> indices) const;
  void validate() const;
};

// Long-format CSV with header `series_id,t,v1..vD`. Rows are grouped by
// series_id (first-appearance order) and sorted by t within a series.
SeriesDataset load_csv(const std::filesystem::path& path);
SeriesDataset parse_csv(const std::string& text, const std::string& name = "csv");
void save_csv(const SeriesDataset& ds, const std::filesystem::path& path);
std::string to_csv(const SeriesDataset& ds);

// Per-channel min-max scaling to [0, 1]. Constant channels map to 0 and record
// min == max.
SeriesDataset normalize_minmax(const SeriesDataset& ds);
SeriesDataset denormalize(const SeriesDataset& ds);
// Inverse scaling of arbitrary values laid out with D trailing channels.
Tensor denormalize_values(const Tensor& values, const std::vector<ChannelRange>& norm);

// x_t = m sin(2 pi t / T) + noise_std eps_t with m = +/-1 per sequence, t = 1..T.
SeriesDataset synth_bimodal(std::size_t n, std::size_t length, double noise_std, std::uint64_t seed);
// Sequence-mode labels drawn by synth_bimodal for the same seed (+1 or -1).
std::vector<int> synth_bimodal_modes(std::size_t n, std::uint64_t seed);

// x_t = phi x_{t-1} + noise_std eps_t with x_0 from the stationary law. The
// returned sequence starts at x_0.
SeriesDataset synth_ar1(std::size_t n, std::size_t length, double phi, double noise_std, std::uint64_t seed);
// Same recursion from an explicit start value.
std::vector<double> ar1_path(std::size_t length, double phi, double noise_std, double x0, std::uint64_t seed);

// Mixture of sinusoids: each sequence has amplitude in [0.5, 1], a period drawn
// from `periods` and a uniform phase, plus noise_std Gaussian noise.
SeriesDataset synth_sines(std::size_t n, std::size_t length, double noise_std, std::uint64_t seed,
                          std::vector<double> periods = {12.0, 24.0});

struct DatasetSplit {
  SeriesDataset train;
  SeriesDataset val;
  SeriesDataset test;
};

// Shuffled by-series partition. Val and test sizes are floor(N * fraction);
// the remainder goes to train.
DatasetSplit split_dataset(const SeriesDataset& ds, double train, double val, double test, std::uint64_t seed);

}  // namespace altpp
