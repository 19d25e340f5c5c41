#include "altpp/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "altpp/errors.hpp"
#include "altpp/rng.hpp"

namespace altpp {

SeriesDataset SeriesDataset::subset(std::span<const std::size_t> indices) const {
  const std::size_t steps = length(), d = channels(), stride = steps * d;
  SeriesDataset out;
  out.name = name;
  out.norm = norm;
  out.data = Tensor(Shape{indices.size(), steps, d});
  if (!mask.empty()) out.mask.resize(indices.size() * steps);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices[r];
    if (i >= count()) throw DimensionError("subset index out of range");
    std::copy_n(data.values().begin() + static_cast<std::ptrdiff_t>(i * stride), stride,
                out.data.values().begin() + static_cast<std::ptrdiff_t>(r * stride));
    if (!mask.empty()) {
      std::copy_n(mask.begin() + static_cast<std::ptrdiff_t>(i * steps), steps,
                  out.mask.begin() + static_cast<std::ptrdiff_t>(r * steps));
    }
  }
  return out;
}

void SeriesDataset::validate() const {
  if (data.rank() != 3) throw DimensionError("dataset must be [N, T, D], got " + shape_str(data.shape()));
  if (!mask.empty() && mask.size() != count() * length()) throw DimensionError("dataset mask must be [N, T]");
  if (norm && norm->size() != channels()) throw DimensionError("normalization record does not match channels");
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

double parse_number(const std::string& field, std::size_t row) {
  double v = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (field.empty() || ec != std::errc() || ptr != end) {
    throw ParseError("row " + std::to_string(row) + ": non-numeric value '" + field + "'");
  }
  return v;
}

}  // namespace

SeriesDataset parse_csv(const std::string& text, const std::string& name) {
  std::istringstream in(text);
  std::string line;
  std::size_t row = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.find_first_not_of(" \t\r") != std::string::npos) {
      header = split_fields(line);
      break;
    }
  }
  if (header.empty()) throw ParseError("empty dataset: no header");
  if (header.size() < 3 || header[0] != "series_id" || header[1] != "t") {
    throw ParseError("header must be series_id,t,v1..vD");
  }
  const std::size_t d = header.size() - 2;

  struct Step {
    double t;
    std::vector<double> v;
  };
  std::vector<std::string> order;
  std::map<std::string, std::vector<Step>> series;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    }
    Step s{parse_number(fields[1], row), {}};
    for (std::size_t j = 0; j < d; ++j) s.v.push_back(parse_number(fields[2 + j], row));
    auto [it, inserted] = series.try_emplace(fields[0]);
    if (inserted) order.push_back(fields[0]);
    it->second.push_back(std::move(s));
  }
  if (order.empty()) throw ParseError("empty dataset: no data rows");

  const std::size_t steps = series[order.front()].size();
  for (const auto& id : order) {
    if (series[id].size() != steps) {
      throw ParseError("ragged series '" + id + "': " + std::to_string(series[id].size()) + " steps, expected " +
                       std::to_string(steps));
    }
  }
  SeriesDataset ds;
  ds.name = name;
  ds.data = Tensor(Shape{order.size(), steps, d});
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& rows = series[order[i]];
    std::stable_sort(rows.begin(), rows.end(), [](const Step& a, const Step& b) { return a.t < b.t; });
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t j = 0; j < d; ++j) ds.data[(i * steps + t) * d + j] = rows[t].v[j];
  }
  return ds;
}

SeriesDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), path.stem().string());
}

std::string to_csv(const SeriesDataset& ds) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "series_id,t";
  for (std::size_t j = 0; j < ds.channels(); ++j) os << ",v" << (j + 1);
  os << '\n';
  const std::size_t steps = ds.length(), d = ds.channels();
  for (std::size_t i = 0; i < ds.count(); ++i) {
    for (std::size_t t = 0; t < steps; ++t) {
      os << i << ',' << (t + 1);
      for (std::size_t j = 0; j < d; ++j) os << ',' << ds.data[(i * steps + t) * d + j];
      os << '\n';
    }
  }
  return os.str();
}

void save_csv(const SeriesDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << to_csv(ds);
  if (!out) throw IoError("failed writing " + path.string());
}

SeriesDataset normalize_minmax(const SeriesDataset& ds) {
  ds.validate();
  const std::size_t d = ds.channels();
  std::vector<ChannelRange> ranges(d, {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});
  for (std::size_t k = 0; k < ds.data.size(); ++k) {
    auto& r = ranges[k % d];
    r.min = std::min(r.min, ds.data[k]);
    r.max = std::max(r.max, ds.data[k]);
  }
  SeriesDataset out = ds;
  for (std::size_t k = 0; k < out.data.size(); ++k) {
    const auto& r = ranges[k % d];
    out.data[k] = r.max > r.min ? (out.data[k] - r.min) / (r.max - r.min) : 0.0;
  }
  out.norm = ranges;
  return out;
}

Tensor denormalize_values(const Tensor& values, const std::vector<ChannelRange>& norm) {
  const std::size_t d = norm.size();
  if (d == 0 || values.size() % d != 0) throw DimensionError("values do not match normalization channels");
  Tensor out = values;
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto& r = norm[k % d];
    out[k] = r.max > r.min ? out[k] * (r.max - r.min) + r.min : r.min;
  }
  return out;
}

SeriesDataset denormalize(const SeriesDataset& ds) {
  if (!ds.norm) throw ConfigError("dataset '" + ds.name + "' has no normalization record");
  SeriesDataset out = ds;
  out.data = denormalize_values(ds.data, *ds.norm);
  out.norm.reset();
  return out;
}

std::vector<int> synth_bimodal_modes(std::size_t n, std::uint64_t seed) {
  std::vector<int> modes(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    std::bernoulli_distribution coin(0.5);
    modes[i] = coin(rng) ? 1 : -1;
  }
  return modes;
}

SeriesDataset synth_bimodal(std::size_t n, std::size_t length, double noise_std, std::uint64_t seed) {
  if (n == 0 || length == 0) throw ConfigError("synth_bimodal needs N, T >= 1");
  SeriesDataset ds;
  ds.name = "synth_bimodal";
  ds.data = Tensor(Shape{n, length, 1});
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    std::bernoulli_distribution coin(0.5);
    const double mode = coin(rng) ? 1.0 : -1.0;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t t = 1; t <= length; ++t) {
      const double phase = 2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(length);
      ds.data[i * length + (t - 1)] = mode * std::sin(phase) + noise_std * normal(rng);
    }
  }
  return ds;
}

std::vector<double> ar1_path(std::size_t length, double phi, double noise_std, double x0, std::uint64_t seed) {
  if (!(std::abs(phi) < 1.0)) throw ConfigError("AR(1) coefficient must satisfy |phi| < 1");
  std::vector<double> out(length);
  if (length == 0) return out;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  out[0] = x0;
  for (std::size_t t = 1; t < length; ++t) out[t] = phi * out[t - 1] + noise_std * normal(rng);
  return out;
}

SeriesDataset synth_ar1(std::size_t n, std::size_t length, double phi, double noise_std, std::uint64_t seed) {
  if (!(std::abs(phi) < 1.0)) throw ConfigError("AR(1) coefficient must satisfy |phi| < 1");
  if (n == 0 || length == 0) throw ConfigError("synth_ar1 needs N, T >= 1");
  SeriesDataset ds;
  ds.name = "synth_ar1";
  ds.data = Tensor(Shape{n, length, 1});
  const double stationary_sd = noise_std / std::sqrt(1.0 - phi * phi);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double x0 = stationary_sd * normal(rng);
    const auto path = ar1_path(length, phi, noise_std, x0, derive_seed(seed, i, 1));
    std::copy(path.begin(), path.end(), ds.data.values().begin() + static_cast<std::ptrdiff_t>(i * length));
  }
  return ds;
}

SeriesDataset synth_sines(std::size_t n, std::size_t length, double noise_std, std::uint64_t seed,
                          std::vector<double> periods) {
  if (n == 0 || length == 0) throw ConfigError("synth_sines needs N, T >= 1");
  if (periods.empty()) throw ConfigError("synth_sines needs at least one period");
  SeriesDataset ds;
  ds.name = "synth_sines";
  ds.data = Tensor(Shape{n, length, 1});
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    std::uniform_real_distribution<double> amp(0.5, 1.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::uniform_int_distribution<std::size_t> pick(0, periods.size() - 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double a = amp(rng);
    const double p = periods[pick(rng)];
    const double ph = phase(rng);
    for (std::size_t t = 1; t <= length; ++t) {
      ds.data[i * length + (t - 1)] =
          a * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / p + ph) + noise_std * normal(rng);
    }
  }
  return ds;
}

DatasetSplit split_dataset(const SeriesDataset& ds, double train, double val, double test, std::uint64_t seed) {
  if (!(train > 0.0 && val > 0.0 && test > 0.0)) throw ConfigError("split fractions must be positive");
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  const std::size_t n = ds.count();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  // Tiny epsilon keeps exact products such as 10 * 0.1 from flooring to 0.
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * val + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * test + 1e-9));
  const std::size_t n_train = n - n_val - n_test;
  std::span<const std::size_t> all(idx);
  return {ds.subset(all.subspan(0, n_train)), ds.subset(all.subspan(n_train, n_val)),
          ds.subset(all.subspan(n_train + n_val, n_test))};
}

}  // namespace altpp
