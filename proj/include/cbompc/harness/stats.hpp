#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace cbompc::harness {

/// Quantile with linear interpolation between order statistics
/// (position p*(n-1) in the sorted sample).
inline double quantile(std::vector<double> sample, double p) {
  if (sample.empty()) throw std::invalid_argument("quantile: empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile: p must lie in [0,1]");
  std::sort(sample.begin(), sample.end());
  const double pos = p * static_cast<double>(sample.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sample.size() - 1);
  return sample[lo] + (pos - static_cast<double>(lo)) * (sample[hi] - sample[lo]);
}

struct QuantileSummary {
  double median = 0.0;
  double p25 = 0.0;
  double p75 = 0.0;

  double iqr() const { return p75 - p25; }
};

inline QuantileSummary summarize(const std::vector<double>& sample) {
  return {quantile(sample, 0.5), quantile(sample, 0.25), quantile(sample, 0.75)};
}

}  // namespace cbompc::harness
