#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <vector>

#include "addonsim/core/error.hpp"

namespace addonsim::workload {

// Unnormalized Zipf weights rank^-exponent for ranks 1..n.
inline std::vector<double> zipf_weights(std::size_t n, double exponent) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = std::pow(static_cast<double>(i + 1), -exponent);
  return w;
}

// Number of ranks a "top fraction" of n items refers to (nearest integer, at least one).
inline std::size_t top_count(std::size_t n, double top_fraction) {
  const auto k = static_cast<std::size_t>(std::llround(top_fraction * static_cast<double>(n)));
  return std::max<std::size_t>(1, std::min(k, n));
}

// Probability mass of the top `k` ranks under Zipf(exponent, n), by direct summation.
inline double zipf_top_mass(std::size_t n, std::size_t k, double exponent) {
  double top = 0.0;
  double all = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = std::pow(static_cast<double>(i + 1), -exponent);
    all += w;
    if (i < k) top += w;
  }
  return top / all;
}

inline constexpr double kZipfMaxExponent = 20.0;
inline constexpr double kZipfMassTolerance = 1e-6;

// Exponent a such that the top round(top_fraction * n) ranks of Zipf(a, n)
// carry target_mass, found by bisection on [0, 20].
inline double calibrate_zipf(std::size_t n_items, double top_fraction, double target_mass) {
  detail::require(n_items >= 10, "calibrate_zipf: n_items must be >= 10");
  detail::require(top_fraction > 0.0 && top_fraction < 1.0, "calibrate_zipf: top_fraction must be in (0, 1)");
  detail::require(target_mass < 1.0 && target_mass >= top_fraction,
                  "calibrate_zipf: target_mass must be in [top_fraction, 1)");
  const std::size_t k = top_count(n_items, top_fraction);
  double lo = 0.0;
  double hi = kZipfMaxExponent;
  const double mass_lo = zipf_top_mass(n_items, k, lo);
  const double mass_hi = zipf_top_mass(n_items, k, hi);
  if (std::abs(mass_lo - target_mass) <= kZipfMassTolerance * 1e-3) return 0.0;
  if (target_mass < mass_lo - kZipfMassTolerance || target_mass > mass_hi + kZipfMassTolerance) {
    std::ostringstream os;
    os << "calibrate_zipf: target mass " << target_mass << " infeasible for top " << k << " of " << n_items
       << "; achievable range [" << mass_lo << ", " << mass_hi << "] over exponents [0, " << kZipfMaxExponent << "]";
    throw ValidationError(os.str());
  }
  double mid = 0.0;
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    const double m = zipf_top_mass(n_items, k, mid);
    if (std::abs(m - target_mass) <= kZipfMassTolerance * 1e-3) break;
    (m < target_mass ? lo : hi) = mid;
  }
  return mid;
}

}  // namespace addonsim::workload
