#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace nsde {

/// Count, mean and centred second moment; merges are exact in any fixed order.
struct Moments {
  double n = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    n += 1.0;
    const double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }

  static Moments merge(const Moments& a, const Moments& b) {
    if (a.n == 0.0) return b;
    if (b.n == 0.0) return a;
    Moments out;
    out.n = a.n + b.n;
    const double d = b.mean - a.mean;
    out.mean = a.mean + d * (b.n / out.n);
    out.m2 = a.m2 + b.m2 + d * d * (a.n * b.n / out.n);
    return out;
  }

  double variance() const { return n > 1.0 ? m2 / (n - 1.0) : 0.0; }
  double stderr_of_mean() const { return n > 1.0 ? std::sqrt(variance() / n) : 0.0; }
};

/// Pairwise merge in index order, so the result does not depend on how the
/// parts were produced.
inline Moments merge_pairwise(std::span<const Moments> parts) {
  if (parts.empty()) return {};
  if (parts.size() == 1) return parts[0];
  const std::size_t h = parts.size() / 2;
  return Moments::merge(merge_pairwise(parts.first(h)), merge_pairwise(parts.subspan(h)));
}

/// Pairwise sum in index order.
inline double sum_pairwise(std::span<const double> x) {
  if (x.size() <= 8) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t h = x.size() / 2;
  return sum_pairwise(x.first(h)) + sum_pairwise(x.subspan(h));
}

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
};

}  // namespace nsde
