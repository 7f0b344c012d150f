#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace stlsgd {

using Vec = std::vector<double>;

inline void check_same_dim(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dimension mismatch");
}

inline double dot(const Vec& a, const Vec& b) {
  check_same_dim(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm_sq(const Vec& a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return s;
}

inline double dist_sq(const Vec& a, const Vec& b) {
  check_same_dim(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// y += a * x
inline void axpy(double a, const Vec& x, Vec& y) {
  check_same_dim(x, y);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline bool all_finite(const Vec& a) {
  for (double v : a) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace stlsgd
