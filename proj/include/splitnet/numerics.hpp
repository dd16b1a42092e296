#pragma once

#include <cmath>
#include <limits>

namespace splitnet {

/// Largest double below 1 and smallest normal double: the sigmoid saturates
/// here so its output stays strictly inside (0, 1).
inline constexpr double kSigmoidCeil = 1.0 - 0x1p-53;
inline constexpr double kSigmoidFloor = std::numeric_limits<double>::min();

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline double sigmoid(double x) {
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  if (s > kSigmoidCeil) return kSigmoidCeil;
  if (s < kSigmoidFloor) return kSigmoidFloor;
  return s;
}

}  // namespace splitnet
