#pragma once

// Finite-difference oracles and small fixtures shared by the test binaries.

#include <functional>

#include "tabguide/grad_engine.hpp"
#include "tabguide/rng.hpp"

namespace tabguide::testing {

/// Central differences of a scalar function of one matrix argument.
inline Matrix central_difference(const std::function<double(const Matrix&)>& f, const Matrix& at,
                                 double h = 1e-5) {
  Matrix grad(at.rows(), at.cols());
  Matrix probe = at;
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    const double keep = probe.data()[i];
    probe.data()[i] = keep + h;
    const double up = f(probe);
    probe.data()[i] = keep - h;
    const double down = f(probe);
    probe.data()[i] = keep;
    grad.data()[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

/// ‖a − b‖ / max(‖b‖, floor).
inline double relative_error(const Matrix& a, const Matrix& b, double floor = 1e-8) {
  return (a - b).norm() / std::max(b.norm(), floor);
}

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  return scale * standard_normal(rng, rows, cols);
}

}  // namespace tabguide::testing
