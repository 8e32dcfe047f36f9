#ifndef UNROLL_SCALAR_OPS_HPP
#define UNROLL_SCALAR_OPS_HPP

#include <cmath>
#include <vector>

#include "unroll/matrix.hpp"

namespace unroll {

/// Shrinkage: sign(x) * max(0, |x| - theta). theta >= 0.
inline double soft_threshold(double x, double theta) {
    if (x > theta) return x - theta;
    if (x < -theta) return x + theta;
    return 0.0;
}

/// Entry-wise shrinkage; shape preserved.
Matrix soft_threshold_map(const Matrix& m, double theta);

namespace serial {
Matrix soft_threshold_map(const Matrix& m, double theta);
}

/// Radial projection onto the l2 ball of radius b_out (identity inside).
std::vector<double> clip_to_ball(const std::vector<double>& v, double b_out);

/// Column-wise radial projection of a matrix.
Matrix clip_cols_to_ball(const Matrix& m, double b_out);

/// sqrt(log(1+t) + t*(log(1+t) - log(t))) for t > 0, and 0 at t = 0.
/// Bounds the entropy integral; below 1e-300 the value is indistinguishable
/// from 0 in double precision and log(t) would overflow, so 0 is returned.
inline double psi(double t) {
    if (t < 1e-300) return 0.0;
    return std::sqrt(std::log1p(t) + t * std::log1p(1.0 / t));
}

}  // namespace unroll

#endif
