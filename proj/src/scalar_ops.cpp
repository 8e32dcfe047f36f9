#include "unroll/scalar_ops.hpp"

#include <cstddef>

namespace unroll {

Matrix soft_threshold_map(const Matrix& m, double theta) {
    Matrix r(m.rows, m.cols);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m.data.size()); ++i) {
        r.data[static_cast<std::size_t>(i)] = soft_threshold(m.data[static_cast<std::size_t>(i)], theta);
    }
    return r;
}

namespace serial {

Matrix soft_threshold_map(const Matrix& m, double theta) {
    Matrix r(m.rows, m.cols);
    for (std::size_t i = 0; i < m.data.size(); ++i) r.data[i] = soft_threshold(m.data[i], theta);
    return r;
}

}  // namespace serial

std::vector<double> clip_to_ball(const std::vector<double>& v, double b_out) {
    const double n = norm2(v);
    if (n <= b_out) return v;
    std::vector<double> r(v.size());
    const double s = b_out / n;
    for (std::size_t i = 0; i < v.size(); ++i) r[i] = s * v[i];
    return r;
}

Matrix clip_cols_to_ball(const Matrix& m, double b_out) {
    Matrix r = m;
    for (std::size_t j = 0; j < m.cols; ++j) {
        const double n = col_norm2(m, j);
        if (n > b_out) {
            const double s = b_out / n;
            for (std::size_t i = 0; i < m.rows; ++i) r(i, j) *= s;
        }
    }
    return r;
}

}  // namespace unroll
