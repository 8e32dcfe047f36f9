#ifndef UNROLL_TEST_HELPERS_HPP
#define UNROLL_TEST_HELPERS_HPP

#include <cmath>
#include <vector>

#include "unroll/data_io.hpp"
#include "unroll/matrix.hpp"
#include "unroll/model.hpp"

namespace testkit {

using namespace unroll;

/// J=1 dense architecture: interior layers A*Phi, final transform Phi.
inline Architecture dense_arch(const Matrix& a, std::size_t signal_dim, std::size_t depth,
                               double b_out = 10.0) {
    Architecture arch;
    arch.depth = depth;
    arch.widths.assign(depth + 2, signal_dim);
    arch.pooling.assign(depth, Pooling{});
    arch.b_out = b_out;
    ParamSpace sp;
    sp.type = MapType::DenseDict;
    sp.measurement = a;
    sp.weight_rows = signal_dim;
    sp.weight_cols = signal_dim;
    sp.norm = SpaceNorm::Spectral;
    arch.spaces = {sp};
    arch.schedule.space_count = 1;
    arch.schedule.assignment.assign(depth + 1, 0);
    return arch;
}

/// J=2 dense architecture, odd layers -> space 1, even -> space 2, final -> 1.
inline Architecture alternating_arch(const Matrix& a, std::size_t signal_dim, std::size_t depth,
                                     double b_out = 10.0) {
    Architecture arch = dense_arch(a, signal_dim, depth, b_out);
    arch.spaces = {arch.spaces[0], arch.spaces[0]};
    arch.schedule.space_count = 2;
    for (std::size_t l = 1; l <= depth; ++l) arch.schedule.assignment[l - 1] = (l - 1) % 2;
    arch.schedule.assignment[depth] = 0;
    return arch;
}

/// J=1 convolutional architecture: interior A*T(w), final T(w).
inline Architecture conv_arch(const Matrix& a, std::size_t signal_dim, std::size_t kernel_len,
                              std::size_t depth, double b_out = 10.0) {
    Architecture arch;
    arch.depth = depth;
    arch.widths.assign(depth + 2, signal_dim);
    arch.pooling.assign(depth, Pooling{});
    arch.b_out = b_out;
    ParamSpace sp;
    sp.type = MapType::ConvDict;
    sp.measurement = a;
    sp.kernel_len = kernel_len;
    sp.signal_len = signal_dim;
    sp.weight_rows = kernel_len;
    sp.weight_cols = 1;
    sp.norm = SpaceNorm::Euclidean;
    arch.spaces = {sp};
    arch.schedule.space_count = 1;
    arch.schedule.assignment.assign(depth + 1, 0);
    return arch;
}

inline Params shared_params(const Architecture& arch, const Matrix& phi, double tau, double lambda) {
    Params p;
    for (std::size_t j = 0; j < arch.spaces.size(); ++j) p.weights.push_back(phi);
    p.tau.assign(arch.depth, tau);
    p.lambda.assign(arch.depth, lambda);
    return p;
}

/// Cyclic coordinate descent for 0.5|Mz - y|^2 + lambda|z|_1, run to
/// convergence. Independent of the network/ISTA code path.
inline std::vector<double> coordinate_descent_lasso(const Matrix& m, const std::vector<double>& y,
                                                    double lambda, std::size_t max_sweeps = 200000) {
    std::vector<double> z(m.cols, 0.0);
    std::vector<double> residual = y;  // y - M z
    std::vector<double> col_sq(m.cols, 0.0);
    for (std::size_t j = 0; j < m.cols; ++j)
        for (std::size_t i = 0; i < m.rows; ++i) col_sq[j] += m(i, j) * m(i, j);

    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        double max_delta = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) {
            if (col_sq[j] == 0.0) continue;
            double rho = 0.0;
            for (std::size_t i = 0; i < m.rows; ++i) rho += m(i, j) * residual[i];
            rho += col_sq[j] * z[j];
            const double zj_new = (rho > lambda ? rho - lambda : (rho < -lambda ? rho + lambda : 0.0)) /
                                  col_sq[j];
            const double delta = zj_new - z[j];
            if (delta != 0.0) {
                for (std::size_t i = 0; i < m.rows; ++i) residual[i] -= m(i, j) * delta;
                z[j] = zj_new;
                max_delta = std::max(max_delta, std::abs(delta));
            }
        }
        if (max_delta < 1e-13) break;
    }
    return z;
}

}  // namespace testkit

#endif
