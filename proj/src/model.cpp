#include "unroll/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "unroll/errors.hpp"
#include "unroll/scalar_ops.hpp"

namespace unroll {

std::size_t Architecture::weight_dim_total() const {
    std::size_t k = 0;
    for (const ParamSpace& s : spaces) k += s.weight_count();
    return k;
}

void Architecture::validate() const {
    if (depth == 0) throw PreconditionViolated("architecture: depth must be >= 1");
    if (widths.size() != depth + 2) throw DimensionMismatch("architecture: widths must list n_0..n_{L+1}");
    if (schedule.assignment.size() != depth + 1)
        throw DimensionMismatch("architecture: schedule must cover layers 1..L+1");
    if (pooling.size() != depth) throw DimensionMismatch("architecture: one pooling op per layer");
    if (spaces.empty() || schedule.space_count != spaces.size())
        throw DimensionMismatch("architecture: schedule/space count mismatch");
    if (b_out <= 0.0) throw PreconditionViolated("architecture: b_out must be positive");

    std::vector<bool> hit(spaces.size(), false);
    for (std::size_t a : schedule.assignment) {
        if (a >= spaces.size()) throw DimensionMismatch("architecture: schedule references missing space");
        hit[a] = true;
    }
    for (std::size_t j = 0; j < spaces.size(); ++j)
        if (!hit[j]) throw DimensionMismatch("architecture: space " + std::to_string(j + 1) + " unused");

    const std::size_t n = measurement_dim();
    for (std::size_t l = 1; l <= depth + 1; ++l) {
        const ParamSpace& sp = spaces[space_of(l)];
        const bool interior = l <= depth;
        std::size_t rows_out, cols_in;
        if (sp.type == MapType::DenseDict) {
            rows_out = interior ? sp.measurement.rows : sp.weight_rows;
            cols_in = sp.weight_cols;
            if (interior && sp.measurement.cols != sp.weight_rows)
                throw DimensionMismatch("architecture: measurement/weight shapes disagree in space " +
                                        std::to_string(space_of(l) + 1));
        } else {
            if (sp.kernel_len == 0 || sp.kernel_len > sp.signal_len)
                throw DimensionMismatch("architecture: conv kernel length must be in [1, signal_len]");
            rows_out = interior ? sp.measurement.rows : sp.signal_len;
            cols_in = sp.signal_len;
            if (interior && sp.measurement.cols != sp.signal_len)
                throw DimensionMismatch("architecture: conv measurement width must equal signal_len");
        }
        if (interior && rows_out != n)
            throw DimensionMismatch("architecture: layer " + std::to_string(l) + " output not in R^n");
        if (cols_in != widths[l - 1])
            throw DimensionMismatch("architecture: B_" + std::to_string(l) + " column count " +
                                    std::to_string(cols_in) + " != width n_" + std::to_string(l - 1));
        if (!interior && rows_out != widths[depth + 1])
            throw DimensionMismatch("architecture: final transform rows != n_{L+1}");
    }
    for (std::size_t l = 1; l <= depth; ++l) {
        const Pooling& p = pooling[l - 1];
        if (p.kind == PoolKind::Identity) {
            if (widths[l] != widths[l - 1])
                throw DimensionMismatch("architecture: identity pooling needs n_l == n_{l-1}");
        } else {
            if (p.map.rows != widths[l] || p.map.cols != widths[l - 1])
                throw DimensionMismatch("architecture: pooling map shape off at layer " + std::to_string(l));
            if (spectral_norm(p.map) > 1.0 + 1e-10)
                throw PreconditionViolated("architecture: pooling must be 1-Lipschitz");
        }
    }
}

void HypothesisClassSpec::validate() const {
    if (w_inf <= 0.0) throw PreconditionViolated("class spec: w_inf must be positive");
    if (tau0.size() != lambda0.size() || tau0.empty())
        throw PreconditionViolated("class spec: tau0/lambda0 must both have length L");
    if (r1 < 0.0 || r2 < 0.0) throw PreconditionViolated("class spec: radii must be nonnegative");
    for (double t : tau0)
        if (r1 >= t) throw PreconditionViolated("class spec: r1 must be < min tau0 (box stays positive)");
    for (double l : lambda0)
        if (r2 >= l) throw PreconditionViolated("class spec: r2 must be < min lambda0 (box stays positive)");
    if (!(delta > 0.0 && delta < 1.0)) throw PreconditionViolated("class spec: delta must lie in (0,1)");
    if (b_in <= 0.0 || b_out <= 0.0) throw PreconditionViolated("class spec: b_in/b_out must be positive");
}

Matrix conv_operator(const std::vector<double>& kernel, std::size_t signal_len) {
    // (T(w) z)_i = sum_j w_j z_{(i-j) mod N}  =>  T_{i,(i-j) mod N} = w_j
    Matrix t(signal_len, signal_len);
    for (std::size_t i = 0; i < signal_len; ++i)
        for (std::size_t j = 0; j < kernel.size(); ++j)
            t(i, (i + signal_len - j) % signal_len) = kernel[j];
    return t;
}

namespace {

const ParamSpace& space_at(const Architecture& arch, std::size_t l) {
    if (l < 1 || l > arch.depth + 1) throw DimensionMismatch("layer index out of range");
    return arch.spaces[arch.space_of(l)];
}

std::vector<double> kernel_of(const Matrix& w) {
    return w.data;  // kernels are stored k x 1
}

Matrix conv_apply(const std::vector<double>& kernel, std::size_t n, const Matrix& z) {
    Matrix out(n, z.cols);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < kernel.size(); ++j) {
            const double wj = kernel[j];
            if (wj == 0.0) continue;
            const std::size_t src = (i + n - j) % n;
            for (std::size_t c = 0; c < z.cols; ++c) out(i, c) += wj * z(src, c);
        }
    }
    return out;
}

Matrix conv_apply_t(const std::vector<double>& kernel, std::size_t n, const Matrix& z) {
    Matrix out(n, z.cols);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < kernel.size(); ++j) {
            const double wj = kernel[j];
            if (wj == 0.0) continue;
            const std::size_t src = (i + j) % n;
            for (std::size_t c = 0; c < z.cols; ++c) out(i, c) += wj * z(src, c);
        }
    }
    return out;
}

Matrix apply_pool(const Pooling& p, const Matrix& z) {
    return p.kind == PoolKind::Identity ? z : matmul(p.map, z);
}

}  // namespace

Matrix materialize_B(const Architecture& arch, const Params& params, std::size_t l) {
    const ParamSpace& sp = space_at(arch, l);
    const Matrix& w = params.weights[arch.space_of(l)];
    const bool interior = l <= arch.depth;
    if (sp.type == MapType::DenseDict) {
        if (w.rows != sp.weight_rows || w.cols != sp.weight_cols)
            throw DimensionMismatch("materialize_B: weight block shape mismatch");
        return interior ? matmul(sp.measurement, w) : w;
    }
    const Matrix t = conv_operator(kernel_of(w), sp.signal_len);
    return interior ? matmul(sp.measurement, t) : t;
}

Matrix apply_B(const Architecture& arch, const Params& params, std::size_t l, const Matrix& z) {
    const ParamSpace& sp = space_at(arch, l);
    const Matrix& w = params.weights[arch.space_of(l)];
    const bool interior = l <= arch.depth;
    if (sp.type == MapType::DenseDict) {
        const Matrix phi_z = matmul(w, z);
        return interior ? matmul(sp.measurement, phi_z) : phi_z;
    }
    const Matrix t_z = conv_apply(kernel_of(w), sp.signal_len, z);
    return interior ? matmul(sp.measurement, t_z) : t_z;
}

Matrix apply_Bt(const Architecture& arch, const Params& params, std::size_t l, const Matrix& z) {
    const ParamSpace& sp = space_at(arch, l);
    const Matrix& w = params.weights[arch.space_of(l)];
    const bool interior = l <= arch.depth;
    if (sp.type == MapType::DenseDict) {
        const Matrix at_z = interior ? matmul_tn(sp.measurement, z) : z;
        return matmul_tn(w, at_z);
    }
    const Matrix at_z = interior ? matmul_tn(sp.measurement, z) : z;
    return conv_apply_t(kernel_of(w), sp.signal_len, at_z);
}

std::vector<double> layer_forward(const Architecture& arch, const Params& params, std::size_t l,
                                  const std::vector<double>& z, const std::vector<double>& y) {
    if (l < 1 || l > arch.depth) throw DimensionMismatch("layer_forward: layer index out of range");
    if (z.size() != arch.widths[l - 1]) throw DimensionMismatch("layer_forward: z width mismatch");
    if (y.size() != arch.measurement_dim()) throw DimensionMismatch("layer_forward: y dimension mismatch");

    Matrix zc(z.size(), 1);
    zc.data = z;
    Matrix yc(y.size(), 1);
    yc.data = y;

    Matrix r = sub(yc, apply_B(arch, params, l, zc));
    Matrix u = zc;
    add_scaled_inplace(u, apply_Bt(arch, params, l, r), params.tau[l - 1]);
    Matrix s = soft_threshold_map(u, params.tau[l - 1] * params.lambda[l - 1]);
    return apply_pool(arch.pooling[l - 1], s).data;
}

ForwardTrace forward(const Architecture& arch, const Params& params, const Matrix& y) {
    if (y.rows != arch.measurement_dim()) throw DimensionMismatch("forward: y row count != n");
    if (params.tau.size() != arch.depth || params.lambda.size() != arch.depth)
        throw DimensionMismatch("forward: tau/lambda length != L");

    ForwardTrace trace;
    trace.layer_out.reserve(arch.depth);
    trace.preact.reserve(arch.depth);
    trace.residual.reserve(arch.depth);

    Matrix z(arch.widths[0], y.cols);
    for (std::size_t l = 1; l <= arch.depth; ++l) {
        Matrix r = sub(y, apply_B(arch, params, l, z));
        Matrix u = z;
        add_scaled_inplace(u, apply_Bt(arch, params, l, r), params.tau[l - 1]);
        Matrix s = soft_threshold_map(u, params.tau[l - 1] * params.lambda[l - 1]);
        z = apply_pool(arch.pooling[l - 1], s);
        trace.residual.push_back(std::move(r));
        trace.preact.push_back(std::move(u));
        trace.layer_out.push_back(z);
    }
    trace.final_pre = apply_B(arch, params, arch.depth + 1, z);
    trace.output = clip_cols_to_ball(trace.final_pre, arch.b_out);
    return trace;
}

std::vector<double> ista_reference(const Matrix& a, const Matrix& phi, double tau, double lambda,
                                   const std::vector<double>& y, std::size_t iters) {
    const Matrix m = matmul(a, phi);
    Matrix z(m.cols, 1);
    Matrix yc(y.size(), 1);
    yc.data = y;
    for (std::size_t it = 0; it < iters; ++it) {
        Matrix r = sub(yc, matmul(m, z));
        Matrix u = z;
        add_scaled_inplace(u, matmul_tn(m, r), tau);
        z = soft_threshold_map(u, tau * lambda);
    }
    return z.data;
}

double l1_objective(const std::vector<double>& z, const Matrix& a, const Matrix& phi,
                    const std::vector<double>& y, double lambda) {
    const Matrix m = matmul(a, phi);
    if (z.size() != m.cols || y.size() != m.rows) throw DimensionMismatch("l1_objective: shape mismatch");
    double quad = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) {
        double s = -y[i];
        for (std::size_t j = 0; j < m.cols; ++j) s += m(i, j) * z[j];
        quad += s * s;
    }
    double l1 = 0.0;
    for (double x : z) l1 += std::abs(x);
    return 0.5 * quad + lambda * l1;
}

double space_norm(const Matrix& weight, const ParamSpace& space) {
    if (space.norm == SpaceNorm::Euclidean) return frobenius_norm(weight);
    return spectral_norm(weight);
}

double param_class_norm(const Params& params, const Architecture& arch) {
    double best = 0.0;
    for (std::size_t j = 0; j < arch.spaces.size(); ++j)
        best = std::max(best, space_norm(params.weights[j], arch.spaces[j]));
    return best;
}

}  // namespace unroll
