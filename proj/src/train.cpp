#include "unroll/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "unroll/errors.hpp"
#include "unroll/scalar_ops.hpp"

namespace unroll {

Gradients zero_gradients(const Architecture& arch) {
    Gradients g;
    g.weights.reserve(arch.spaces.size());
    for (const ParamSpace& sp : arch.spaces) {
        if (sp.type == MapType::ConvDict)
            g.weights.emplace_back(sp.kernel_len, 1);
        else
            g.weights.emplace_back(sp.weight_rows, sp.weight_cols);
    }
    g.tau.assign(arch.depth, 0.0);
    g.lambda.assign(arch.depth, 0.0);
    return g;
}

double l2_loss(const Matrix& h, const Matrix& x) {
    if (!h.same_shape(x)) throw DimensionMismatch("l2_loss: shape mismatch");
    double s = 0.0;
    for (std::size_t j = 0; j < h.cols; ++j) {
        double c = 0.0;
        for (std::size_t i = 0; i < h.rows; ++i) {
            const double d = h(i, j) - x(i, j);
            c += d * d;
        }
        s += std::sqrt(c);
    }
    return s / static_cast<double>(h.cols);
}

double mse_loss(const Matrix& h, const Matrix& x) {
    if (!h.same_shape(x)) throw DimensionMismatch("mse_loss: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < h.data.size(); ++i) {
        const double d = h.data[i] - x.data[i];
        s += d * d;
    }
    return s / static_cast<double>(h.cols);
}

double ortho_penalty(const Matrix& phi) {
    if (phi.rows != phi.cols) throw DimensionMismatch("ortho_penalty: matrix must be square");
    Matrix e = Matrix::identity(phi.rows);
    add_scaled_inplace(e, matmul_tn(phi, phi), -1.0);
    return spectral_norm(e);
}

Matrix ortho_penalty_grad(const Matrix& phi) {
    Matrix e = Matrix::identity(phi.rows);
    add_scaled_inplace(e, matmul_tn(phi, phi), -1.0);
    const SpectralPair pair = spectral_norm_with_vector(e);
    Matrix grad(phi.rows, phi.cols);
    if (pair.sigma < 1e-14) return grad;
    // E is symmetric; the dominant direction v carries eigenvalue +-sigma.
    Matrix v(phi.rows, 1);
    v.data = pair.right_vector;
    const Matrix ev = matmul(e, v);
    const double sign = dot(ev.data, v.data) >= 0.0 ? 1.0 : -1.0;
    const Matrix phi_v = matmul(phi, v);
    for (std::size_t i = 0; i < phi.rows; ++i)
        for (std::size_t j = 0; j < phi.cols; ++j)
            grad(i, j) = -2.0 * sign * phi_v(i, 0) * pair.right_vector[j];
    return grad;
}

namespace {

Matrix loss_grad_output(const Matrix& h, const Matrix& x, LossKind kind) {
    Matrix g(h.rows, h.cols);
    const double inv_m = 1.0 / static_cast<double>(h.cols);
    if (kind == LossKind::Mse) {
        for (std::size_t i = 0; i < h.data.size(); ++i)
            g.data[i] = 2.0 * inv_m * (h.data[i] - x.data[i]);
        return g;
    }
    for (std::size_t j = 0; j < h.cols; ++j) {
        double c = 0.0;
        for (std::size_t i = 0; i < h.rows; ++i) {
            const double d = h(i, j) - x(i, j);
            c += d * d;
        }
        const double n = std::sqrt(c);
        if (n == 0.0) continue;  // subgradient 0 at the kink
        for (std::size_t i = 0; i < h.rows; ++i) g(i, j) = inv_m * (h(i, j) - x(i, j)) / n;
    }
    return g;
}

// Pull the cotangent of the clipped output back through the radial
// projection: identity inside the ball, exact Jacobian of b*v/|v| outside.
Matrix clip_backward(const Matrix& pre, const Matrix& d_out, double b_out) {
    Matrix g(pre.rows, pre.cols);
    for (std::size_t j = 0; j < pre.cols; ++j) {
        const double n = col_norm2(pre, j);
        if (n <= b_out) {
            for (std::size_t i = 0; i < pre.rows; ++i) g(i, j) = d_out(i, j);
            continue;
        }
        double vg = 0.0;
        for (std::size_t i = 0; i < pre.rows; ++i) vg += pre(i, j) * d_out(i, j);
        const double s = b_out / n;
        const double proj = vg / (n * n);
        for (std::size_t i = 0; i < pre.rows; ++i) g(i, j) = s * (d_out(i, j) - pre(i, j) * proj);
    }
    return g;
}

// dw_j = sum_{i,c} d_t(i, (i-j) mod N) collapsed over the wrap diagonals.
void accumulate_kernel_grad(Matrix& dw, const Matrix& d_t) {
    const std::size_t n = d_t.rows;
    for (std::size_t j = 0; j < dw.rows; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += d_t(i, (i + n - j) % n);
        dw(j, 0) += s;
    }
}

void accumulate_weight_grad(const Architecture& arch, const Params& params, std::size_t l,
                            const Matrix& d_b, Gradients& grads) {
    const std::size_t j = arch.space_of(l);
    const ParamSpace& sp = arch.spaces[j];
    const bool interior = l <= arch.depth;
    if (sp.type == MapType::DenseDict) {
        if (interior)
            add_scaled_inplace(grads.weights[j], matmul_tn(sp.measurement, d_b), 1.0);
        else
            add_scaled_inplace(grads.weights[j], d_b, 1.0);
        return;
    }
    const Matrix d_t = interior ? matmul_tn(sp.measurement, d_b) : d_b;
    accumulate_kernel_grad(grads.weights[j], d_t);
    (void)params;
}

}  // namespace

Gradients backward(const Architecture& arch, const Params& params, const Matrix& x, const Matrix& y,
                   LossKind loss, const ForwardTrace& trace) {
    if (trace.layer_out.size() != arch.depth) throw DimensionMismatch("backward: trace does not match arch");
    Gradients grads = zero_gradients(arch);

    const Matrix d_h = loss_grad_output(trace.output, x, loss);
    const Matrix d_v = clip_backward(trace.final_pre, d_h, arch.b_out);

    // Final transform V = B_{L+1} Z_L.
    const Matrix& z_last = trace.layer_out[arch.depth - 1];
    accumulate_weight_grad(arch, params, arch.depth + 1, matmul_nt(d_v, z_last), grads);
    Matrix d_z = apply_Bt(arch, params, arch.depth + 1, d_v);

    for (std::size_t l = arch.depth; l >= 1; --l) {
        const Matrix& u = trace.preact[l - 1];
        const Matrix& r = trace.residual[l - 1];
        const double tau = params.tau[l - 1];
        const double lambda = params.lambda[l - 1];
        const double theta = tau * lambda;

        const Pooling& pool = arch.pooling[l - 1];
        const Matrix d_s = pool.kind == PoolKind::Identity ? std::move(d_z) : matmul_tn(pool.map, d_z);

        Matrix g(u.rows, u.cols);
        double d_theta = 0.0;
        for (std::size_t i = 0; i < u.data.size(); ++i) {
            const double ui = u.data[i];
            if (std::abs(ui) > theta) {
                g.data[i] = d_s.data[i];
                d_theta -= d_s.data[i] * (ui > 0.0 ? 1.0 : -1.0);
            }
        }
        grads.lambda[l - 1] += tau * d_theta;
        grads.tau[l - 1] += lambda * d_theta;

        // U = Z_{l-1} + tau B^T R; the tau direction is B^T R = (U - Z_{l-1})/tau.
        const Matrix* z_prev = nullptr;
        Matrix z_zero;
        if (l >= 2) {
            z_prev = &trace.layer_out[l - 2];
        } else {
            z_zero = Matrix(arch.widths[0], y.cols);
            z_prev = &z_zero;
        }
        double tau_dir = 0.0;
        for (std::size_t i = 0; i < g.data.size(); ++i)
            tau_dir += g.data[i] * (u.data[i] - z_prev->data[i]);
        grads.tau[l - 1] += tau_dir / tau;

        // dB = tau (R G^T - B (G Z_{l-1}^T)).
        Matrix d_b = matmul_nt(r, g);
        if (l >= 2) {
            const Matrix gz = matmul_nt(g, *z_prev);
            add_scaled_inplace(d_b, apply_B(arch, params, l, gz), -1.0);
        }
        accumulate_weight_grad(arch, params, l, scale(d_b, tau), grads);

        if (l >= 2) {
            // dZ_{l-1} = G - tau B^T (B G).
            Matrix next = g;
            add_scaled_inplace(next, apply_Bt(arch, params, l, apply_B(arch, params, l, g)), -tau);
            d_z = std::move(next);
        }
    }
    return grads;
}

AdamState make_adam_state(const Architecture& arch) {
    AdamState s;
    const Gradients z = zero_gradients(arch);
    s.m_w = z.weights;
    s.v_w = z.weights;
    s.m_tau = z.tau;
    s.v_tau = z.tau;
    s.m_lambda = z.lambda;
    s.v_lambda = z.lambda;
    return s;
}

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void adam_update(double& p, double& m, double& v, double g, double lr, double c1, double c2) {
    m = kBeta1 * m + (1.0 - kBeta1) * g;
    v = kBeta2 * v + (1.0 - kBeta2) * g * g;
    p -= lr * (m / c1) / (std::sqrt(v / c2) + kAdamEps);
}

}  // namespace

void adam_step(AdamState& state, Params& params, const Gradients& grads, const TrainConfig& config) {
    state.step += 1;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
    const double lr = config.learning_rate;

    for (std::size_t j = 0; j < params.weights.size(); ++j) {
        Matrix& w = params.weights[j];
        for (std::size_t i = 0; i < w.data.size(); ++i)
            adam_update(w.data[i], state.m_w[j].data[i], state.v_w[j].data[i], grads.weights[j].data[i],
                        lr, c1, c2);
    }
    if (config.train_tau)
        for (std::size_t l = 0; l < params.tau.size(); ++l)
            adam_update(params.tau[l], state.m_tau[l], state.v_tau[l], grads.tau[l], lr, c1, c2);
    if (config.train_lambda)
        for (std::size_t l = 0; l < params.lambda.size(); ++l)
            adam_update(params.lambda[l], state.m_lambda[l], state.v_lambda[l], grads.lambda[l], lr, c1, c2);
}

Params project_params(const Params& params, const Architecture& arch, const HypothesisClassSpec& spec) {
    Params p = params;
    for (std::size_t l = 0; l < p.tau.size(); ++l) {
        p.tau[l] = std::clamp(p.tau[l], spec.tau0[l] - spec.r1, spec.tau0[l] + spec.r1);
        p.lambda[l] = std::clamp(p.lambda[l], spec.lambda0[l] - spec.r2, spec.lambda0[l] + spec.r2);
    }
    for (std::size_t j = 0; j < p.weights.size(); ++j) {
        const double n = space_norm(p.weights[j], arch.spaces[j]);
        if (n > spec.w_inf) p.weights[j] = scale(p.weights[j], spec.w_inf / n);
    }
    return p;
}

Params init_params(const Architecture& arch, const HypothesisClassSpec& spec, SeededRng& rng) {
    Params p;
    p.weights.reserve(arch.spaces.size());
    for (const ParamSpace& sp : arch.spaces) {
        const double a_norm = std::max(1.0, spectral_norm(sp.measurement));
        if (sp.type == MapType::ConvDict) {
            Matrix w = random_gaussian_matrix(rng, sp.kernel_len, 1);
            const double target =
                std::min(spec.w_inf, 0.9 / (std::sqrt(static_cast<double>(sp.kernel_len)) * a_norm));
            const double n = frobenius_norm(w);
            p.weights.push_back(n == 0.0 ? w : scale(w, target / n));
        } else {
            Matrix w = random_gaussian_matrix(rng, sp.weight_rows, sp.weight_cols);
            const double target = std::min(spec.w_inf, 0.9 / a_norm);
            const double n = spectral_norm(w);
            p.weights.push_back(n == 0.0 ? w : scale(w, target / n));
        }
    }
    p.tau = spec.tau0;
    p.lambda = spec.lambda0;
    return p;
}

namespace {

EpochRecord evaluate(const Architecture& arch, const Params& params, const TrainData& data,
                     std::size_t epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    const ForwardTrace tr = forward(arch, params, data.y_train);
    rec.train_mse = mse_loss(tr.output, data.x_train);
    rec.train_l2 = l2_loss(tr.output, data.x_train);
    const ForwardTrace te = forward(arch, params, data.y_test);
    rec.test_mse = mse_loss(te.output, data.x_test);
    rec.test_l2 = l2_loss(te.output, data.x_test);
    return rec;
}

}  // namespace

TrainResult train(const Architecture& arch, const HypothesisClassSpec& spec, const TrainData& data,
                  const TrainConfig& config) {
    arch.validate();
    spec.validate();
    const std::size_t m = data.y_train.cols;
    SeededRng rng(config.seed);

    Params params = project_params(init_params(arch, spec, rng), arch, spec);
    AdamState state = make_adam_state(arch);

    TrainResult result;
    result.history.push_back(evaluate(arch, params, data, 0));

    const std::size_t batch = m <= 512 ? m : std::min(config.batch_size, m);
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = m; i > 1; --i) {
            const std::size_t k = static_cast<std::size_t>(rng.next_below(i));
            std::swap(order[i - 1], order[k]);
        }
        for (std::size_t start = 0; start < m; start += batch) {
            const std::size_t count = std::min(batch, m - start);
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(start + count));
            const Matrix xb = gather_cols(data.x_train, idx);
            const Matrix yb = gather_cols(data.y_train, idx);

            const ForwardTrace trace = forward(arch, params, yb);
            Gradients grads = backward(arch, params, xb, yb, LossKind::Mse, trace);
            if (config.ortho_weight > 0.0) {
                for (std::size_t j = 0; j < arch.spaces.size(); ++j) {
                    const ParamSpace& sp = arch.spaces[j];
                    if (sp.type == MapType::DenseDict && sp.weight_rows == sp.weight_cols)
                        add_scaled_inplace(grads.weights[j], ortho_penalty_grad(params.weights[j]),
                                           config.ortho_weight);
                }
            }
            adam_step(state, params, grads, config);
            params = project_params(params, arch, spec);
        }
        result.history.push_back(evaluate(arch, params, data, epoch));
    }
    result.params = std::move(params);
    return result;
}

namespace {

double kink_margin(const Architecture& arch, const Params& params, const ForwardTrace& trace) {
    double margin = 1e300;
    for (std::size_t l = 1; l <= arch.depth; ++l) {
        const double theta = params.tau[l - 1] * params.lambda[l - 1];
        for (double u : trace.preact[l - 1].data)
            margin = std::min(margin, std::abs(std::abs(u) - theta));
    }
    for (std::size_t j = 0; j < trace.final_pre.cols; ++j)
        margin = std::min(margin, std::abs(col_norm2(trace.final_pre, j) - arch.b_out));
    return margin;
}

struct LeafRef {
    double* value;
    double analytic;
    std::string name;
};

}  // namespace

GradCheckReport grad_check(const Architecture& arch, const HypothesisClassSpec& spec,
                           std::uint64_t seed, double tolerance) {
    if (tolerance <= 0.0) throw PreconditionViolated("grad_check: tolerance must be positive");
    SeededRng rng(seed);
    const std::size_t m = 3;

    Params params;
    Matrix x, y;
    bool found = false;
    for (int attempt = 0; attempt < 64 && !found; ++attempt) {
        params = project_params(init_params(arch, spec, rng), arch, spec);
        // Wiggle tau/lambda inside their boxes so the boxes are exercised.
        for (std::size_t l = 0; l < arch.depth; ++l) {
            params.tau[l] = spec.tau0[l] + spec.r1 * (2.0 * rng.next_uniform() - 1.0) * 0.9;
            params.lambda[l] = spec.lambda0[l] + spec.r2 * (2.0 * rng.next_uniform() - 1.0) * 0.9;
        }
        x = random_gaussian_matrix(rng, arch.widths[arch.depth + 1], m);
        y = random_gaussian_matrix(rng, arch.measurement_dim(), m);
        const ForwardTrace trace = forward(arch, params, y);
        found = kink_margin(arch, params, trace) >= 1e-4;
    }
    if (!found) throw CheckFailed("grad_check: could not sample a kink-free instance");

    const ForwardTrace trace = forward(arch, params, y);
    const Gradients grads = backward(arch, params, x, y, LossKind::Mse, trace);

    Params probe = params;
    std::vector<LeafRef> leaves;
    for (std::size_t j = 0; j < probe.weights.size(); ++j)
        for (std::size_t i = 0; i < probe.weights[j].data.size(); ++i)
            leaves.push_back({&probe.weights[j].data[i], grads.weights[j].data[i],
                              "w" + std::to_string(j + 1) + "[" + std::to_string(i) + "]"});
    for (std::size_t l = 0; l < arch.depth; ++l) {
        leaves.push_back({&probe.tau[l], grads.tau[l], "tau[" + std::to_string(l) + "]"});
        leaves.push_back({&probe.lambda[l], grads.lambda[l], "lambda[" + std::to_string(l) + "]"});
    }

    GradCheckReport report;
    for (LeafRef& leaf : leaves) {
        const double saved = *leaf.value;
        const double h = 1e-6 * std::max(1.0, std::abs(saved));
        *leaf.value = saved + h;
        const double up = mse_loss(forward(arch, probe, y).output, x);
        *leaf.value = saved - h;
        const double dn = mse_loss(forward(arch, probe, y).output, x);
        *leaf.value = saved;
        const double numeric = (up - dn) / (2.0 * h);
        const double abs_err = std::abs(numeric - leaf.analytic);
        // Cancellation noise of the central difference itself; a deviation
        // below it carries no information about the analytic gradient.
        const double noise_floor =
            32.0 * std::numeric_limits<double>::epsilon() * (std::abs(up) + std::abs(dn)) / (2.0 * h);
        double rel = abs_err <= noise_floor
                         ? 0.0
                         : abs_err / std::max({std::abs(numeric), std::abs(leaf.analytic), 1e-10});
        if (rel > report.max_rel_err) {
            report.max_rel_err = rel;
            report.worst = leaf.name;
        }
        ++report.checked;
    }
    return report;
}

}  // namespace unroll
