#include "unroll/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "unroll/errors.hpp"
#include "unroll/scalar_ops.hpp"

namespace unroll {

std::string to_string(AlphaMode mode) {
    return mode == AlphaMode::AnalyticClassBound ? "analytic_class_bound" : "pointwise_lower_bound";
}

namespace {

// sup_{|w| <= w_inf} |B_l(w)| for one layer position.
double position_b_bound(const ParamSpace& sp, bool interior, double w_inf, double a_norm) {
    if (sp.type == MapType::DenseDict) return interior ? w_inf * a_norm : w_inf;
    const double root_k = std::sqrt(static_cast<double>(sp.kernel_len));
    return interior ? w_inf * root_k * a_norm : w_inf * root_k;
}

// Lipschitz constant of w -> B_l(w) in the space norm.
double position_d(const ParamSpace& sp, bool interior, double a_norm) {
    if (sp.type == MapType::DenseDict) return interior ? a_norm : 1.0;
    const double root_k = std::sqrt(static_cast<double>(sp.kernel_len));
    return interior ? root_k * a_norm : root_k;
}

}  // namespace

ClassConstants class_constants(const Architecture& arch, const HypothesisClassSpec& spec,
                               const Params* params) {
    spec.validate();
    ClassConstants c;
    c.w_inf = spec.w_inf;
    c.tau_inf = 0.0;
    c.lambda_inf = 0.0;
    for (double t : spec.tau0) c.tau_inf = std::max(c.tau_inf, t + spec.r1);
    for (double l : spec.lambda0) c.lambda_inf = std::max(c.lambda_inf, l + spec.r2);

    std::vector<double> a_norms(arch.spaces.size());
    for (std::size_t j = 0; j < arch.spaces.size(); ++j) {
        if (arch.spaces[j].norm != SpaceNorm::Spectral && arch.spaces[j].norm != SpaceNorm::Euclidean)
            throw UnsupportedClass("class_constants: unknown parameter-space norm");
        a_norms[j] = spectral_norm(arch.spaces[j].measurement);
    }

    c.b_inf = 0.0;
    c.d_l.resize(arch.depth + 1);
    for (std::size_t l = 1; l <= arch.depth + 1; ++l) {
        const std::size_t j = arch.space_of(l);
        const bool interior = l <= arch.depth;
        c.b_inf = std::max(c.b_inf, position_b_bound(arch.spaces[j], interior, spec.w_inf, a_norms[j]));
        c.d_l[l - 1] = position_d(arch.spaces[j], interior, a_norms[j]);
    }
    c.d_inf = *std::max_element(c.d_l.begin(), c.d_l.end());

    // Every declared class contains rank-deficient maps, so the spectrum of
    // I - tau B^T B reaches 1; the other extreme is 1 - tau |B|^2.
    c.alpha = std::max(1.0, c.tau_inf * c.b_inf * c.b_inf - 1.0);
    c.alpha_mode = AlphaMode::AnalyticClassBound;

    if (params != nullptr) {
        double alpha_pt = 0.0;
        double b_pt = 0.0;
        for (std::size_t l = 1; l <= arch.depth; ++l) {
            const Matrix b = materialize_B(arch, *params, l);
            Matrix g = Matrix::identity(b.cols);
            add_scaled_inplace(g, matmul_tn(b, b), -params->tau[l - 1]);
            alpha_pt = std::max(alpha_pt, spectral_norm(g));
            b_pt = std::max(b_pt, spectral_norm(b));
        }
        b_pt = std::max(b_pt, spectral_norm(materialize_B(arch, *params, arch.depth + 1)));
        c.alpha_pointwise = alpha_pt;
        c.b_pointwise = b_pt;
    }
    return c;
}

std::vector<double> z_sequence(double alpha, double tau_inf, double b_inf, std::size_t depth) {
    std::vector<double> z(depth + 1, 0.0);
    double pow_a = 1.0;
    double acc = 0.0;
    for (std::size_t l = 1; l <= depth; ++l) {
        pow_a *= alpha;
        acc += pow_a;
        z[l] = tau_inf * b_inf * acc;
    }
    return z;
}

NetworkLipschitz klmoq(const ClassConstants& c, std::size_t depth, double y_fro, std::size_t m,
                       std::size_t n_inf) {
    if (depth < 1) throw PreconditionViolated("klmoq: depth must be >= 1");
    const std::vector<double> z = z_sequence(c.alpha, c.tau_inf, c.b_inf, depth);
    const double root_nm = std::sqrt(static_cast<double>(n_inf) * static_cast<double>(m));

    NetworkLipschitz lip;
    for (std::size_t l = 1; l <= depth; ++l) {
        const double z_prev = z[l - 1];
        const double beta = c.tau_inf * y_fro * (1.0 + 2.0 * c.b_inf * z_prev);
        const double kappa = c.lambda_inf * root_nm + c.b_inf * y_fro * (c.b_inf * z_prev + 1.0);
        const double phi = c.tau_inf * root_nm;
        lip.k_l = c.alpha * lip.k_l + beta;
        lip.m_l = c.alpha * lip.m_l + kappa;
        lip.o_l = c.alpha * lip.o_l + phi;
    }
    lip.q_l = (c.b_inf * lip.k_l + y_fro * z[depth]) * c.d_inf;
    return lip;
}

double rademacher_bound(std::size_t k_total, std::size_t depth, std::size_t m, double w_inf,
                        double b_out, double r1, double r2, const NetworkLipschitz& lip) {
    const double dm = static_cast<double>(m);
    const double root_m = std::sqrt(dm);
    const double term_w =
        std::sqrt(static_cast<double>(k_total) / dm) * psi(16.0 * w_inf * lip.q_l / (root_m * b_out));
    const double term_lambda =
        std::sqrt(static_cast<double>(depth) / dm) * psi(8.0 * r2 * lip.o_l / (root_m * b_out));
    const double term_tau =
        std::sqrt(static_cast<double>(depth) / dm) * psi(8.0 * r1 * lip.m_l / (root_m * b_out));
    return 2.0 * std::sqrt(2.0) * b_out * (term_w + term_lambda + term_tau);
}

double generalization_bound(double lemp, double rad, double b_in, double b_out, double delta,
                            std::size_t m) {
    if (!(delta > 0.0 && delta < 1.0)) throw PreconditionViolated("generalization_bound: delta in (0,1)");
    if (m < 1) throw PreconditionViolated("generalization_bound: m >= 1");
    const double conf = 4.0 * (b_in + b_out) * std::sqrt(2.0 * std::log(4.0 / delta) / static_cast<double>(m));
    return lemp + 2.0 * std::sqrt(2.0) * rad + conf;
}

double corollary_bound(std::size_t k_total, std::size_t depth, std::size_t m, std::size_t n_inf,
                       const ClassConstants& c, double b_in, double b_out, double r1, double r2) {
    if (c.tau_inf * c.b_inf * c.b_inf > 1.0 + 1e-12)
        throw PreconditionViolated("corollary_bound: requires tau_inf * B_inf^2 <= 1");
    const double dm = static_cast<double>(m);
    const double dl = static_cast<double>(depth);
    const double root_m = std::sqrt(dm);
    const double root_nm = std::sqrt(static_cast<double>(n_inf) * dm);

    const double log_arg =
        std::exp(1.0) * (1.0 + 16.0 * dl * (dl + 1.0) * c.tau_inf * c.b_inf * c.w_inf * c.d_inf * b_in / b_out);
    const double term_w = std::sqrt(static_cast<double>(k_total) / dm * std::log(log_arg));
    const double term_lambda =
        std::sqrt(dl / dm) * psi(8.0 * r2 * dl * c.tau_inf * root_nm / (root_m * b_out));
    const double m_arg = c.lambda_inf * c.lambda_inf * static_cast<double>(n_inf) * root_m +
                         b_in * (c.b_inf * c.lambda_inf * root_nm + (dl - 1.0) / 2.0);
    const double term_tau = std::sqrt(dl / dm) * psi(8.0 * r1 * dl * m_arg / b_out);
    return 2.0 * std::sqrt(2.0) * b_out * (term_w + term_lambda + term_tau);
}

std::size_t n_inf_of(const Architecture& arch) {
    std::size_t n_inf = 0;
    for (std::size_t l = 1; l <= arch.depth; ++l) n_inf = std::max(n_inf, arch.widths[l]);
    return n_inf;
}

BoundReport compute_bound_report(const Architecture& arch, const HypothesisClassSpec& spec,
                                 double y_fro, std::size_t m, double lemp, const Params* params) {
    const ClassConstants c = class_constants(arch, spec, params);
    if (spec.enforce_tau_b2_le_1 && c.tau_inf * c.b_inf * c.b_inf > 1.0 + 1e-12)
        throw PreconditionViolated("class declares enforce_tau_b2_le_1 but tau_inf * B_inf^2 = " +
                                   std::to_string(c.tau_inf * c.b_inf * c.b_inf));
    BoundReport rep;
    rep.depth = arch.depth;
    rep.m = m;
    rep.n_inf = n_inf_of(arch);
    rep.k_total = arch.weight_dim_total();
    rep.y_fro = y_fro;
    rep.b_in = spec.b_in;
    rep.b_out = spec.b_out;
    rep.delta = spec.delta;
    rep.r1 = spec.r1;
    rep.r2 = spec.r2;
    rep.lemp = lemp;
    rep.alpha = c.alpha;
    rep.alpha_mode = to_string(c.alpha_mode);
    rep.alpha_pointwise = c.alpha_pointwise;
    rep.b_inf = c.b_inf;
    rep.w_inf = c.w_inf;
    rep.d_inf = c.d_inf;
    rep.tau_inf = c.tau_inf;
    rep.lambda_inf = c.lambda_inf;

    rep.z = z_sequence(c.alpha, c.tau_inf, c.b_inf, arch.depth);
    const NetworkLipschitz lip = klmoq(c, arch.depth, y_fro, m, rep.n_inf);
    rep.k_l = lip.k_l;
    rep.m_l = lip.m_l;
    rep.o_l = lip.o_l;
    rep.q_l = lip.q_l;
    rep.rad_bound = rademacher_bound(rep.k_total, arch.depth, m, spec.w_inf, spec.b_out, spec.r1,
                                     spec.r2, lip);
    rep.full_bound = generalization_bound(lemp, rep.rad_bound, spec.b_in, spec.b_out, spec.delta, m);
    if (c.tau_inf * c.b_inf * c.b_inf <= 1.0 + 1e-12)
        rep.corollary_bound = corollary_bound(rep.k_total, arch.depth, m, rep.n_inf, c, spec.b_in,
                                              spec.b_out, spec.r1, spec.r2);
    return rep;
}

namespace {

void json_number(std::ostringstream& out, const char* key, double v, bool& first) {
    if (!first) out << ",";
    first = false;
    out << "\"" << key << "\":";
    if (std::isfinite(v)) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << buf;
    } else {
        out << "null";
    }
}

}  // namespace

std::string bound_report_to_json(const BoundReport& r) {
    std::ostringstream out;
    out << "{";
    bool first = true;
    json_number(out, "alpha", r.alpha, first);
    if (!first) out << ",";
    out << "\"alpha_mode\":\"" << r.alpha_mode << "\"";
    if (r.alpha_pointwise) json_number(out, "alpha_pointwise", *r.alpha_pointwise, first);
    json_number(out, "b_inf", r.b_inf, first);
    json_number(out, "w_inf", r.w_inf, first);
    json_number(out, "d_inf", r.d_inf, first);
    json_number(out, "tau_inf", r.tau_inf, first);
    json_number(out, "lambda_inf", r.lambda_inf, first);
    out << ",\"z\":[";
    for (std::size_t i = 0; i < r.z.size(); ++i) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", r.z[i]);
        out << (i ? "," : "") << buf;
    }
    out << "]";
    json_number(out, "k_l", r.k_l, first);
    json_number(out, "m_l", r.m_l, first);
    json_number(out, "o_l", r.o_l, first);
    json_number(out, "q_l", r.q_l, first);
    json_number(out, "rad_bound", r.rad_bound, first);
    json_number(out, "full_bound", r.full_bound, first);
    if (r.corollary_bound) json_number(out, "corollary_bound", *r.corollary_bound, first);
    json_number(out, "m", static_cast<double>(r.m), first);
    json_number(out, "n_inf", static_cast<double>(r.n_inf), first);
    json_number(out, "k_total", static_cast<double>(r.k_total), first);
    json_number(out, "depth", static_cast<double>(r.depth), first);
    json_number(out, "y_fro", r.y_fro, first);
    json_number(out, "b_in", r.b_in, first);
    json_number(out, "b_out", r.b_out, first);
    json_number(out, "delta", r.delta, first);
    json_number(out, "r1", r.r1, first);
    json_number(out, "r2", r.r2, first);
    json_number(out, "lemp", r.lemp, first);
    out << "}";
    return out.str();
}

namespace {

struct PointwiseSup {
    double alpha = 0.0;   // max_l |I - tau_l B_l^T B_l|
    double b = 0.0;       // max_{l in [L+1]} |B_l|
    double tau = 0.0;
    double lambda = 0.0;
};

PointwiseSup pointwise_sup(const Architecture& arch, const Params& params,
                           const std::vector<Matrix>& b_mats) {
    PointwiseSup s;
    for (std::size_t l = 1; l <= arch.depth; ++l) {
        const Matrix& b = b_mats[l - 1];
        Matrix g = Matrix::identity(b.cols);
        add_scaled_inplace(g, matmul_tn(b, b), -params.tau[l - 1]);
        s.alpha = std::max(s.alpha, spectral_norm(g));
        s.b = std::max(s.b, spectral_norm(b));
        s.tau = std::max(s.tau, params.tau[l - 1]);
        s.lambda = std::max(s.lambda, params.lambda[l - 1]);
    }
    s.b = std::max(s.b, spectral_norm(b_mats[arch.depth]));
    return s;
}

std::vector<Matrix> materialize_all(const Architecture& arch, const Params& params) {
    std::vector<Matrix> b;
    b.reserve(arch.depth + 1);
    for (std::size_t l = 1; l <= arch.depth + 1; ++l) b.push_back(materialize_B(arch, params, l));
    return b;
}

// The derivation-backed growth sum tau b sum_{k=1..l} alpha^{l-k}; this is
// the form the induction actually proves (the k-th summand carries l-k
// contraction factors), and is what the audits must compare against.
std::vector<double> growth_sequence(double alpha, double tau, double b, std::size_t depth) {
    std::vector<double> z(depth + 1, 0.0);
    double acc = 0.0;
    for (std::size_t l = 1; l <= depth; ++l) {
        acc = acc * alpha + 1.0;
        z[l] = tau * b * acc;
    }
    return z;
}

void record(AuditReport& rep, double lhs, double rhs) {
    ++rep.checks;
    if (rhs > 0.0) rep.max_ratio = std::max(rep.max_ratio, lhs / rhs);
    if (lhs > rhs * (1.0 + 1e-12)) ++rep.violations;
}

}  // namespace

AuditReport verify_output_bound(const Architecture& arch, const Params& params, const Matrix& y,
                                double inflate) {
    AuditReport rep;
    const ForwardTrace trace = forward(arch, params, y);
    const std::vector<Matrix> b_mats = materialize_all(arch, params);
    const double y_fro = frobenius_norm(y);

    // Per-layer ingredients: |tau_k B_k^T Y|_F and the contraction factors
    // g_i = |I - tau_i B_i^T B_i| (factor i belongs to layer i).
    std::vector<double> bias(arch.depth + 1, 0.0), g(arch.depth + 1, 1.0);
    for (std::size_t l = 1; l <= arch.depth; ++l) {
        bias[l] = params.tau[l - 1] * frobenius_norm(matmul_tn(b_mats[l - 1], y));
        Matrix contraction = Matrix::identity(b_mats[l - 1].cols);
        add_scaled_inplace(contraction, matmul_tn(b_mats[l - 1], b_mats[l - 1]), -params.tau[l - 1]);
        g[l] = spectral_norm(contraction);
    }
    const PointwiseSup sup = pointwise_sup(arch, params, b_mats);
    const std::vector<double> coarse = growth_sequence(sup.alpha, sup.tau, sup.b, arch.depth);

    for (std::size_t l = 1; l <= arch.depth; ++l) {
        const double lhs = inflate * frobenius_norm(trace.layer_out[l - 1]);
        // sum_{k=1..l} |tau_k B_k^T Y|_F prod_{i=k+1..l} g_i
        double rhs = 0.0;
        for (std::size_t k = 1; k <= l; ++k) {
            double prod = 1.0;
            for (std::size_t i = k + 1; i <= l; ++i) prod *= g[i];
            rhs += bias[k] * prod;
        }
        record(rep, lhs, rhs);
        record(rep, lhs, y_fro * coarse[l]);
    }
    return rep;
}

AuditReport verify_perturbation_bound(const Architecture& arch, const Params& p1, const Params& p2,
                                      const Matrix& y, double inflate) {
    AuditReport rep;
    const ForwardTrace t1 = forward(arch, p1, y);
    const ForwardTrace t2 = forward(arch, p2, y);
    const std::vector<Matrix> b1 = materialize_all(arch, p1);
    const std::vector<Matrix> b2 = materialize_all(arch, p2);

    const PointwiseSup s1 = pointwise_sup(arch, p1, b1);
    const PointwiseSup s2 = pointwise_sup(arch, p2, b2);
    PointwiseSup pair;
    pair.alpha = std::max(s1.alpha, s2.alpha);
    pair.b = std::max(s1.b, s2.b);
    pair.tau = std::max(s1.tau, s2.tau);
    pair.lambda = std::max(s1.lambda, s2.lambda);

    // The growth factors entering K_L/M_L must dominate |f^{l-1}|/|Y|, so
    // they are built from the derivation-backed sum, not the reporting one.
    const std::vector<double> z = growth_sequence(pair.alpha, pair.tau, pair.b, arch.depth);

    std::size_t n_inf = 0;
    for (std::size_t l = 0; l <= arch.depth; ++l) n_inf = std::max(n_inf, arch.widths[l]);
    const double root_nm = std::sqrt(static_cast<double>(n_inf) * static_cast<double>(y.cols));
    const double y_fro = frobenius_norm(y);

    double k_l = 0.0, m_l = 0.0, o_l = 0.0;
    for (std::size_t l = 1; l <= arch.depth; ++l) {
        const double z_prev = z[l - 1];
        k_l = pair.alpha * k_l + pair.tau * y_fro * (1.0 + 2.0 * pair.b * z_prev);
        m_l = pair.alpha * m_l + pair.lambda * root_nm + pair.b * y_fro * (pair.b * z_prev + 1.0);
        o_l = pair.alpha * o_l + pair.tau * root_nm;
    }

    double max_db_interior = 0.0, max_db_all = 0.0, d_tau = 0.0, d_lambda = 0.0;
    for (std::size_t l = 1; l <= arch.depth + 1; ++l) {
        const double gap = spectral_norm(sub(b1[l - 1], b2[l - 1]));
        max_db_all = std::max(max_db_all, gap);
        if (l <= arch.depth) max_db_interior = std::max(max_db_interior, gap);
    }
    for (std::size_t l = 0; l < arch.depth; ++l) {
        d_tau = std::max(d_tau, std::abs(p1.tau[l] - p2.tau[l]));
        d_lambda = std::max(d_lambda, std::abs(p1.lambda[l] - p2.lambda[l]));
    }

    const double lhs_f =
        inflate * frobenius_norm(sub(t1.layer_out[arch.depth - 1], t2.layer_out[arch.depth - 1]));
    const double rhs_f = k_l * max_db_interior + m_l * d_tau + o_l * d_lambda;
    record(rep, lhs_f, rhs_f);

    // Full decoder: the final-transform gap acts on f^L_{P1} and the interior
    // differences propagate through B_{L+1}, which carries a factor b onto
    // the K/M/O terms.
    const double lhs_h = inflate * frobenius_norm(sub(t1.output, t2.output));
    const double rhs_h = (pair.b * k_l + y_fro * z[arch.depth]) * max_db_all +
                         pair.b * (m_l * d_tau + o_l * d_lambda);
    record(rep, lhs_h, rhs_h);
    return rep;
}

namespace {

double psi_integrand_sub(double a, double b, double u) {
    // t = a u^2 substitution; integrand 2 a u sqrt(log(1 + b/(a u^2))).
    if (u <= 0.0) return 0.0;
    const double t = a * u * u;
    return 2.0 * a * u * std::sqrt(std::log1p(b / t));
}

double adaptive_simpson(double a, double b, double lo, double hi, double f_lo, double f_mid,
                        double f_hi, double whole, double tol, int depth) {
    const double mid = 0.5 * (lo + hi);
    const double lm = 0.5 * (lo + mid), rm = 0.5 * (mid + hi);
    const double f_lm = psi_integrand_sub(a, b, lm), f_rm = psi_integrand_sub(a, b, rm);
    const double left = (mid - lo) / 6.0 * (f_lo + 4.0 * f_lm + f_mid);
    const double right = (hi - mid) / 6.0 * (f_mid + 4.0 * f_rm + f_hi);
    const double delta = left + right - whole;
    if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    if (depth <= 0) throw QuadratureFailure("psi_integral_check: refinement limit reached");
    return adaptive_simpson(a, b, lo, mid, f_lo, f_lm, f_mid, left, 0.5 * tol, depth - 1) +
           adaptive_simpson(a, b, mid, hi, f_mid, f_rm, f_hi, right, 0.5 * tol, depth - 1);
}

}  // namespace

PsiIntegralReport psi_integral_check(double a, double b) {
    if (a <= 0.0 || b < 0.0) throw PreconditionViolated("psi_integral_check: need a > 0, b >= 0");
    PsiIntegralReport rep;
    rep.bound = a * psi(b / a);
    if (b == 0.0) {
        rep.integral = 0.0;
        rep.ok = true;
        return rep;
    }
    const double f0 = 0.0;
    const double f_mid = psi_integrand_sub(a, b, 0.5);
    const double f1 = psi_integrand_sub(a, b, 1.0);
    const double whole = 1.0 / 6.0 * (f0 + 4.0 * f_mid + f1);
    const double tol = 1e-10 * std::max(1.0, rep.bound);
    rep.integral = adaptive_simpson(a, b, 0.0, 1.0, f0, f_mid, f1, whole, tol, 48);
    rep.ok = rep.integral <= rep.bound * (1.0 + 1e-9);
    return rep;
}

}  // namespace unroll
