#ifndef UNROLL_BOUNDS_HPP
#define UNROLL_BOUNDS_HPP

#include <optional>
#include <string>
#include <vector>

#include "unroll/model.hpp"

namespace unroll {

enum class AlphaMode { AnalyticClassBound, PointwiseLowerBound };

std::string to_string(AlphaMode mode);

/// The class-level constants entering the generalization bound.
struct ClassConstants {
    double b_inf = 0.0;
    double w_inf = 0.0;
    double tau_inf = 0.0;
    double lambda_inf = 0.0;
    std::vector<double> d_l;  // per layer position 1..L+1
    double d_inf = 0.0;
    double alpha = 0.0;
    AlphaMode alpha_mode = AlphaMode::AnalyticClassBound;
    std::optional<double> alpha_pointwise;  // max_l |I - tau_l B_l^T B_l| at given params
    std::optional<double> b_pointwise;      // max_{l<=L+1} |B_l| at given params
};

/// Analytic constants for the declared map kinds; when params are supplied
/// the pointwise contraction factor and operator norms are reported as well.
ClassConstants class_constants(const Architecture& arch, const HypothesisClassSpec& spec,
                               const Params* params = nullptr);

/// Z_0..Z_L with Z_l = tau_inf * b_inf * sum_{k=1..l} alpha^k (running sum;
/// the geometric closed forms agree with it and are exercised in tests).
std::vector<double> z_sequence(double alpha, double tau_inf, double b_inf, std::size_t depth);

struct NetworkLipschitz {
    double k_l = 0.0;  // weight-direction constant
    double m_l = 0.0;  // stepsize-direction constant
    double o_l = 0.0;  // threshold-direction constant
    double q_l = 0.0;  // full-decoder weight constant (B K_L + |Y| Z_L) D_inf
};

/// K_L, M_L, O_L via the forward recurrence X <- alpha X + increment, and
/// Q_L assembled from them.
NetworkLipschitz klmoq(const ClassConstants& c, std::size_t depth, double y_fro, std::size_t m,
                       std::size_t n_inf);

/// Rademacher complexity term: 2 sqrt(2) b_out [ sqrt(K/m) Psi(16 W Q_L /
/// (sqrt(m) b_out)) + sqrt(L/m) Psi(8 r2 O_L / (sqrt(m) b_out)) + sqrt(L/m)
/// Psi(8 r1 M_L / (sqrt(m) b_out)) ].
double rademacher_bound(std::size_t k_total, std::size_t depth, std::size_t m, double w_inf,
                        double b_out, double r1, double r2, const NetworkLipschitz& lip);

/// lemp + 2 sqrt(2) rad + 4 (b_in + b_out) sqrt(2 log(4/delta) / m).
double generalization_bound(double lemp, double rad, double b_in, double b_out, double delta,
                            std::size_t m);

/// Closed-form Rademacher term under tau_inf * B_inf^2 <= 1; throws
/// PreconditionViolated otherwise.
double corollary_bound(std::size_t k_total, std::size_t depth, std::size_t m, std::size_t n_inf,
                       const ClassConstants& c, double b_in, double b_out, double r1, double r2);

/// Every intermediate constant plus the assembled bounds; serializes to a
/// flat JSON object with snake_case keys.
struct BoundReport {
    std::vector<double> z;
    double k_l = 0.0, m_l = 0.0, o_l = 0.0, q_l = 0.0;
    double rad_bound = 0.0;
    double full_bound = 0.0;
    std::optional<double> corollary_bound;
    double alpha = 0.0;
    std::string alpha_mode;
    std::optional<double> alpha_pointwise;
    double b_inf = 0.0, w_inf = 0.0, d_inf = 0.0, tau_inf = 0.0, lambda_inf = 0.0;
    std::size_t m = 0, n_inf = 0, k_total = 0, depth = 0;
    double y_fro = 0.0, b_in = 0.0, b_out = 0.0, delta = 0.0, r1 = 0.0, r2 = 0.0, lemp = 0.0;
};

std::string bound_report_to_json(const BoundReport& report);

/// n_inf = max_{l in [L]} n_l from the declared widths.
std::size_t n_inf_of(const Architecture& arch);

BoundReport compute_bound_report(const Architecture& arch, const HypothesisClassSpec& spec,
                                 double y_fro, std::size_t m, double lemp,
                                 const Params* params = nullptr);

struct AuditReport {
    std::size_t checks = 0;
    std::size_t violations = 0;
    double max_ratio = 0.0;  // worst LHS/RHS over checks with RHS > 0
};

/// Checks, for every l, the per-layer product bound on |f^l(Y)|_F with
/// materialized maps, and the coarse geometric bound |Y|_F Z^_l built from
/// the pointwise contraction factor. `inflate` scales the LHS (test hook).
AuditReport verify_output_bound(const Architecture& arch, const Params& params, const Matrix& y,
                                double inflate = 1.0);

/// Checks |f^L_{P1}(Y) - f^L_{P2}(Y)|_F against K_L max_l |B_l(w1)-B_l(w2)| +
/// M_L |tau1-tau2|_inf + O_L |lambda1-lambda2|_inf with constants built from
/// pairwise suprema, and the full-decoder version with the final transform.
AuditReport verify_perturbation_bound(const Architecture& arch, const Params& p1, const Params& p2,
                                      const Matrix& y, double inflate = 1.0);

struct PsiIntegralReport {
    double integral = 0.0;
    double bound = 0.0;
    bool ok = false;
};

/// Adaptive quadrature of int_0^a sqrt(log(1 + b/t)) dt against a*Psi(b/a).
PsiIntegralReport psi_integral_check(double a, double b);

}  // namespace unroll

#endif
