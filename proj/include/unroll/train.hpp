#ifndef UNROLL_TRAIN_HPP
#define UNROLL_TRAIN_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "unroll/model.hpp"

namespace unroll {

enum class LossKind { Mse, L2 };

struct TrainConfig {
    double learning_rate = 1e-2;
    std::size_t epochs = 10;
    std::size_t batch_size = 128;
    bool train_tau = false;
    bool train_lambda = false;
    double ortho_weight = 0.0;
    std::uint64_t seed = 0;
};

/// Mirrors Params exactly: one block per space plus per-layer tau/lambda.
struct Gradients {
    std::vector<Matrix> weights;
    std::vector<double> tau;
    std::vector<double> lambda;
};

Gradients zero_gradients(const Architecture& arch);

/// (1/m) sum_i |h_i - x_i|_2  (unsquared; the loss the bounds speak about).
double l2_loss(const Matrix& h, const Matrix& x);
/// (1/m) sum_i |h_i - x_i|_2^2  (the training objective).
double mse_loss(const Matrix& h, const Matrix& x);

/// |I - Phi^T Phi|_{2->2} for square Phi.
double ortho_penalty(const Matrix& phi);
/// Subgradient of the penalty through the dominant singular pair; zero when
/// the penalty is zero.
Matrix ortho_penalty_grad(const Matrix& phi);

/// Exact reverse-mode gradients of the batch loss through the unrolled
/// network. Soft-threshold uses the indicator 1{|u| > tau*lambda} (0 at the
/// kink); the threshold path uses dS/d(tau*lambda) = -sign(u) on the active
/// set; the output clip uses the exact radial-projection Jacobian. Blocks
/// shared between layers accumulate every layer's contribution.
Gradients backward(const Architecture& arch, const Params& params, const Matrix& x, const Matrix& y,
                   LossKind loss, const ForwardTrace& trace);

struct AdamState {
    std::vector<Matrix> m_w, v_w;
    std::vector<double> m_tau, v_tau, m_lambda, v_lambda;
    std::uint64_t step = 0;
};

AdamState make_adam_state(const Architecture& arch);

/// Standard Adam (beta1=0.9, beta2=0.999, eps=1e-8) with bias correction.
/// Leaves switched off in the config are left untouched.
void adam_step(AdamState& state, Params& params, const Gradients& grads, const TrainConfig& config);

/// Clamp tau/lambda into their boxes and rescale any weight block whose
/// space norm exceeds w_inf. Idempotent.
Params project_params(const Params& params, const Architecture& arch, const HypothesisClassSpec& spec);

/// Fresh random start: Gaussian blocks rescaled so tau*|B|^2 stays below 1
/// at the initial point, tau = tau0, lambda = lambda0.
Params init_params(const Architecture& arch, const HypothesisClassSpec& spec, SeededRng& rng);

struct EpochRecord {
    std::size_t epoch = 0;  // 0 = before any update
    double train_mse = 0.0;
    double train_l2 = 0.0;
    double test_mse = 0.0;
    double test_l2 = 0.0;
};

struct TrainResult {
    Params params;
    std::vector<EpochRecord> history;
};

struct TrainData {
    Matrix x_train, y_train;
    Matrix x_test, y_test;
};

/// Minibatch Adam on mse + ortho_weight * ortho_penalty, projecting onto the
/// class after every step. Fully deterministic given config.seed. Uses the
/// full batch when the training set has at most 512 columns.
TrainResult train(const Architecture& arch, const HypothesisClassSpec& spec, const TrainData& data,
                  const TrainConfig& config);

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst;     // leaf and coordinate of the worst deviation
    std::size_t checked = 0;
};

/// Compares backward() against central finite differences on every leaf
/// coordinate of a randomly drawn, kink-avoiding instance.
GradCheckReport grad_check(const Architecture& arch, const HypothesisClassSpec& spec,
                           std::uint64_t seed, double tolerance);

}  // namespace unroll

#endif
