#ifndef UNROLL_MODEL_HPP
#define UNROLL_MODEL_HPP

#include <cstddef>
#include <optional>
#include <vector>

#include "unroll/matrix.hpp"

namespace unroll {

enum class MapType { DenseDict, ConvDict };
enum class SpaceNorm { Spectral, Euclidean };
enum class PoolKind { Identity, FixedLinear };

/// One parameter space: how a weight block parameterizes the per-layer linear
/// maps. DenseDict holds a matrix Phi; interior layers use A*Phi and the
/// final transform uses Phi itself. ConvDict holds a length-k kernel w whose
/// zero-padded circular convolution operator T(w) plays the role of Phi.
struct ParamSpace {
    MapType type = MapType::DenseDict;
    Matrix measurement;  // A; n x weight_rows (dense) or n x signal_len (conv)
    std::size_t weight_rows = 0;
    std::size_t weight_cols = 0;
    std::size_t kernel_len = 0;  // conv only
    std::size_t signal_len = 0;  // conv only
    SpaceNorm norm = SpaceNorm::Spectral;

    std::size_t weight_count() const {
        return type == MapType::ConvDict ? kernel_len : weight_rows * weight_cols;
    }
};

/// Assignment of layer positions 1..L+1 (including the final transform) to
/// parameter spaces 1..J. Stored zero-based.
struct SharingSchedule {
    std::size_t space_count = 0;
    std::vector<std::size_t> assignment;  // size L+1; assignment[l-1] = space of layer l
};

struct Pooling {
    PoolKind kind = PoolKind::Identity;
    Matrix map;  // FixedLinear only; spectral norm <= 1
};

struct Architecture {
    std::size_t depth = 0;                // L
    std::vector<std::size_t> widths;      // n_0..n_{L+1}, size L+2
    SharingSchedule schedule;
    std::vector<ParamSpace> spaces;
    std::vector<Pooling> pooling;         // size L
    double b_out = 1.0;

    std::size_t space_of(std::size_t layer) const { return schedule.assignment[layer - 1]; }
    std::size_t measurement_dim() const { return spaces.front().measurement.rows; }
    /// Total weight dimension K = k_1 + ... + k_J.
    std::size_t weight_dim_total() const;

    /// Checks schedule coverage, width/shape consistency and pooling
    /// contractivity; throws DimensionMismatch or PreconditionViolated.
    void validate() const;
};

struct Params {
    std::vector<Matrix> weights;  // one block per space; kernels are k x 1
    std::vector<double> tau;      // size L, positive
    std::vector<double> lambda;   // size L, positive
};

/// Bounded parameter class: weight norm cap, stepsize/threshold boxes,
/// input/output radii and confidence level. This is what the bound
/// calculator consumes.
struct HypothesisClassSpec {
    double w_inf = 1.0;
    std::vector<double> tau0;     // size L
    double r1 = 0.0;
    std::vector<double> lambda0;  // size L
    double r2 = 0.0;
    double b_in = 1.0;
    double b_out = 1.0;
    double delta = 0.05;
    bool enforce_tau_b2_le_1 = false;

    void validate() const;  // boxes must stay positive, delta in (0,1)
};

/// Materialized per-layer matrix B_l: A*Phi (dense interior), Phi (dense
/// final), A*T(w) (conv interior), T(w) (conv final). l in [1, L+1].
Matrix materialize_B(const Architecture& arch, const Params& params, std::size_t l);

/// Implicit application of B_l / B_l^T to a block of columns; never builds
/// T(w) or A*Phi explicitly.
Matrix apply_B(const Architecture& arch, const Params& params, std::size_t l, const Matrix& z);
Matrix apply_Bt(const Architecture& arch, const Params& params, std::size_t l, const Matrix& z);

/// The circular convolution operator T(w) as an explicit signal_len-square
/// matrix (column j = w circularly shifted by j).
Matrix conv_operator(const std::vector<double>& kernel, std::size_t signal_len);

/// One layer: P_l S_{tau_l lambda_l}[(I - tau_l B_l^T B_l) z + tau_l B_l^T y].
std::vector<double> layer_forward(const Architecture& arch, const Params& params, std::size_t l,
                                  const std::vector<double>& z, const std::vector<double>& y);

/// Everything the backward pass and the bound verifiers need from a forward
/// evaluation.
struct ForwardTrace {
    std::vector<Matrix> layer_out;  // f^1..f^L (post pooling)
    std::vector<Matrix> preact;     // pre-threshold inputs U_1..U_L
    std::vector<Matrix> residual;   // R_l = Y - B_l f^{l-1}
    Matrix final_pre;               // B_{L+1} f^L
    Matrix output;                  // sigma(final_pre), columns clipped to b_out
};

ForwardTrace forward(const Architecture& arch, const Params& params, const Matrix& y);

/// Classical shared-weight iteration z <- S_{tau*lambda}[z + tau (A Phi)^T (y - A Phi z)]
/// from z = 0, run for `iters` steps.
std::vector<double> ista_reference(const Matrix& a, const Matrix& phi, double tau, double lambda,
                                   const std::vector<double>& y, std::size_t iters);

/// 0.5*|A Phi z - y|_2^2 + lambda*|z|_1.
double l1_objective(const std::vector<double>& z, const Matrix& a, const Matrix& phi,
                    const std::vector<double>& y, double lambda);

/// max_j |w^(j)| in each space's norm (spectral for matrices, Euclidean for
/// kernels).
double param_class_norm(const Params& params, const Architecture& arch);

double space_norm(const Matrix& weight, const ParamSpace& space);

}  // namespace unroll

#endif
