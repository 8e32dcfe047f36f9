#ifndef UNROLL_DATA_IO_HPP
#define UNROLL_DATA_IO_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "unroll/matrix.hpp"

namespace unroll {

enum class DictKind { Orthogonal, GaussianNonOrthogonal };

struct SyntheticSpec {
    std::size_t signal_dim = 0;       // N
    std::size_t measurement_dim = 0;  // n
    std::size_t sparsity = 0;         // s, exact support size
    std::size_t m_train = 0;
    std::size_t m_test = 0;
    DictKind dict_kind = DictKind::Orthogonal;
    std::uint64_t seed = 0;

    void validate() const;
};

/// A = measurement matrix (n x N), X = signals (N x m), Y = A X (n x m).
/// Synthetic sets carry the ground-truth dictionary; columns are ordered
/// train first, then test.
struct Dataset {
    Matrix a;
    Matrix x;
    Matrix y;
    std::optional<Matrix> phi0;
};

/// Rescale so the spectral norm is 0.99 (ISTA-convergent with unit stepsize).
Matrix normalize_measurement(const Matrix& a);

/// Gaussian measurement matrix (normalized), orthogonal or Gaussian ground
/// truth dictionary, uniformly random s-sized supports with standard normal
/// amplitudes. One RNG stream, train columns drawn before test columns.
Dataset gen_synthetic(const SyntheticSpec& spec);

/// max_i |y_i|_2 over the first m_train columns.
double input_radius(const Matrix& y, std::size_t m_train);

struct IdxTensor {
    std::vector<std::size_t> dims;
    std::vector<std::uint8_t> payload;
};

/// IDX format: 0x00 0x00, type code (only 0x08 = unsigned byte supported),
/// dimension count, big-endian 32-bit sizes, raw payload.
IdxTensor load_idx(const std::string& path);
void write_idx(const std::string& path, const IdxTensor& tensor);  // fixture helper

/// Flattens images to [0,1]-scaled columns and applies the measurement map.
Dataset mnist_dataset(const IdxTensor& images, const Matrix& a, std::size_t max_m);

/// One row of the per-trial experiment results table. Column order is fixed
/// and checked on read.
struct ResultRow {
    std::string scenario;
    std::size_t n_signal = 0, n_meas = 0, sparsity = 0, p_dict = 0, kernel_len = 0, depth = 0;
    std::size_t j_spaces = 0, k_total = 0, m_train = 0, m_test = 0;
    std::uint64_t seed = 0;
    std::size_t trial = 0, epochs = 0;
    double lr = 0.0, r1 = 0.0, r2 = 0.0;
    double train_mse = 0.0, test_mse = 0.0, train_l2 = 0.0, test_l2 = 0.0;
    double ge_signed = 0.0, ge_abs = 0.0;
    double alpha = 0.0;
    std::string alpha_mode;
    double b_inf = 0.0, d_inf = 0.0, w_inf = 0.0, y_fro = 0.0;
    double k_l = 0.0, m_l = 0.0, o_l = 0.0, q_l = 0.0;
    double rad_bound = 0.0, bound_thm1 = 0.0, bound_cor1 = 0.0;
    double runtime_s = 0.0;
};

extern const char* const kResultsHeader;

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(const std::string& path);

/// Doubles are serialized with 17 significant digits (lossless round trip).
std::string format_double(double v);

/// Flat binary container: six little-endian 8-byte counts (rows and cols of
/// A, X, Y) followed by the three payloads as little-endian doubles in
/// column-major order.
void write_dataset(const std::string& path, const Dataset& data);
Dataset read_dataset(const std::string& path);

}  // namespace unroll

#endif
