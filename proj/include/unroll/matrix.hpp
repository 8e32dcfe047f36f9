#ifndef UNROLL_MATRIX_HPP
#define UNROLL_MATRIX_HPP

#include <cstddef>
#include <vector>

#include "unroll/rng.hpp"

namespace unroll {

/// Dense row-major matrix of doubles. The only storage type in the project;
/// vectors are n-by-1 matrices or plain std::vector<double> at call sites.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    static Matrix identity(std::size_t n);

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    bool same_shape(const Matrix& other) const { return rows == other.rows && cols == other.cols; }
    bool empty() const { return rows == 0 || cols == 0; }
};

bool operator==(const Matrix& a, const Matrix& b);

// Parallel kernels. Each output element is accumulated by a single thread in
// a fixed order, so results are bit-identical for any thread count and match
// the serial reference exactly.
Matrix matmul(const Matrix& a, const Matrix& b);     // a * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a^T * b
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a * b^T

namespace serial {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
}  // namespace serial

Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double c);
void add_scaled_inplace(Matrix& acc, const Matrix& m, double c);  // acc += c*m

Matrix gather_cols(const Matrix& m, const std::vector<std::size_t>& idx);
Matrix submatrix_cols(const Matrix& m, std::size_t first, std::size_t count);
std::vector<double> get_col(const Matrix& m, std::size_t j);

double frobenius_norm(const Matrix& m);
double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm2(const std::vector<double>& v);
double col_norm2(const Matrix& m, std::size_t j);

/// Largest singular value via power iteration on M^T M. Deterministic start
/// vector (all ones plus 1e-6 * index), stops when the Rayleigh quotient
/// changes by at most 1e-12 (relative), throws NonConvergence after 5000
/// iterations.
double spectral_norm(const Matrix& m);

struct SpectralPair {
    double sigma = 0.0;
    std::vector<double> right_vector;  // unit right singular vector
};
SpectralPair spectral_norm_with_vector(const Matrix& m);

bool all_finite(const Matrix& m);

Matrix random_gaussian_matrix(SeededRng& rng, std::size_t rows, std::size_t cols);

/// Haar-ish random orthogonal matrix: Householder QR of a Gaussian draw with
/// the R diagonal forced positive, so the factor is unique given the seed.
Matrix random_orthogonal(SeededRng& rng, std::size_t n);

}  // namespace unroll

#endif
