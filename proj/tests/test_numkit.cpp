#include <cmath>

#include "doctest.h"
#include "unroll/errors.hpp"
#include "unroll/matrix.hpp"
#include "unroll/rng.hpp"
#include "unroll/scalar_ops.hpp"

using namespace unroll;

namespace {

Matrix from_rows(std::size_t rows, std::size_t cols, std::initializer_list<double> vals) {
    Matrix m(rows, cols);
    std::size_t i = 0;
    for (double v : vals) m.data[i++] = v;
    return m;
}

// Closed-form largest singular value of a 2x2 matrix.
double sigma_max_2x2(const Matrix& m) {
    const double g00 = m(0, 0) * m(0, 0) + m(1, 0) * m(1, 0);
    const double g11 = m(0, 1) * m(0, 1) + m(1, 1) * m(1, 1);
    const double g01 = m(0, 0) * m(0, 1) + m(1, 0) * m(1, 1);
    const double t = g00 + g11;
    const double d = g00 * g11 - g01 * g01;
    return std::sqrt(0.5 * (t + std::sqrt(std::max(0.0, t * t - 4.0 * d))));
}

}  // namespace

TEST_CASE("soft threshold closed form") {
    CHECK(soft_threshold(2.0, 1.5) == doctest::Approx(0.5));
    CHECK(soft_threshold(0.0, 0.7) == 0.0);
    CHECK(soft_threshold(-0.3, 0.5) == 0.0);
    CHECK(soft_threshold(-2.0, 0.5) == doctest::Approx(-1.5));
}

TEST_CASE("soft threshold is 1-Lipschitz and threshold-Lipschitz") {
    SeededRng rng(101);
    for (int i = 0; i < 2000; ++i) {
        const double x = 4.0 * rng.next_gaussian();
        const double y = 4.0 * rng.next_gaussian();
        const double theta = 2.0 * rng.next_uniform();
        CHECK(std::abs(soft_threshold(x, theta) - soft_threshold(y, theta)) <=
              std::abs(x - y) + 1e-15);

        const double tau1 = 0.05 + rng.next_uniform(), tau2 = 0.05 + rng.next_uniform();
        const double l1 = 0.05 + rng.next_uniform(), l2 = 0.05 + rng.next_uniform();
        CHECK(std::abs(soft_threshold(x, tau2 * l2) - soft_threshold(x, tau1 * l1)) <=
              std::abs(tau2 * l2 - tau1 * l1) + 1e-12 * (1.0 + std::abs(x)));
    }
}

TEST_CASE("soft threshold map") {
    const Matrix zero(3, 4);
    CHECK(soft_threshold_map(zero, 0.9) == zero);
    const Matrix one = from_rows(1, 1, {2.0});
    CHECK(soft_threshold_map(one, 1.5)(0, 0) == doctest::Approx(0.5));

    SeededRng rng(7);
    for (int i = 0; i < 100; ++i) {
        const Matrix m = random_gaussian_matrix(rng, 5, 6);
        const double theta = rng.next_uniform();
        CHECK(frobenius_norm(soft_threshold_map(m, theta)) <= frobenius_norm(m) + 1e-15);
        CHECK(soft_threshold_map(m, theta) == serial::soft_threshold_map(m, theta));
    }
}

TEST_CASE("clip to ball") {
    const std::vector<double> small = {0.3, 0.4};
    CHECK(clip_to_ball(small, 1.0) == small);
    const std::vector<double> v = clip_to_ball({3.0, 4.0}, 1.0);
    CHECK(v[0] == doctest::Approx(0.6));
    CHECK(v[1] == doctest::Approx(0.8));

    SeededRng rng(13);
    for (int i = 0; i < 500; ++i) {
        std::vector<double> a(4), b(4);
        for (int k = 0; k < 4; ++k) {
            a[k] = 2.0 * rng.next_gaussian();
            b[k] = 2.0 * rng.next_gaussian();
        }
        const double radius = 0.5 + 2.0 * rng.next_uniform();
        const std::vector<double> ca = clip_to_ball(a, radius), cb = clip_to_ball(b, radius);
        double d_clip = 0.0, d_raw = 0.0, n_clip = 0.0, n_raw = 0.0;
        for (int k = 0; k < 4; ++k) {
            d_clip += (ca[k] - cb[k]) * (ca[k] - cb[k]);
            d_raw += (a[k] - b[k]) * (a[k] - b[k]);
            n_clip += ca[k] * ca[k];
            n_raw += a[k] * a[k];
        }
        CHECK(std::sqrt(d_clip) <= std::sqrt(d_raw) + 1e-12);
        CHECK(std::sqrt(n_clip) <= std::min(std::sqrt(n_raw), radius) + 1e-12);
    }
}

TEST_CASE("psi values and bounds") {
    CHECK(psi(0.0) == 0.0);
    CHECK(psi(1e-301) == 0.0);
    CHECK(psi(1.0) == doctest::Approx(std::sqrt(2.0 * std::log(2.0))).epsilon(1e-12));

    double prev = 0.0;
    for (double e = -6.0; e <= 3.0; e += 0.05) {
        const double t = std::pow(10.0, e);
        const double v = psi(t);
        CHECK(v <= std::sqrt(std::log(std::exp(1.0) * (1.0 + t))) + 1e-15);
        CHECK(v >= prev - 1e-12);  // nondecreasing along the grid
        prev = v;
    }
    CHECK(psi(1e-12) < 2e-5);  // continuity at 0 along the grid
}

TEST_CASE("frobenius norm") {
    CHECK(frobenius_norm(Matrix(3, 2)) == 0.0);
    CHECK(frobenius_norm(from_rows(1, 2, {3.0, 4.0})) == doctest::Approx(5.0));
}

TEST_CASE("spectral norm basics") {
    CHECK(spectral_norm(Matrix::identity(3)) == doctest::Approx(1.0).epsilon(1e-10));
    Matrix diag(3, 3);
    diag(0, 0) = 1.0;
    diag(1, 1) = 2.0;
    diag(2, 2) = 3.0;
    CHECK(spectral_norm(diag) == doctest::Approx(3.0).epsilon(1e-10));
    CHECK(spectral_norm(from_rows(2, 2, {0.0, 1.0, 0.0, 0.0})) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(spectral_norm(Matrix(2, 2)) == 0.0);
    CHECK_THROWS_AS(spectral_norm(Matrix()), DimensionMismatch);
}

TEST_CASE("spectral norm matches the closed form on all small 2x2 grids") {
    for (int a = -2; a <= 2; ++a)
        for (int b = -2; b <= 2; ++b)
            for (int c = -2; c <= 2; ++c)
                for (int d = -2; d <= 2; ++d) {
                    const Matrix m = from_rows(2, 2, {double(a), double(b), double(c), double(d)});
                    CHECK(spectral_norm(m) == doctest::Approx(sigma_max_2x2(m)).epsilon(1e-8));
                }
}

TEST_CASE("frobenius dominates spectral") {
    SeededRng rng(23);
    for (int i = 0; i < 50; ++i) {
        const Matrix m = random_gaussian_matrix(rng, 4, 7);
        CHECK(frobenius_norm(m) >= spectral_norm(m) - 1e-10);
    }
}

TEST_CASE("gaussian sampling is deterministic with healthy moments") {
    SeededRng a(99), b(99);
    CHECK(random_gaussian_matrix(a, 3, 5) == random_gaussian_matrix(b, 3, 5));

    SeededRng rng(5);
    const Matrix big = random_gaussian_matrix(rng, 1, 100000);
    double mean = 0.0;
    for (double x : big.data) mean += x;
    mean /= 1e5;
    double var = 0.0;
    for (double x : big.data) var += (x - mean) * (x - mean);
    var /= 1e5;
    CHECK(mean > -0.02);
    CHECK(mean < 0.02);
    CHECK(var > 0.97);
    CHECK(var < 1.03);
}

TEST_CASE("gaussian 2x2 golden fixture, seed 42") {
    SeededRng rng(42);
    const Matrix m = random_gaussian_matrix(rng, 2, 2);
    // Frozen from the first build of the documented generator.
    CHECK(m(0, 0) == doctest::Approx(0.49295065581737485).epsilon(1e-15));
    CHECK(m(0, 1) == doctest::Approx(-0.69400566721601742).epsilon(1e-15));
    CHECK(m(1, 0) == doctest::Approx(-1.2810773478777024).epsilon(1e-15));
    CHECK(m(1, 1) == doctest::Approx(-0.901557193497174).epsilon(1e-15));
}

TEST_CASE("random orthogonal factors") {
    SeededRng rng(3);
    const Matrix one = random_orthogonal(rng, 1);
    CHECK(std::abs(std::abs(one(0, 0)) - 1.0) < 1e-14);

    for (std::size_t n : {2, 5, 16}) {
        const Matrix q = random_orthogonal(rng, n);
        Matrix gram = matmul_tn(q, q);
        add_scaled_inplace(gram, Matrix::identity(n), -1.0);
        CHECK(frobenius_norm(gram) <= 1e-10);
        CHECK(spectral_norm(q) == doctest::Approx(1.0).epsilon(1e-8));
    }
}

TEST_CASE("parallel kernels match the serial reference bit for bit") {
    SeededRng rng(31);
    const std::size_t shapes[4][3] = {{1, 1, 1}, {3, 5, 2}, {17, 9, 23}, {32, 64, 16}};
    for (const auto& s : shapes) {
        const Matrix a = random_gaussian_matrix(rng, s[0], s[1]);
        const Matrix b = random_gaussian_matrix(rng, s[1], s[2]);
        CHECK(matmul(a, b) == serial::matmul(a, b));
        const Matrix at = random_gaussian_matrix(rng, s[1], s[0]);
        CHECK(matmul_tn(at, b) == serial::matmul_tn(at, b));
        const Matrix bt = random_gaussian_matrix(rng, s[2], s[1]);
        CHECK(matmul_nt(a, bt) == serial::matmul_nt(a, bt));
        // and the kernels agree with the composition through transpose
        CHECK(frobenius_norm(sub(matmul_tn(at, b), matmul(transpose(at), b))) <= 1e-12);
    }
    CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), DimensionMismatch);
}

TEST_CASE("uniform integer sampling is exact") {
    SeededRng rng(77);
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 50000; ++i) ++counts[rng.next_below(5)];
    for (int c : counts) {
        CHECK(c > 9500);
        CHECK(c < 10500);
    }
}
