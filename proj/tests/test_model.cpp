#include <cmath>

#include "doctest.h"
#include "test_helpers.hpp"
#include "unroll/errors.hpp"
#include "unroll/model.hpp"
#include "unroll/scalar_ops.hpp"

using namespace unroll;
using namespace testkit;

TEST_CASE("materialize_B dense identity") {
    const Matrix eye = Matrix::identity(2);
    const Architecture arch = dense_arch(eye, 2, 1);
    const Params p = shared_params(arch, eye, 1.0, 0.5);
    CHECK(materialize_B(arch, p, 1) == Matrix::identity(2));
    CHECK(materialize_B(arch, p, 2) == Matrix::identity(2));  // final transform is Phi itself
}

TEST_CASE("conv operator: delta and shift kernels") {
    const std::size_t n = 4;
    const Matrix eye = Matrix::identity(n);
    Architecture arch = conv_arch(eye, n, 2, 1);

    Params delta;
    delta.weights.push_back(Matrix(2, 1));
    delta.weights[0](0, 0) = 1.0;  // w = (1, 0)
    delta.tau = {1.0};
    delta.lambda = {0.1};
    CHECK(materialize_B(arch, delta, 1) == eye);

    Params shift = delta;
    shift.weights[0](0, 0) = 0.0;
    shift.weights[0](1, 0) = 1.0;  // w = e_2: circular shift by one
    const Matrix t = materialize_B(arch, shift, 1);

    // Brute-force oracle: apply T(w) to every standard basis vector.
    for (std::size_t j = 0; j < n; ++j) {
        Matrix basis(n, 1);
        basis(j, 0) = 1.0;
        const Matrix out = apply_B(arch, shift, 1, basis);
        for (std::size_t i = 0; i < n; ++i) {
            const double expected = (i == (j + 1) % n) ? 1.0 : 0.0;
            CHECK(out(i, 0) == doctest::Approx(expected));
            CHECK(t(i, j) == doctest::Approx(expected));
        }
    }
}

TEST_CASE("layer_forward scalar hand computation") {
    const Matrix one = Matrix::identity(1);
    const Architecture arch = dense_arch(one, 1, 1);
    const Params p = shared_params(arch, one, 1.0, 0.5);
    const std::vector<double> out = layer_forward(arch, p, 1, {0.0}, {2.0});
    CHECK(out[0] == doctest::Approx(1.5));
    const std::vector<double> zero = layer_forward(arch, p, 1, {0.0}, {0.0});
    CHECK(zero[0] == 0.0);
    CHECK_THROWS_AS(layer_forward(arch, p, 1, {0.0, 0.0}, {2.0}), DimensionMismatch);
}

TEST_CASE("layer_forward agrees with the materialized-matrix evaluation") {
    SeededRng rng(404);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t n = 3, big_n = 5, depth = 2;
        const Matrix a = random_gaussian_matrix(rng, n, big_n);
        Architecture arch = rep % 2 == 0 ? dense_arch(a, big_n, depth)
                                         : conv_arch(a, big_n, 3, depth);
        Params p;
        for (const ParamSpace& sp : arch.spaces)
            p.weights.push_back(sp.type == MapType::ConvDict
                                    ? random_gaussian_matrix(rng, sp.kernel_len, 1)
                                    : random_gaussian_matrix(rng, sp.weight_rows, sp.weight_cols));
        p.tau = {0.4, 0.7};
        p.lambda = {0.05, 0.1};

        std::vector<double> z(big_n), y(n);
        for (double& v : z) v = rng.next_gaussian();
        for (double& v : y) v = rng.next_gaussian();

        for (std::size_t l = 1; l <= depth; ++l) {
            const std::vector<double> fast = layer_forward(arch, p, l, z, y);

            const Matrix b = materialize_B(arch, p, l);
            Matrix zc(big_n, 1), yc(n, 1);
            zc.data = z;
            yc.data = y;
            Matrix u = zc;
            add_scaled_inplace(u, matmul_tn(b, sub(yc, matmul(b, zc))), p.tau[l - 1]);
            const Matrix s = soft_threshold_map(u, p.tau[l - 1] * p.lambda[l - 1]);
            for (std::size_t i = 0; i < big_n; ++i)
                CHECK(std::abs(fast[i] - s(i, 0)) <= 1e-12);
        }
    }
}

TEST_CASE("forward scalar case and zero input") {
    const Matrix one = Matrix::identity(1);
    const Architecture arch = dense_arch(one, 1, 1, 10.0);
    const Params p = shared_params(arch, one, 1.0, 0.5);
    Matrix y(1, 1);
    y(0, 0) = 2.0;
    const ForwardTrace tr = forward(arch, p, y);
    CHECK(tr.output(0, 0) == doctest::Approx(1.5));

    const ForwardTrace zero = forward(arch, p, Matrix(1, 3));
    CHECK(frobenius_norm(zero.output) == 0.0);
}

TEST_CASE("shared-weight forward equals the reference ISTA loop") {
    SeededRng rng(2024);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t n = 4, big_n = 8, depth = 6;
        const Matrix a = scale(random_gaussian_matrix(rng, n, big_n), 0.3);
        const Matrix phi = random_orthogonal(rng, big_n);
        const double tau = 0.9, lambda = 0.08;

        const Architecture arch = dense_arch(a, big_n, depth, 50.0);
        const Params p = shared_params(arch, phi, tau, lambda);
        Matrix y(n, 1);
        for (double& v : y.data) v = rng.next_gaussian();

        const ForwardTrace tr = forward(arch, p, y);
        const std::vector<double> z = ista_reference(a, phi, tau, lambda, get_col(y, 0), depth);
        Matrix zc(big_n, 1);
        zc.data = z;
        const Matrix expected = clip_cols_to_ball(matmul(phi, zc), arch.b_out);
        CHECK(frobenius_norm(sub(tr.layer_out[depth - 1], zc)) <= 1e-12);
        CHECK(frobenius_norm(sub(tr.output, expected)) <= 1e-12);
    }
}

TEST_CASE("ista_reference basics") {
    const Matrix one = Matrix::identity(1);
    CHECK(ista_reference(one, one, 1.0, 0.5, {2.0}, 0)[0] == 0.0);
    CHECK(ista_reference(one, one, 1.0, 0.5, {2.0}, 1)[0] == doctest::Approx(1.5));
}

TEST_CASE("ista objective is monotone under the stepsize condition") {
    SeededRng rng(88);
    const std::size_t n = 6, big_n = 8;
    const Matrix a = random_gaussian_matrix(rng, n, big_n);
    const Matrix phi = random_orthogonal(rng, big_n);
    const Matrix m = matmul(a, phi);
    const double tau = 0.9 / (spectral_norm(m) * spectral_norm(m));
    const double lambda = 0.1;
    std::vector<double> y(n);
    for (double& v : y) v = rng.next_gaussian();

    double prev = l1_objective(std::vector<double>(big_n, 0.0), a, phi, y, lambda);
    for (std::size_t it = 1; it <= 500; ++it) {
        const std::vector<double> z = ista_reference(a, phi, tau, lambda, y, it);
        const double obj = l1_objective(z, a, phi, y, lambda);
        CHECK(obj <= prev + 1e-12);
        prev = obj;
    }
}

TEST_CASE("l1 objective basics and coordinate-descent optimum") {
    const Matrix one = Matrix::identity(1);
    CHECK(l1_objective({0.0}, one, one, {3.0}, 0.1) == doctest::Approx(4.5));
    CHECK(l1_objective({0.0}, one, one, {0.0}, 0.1) == 0.0);

    SeededRng rng(17);
    for (int rep = 0; rep < 3; ++rep) {
        const std::size_t n = 6, big_n = 10;
        const Matrix a = normalize_measurement(random_gaussian_matrix(rng, n, big_n));
        const Matrix phi = random_orthogonal(rng, big_n);
        std::vector<double> y(n);
        for (double& v : y) v = rng.next_gaussian();
        const double lambda = 0.05;

        const std::vector<double> z_ista = ista_reference(a, phi, 1.0, lambda, y, 5000);
        const std::vector<double> z_cd = coordinate_descent_lasso(matmul(a, phi), y, lambda);
        const double f_ista = l1_objective(z_ista, a, phi, y, lambda);
        const double f_cd = l1_objective(z_cd, a, phi, y, lambda);
        CHECK(f_ista <= f_cd + 1e-6);
        CHECK(f_cd <= f_ista + 1e-6);
    }
}

TEST_CASE("param class norm") {
    SeededRng rng(3);
    const Matrix a = random_gaussian_matrix(rng, 3, 5);
    const Matrix phi = random_orthogonal(rng, 5);
    Architecture arch = dense_arch(a, 5, 2);
    const Params p = shared_params(arch, phi, 1.0, 0.1);
    CHECK(param_class_norm(p, arch) == doctest::Approx(1.0).epsilon(1e-8));

    Architecture two = alternating_arch(a, 5, 2);
    Params q = shared_params(two, phi, 1.0, 0.1);
    q.weights[0] = scale(phi, 0.5);
    q.weights[1] = scale(phi, 2.0);
    CHECK(param_class_norm(q, two) == doctest::Approx(2.0).epsilon(1e-8));

    const double base = param_class_norm(q, two);
    for (Matrix& w : q.weights) w = scale(w, 3.0);
    CHECK(param_class_norm(q, two) == doctest::Approx(3.0 * base).epsilon(1e-8));
}

TEST_CASE("weight-sharing locality") {
    SeededRng rng(55);
    const std::size_t n = 3, big_n = 6, depth = 4;
    const Matrix a = random_gaussian_matrix(rng, n, big_n);
    const Architecture arch = alternating_arch(a, big_n, depth);
    Params p;
    p.weights = {random_gaussian_matrix(rng, big_n, big_n), random_gaussian_matrix(rng, big_n, big_n)};
    p.tau.assign(depth, 0.5);
    p.lambda.assign(depth, 0.05);

    std::vector<double> z(big_n), y(n);
    for (double& v : z) v = rng.next_gaussian();
    for (double& v : y) v = rng.next_gaussian();

    Params bumped = p;
    bumped.weights[1](2, 3) += 0.25;  // space 2 feeds the even layers only

    for (std::size_t l = 1; l <= depth; ++l) {
        const std::vector<double> base = layer_forward(arch, p, l, z, y);
        const std::vector<double> after = layer_forward(arch, bumped, l, z, y);
        double diff = 0.0;
        for (std::size_t i = 0; i < big_n; ++i) diff += std::abs(base[i] - after[i]);
        if (l % 2 == 0)
            CHECK(diff > 0.0);
        else
            CHECK(diff == 0.0);
    }
}

TEST_CASE("decoder output never leaves the ball") {
    SeededRng rng(91);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 3, big_n = 5, depth = 3;
        const Matrix a = random_gaussian_matrix(rng, n, big_n);
        Architecture arch = dense_arch(a, big_n, depth, 0.7);
        Params p = shared_params(arch, scale(random_gaussian_matrix(rng, big_n, big_n), 1.5), 0.8, 0.02);
        const Matrix y = random_gaussian_matrix(rng, n, 4);
        const ForwardTrace tr = forward(arch, p, y);
        for (std::size_t j = 0; j < tr.output.cols; ++j)
            CHECK(col_norm2(tr.output, j) <= 0.7 + 1e-12);
    }
}

TEST_CASE("architecture validation rejects inconsistent shapes") {
    SeededRng rng(1);
    const Matrix a = random_gaussian_matrix(rng, 3, 5);
    Architecture arch = dense_arch(a, 5, 2);
    CHECK_NOTHROW(arch.validate());

    Architecture bad_width = arch;
    bad_width.widths[1] = 4;
    CHECK_THROWS_AS(bad_width.validate(), DimensionMismatch);

    Architecture bad_pool = arch;
    Matrix p = Matrix::identity(5);
    p(0, 0) = 2.0;
    bad_pool.pooling[0] = {PoolKind::FixedLinear, p};
    CHECK_THROWS_AS(bad_pool.validate(), PreconditionViolated);

    Architecture unused_space = arch;
    unused_space.spaces.push_back(unused_space.spaces[0]);
    unused_space.schedule.space_count = 2;
    CHECK_THROWS_AS(unused_space.validate(), DimensionMismatch);
}
