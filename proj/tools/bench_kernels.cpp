// Times the OpenMP kernels against the serial reference and checks that the
// two produce bit-identical results.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "unroll/matrix.hpp"
#include "unroll/scalar_ops.hpp"

using namespace unroll;

namespace {

double seconds(const std::function<void()>& body, int reps) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) body();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() /
           static_cast<double>(reps);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        d = std::max(d, std::abs(a.data[i] - b.data[i]));
    return d;
}

void bench_case(const char* name, std::size_t rows, std::size_t inner, std::size_t cols, int reps) {
    SeededRng rng(7);
    const Matrix a = random_gaussian_matrix(rng, rows, inner);
    const Matrix b = random_gaussian_matrix(rng, inner, cols);
    const Matrix at = random_gaussian_matrix(rng, inner, rows);

    Matrix c_par, c_ser;
    const double t_par = seconds([&] { c_par = matmul(a, b); }, reps);
    const double t_ser = seconds([&] { c_ser = serial::matmul(a, b); }, reps);
    const double gflop = 2.0 * static_cast<double>(rows * inner * cols) * 1e-9;
    std::printf("%-14s %4zux%-4zux%-4zu  omp %7.2f ms (%5.2f gflop/s)  serial %7.2f ms  speedup %4.2fx  maxdiff %g\n",
                name, rows, inner, cols, 1e3 * t_par, gflop / t_par, 1e3 * t_ser, t_ser / t_par,
                max_abs_diff(c_par, c_ser));

    Matrix g_par, g_ser;
    const double tt_par = seconds([&] { g_par = matmul_tn(at, b); }, reps);
    const double tt_ser = seconds([&] { g_ser = serial::matmul_tn(at, b); }, reps);
    std::printf("%-14s %4zux%-4zux%-4zu  omp %7.2f ms (%5.2f gflop/s)  serial %7.2f ms  speedup %4.2fx  maxdiff %g\n",
                "  (transposed)", rows, inner, cols, 1e3 * tt_par, gflop / tt_par, 1e3 * tt_ser,
                tt_ser / tt_par, max_abs_diff(g_par, g_ser));
}

}  // namespace

int main(int argc, char** argv) {
    const bool quick = argc > 1 && std::string(argv[1]) == "--quick";
    std::printf("threads: %d\n", omp_get_max_threads());

    bench_case("matmul", 64, 64, 128, quick ? 5 : 50);
    if (!quick) {
        bench_case("matmul", 256, 256, 256, 10);
        bench_case("matmul", 512, 512, 512, 3);
    }

    SeededRng rng(11);
    const Matrix m = random_gaussian_matrix(rng, 512, quick ? 64 : 512);
    Matrix s_par, s_ser;
    const double t_par = seconds([&] { s_par = soft_threshold_map(m, 0.25); }, quick ? 20 : 200);
    const double t_ser = seconds([&] { s_ser = serial::soft_threshold_map(m, 0.25); }, quick ? 20 : 200);
    std::printf("%-14s %4zux%-9zu  omp %7.3f ms                  serial %7.3f ms  speedup %4.2fx  maxdiff %g\n",
                "threshold", m.rows, m.cols, 1e3 * t_par, 1e3 * t_ser, t_ser / t_par,
                max_abs_diff(s_par, s_ser));
    return 0;
}
