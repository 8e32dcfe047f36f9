// Acceptance suite: one self-contained check per release criterion, each
// printing a PASS/FAIL line. Run everything or a single one with
// --criterion N.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "test_helpers.hpp"
#include "unroll/bounds.hpp"
#include "unroll/data_io.hpp"
#include "unroll/experiment.hpp"
#include "unroll/scalar_ops.hpp"
#include "unroll/train.hpp"

using namespace unroll;
using namespace testkit;

namespace {

namespace fs = std::filesystem;

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::string fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

// ---------------------------------------------------------------- criterion 1
Outcome gradient_correctness() {
    const double t0 = now_s();
    VerifyOptions opts;
    opts.grad_configs = 100;
    opts.output_audits = 0;
    opts.perturbation_audits = 0;
    opts.psi_grid = 0;
    opts.seed = 1;
    const VerifySummary s = run_verification(opts);
    const double elapsed = now_s() - t0;

    std::ostringstream d;
    d << "100 configs, max rel err " << s.grad_max_rel_err << ", " << elapsed << " s";
    return {s.grad_violations == 0 && s.grad_max_rel_err < 1e-5 && elapsed < 60.0, d.str()};
}

// ---------------------------------------------------------------- criterion 2
Outcome ista_oracle_equivalence() {
    double worst_forward = 0.0;
    SeededRng rng(2);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t big_n = 6 + rng.next_below(8);
        const std::size_t n = 2 + rng.next_below(big_n - 2);
        const std::size_t depth = 1 + rng.next_below(8);
        const Matrix a = scale(random_gaussian_matrix(rng, n, big_n), 0.4);
        const Matrix phi = random_orthogonal(rng, big_n);
        const double tau = 0.2 + 0.7 * rng.next_uniform();
        const double lambda = 0.02 + 0.2 * rng.next_uniform();

        const Architecture arch = dense_arch(a, big_n, depth, 1e6);
        const Params p = shared_params(arch, phi, tau, lambda);
        const Matrix y = random_gaussian_matrix(rng, n, 1);
        const ForwardTrace tr = forward(arch, p, y);
        const std::vector<double> z = ista_reference(a, phi, tau, lambda, get_col(y, 0), depth);
        Matrix zc(big_n, 1);
        zc.data = z;
        worst_forward = std::max(worst_forward, frobenius_norm(sub(tr.layer_out[depth - 1], zc)));
    }

    double worst_gap = 0.0;
    bool monotone = true;
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t big_n = 8 + rng.next_below(5);  // N <= 12
        const std::size_t n = 4 + rng.next_below(big_n - 4);
        const Matrix a = normalize_measurement(random_gaussian_matrix(rng, n, big_n));
        const Matrix phi = random_orthogonal(rng, big_n);
        const double lambda = 0.03 + 0.1 * rng.next_uniform();
        std::vector<double> y(n);
        for (double& v : y) v = rng.next_gaussian();

        double prev = l1_objective(std::vector<double>(big_n, 0.0), a, phi, y, lambda);
        for (std::size_t it = 1; it <= 500; ++it) {
            const double obj =
                l1_objective(ista_reference(a, phi, 1.0, lambda, y, it), a, phi, y, lambda);
            if (obj > prev + 1e-12) monotone = false;
            prev = obj;
        }
        const double f_ista =
            l1_objective(ista_reference(a, phi, 1.0, lambda, y, 5000), a, phi, y, lambda);
        const double f_cd =
            l1_objective(coordinate_descent_lasso(matmul(a, phi), y, lambda), a, phi, y, lambda);
        worst_gap = std::max(worst_gap, std::abs(f_ista - f_cd));
    }

    std::ostringstream d;
    d << "forward vs ista gap " << worst_forward << ", objective vs cd gap " << worst_gap
      << (monotone ? ", monotone" : ", NOT monotone");
    return {worst_forward <= 1e-12 && worst_gap <= 1e-6 && monotone, d.str()};
}

// ---------------------------------------------------------------- criterion 3
Outcome bound_audits() {
    const double t0 = now_s();
    VerifyOptions opts;
    opts.grad_configs = 0;
    opts.output_audits = 1000;
    opts.perturbation_audits = 1000;
    opts.psi_grid = 0;
    opts.seed = 1;
    const VerifySummary s = run_verification(opts);
    const double elapsed = now_s() - t0;

    std::ostringstream d;
    d << "output " << s.output.violations << "/" << s.output.checks << " violations (max ratio "
      << s.output.max_ratio << "), perturbation " << s.perturbation.violations << "/"
      << s.perturbation.checks << " (max ratio " << s.perturbation.max_ratio << "), " << elapsed
      << " s";
    return {s.output.violations == 0 && s.perturbation.violations == 0 && elapsed < 300.0, d.str()};
}

// ---------------------------------------------------------------- criterion 4
Outcome psi_machinery() {
    bool ok = psi(0.0) == 0.0;
    for (int i = 0; i <= 400 && ok; ++i) {
        const double t = std::pow(10.0, -2.0 + 4.0 * i / 400.0);
        if (psi(t) > std::sqrt(std::log(std::exp(1.0) * (1.0 + t))) + 1e-15) ok = false;
    }
    std::size_t quad_violations = 0;
    for (int i = 0; i < 20; ++i) {
        for (int j = 0; j < 20; ++j) {
            const double a = std::pow(10.0, -2.0 + 4.0 * i / 19.0);
            const double b = std::pow(10.0, -2.0 + 4.0 * j / 19.0);
            if (!psi_integral_check(a, b).ok) ++quad_violations;
        }
    }
    std::ostringstream d;
    d << "psi(0) = " << psi(0.0) << ", envelope holds: " << (ok ? "yes" : "no")
      << ", quadrature violations " << quad_violations << "/400";
    return {ok && quad_violations == 0, d.str()};
}

// ---------------------------------------------------------------- criterion 5
Outcome bound_constants() {
    ClassConstants unit;
    unit.alpha = 1.0;
    unit.tau_inf = 1.0;
    unit.b_inf = 1.0;
    unit.lambda_inf = 1.0;
    unit.d_inf = 1.0;
    const NetworkLipschitz lip = klmoq(unit, 1, 1.0, 1, 1);
    const bool desk = lip.k_l == 1.0 && lip.m_l == 2.0 && lip.o_l == 1.0 && lip.q_l == 2.0;

    bool z_ok = true;
    for (double alpha : {0.25, 0.5, 0.9, 1.0, 1.1, 2.0}) {
        const std::vector<double> z = z_sequence(alpha, 0.3, 1.7, 48);
        for (std::size_t l = 0; l <= 48; ++l) {
            double sum = 0.0, pw = 1.0;
            for (std::size_t k = 1; k <= l; ++k) {
                pw *= alpha;
                sum += pw;
            }
            const double expect = 0.3 * 1.7 * sum;
            if (std::abs(z[l] - expect) > 1e-12 * std::max(1.0, std::abs(expect))) z_ok = false;
            const double closed = alpha == 1.0
                                      ? 0.3 * 1.7 * static_cast<double>(l)
                                      : 0.3 * 1.7 * alpha *
                                            (1.0 - std::pow(alpha, static_cast<double>(l))) /
                                            (1.0 - alpha);
            if (std::abs(z[l] - closed) > 1e-12 * std::max(1.0, std::abs(closed))) z_ok = false;
        }
    }

    bool ineq_ok = true;
    for (double alpha : {0.3, 0.9, 1.0}) {
        for (const auto& [tau, b] :
             std::vector<std::pair<double, double>>{{1.0, 1.0}, {0.5, 1.2}, {0.25, 2.0}}) {
            for (std::size_t depth = 1; depth <= 64; ++depth) {
                for (std::size_t m : {16, 1024}) {
                    const double y_fro = std::sqrt(static_cast<double>(m));
                    ClassConstants c;
                    c.alpha = alpha;
                    c.tau_inf = tau;
                    c.b_inf = b;
                    c.lambda_inf = 0.5;
                    c.d_inf = 1.3;
                    const NetworkLipschitz v = klmoq(c, depth, y_fro, m, 4);
                    const double dl = static_cast<double>(depth);
                    const double rm = std::sqrt(static_cast<double>(m));
                    if (v.k_l > tau * dl * dl * rm * (1.0 + 1e-12)) ineq_ok = false;
                    if (v.q_l > dl * (dl + 1.0) * tau * b * c.d_inf * rm * (1.0 + 1e-12))
                        ineq_ok = false;
                }
            }
        }
    }

    std::ostringstream d;
    d << "desk K/M/O/Q = " << lip.k_l << "/" << lip.m_l << "/" << lip.o_l << "/" << lip.q_l
      << ", Z forms " << (z_ok ? "agree" : "DISAGREE") << ", proof inequalities "
      << (ineq_ok ? "hold" : "VIOLATED");
    return {desk && z_ok && ineq_ok, d.str()};
}

// ---------------------------------------------------------------- criterion 6
ExperimentConfig trend_config(const std::string& out) {
    ExperimentConfig cfg = default_config(Scenario::Orthogonal, false);
    cfg.grid.signal_dim = {40};
    cfg.grid.sparsity = {4};
    cfg.repeats = 10;
    cfg.seed = 1;
    cfg.out_dir = out;
    return cfg;
}

Outcome trend_reproduction() {
    const double t0 = now_s();

    // (a) mean empirical GE vs number of measurements, per depth.
    ExperimentConfig cfg = trend_config(fresh_dir("unroll_acc6a"));
    cfg.grid.meas_dim = {10, 20, 30};
    cfg.grid.depth = {5, 10, 15};
    cfg.grid.m_train = {2000};
    if (cmd_experiment(cfg).exit_code != 0) return {false, "experiment run failed"};

    std::map<std::size_t, std::map<std::size_t, double>> ge;  // depth -> n -> mean
    for (const ResultRow& r : read_results_csv(cfg.out_dir + "/results.csv"))
        ge[r.depth][r.n_meas] += r.ge_abs / static_cast<double>(cfg.repeats);
    bool ge_monotone = true;
    std::ostringstream ge_txt;
    for (const auto& [depth, by_n] : ge) {
        ge_txt << " L=" << depth << ":";
        double prev = 1e300;
        for (const auto& [n, mean] : by_n) {
            ge_txt << " " << mean;
            if (mean > prev) ge_monotone = false;
            prev = mean;
        }
    }

    // (b) Theorem 1 bound vs training-set size at fixed geometry.
    ExperimentConfig cfgb = trend_config(fresh_dir("unroll_acc6b"));
    cfgb.grid.meas_dim = {20};
    cfgb.grid.depth = {10};
    cfgb.grid.m_train = {500, 2000, 8000};
    if (cmd_experiment(cfgb).exit_code != 0) return {false, "experiment run failed"};

    std::map<std::size_t, double> bound;  // m -> mean
    for (const ResultRow& r : read_results_csv(cfgb.out_dir + "/results.csv"))
        bound[r.m_train] += r.bound_thm1 / static_cast<double>(cfgb.repeats);
    bool bound_monotone = true;
    std::ostringstream b_txt;
    double prev = 1e300;
    for (const auto& [m, mean] : bound) {
        b_txt << " m=" << m << ": " << mean;
        if (mean > prev) bound_monotone = false;
        prev = mean;
    }

    const double elapsed = now_s() - t0;
    std::ostringstream d;
    d << "GE means" << ge_txt.str() << (ge_monotone ? " (decreasing in n)" : " (NOT monotone)")
      << "; bound" << b_txt.str() << (bound_monotone ? " (decreasing in m)" : " (NOT monotone)")
      << "; " << elapsed << " s";
    return {ge_monotone && bound_monotone && elapsed < 1800.0, d.str()};
}

// ---------------------------------------------------------------- criterion 7
Outcome training_efficacy() {
    const double t0 = now_s();
    std::vector<double> ratios;
    for (std::uint64_t seed_idx = 0; seed_idx < 10; ++seed_idx) {
        SyntheticSpec sspec;
        sspec.signal_dim = 64;
        sspec.measurement_dim = 32;
        sspec.sparsity = 4;
        sspec.m_train = 2000;
        sspec.m_test = 5000;
        sspec.seed = derive_seed(7, "efficacy", seed_idx, 0);
        const Dataset data = gen_synthetic(sspec);

        TrainData split;
        split.x_train = submatrix_cols(data.x, 0, sspec.m_train);
        split.y_train = submatrix_cols(data.y, 0, sspec.m_train);
        split.x_test = submatrix_cols(data.x, sspec.m_train, sspec.m_test);
        split.y_test = submatrix_cols(data.y, sspec.m_train, sspec.m_test);

        const double b_in = input_radius(data.y, sspec.m_train);
        double x_max = 0.0;
        for (std::size_t j = 0; j < sspec.m_train; ++j)
            x_max = std::max(x_max, col_norm2(data.x, j));

        const ExperimentConfig desk = default_config(Scenario::Orthogonal, false);
        Architecture arch = make_architecture(desk, 64, 16, data.a);
        const HypothesisClassSpec spec = make_class_spec(desk, 16, b_in, x_max);
        arch.b_out = spec.b_out;

        TrainConfig tc = desk.train;
        tc.seed = derive_seed(7, "efficacy_train", seed_idx, 1);
        const TrainResult res = train(arch, spec, split, tc);
        ratios.push_back(res.history.back().test_l2 / res.history.front().test_l2);
    }
    std::sort(ratios.begin(), ratios.end());
    const double median = 0.5 * (ratios[4] + ratios[5]);
    const double elapsed = now_s() - t0;

    std::ostringstream d;
    d << "median trained/initial test l2 ratio " << median << " over 10 seeds, " << elapsed << " s";
    return {median < 0.5 && elapsed < 600.0, d.str()};
}

// ---------------------------------------------------------------- criterion 8
Outcome protocol_fidelity() {
    const ExperimentConfig desk = default_config(Scenario::Orthogonal, false);
    const ExperimentConfig paper = default_config(Scenario::Convolutional, true);
    bool ok = desk.train.learning_rate == 0.01 && desk.train.epochs == 10;
    ok = ok && paper.grid.m_train == std::vector<std::size_t>{10000} && paper.m_test == 50000 &&
         paper.grid.signal_dim == std::vector<std::size_t>{120} && paper.kernel_len == 7;

    const std::string text = config_to_json(desk);
    ok = ok && text.find("\"learning_rate\": 0.01") != std::string::npos &&
         text.find("\"epochs\": 10") != std::string::npos;

    std::ostringstream d;
    d << "lr " << desk.train.learning_rate << ", epochs " << desk.train.epochs << ", paper m_train "
      << paper.grid.m_train[0] << ", m_test " << paper.m_test << ", N " << paper.grid.signal_dim[0]
      << ", kernel " << paper.kernel_len;
    return {ok, d.str()};
}

// ---------------------------------------------------------------- criterion 9
std::string strip_runtime_column(const std::string& csv) {
    std::istringstream in(csv);
    std::ostringstream kept;
    std::string line;
    while (std::getline(in, line)) {
        const std::size_t cut = line.rfind(',');
        kept << line.substr(0, cut) << "\n";
    }
    return kept.str();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

Outcome determinism() {
    ExperimentConfig cfg = default_config(Scenario::Orthogonal, false);
    cfg.grid.signal_dim = {16};
    cfg.grid.meas_dim = {8};
    cfg.grid.sparsity = {2};
    cfg.grid.depth = {4};
    cfg.grid.m_train = {128};
    cfg.m_test = 64;
    cfg.repeats = 3;
    cfg.seed = 99;
    cfg.threads = 2;

    const std::string d1 = fresh_dir("unroll_acc9_run1");
    cfg.out_dir = d1;
    if (cmd_experiment(cfg).exit_code != 0) return {false, "first run failed"};
    const std::string d2 = fresh_dir("unroll_acc9_run2");
    cfg.out_dir = d2;
    if (cmd_experiment(cfg).exit_code != 0) return {false, "second run failed"};
    const std::string d3 = fresh_dir("unroll_acc9_run3");
    cfg.out_dir = d3;
    cfg.threads = 1;
    if (cmd_experiment(cfg).exit_code != 0) return {false, "third run failed"};

    // Identical modulo the wall-clock column, which cannot reproduce.
    const std::string r1 = strip_runtime_column(slurp(d1 + "/results.csv"));
    const std::string r2 = strip_runtime_column(slurp(d2 + "/results.csv"));
    const std::string r3 = strip_runtime_column(slurp(d3 + "/results.csv"));
    const std::string s1 = slurp(d1 + "/summary.csv");
    const std::string s2 = slurp(d2 + "/summary.csv");
    const std::string s3 = slurp(d3 + "/summary.csv");

    const bool same = r1 == r2 && r2 == r3 && s1 == s2 && s2 == s3;
    return {same, same ? "three runs (threads 2,2,1) byte-identical modulo wall-clock column"
                       : "runs differ"};
}

struct Criterion {
    int id;
    const char* name;
    Outcome (*run)();
};

const Criterion kCriteria[] = {
    {1, "gradient correctness", gradient_correctness},
    {2, "ista oracle equivalence", ista_oracle_equivalence},
    {3, "output/perturbation bound audits", bound_audits},
    {4, "psi machinery", psi_machinery},
    {5, "bound constants", bound_constants},
    {6, "trend reproduction", trend_reproduction},
    {7, "training efficacy", training_efficacy},
    {8, "protocol fidelity", protocol_fidelity},
    {9, "determinism", determinism},
};

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) only = std::atoi(argv[i + 1]);
    }

    bool all_pass = true;
    for (const Criterion& c : kCriteria) {
        if (only != 0 && c.id != only) continue;
        const Outcome out = c.run();
        std::printf("[%s] criterion %d: %s — %s\n", out.pass ? "PASS" : "FAIL", c.id, c.name,
                    out.detail.c_str());
        std::fflush(stdout);
        all_pass = all_pass && out.pass;
    }
    return all_pass ? 0 : 1;
}
