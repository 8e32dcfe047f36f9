#ifndef UNROLL_EXPERIMENT_HPP
#define UNROLL_EXPERIMENT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "unroll/bounds.hpp"
#include "unroll/data_io.hpp"
#include "unroll/model.hpp"
#include "unroll/train.hpp"

namespace unroll {

enum class Scenario {
    Orthogonal,
    Overcomplete,
    NonOrthogonal,
    Alternating,
    Convolutional,
    LearnedThresholds,
    Mnist
};

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& name);

struct GridAxes {
    std::vector<std::size_t> signal_dim;  // N
    std::vector<std::size_t> meas_dim;    // n
    std::vector<std::size_t> sparsity;    // s
    std::vector<std::size_t> depth;       // L
    std::vector<std::size_t> m_train;
};

struct ExperimentConfig {
    Scenario scenario = Scenario::Orthogonal;
    GridAxes grid;
    std::size_t m_test = 5000;
    std::size_t p_dict = 0;  // 0 = square dictionary (p = N)
    std::size_t kernel_len = 7;
    DictKind dict_kind = DictKind::Orthogonal;
    std::size_t repeats = 10;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    std::string out_dir = "results";
    bool paper_scale = false;

    TrainConfig train;

    double w_inf = 1.0;
    double tau0 = 1.0;
    double r1 = 0.0;
    double lambda0 = 0.1;
    double r2 = 0.0;
    double b_out_override = 0.0;  // 0 = use b_in
    double delta = 0.05;
    bool enforce_tau_b2 = false;
    double y_fro_override = 0.0;  // bound command only; 0 = use data

    void validate() const;
};

/// Scenario defaults at desk scale, or at the sizes reported in the original
/// protocol when paper_scale is set (m_train 10000, m_test 50000, N 120).
ExperimentConfig default_config(Scenario scenario, bool paper_scale);

/// Strict parse: unknown keys are rejected.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);

/// The unrolled network for one grid point; `a` is the measurement matrix the
/// data was generated with.
Architecture make_architecture(const ExperimentConfig& cfg, std::size_t signal_dim,
                               std::size_t depth, const Matrix& a);

/// b_out defaults to max(b_in, b_out_data) so the clip ball covers the
/// reconstruction targets seen in training.
HypothesisClassSpec make_class_spec(const ExperimentConfig& cfg, std::size_t depth, double b_in,
                                    double b_out_data);

std::string params_to_json(const Params& params);
Params params_from_json(const Architecture& arch, const std::string& text);

struct CommandResult {
    int exit_code = 0;
    std::string message;
};

CommandResult cmd_train(const ExperimentConfig& cfg);
CommandResult cmd_bound(const ExperimentConfig& cfg, const std::string& params_path);
CommandResult cmd_experiment(const ExperimentConfig& cfg);
CommandResult cmd_datagen(const ExperimentConfig& cfg);

struct VerifyOptions {
    std::size_t grad_configs = 100;
    std::size_t output_audits = 1000;
    std::size_t perturbation_audits = 1000;
    std::size_t psi_grid = 20;
    double inflate_lhs = 1.0;  // self-test hook; > 1 must trip the harness
    std::uint64_t seed = 1;
};

struct VerifySummary {
    std::size_t grad_violations = 0;
    double grad_max_rel_err = 0.0;
    AuditReport output;
    AuditReport perturbation;
    std::size_t psi_checks = 0;
    std::size_t psi_violations = 0;
    bool ok() const {
        return grad_violations == 0 && output.violations == 0 && perturbation.violations == 0 &&
               psi_violations == 0;
    }
};

VerifySummary run_verification(const VerifyOptions& options);
CommandResult cmd_verify(const ExperimentConfig& cfg, const VerifyOptions& options);

}  // namespace unroll

#endif
