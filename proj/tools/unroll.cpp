#include <exception>
#include <functional>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "unroll/errors.hpp"
#include "unroll/experiment.hpp"

namespace {

struct GlobalOptions {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool paper_scale = false;
    std::size_t threads = 0;
};

unroll::ExperimentConfig resolve_config(const GlobalOptions& g) {
    unroll::ExperimentConfig cfg =
        g.config_path.empty() ? unroll::default_config(unroll::Scenario::Orthogonal, g.paper_scale)
                              : unroll::load_config_file(g.config_path);
    if (g.paper_scale && g.config_path.empty()) cfg.paper_scale = true;
    if (g.seed_set) cfg.seed = g.seed;
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    if (g.threads > 0) cfg.threads = g.threads;
    cfg.validate();
    return cfg;
}

int guarded(const std::function<unroll::CommandResult()>& body) {
    try {
        const unroll::CommandResult r = body();
        if (!r.message.empty()) std::cout << r.message << "\n";
        return r.exit_code;
    } catch (const unroll::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const unroll::PreconditionViolated& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unrolled thresholding networks: training, generalization bounds, verification"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "override the config seed")->each([&](const std::string&) {
        g.seed_set = true;
    });
    app.add_option("--out", g.out_dir, "output directory");
    app.add_flag("--paper-scale", g.paper_scale, "use the full-size experiment protocol");
    app.add_option("--threads", g.threads, "worker threads for the experiment grid");

    CLI::App* train = app.add_subcommand("train", "train one grid point, write params + history");
    CLI::App* bound = app.add_subcommand("bound", "emit the bound report for one grid point");
    std::string params_path;
    bound->add_option("--params", params_path, "params snapshot for pointwise constants")
        ->check(CLI::ExistingFile);
    CLI::App* experiment =
        app.add_subcommand("experiment", "run the grid x repeats protocol, write result CSVs");
    CLI::App* verify = app.add_subcommand("verify", "run gradient and bound audit suites");
    unroll::VerifyOptions vopts;
    verify->add_option("--grad-configs", vopts.grad_configs, "gradient-checker configurations");
    verify->add_option("--output-audits", vopts.output_audits, "output-bound draws");
    verify->add_option("--perturbation-audits", vopts.perturbation_audits, "perturbation pairs");
    verify->add_option("--psi-grid", vopts.psi_grid, "psi integral grid resolution");
    verify->add_option("--self-test-inflate", vopts.inflate_lhs)->group("");  // harness self-test
    CLI::App* datagen = app.add_subcommand("datagen", "write a dataset container + sidecar");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // malformed invocation is a config error
    }

    if (train->parsed()) return guarded([&] { return unroll::cmd_train(resolve_config(g)); });
    if (bound->parsed())
        return guarded([&] { return unroll::cmd_bound(resolve_config(g), params_path); });
    if (experiment->parsed())
        return guarded([&] { return unroll::cmd_experiment(resolve_config(g)); });
    if (verify->parsed()) {
        return guarded([&] {
            const unroll::ExperimentConfig cfg = resolve_config(g);
            vopts.seed = cfg.seed;
            return unroll::cmd_verify(cfg, vopts);
        });
    }
    if (datagen->parsed()) return guarded([&] { return unroll::cmd_datagen(resolve_config(g)); });
    return 2;
}
