#include "unroll/experiment.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "unroll/errors.hpp"
#include "unroll/scalar_ops.hpp"

namespace unroll {

using nlohmann::json;

std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::Orthogonal: return "orthogonal";
        case Scenario::Overcomplete: return "overcomplete";
        case Scenario::NonOrthogonal: return "non_orthogonal";
        case Scenario::Alternating: return "alternating";
        case Scenario::Convolutional: return "convolutional";
        case Scenario::LearnedThresholds: return "learned_thresholds";
        case Scenario::Mnist: return "mnist";
    }
    return "orthogonal";
}

Scenario scenario_from_string(const std::string& name) {
    if (name == "orthogonal") return Scenario::Orthogonal;
    if (name == "overcomplete") return Scenario::Overcomplete;
    if (name == "non_orthogonal") return Scenario::NonOrthogonal;
    if (name == "alternating") return Scenario::Alternating;
    if (name == "convolutional") return Scenario::Convolutional;
    if (name == "learned_thresholds") return Scenario::LearnedThresholds;
    if (name == "mnist") return Scenario::Mnist;
    throw ConfigError("unknown scenario: " + name);
}

void ExperimentConfig::validate() const {
    if (grid.signal_dim.empty() || grid.meas_dim.empty() || grid.sparsity.empty() ||
        grid.depth.empty() || grid.m_train.empty())
        throw ConfigError("grid: every axis needs at least one value");
    if (repeats < 1) throw ConfigError("repeats must be >= 1");
    if (train.learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0,1)");
    if (tau0 <= 0.0 || lambda0 <= 0.0) throw ConfigError("tau0/lambda0 must be positive");
    if (r1 < 0.0 || r2 < 0.0) throw ConfigError("r1/r2 must be nonnegative");
    if (r1 >= tau0) throw ConfigError("r1 must be < tau0");
    if (r2 >= lambda0) throw ConfigError("r2 must be < lambda0");
    if (w_inf <= 0.0) throw ConfigError("w_inf must be positive");
    if (scenario == Scenario::LearnedThresholds && (r2 <= 0.0 || !train.train_lambda))
        throw ConfigError("learned_thresholds requires r2 > 0 and train_lambda");
    if (scenario == Scenario::Orthogonal && train.ortho_weight <= 0.0)
        throw ConfigError("orthogonal scenario requires ortho_weight > 0");
    if (scenario != Scenario::Mnist)  // mnist fixes N to the image size
        for (std::size_t big_n : grid.signal_dim)
            for (std::size_t n : grid.meas_dim)
                if (n > big_n) throw ConfigError("grid: n must be <= N");
    if (scenario == Scenario::Convolutional)
        for (std::size_t big_n : grid.signal_dim)
            if (kernel_len > big_n) throw ConfigError("kernel_len must be <= N");
    if (p_dict != 0)
        for (std::size_t big_n : grid.signal_dim)
            if (p_dict < big_n) throw ConfigError("p must be >= N (overcomplete)");
}

ExperimentConfig default_config(Scenario scenario, bool paper_scale) {
    ExperimentConfig cfg;
    cfg.scenario = scenario;
    cfg.paper_scale = paper_scale;
    if (paper_scale) {
        cfg.grid.signal_dim = {120};
        cfg.grid.meas_dim = {60};
        cfg.grid.sparsity = {10};
        cfg.grid.depth = {16};
        cfg.grid.m_train = {10000};
        cfg.m_test = 50000;
    } else {
        cfg.grid.signal_dim = {64};
        cfg.grid.meas_dim = {32};
        cfg.grid.sparsity = {4};
        cfg.grid.depth = {16};
        cfg.grid.m_train = {2000};
        cfg.m_test = 5000;
    }
    cfg.kernel_len = 7;
    // Class defaults: a little slack over the orthogonal-dictionary norm and
    // an aggressive stepsize train markedly better than the boundary values.
    cfg.w_inf = 1.2;
    cfg.tau0 = 1.3;
    cfg.lambda0 = 0.05;
    switch (scenario) {
        case Scenario::Orthogonal:
            cfg.train.ortho_weight = 0.1;
            break;
        case Scenario::Alternating:
            cfg.train.ortho_weight = 0.1;
            break;
        case Scenario::NonOrthogonal:
            cfg.dict_kind = DictKind::GaussianNonOrthogonal;
            cfg.w_inf = 3.0;
            cfg.tau0 = 1.0;
            cfg.lambda0 = 0.1;
            break;
        case Scenario::LearnedThresholds:
            cfg.dict_kind = DictKind::GaussianNonOrthogonal;
            cfg.w_inf = 3.0;
            cfg.tau0 = 1.0;
            cfg.lambda0 = 0.1;
            cfg.r2 = 0.05;
            cfg.train.train_lambda = true;
            break;
        case Scenario::Convolutional:
            cfg.w_inf = 0.37;  // about k^{-1/2} for the default kernel, so tau B^2 <= 1
            cfg.tau0 = 1.0;
            break;
        case Scenario::Overcomplete:
            cfg.p_dict = paper_scale ? 240 : 96;
            break;
        default:
            break;
    }
    return cfg;
}

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const char* where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) ok = true;
        if (!ok) throw ConfigError(std::string("unknown key \"") + it.key() + "\" in " + where);
    }
}

std::vector<std::size_t> axis_values(const json& v, const char* name) {
    std::vector<std::size_t> out;
    if (v.is_number_unsigned() || v.is_number_integer()) {
        out.push_back(v.get<std::size_t>());
    } else if (v.is_array()) {
        for (const json& e : v) out.push_back(e.get<std::size_t>());
    } else {
        throw ConfigError(std::string("grid axis ") + name + " must be an integer or array");
    }
    if (out.empty()) throw ConfigError(std::string("grid axis ") + name + " is empty");
    return out;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
    reject_unknown(doc,
                   {"scenario", "grid", "m_test", "p", "kernel_len", "dict_kind", "repeats", "seed",
                    "threads", "out", "paper_scale", "train", "class", "bound"},
                   "config root");

    const bool paper = doc.value("paper_scale", false);
    ExperimentConfig cfg = default_config(
        scenario_from_string(doc.value("scenario", std::string("orthogonal"))), paper);

    if (doc.contains("grid")) {
        const json& g = doc["grid"];
        reject_unknown(g, {"N", "n", "s", "L", "m_train"}, "grid");
        if (g.contains("N")) cfg.grid.signal_dim = axis_values(g["N"], "N");
        if (g.contains("n")) cfg.grid.meas_dim = axis_values(g["n"], "n");
        if (g.contains("s")) cfg.grid.sparsity = axis_values(g["s"], "s");
        if (g.contains("L")) cfg.grid.depth = axis_values(g["L"], "L");
        if (g.contains("m_train")) cfg.grid.m_train = axis_values(g["m_train"], "m_train");
    }
    if (doc.contains("m_test")) cfg.m_test = doc["m_test"].get<std::size_t>();
    if (doc.contains("p")) cfg.p_dict = doc["p"].get<std::size_t>();
    if (doc.contains("kernel_len")) cfg.kernel_len = doc["kernel_len"].get<std::size_t>();
    if (doc.contains("dict_kind")) {
        const std::string k = doc["dict_kind"].get<std::string>();
        if (k == "orthogonal")
            cfg.dict_kind = DictKind::Orthogonal;
        else if (k == "gaussian")
            cfg.dict_kind = DictKind::GaussianNonOrthogonal;
        else
            throw ConfigError("dict_kind must be \"orthogonal\" or \"gaussian\"");
    }
    if (doc.contains("repeats")) cfg.repeats = doc["repeats"].get<std::size_t>();
    if (doc.contains("seed")) cfg.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("threads")) cfg.threads = doc["threads"].get<std::size_t>();
    if (doc.contains("out")) cfg.out_dir = doc["out"].get<std::string>();

    if (doc.contains("train")) {
        const json& t = doc["train"];
        reject_unknown(t,
                       {"learning_rate", "epochs", "batch_size", "train_tau", "train_lambda",
                        "ortho_weight"},
                       "train");
        if (t.contains("learning_rate")) cfg.train.learning_rate = t["learning_rate"].get<double>();
        if (t.contains("epochs")) cfg.train.epochs = t["epochs"].get<std::size_t>();
        if (t.contains("batch_size")) cfg.train.batch_size = t["batch_size"].get<std::size_t>();
        if (t.contains("train_tau")) cfg.train.train_tau = t["train_tau"].get<bool>();
        if (t.contains("train_lambda")) cfg.train.train_lambda = t["train_lambda"].get<bool>();
        if (t.contains("ortho_weight")) cfg.train.ortho_weight = t["ortho_weight"].get<double>();
    }
    if (doc.contains("class")) {
        const json& c = doc["class"];
        reject_unknown(c, {"w_inf", "tau0", "r1", "lambda0", "r2", "b_out", "delta", "enforce_tau_b2_le_1"},
                       "class");
        if (c.contains("w_inf")) cfg.w_inf = c["w_inf"].get<double>();
        if (c.contains("tau0")) cfg.tau0 = c["tau0"].get<double>();
        if (c.contains("r1")) cfg.r1 = c["r1"].get<double>();
        if (c.contains("lambda0")) cfg.lambda0 = c["lambda0"].get<double>();
        if (c.contains("r2")) cfg.r2 = c["r2"].get<double>();
        if (c.contains("b_out")) cfg.b_out_override = c["b_out"].get<double>();
        if (c.contains("delta")) cfg.delta = c["delta"].get<double>();
        if (c.contains("enforce_tau_b2_le_1")) cfg.enforce_tau_b2 = c["enforce_tau_b2_le_1"].get<bool>();
    }
    if (doc.contains("bound")) {
        const json& b = doc["bound"];
        reject_unknown(b, {"y_fro"}, "bound");
        if (b.contains("y_fro")) cfg.y_fro_override = b["y_fro"].get<double>();
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json doc;
    doc["scenario"] = to_string(cfg.scenario);
    doc["grid"]["N"] = cfg.grid.signal_dim;
    doc["grid"]["n"] = cfg.grid.meas_dim;
    doc["grid"]["s"] = cfg.grid.sparsity;
    doc["grid"]["L"] = cfg.grid.depth;
    doc["grid"]["m_train"] = cfg.grid.m_train;
    doc["m_test"] = cfg.m_test;
    doc["p"] = cfg.p_dict;
    doc["kernel_len"] = cfg.kernel_len;
    doc["dict_kind"] = cfg.dict_kind == DictKind::Orthogonal ? "orthogonal" : "gaussian";
    doc["repeats"] = cfg.repeats;
    doc["seed"] = cfg.seed;
    doc["threads"] = cfg.threads;
    doc["out"] = cfg.out_dir;
    doc["paper_scale"] = cfg.paper_scale;
    doc["train"]["learning_rate"] = cfg.train.learning_rate;
    doc["train"]["epochs"] = cfg.train.epochs;
    doc["train"]["batch_size"] = cfg.train.batch_size;
    doc["train"]["train_tau"] = cfg.train.train_tau;
    doc["train"]["train_lambda"] = cfg.train.train_lambda;
    doc["train"]["ortho_weight"] = cfg.train.ortho_weight;
    doc["class"]["w_inf"] = cfg.w_inf;
    doc["class"]["tau0"] = cfg.tau0;
    doc["class"]["r1"] = cfg.r1;
    doc["class"]["lambda0"] = cfg.lambda0;
    doc["class"]["r2"] = cfg.r2;
    doc["class"]["b_out"] = cfg.b_out_override;
    doc["class"]["delta"] = cfg.delta;
    doc["class"]["enforce_tau_b2_le_1"] = cfg.enforce_tau_b2;
    return doc.dump(2);
}

Architecture make_architecture(const ExperimentConfig& cfg, std::size_t signal_dim,
                               std::size_t depth, const Matrix& a) {
    Architecture arch;
    arch.depth = depth;
    const std::size_t iterate_dim = cfg.p_dict != 0 ? cfg.p_dict : signal_dim;

    arch.widths.assign(depth + 2, iterate_dim);
    arch.widths[depth + 1] = signal_dim;
    arch.pooling.assign(depth, Pooling{});

    ParamSpace dense;
    dense.type = MapType::DenseDict;
    dense.measurement = a;
    dense.weight_rows = signal_dim;
    dense.weight_cols = iterate_dim;
    dense.norm = SpaceNorm::Spectral;

    switch (cfg.scenario) {
        case Scenario::Alternating: {
            arch.spaces = {dense, dense};
            arch.schedule.space_count = 2;
            arch.schedule.assignment.resize(depth + 1);
            for (std::size_t l = 1; l <= depth; ++l) arch.schedule.assignment[l - 1] = (l - 1) % 2;
            arch.schedule.assignment[depth] = 0;  // decode with the odd-layer dictionary
            if (depth < 2)
                throw ConfigError("alternating scenario needs L >= 2 so both spaces are used");
            break;
        }
        case Scenario::Convolutional: {
            ParamSpace conv;
            conv.type = MapType::ConvDict;
            conv.measurement = a;
            conv.kernel_len = cfg.kernel_len;
            conv.signal_len = signal_dim;
            conv.weight_rows = cfg.kernel_len;
            conv.weight_cols = 1;
            conv.norm = SpaceNorm::Euclidean;
            arch.spaces = {conv};
            arch.schedule.space_count = 1;
            arch.schedule.assignment.assign(depth + 1, 0);
            break;
        }
        default: {
            arch.spaces = {dense};
            arch.schedule.space_count = 1;
            arch.schedule.assignment.assign(depth + 1, 0);
            break;
        }
    }
    arch.b_out = 1.0;  // caller replaces once b_in is known
    return arch;
}

HypothesisClassSpec make_class_spec(const ExperimentConfig& cfg, std::size_t depth, double b_in,
                                    double b_out_data) {
    HypothesisClassSpec spec;
    spec.w_inf = cfg.w_inf;
    spec.tau0.assign(depth, cfg.tau0);
    spec.r1 = cfg.r1;
    spec.lambda0.assign(depth, cfg.lambda0);
    spec.r2 = cfg.r2;
    spec.b_in = b_in;
    spec.b_out = cfg.b_out_override > 0.0 ? cfg.b_out_override : std::max(b_in, b_out_data);
    spec.delta = cfg.delta;
    spec.enforce_tau_b2_le_1 = cfg.enforce_tau_b2;
    return spec;
}

std::string params_to_json(const Params& params) {
    json doc;
    for (std::size_t j = 0; j < params.weights.size(); ++j) {
        const Matrix& w = params.weights[j];
        json rows = json::array();
        for (std::size_t i = 0; i < w.rows; ++i) {
            json row = json::array();
            for (std::size_t c = 0; c < w.cols; ++c) row.push_back(w(i, c));
            rows.push_back(std::move(row));
        }
        doc["w_" + std::to_string(j + 1)] = std::move(rows);
    }
    doc["tau"] = params.tau;
    doc["lambda"] = params.lambda;
    return doc.dump();
}

Params params_from_json(const Architecture& arch, const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("params snapshot is not valid JSON: ") + e.what());
    }
    Params p;
    for (std::size_t j = 0; j < arch.spaces.size(); ++j) {
        const json& rows = doc.at("w_" + std::to_string(j + 1));
        Matrix w(rows.size(), rows.empty() ? 0 : rows[0].size());
        for (std::size_t i = 0; i < w.rows; ++i)
            for (std::size_t c = 0; c < w.cols; ++c) w(i, c) = rows[i][c].get<double>();
        p.weights.push_back(std::move(w));
    }
    p.tau = doc.at("tau").get<std::vector<double>>();
    p.lambda = doc.at("lambda").get<std::vector<double>>();
    return p;
}

namespace {

struct GridPoint {
    std::size_t signal_dim, meas_dim, sparsity, depth, m_train;
};

std::vector<GridPoint> expand_grid(const GridAxes& grid) {
    std::vector<GridPoint> points;
    for (std::size_t big_n : grid.signal_dim)
        for (std::size_t n : grid.meas_dim)
            for (std::size_t s : grid.sparsity)
                for (std::size_t l : grid.depth)
                    for (std::size_t m : grid.m_train) points.push_back({big_n, n, s, l, m});
    return points;
}

std::uint64_t grid_hash(const GridPoint& g) {
    const std::uint64_t parts[5] = {g.signal_dim, g.meas_dim, g.sparsity, g.depth, g.m_train};
    return stable_hash64(parts, sizeof parts);
}

struct TrialOutput {
    ResultRow row;
    Params params;
    std::vector<EpochRecord> history;
};

Matrix hconcat(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows, a.cols + b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) c(i, j) = a(i, j);
        for (std::size_t j = 0; j < b.cols; ++j) c(i, a.cols + j) = b(i, j);
    }
    return c;
}

Dataset make_mnist_trial_data(const ExperimentConfig& cfg, const GridPoint& g, std::uint64_t seed) {
    const char* dir = std::getenv("UNROLL_DATA_DIR");
    if (dir == nullptr) throw ConfigError("mnist scenario requires UNROLL_DATA_DIR");
    const IdxTensor train_images = load_idx(std::string(dir) + "/train-images-idx3-ubyte");
    const IdxTensor test_images = load_idx(std::string(dir) + "/t10k-images-idx3-ubyte");
    const std::size_t pixels = train_images.dims[1] * train_images.dims[2];
    SeededRng rng(seed);
    const Matrix a = normalize_measurement(random_gaussian_matrix(rng, g.meas_dim, pixels));
    const Dataset tr = mnist_dataset(train_images, a, g.m_train);
    const Dataset te = mnist_dataset(test_images, a, cfg.m_test);
    Dataset all;
    all.a = a;
    all.x = hconcat(tr.x, te.x);
    all.y = hconcat(tr.y, te.y);
    return all;
}

TrialOutput run_trial(const ExperimentConfig& cfg, const GridPoint& g, std::size_t trial) {
    const auto t_start = std::chrono::steady_clock::now();
    const std::uint64_t trial_seed = derive_seed(cfg.seed, "trial", grid_hash(g), trial);

    Dataset data;
    std::size_t signal_dim = g.signal_dim;
    if (cfg.scenario == Scenario::Mnist) {
        data = make_mnist_trial_data(cfg, g, trial_seed);
        signal_dim = data.x.rows;
    } else {
        SyntheticSpec spec;
        spec.signal_dim = g.signal_dim;
        spec.measurement_dim = g.meas_dim;
        spec.sparsity = g.sparsity;
        spec.m_train = g.m_train;
        spec.m_test = cfg.m_test;
        spec.dict_kind = cfg.dict_kind;
        spec.seed = trial_seed;
        data = gen_synthetic(spec);
    }
    const std::size_t m_train = std::min(g.m_train, data.x.cols);
    const std::size_t m_test = data.x.cols - m_train;

    TrainData split;
    split.x_train = submatrix_cols(data.x, 0, m_train);
    split.y_train = submatrix_cols(data.y, 0, m_train);
    split.x_test = submatrix_cols(data.x, m_train, m_test);
    split.y_test = submatrix_cols(data.y, m_train, m_test);

    const double b_in = input_radius(data.y, m_train);
    // The clip radius has to cover the reconstruction targets, not just the
    // compressed measurements, or the decoder cannot represent the data.
    double x_max = 0.0;
    for (std::size_t j = 0; j < m_train; ++j) x_max = std::max(x_max, col_norm2(data.x, j));
    Architecture arch = make_architecture(cfg, signal_dim, g.depth, data.a);
    HypothesisClassSpec spec = make_class_spec(cfg, g.depth, b_in, x_max);
    arch.b_out = spec.b_out;
    arch.validate();
    spec.validate();

    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(trial_seed, "train", 0, 0);
    TrainResult trained = train(arch, spec, split, tc);

    const double y_fro = frobenius_norm(split.y_train);
    const BoundReport report =
        compute_bound_report(arch, spec, y_fro, m_train, 0.0, &trained.params);

    TrialOutput out;
    ResultRow& row = out.row;
    row.scenario = to_string(cfg.scenario);
    row.n_signal = signal_dim;
    row.n_meas = g.meas_dim;
    row.sparsity = g.sparsity;
    row.p_dict = cfg.p_dict != 0 ? cfg.p_dict : signal_dim;
    row.kernel_len = cfg.scenario == Scenario::Convolutional ? cfg.kernel_len : 0;
    row.depth = g.depth;
    row.j_spaces = arch.spaces.size();
    row.k_total = arch.weight_dim_total();
    row.m_train = m_train;
    row.m_test = m_test;
    row.seed = trial_seed;
    row.trial = trial;
    row.epochs = cfg.train.epochs;
    row.lr = cfg.train.learning_rate;
    row.r1 = cfg.r1;
    row.r2 = cfg.r2;
    const EpochRecord& last = trained.history.back();
    row.train_mse = last.train_mse;
    row.test_mse = last.test_mse;
    row.train_l2 = last.train_l2;
    row.test_l2 = last.test_l2;
    row.ge_signed = last.train_l2 - last.test_l2;
    row.ge_abs = std::abs(row.ge_signed);
    row.alpha = report.alpha;
    row.alpha_mode = report.alpha_mode;
    row.b_inf = report.b_inf;
    row.d_inf = report.d_inf;
    row.w_inf = report.w_inf;
    row.y_fro = y_fro;
    row.k_l = report.k_l;
    row.m_l = report.m_l;
    row.o_l = report.o_l;
    row.q_l = report.q_l;
    row.rad_bound = report.rad_bound;
    row.bound_thm1 = report.full_bound;  // lemp = 0: the generalization-gap part
    row.bound_cor1 = report.corollary_bound
                         ? generalization_bound(0.0, *report.corollary_bound, spec.b_in, spec.b_out,
                                                spec.delta, m_train)
                         : std::nan("");
    row.runtime_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

    out.params = std::move(trained.params);
    out.history = std::move(trained.history);
    return out;
}

void ensure_out_dir(const ExperimentConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream echo(cfg.out_dir + "/config_echo.json");
    echo << config_to_json(cfg) << "\n";
}

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
    std::ofstream out(path);
    if (!out) throw IoError("history: cannot open " + path);
    out << "epoch,train_mse,train_l2,test_mse,test_l2\n";
    for (const EpochRecord& r : history)
        out << r.epoch << "," << format_double(r.train_mse) << "," << format_double(r.train_l2)
            << "," << format_double(r.test_mse) << "," << format_double(r.test_l2) << "\n";
}

}  // namespace

CommandResult cmd_train(const ExperimentConfig& cfg) {
    ensure_out_dir(cfg);
    const std::vector<GridPoint> points = expand_grid(cfg.grid);
    const TrialOutput out = run_trial(cfg, points.front(), 0);

    std::ofstream snap(cfg.out_dir + "/params.json");
    snap << params_to_json(out.params) << "\n";
    write_history_csv(cfg.out_dir + "/history.csv", out.history);

    std::ostringstream msg;
    msg << "final train mse " << format_double(out.row.train_mse) << ", train l2 "
        << format_double(out.row.train_l2) << ", test mse " << format_double(out.row.test_mse)
        << ", test l2 " << format_double(out.row.test_l2);
    return {0, msg.str()};
}

CommandResult cmd_bound(const ExperimentConfig& cfg, const std::string& params_path) {
    ensure_out_dir(cfg);
    const GridPoint g = expand_grid(cfg.grid).front();

    SyntheticSpec sspec;
    sspec.signal_dim = g.signal_dim;
    sspec.measurement_dim = g.meas_dim;
    sspec.sparsity = g.sparsity;
    sspec.m_train = g.m_train;
    sspec.m_test = 0;
    sspec.dict_kind = cfg.dict_kind;
    sspec.seed = cfg.seed;
    const Dataset data = gen_synthetic(sspec);

    const double b_in = input_radius(data.y, g.m_train);
    double x_max = 0.0;
    for (std::size_t j = 0; j < std::min(g.m_train, data.x.cols); ++j)
        x_max = std::max(x_max, col_norm2(data.x, j));
    Architecture arch = make_architecture(cfg, g.signal_dim, g.depth, data.a);
    HypothesisClassSpec spec = make_class_spec(cfg, g.depth, b_in, x_max);
    arch.b_out = spec.b_out;
    arch.validate();
    spec.validate();

    Params params;
    bool have_params = false;
    if (!params_path.empty()) {
        std::ifstream in(params_path);
        if (!in) throw ConfigError("cannot open params snapshot " + params_path);
        std::ostringstream buf;
        buf << in.rdbuf();
        params = params_from_json(arch, buf.str());
        have_params = true;
    }

    const double y_fro =
        cfg.y_fro_override > 0.0 ? cfg.y_fro_override : frobenius_norm(data.y);
    const ClassConstants cc = class_constants(arch, spec, have_params ? &params : nullptr);
    if (cc.tau_inf * cc.b_inf * cc.b_inf > 1.0 + 1e-12)
        std::cerr << "note: tau_inf * B_inf^2 = " << cc.tau_inf * cc.b_inf * cc.b_inf
                  << " > 1, Corollary bound not applicable\n";

    const BoundReport report = compute_bound_report(arch, spec, y_fro, g.m_train, 0.0,
                                                    have_params ? &params : nullptr);
    const std::string text = bound_report_to_json(report);
    std::ofstream out(cfg.out_dir + "/bound.json");
    out << text << "\n";
    return {0, text};
}

CommandResult cmd_experiment(const ExperimentConfig& cfg) {
    ensure_out_dir(cfg);
    const std::vector<GridPoint> points = expand_grid(cfg.grid);
    const std::size_t total = points.size() * cfg.repeats;
    std::vector<ResultRow> rows(total);

    std::vector<char> done(total, 0);
    std::string first_error;

    omp_set_num_threads(static_cast<int>(std::max<std::size_t>(1, cfg.threads)));
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t slot = 0; slot < static_cast<std::ptrdiff_t>(total); ++slot) {
        const std::size_t point = static_cast<std::size_t>(slot) / cfg.repeats;
        const std::size_t trial = static_cast<std::size_t>(slot) % cfg.repeats;
        try {
            rows[static_cast<std::size_t>(slot)] = run_trial(cfg, points[point], trial).row;
            done[static_cast<std::size_t>(slot)] = 1;
        } catch (const std::exception& e) {
            // Exceptions must not escape the worker region; remember the
            // first failure, flush whatever completed, and report below.
#pragma omp critical
            if (first_error.empty()) first_error = e.what();
        }
    }

    if (!first_error.empty()) {
        std::vector<ResultRow> partial;
        for (std::size_t i = 0; i < total; ++i)
            if (done[i]) partial.push_back(rows[i]);
        write_results_csv(cfg.out_dir + "/results.csv", partial);
        return {3, "experiment failed after " + std::to_string(partial.size()) + "/" +
                       std::to_string(total) + " trials (partial results flushed): " + first_error};
    }

    write_results_csv(cfg.out_dir + "/results.csv", rows);

    // Per-grid-point aggregate.
    std::ofstream summary(cfg.out_dir + "/summary.csv");
    summary << "scenario,N,n,s,p,kernel_len,L,m_train,m_test,repeats,"
               "ge_abs_mean,ge_abs_std,train_l2_mean,test_l2_mean,"
               "bound_thm1_mean,bound_thm1_std,bound_cor1_mean\n";
    for (std::size_t p = 0; p < points.size(); ++p) {
        double ge_mean = 0.0, ge_sq = 0.0, tr = 0.0, te = 0.0, b1 = 0.0, b1_sq = 0.0, bc = 0.0;
        std::size_t bc_count = 0;
        for (std::size_t t = 0; t < cfg.repeats; ++t) {
            const ResultRow& r = rows[p * cfg.repeats + t];
            ge_mean += r.ge_abs;
            ge_sq += r.ge_abs * r.ge_abs;
            tr += r.train_l2;
            te += r.test_l2;
            b1 += r.bound_thm1;
            b1_sq += r.bound_thm1 * r.bound_thm1;
            if (std::isfinite(r.bound_cor1)) {
                bc += r.bound_cor1;
                ++bc_count;
            }
        }
        const double k = static_cast<double>(cfg.repeats);
        ge_mean /= k;
        b1 /= k;
        const double ge_std = std::sqrt(std::max(0.0, ge_sq / k - ge_mean * ge_mean));
        const double b1_std = std::sqrt(std::max(0.0, b1_sq / k - b1 * b1));
        const ResultRow& r0 = rows[p * cfg.repeats];
        summary << r0.scenario << "," << r0.n_signal << "," << r0.n_meas << "," << r0.sparsity
                << "," << r0.p_dict << "," << r0.kernel_len << "," << r0.depth << ","
                << r0.m_train << "," << r0.m_test << "," << cfg.repeats << ","
                << format_double(ge_mean) << "," << format_double(ge_std) << ","
                << format_double(tr / k) << "," << format_double(te / k) << ","
                << format_double(b1) << "," << format_double(b1_std) << ","
                << format_double(bc_count ? bc / static_cast<double>(bc_count) : std::nan(""))
                << "\n";
    }
    return {0, "wrote " + std::to_string(total) + " rows to " + cfg.out_dir + "/results.csv"};
}

CommandResult cmd_datagen(const ExperimentConfig& cfg) {
    ensure_out_dir(cfg);
    const GridPoint g = expand_grid(cfg.grid).front();
    SyntheticSpec spec;
    spec.signal_dim = g.signal_dim;
    spec.measurement_dim = g.meas_dim;
    spec.sparsity = g.sparsity;
    spec.m_train = g.m_train;
    spec.m_test = cfg.m_test;
    spec.dict_kind = cfg.dict_kind;
    spec.seed = cfg.seed;
    const Dataset data = gen_synthetic(spec);
    write_dataset(cfg.out_dir + "/dataset.bin", data);

    json sidecar;
    sidecar["N"] = spec.signal_dim;
    sidecar["n"] = spec.measurement_dim;
    sidecar["s"] = spec.sparsity;
    sidecar["m_train"] = spec.m_train;
    sidecar["m_test"] = spec.m_test;
    sidecar["dict_kind"] = spec.dict_kind == DictKind::Orthogonal ? "orthogonal" : "gaussian";
    sidecar["seed"] = spec.seed;
    std::ofstream side(cfg.out_dir + "/dataset.json");
    side << sidecar.dump(2) << "\n";
    return {0, "wrote " + cfg.out_dir + "/dataset.bin"};
}

namespace {

enum class AuditKind { Dense, Alternating, Conv, DensePooled };

Architecture audit_architecture(AuditKind kind, std::size_t signal_dim, std::size_t meas_dim,
                                std::size_t depth, std::size_t kernel_len, SeededRng& rng) {
    Architecture arch;
    arch.depth = depth;
    arch.widths.assign(depth + 2, signal_dim);
    arch.pooling.assign(depth, Pooling{});
    arch.b_out = 2.0;
    const Matrix a = normalize_measurement(random_gaussian_matrix(rng, meas_dim, signal_dim));

    ParamSpace dense;
    dense.type = MapType::DenseDict;
    dense.measurement = a;
    dense.weight_rows = signal_dim;
    dense.weight_cols = signal_dim;
    dense.norm = SpaceNorm::Spectral;

    switch (kind) {
        case AuditKind::Alternating:
            arch.spaces = {dense, dense};
            arch.schedule.space_count = 2;
            arch.schedule.assignment.resize(depth + 1);
            for (std::size_t l = 1; l <= depth; ++l) arch.schedule.assignment[l - 1] = (l - 1) % 2;
            arch.schedule.assignment[depth] = 0;
            break;
        case AuditKind::Conv: {
            ParamSpace conv;
            conv.type = MapType::ConvDict;
            conv.measurement = a;
            conv.kernel_len = kernel_len;
            conv.signal_len = signal_dim;
            conv.weight_rows = kernel_len;
            conv.weight_cols = 1;
            conv.norm = SpaceNorm::Euclidean;
            arch.spaces = {conv};
            arch.schedule.space_count = 1;
            arch.schedule.assignment.assign(depth + 1, 0);
            break;
        }
        case AuditKind::DensePooled: {
            arch.spaces = {dense};
            arch.schedule.space_count = 1;
            arch.schedule.assignment.assign(depth + 1, 0);
            for (std::size_t l = 0; l < depth; ++l) {
                Matrix p = random_gaussian_matrix(rng, signal_dim, signal_dim);
                arch.pooling[l] = {PoolKind::FixedLinear, scale(p, 0.9 / spectral_norm(p))};
            }
            break;
        }
        default:
            arch.spaces = {dense};
            arch.schedule.space_count = 1;
            arch.schedule.assignment.assign(depth + 1, 0);
            break;
    }
    return arch;
}

// Wild parameter draw: the audits hold pointwise, so no class projection.
Params audit_params(const Architecture& arch, SeededRng& rng) {
    Params p;
    for (const ParamSpace& sp : arch.spaces) {
        Matrix w = sp.type == MapType::ConvDict ? random_gaussian_matrix(rng, sp.kernel_len, 1)
                                                : random_gaussian_matrix(rng, sp.weight_rows, sp.weight_cols);
        const double target = 0.2 + 1.3 * rng.next_uniform();
        const double n = space_norm(w, sp);
        if (n > 0.0) w = scale(w, target / n);
        p.weights.push_back(std::move(w));
    }
    for (std::size_t l = 0; l < arch.depth; ++l) {
        p.tau.push_back(0.05 + 1.2 * rng.next_uniform());
        p.lambda.push_back(0.01 + 0.4 * rng.next_uniform());
    }
    return p;
}

AuditKind audit_kind_for(std::size_t index) {
    switch (index % 4) {
        case 0: return AuditKind::Dense;
        case 1: return AuditKind::Alternating;
        case 2: return AuditKind::Conv;
        default: return AuditKind::DensePooled;
    }
}

}  // namespace

VerifySummary run_verification(const VerifyOptions& options) {
    VerifySummary summary;

    // Gradient checker across map kinds and trainable-flag combinations.
    for (std::size_t i = 0; i < options.grad_configs; ++i) {
        SeededRng rng(derive_seed(options.seed, "gradcfg", i, 0));
        const std::size_t signal_dim = 4 + static_cast<std::size_t>(rng.next_below(5));
        const std::size_t meas_dim = 2 + static_cast<std::size_t>(rng.next_below(signal_dim - 1));
        const std::size_t depth = 2 + static_cast<std::size_t>(rng.next_below(3));
        const Architecture arch =
            audit_architecture(audit_kind_for(i), signal_dim, meas_dim, depth, 3, rng);

        HypothesisClassSpec spec;
        spec.w_inf = 1.0;
        spec.tau0.assign(depth, 0.9);
        spec.lambda0.assign(depth, 0.1);
        spec.r1 = (i % 2 == 0) ? 0.2 : 0.0;  // trainable-stepsize box on/off
        spec.r2 = (i % 3 == 0) ? 0.05 : 0.0;
        spec.b_in = 2.0;
        spec.b_out = 2.0;
        spec.delta = 0.05;

        const GradCheckReport rep = grad_check(arch, spec, derive_seed(options.seed, "grad", i, 1), 1e-5);
        summary.grad_max_rel_err = std::max(summary.grad_max_rel_err, rep.max_rel_err);
        if (rep.max_rel_err >= 1e-5) ++summary.grad_violations;
    }

    for (std::size_t i = 0; i < options.output_audits; ++i) {
        SeededRng rng(derive_seed(options.seed, "outaudit", i, 0));
        const std::size_t signal_dim = 3 + static_cast<std::size_t>(rng.next_below(6));
        const std::size_t meas_dim = 2 + static_cast<std::size_t>(rng.next_below(signal_dim - 1));
        const AuditKind kind = audit_kind_for(i);
        std::size_t depth = 1 + static_cast<std::size_t>(rng.next_below(5));
        if (kind == AuditKind::Alternating) depth = std::max<std::size_t>(depth, 2);
        const Architecture arch = audit_architecture(kind, signal_dim, meas_dim, depth, 3, rng);
        const Params params = audit_params(arch, rng);
        const Matrix y = random_gaussian_matrix(rng, meas_dim, 1 + rng.next_below(4));
        const AuditReport rep = verify_output_bound(arch, params, y, options.inflate_lhs);
        summary.output.checks += rep.checks;
        summary.output.violations += rep.violations;
        summary.output.max_ratio = std::max(summary.output.max_ratio, rep.max_ratio);
    }

    for (std::size_t i = 0; i < options.perturbation_audits; ++i) {
        SeededRng rng(derive_seed(options.seed, "pertaudit", i, 0));
        const std::size_t signal_dim = 3 + static_cast<std::size_t>(rng.next_below(6));
        const std::size_t meas_dim = 2 + static_cast<std::size_t>(rng.next_below(signal_dim - 1));
        const AuditKind kind = audit_kind_for(i);
        std::size_t depth = 1 + static_cast<std::size_t>(rng.next_below(5));
        if (kind == AuditKind::Alternating) depth = std::max<std::size_t>(depth, 2);
        const Architecture arch = audit_architecture(kind, signal_dim, meas_dim, depth, 3, rng);
        Params p1 = audit_params(arch, rng);
        Params p2 = audit_params(arch, rng);
        if (i % 5 == 0) {
            p2.weights = p1.weights;  // threshold/stepsize-only perturbation
        }
        const Matrix y = random_gaussian_matrix(rng, meas_dim, 1 + rng.next_below(4));
        const AuditReport rep = verify_perturbation_bound(arch, p1, p2, y, options.inflate_lhs);
        summary.perturbation.checks += rep.checks;
        summary.perturbation.violations += rep.violations;
        summary.perturbation.max_ratio = std::max(summary.perturbation.max_ratio, rep.max_ratio);
    }

    for (std::size_t i = 0; i < options.psi_grid; ++i) {
        for (std::size_t j = 0; j < options.psi_grid; ++j) {
            const double span = static_cast<double>(options.psi_grid - 1);
            const double a = std::pow(10.0, -2.0 + 4.0 * static_cast<double>(i) / span);
            const double b = std::pow(10.0, -2.0 + 4.0 * static_cast<double>(j) / span);
            PsiIntegralReport rep = psi_integral_check(a, b);
            rep.integral *= options.inflate_lhs;
            ++summary.psi_checks;
            if (rep.integral > rep.bound * (1.0 + 1e-9)) ++summary.psi_violations;
        }
    }
    return summary;
}

CommandResult cmd_verify(const ExperimentConfig& cfg, const VerifyOptions& options) {
    ensure_out_dir(cfg);
    const VerifySummary s = run_verification(options);

    std::ostringstream out;
    out << "seed " << options.seed << "\n";
    out << "suite              checks  violations  worst\n";
    out << "gradient           " << options.grad_configs << "       " << s.grad_violations
        << "           max rel err " << format_double(s.grad_max_rel_err) << "\n";
    out << "output bound       " << s.output.checks << "    " << s.output.violations
        << "           max lhs/rhs " << format_double(s.output.max_ratio) << "\n";
    out << "perturbation bound " << s.perturbation.checks << "    " << s.perturbation.violations
        << "           max lhs/rhs " << format_double(s.perturbation.max_ratio) << "\n";
    out << "psi integral       " << s.psi_checks << "     " << s.psi_violations << "\n";

    std::ofstream report(cfg.out_dir + "/verify.txt");
    report << out.str();
    return {s.ok() ? 0 : 1, out.str()};
}

}  // namespace unroll
