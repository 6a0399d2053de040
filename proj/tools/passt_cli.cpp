// passt: command-line front end for the PASST sampling lab.
//
// Subcommands: gen, ingest, train-model, train-policy, eval, run,
// export-plots. All configuration comes from a JSON file plus --set
// key=value overrides; every output directory gets a run manifest with
// content hashes of the inputs so runs can be verified and reproduced.

#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "passt/eval.hpp"
#include "passt/flowgen.hpp"
#include "passt/loop.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace passt;

namespace {

// ---------------------------------------------------------------- config ---

json load_config(const std::string& path, const std::vector<std::string>& sets) {
    json cfg = json::object();
    if (!path.empty()) {
        std::ifstream f(path);
        if (!f) throw IoError("cannot open config file " + path);
        try {
            f >> cfg;
        } catch (const json::exception& e) {
            throw ConfigError("bad JSON in " + path + ": " + e.what());
        }
        if (!cfg.is_object()) throw ConfigError("config root must be a JSON object");
    }
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        const std::string key = kv.substr(0, eq);
        const std::string raw = kv.substr(eq + 1);
        json value;
        try {
            value = json::parse(raw);
        } catch (const json::exception&) {
            value = raw;  // unquoted strings are convenient on the shell
        }
        // dotted keys address nested objects: gp.length_scale=1.5
        json* node = &cfg;
        std::string rest = key;
        for (size_t dot = rest.find('.'); dot != std::string::npos; dot = rest.find('.')) {
            node = &(*node)[rest.substr(0, dot)];
            rest = rest.substr(dot + 1);
        }
        (*node)[rest] = value;
    }
    return cfg;
}

template <typename T>
T get_or(const json& cfg, const std::string& key, T fallback) {
    if (!cfg.contains(key)) return fallback;
    try {
        return cfg.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
    }
}

unsigned int resolve_seed(const json& cfg) {
    if (cfg.contains("seed")) return cfg.at("seed").get<unsigned int>();
    if (const char* env = std::getenv("PASST_SEED")) {
        try {
            return static_cast<unsigned int>(std::stoul(env));
        } catch (const std::exception&) {
            throw ConfigError("PASST_SEED is not a number: " + std::string(env));
        }
    }
    return 0;
}

// -------------------------------------------------------------- manifest ---

// FNV-1a over the raw bytes of a file, or of every file under a directory in
// path order. Cheap, stable, and enough to verify inputs byte-for-byte.
std::uint64_t fnv1a_file(const fs::path& p, std::uint64_t h) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot hash " + p.string());
    char buf[1 << 14];
    while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
        for (std::streamsize i = 0; i < f.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    return h;
}

std::string content_hash(const std::string& path) {
    std::uint64_t h = 1469598103934665603ull;
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::recursive_directory_iterator(path)) {
            if (e.is_regular_file()) files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& p : files) h = fnv1a_file(p, h);
    } else {
        h = fnv1a_file(path, h);
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

std::string timestamp_utc() {
    std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

void write_manifest(const std::string& out_dir, const std::string& command, const json& cfg,
                    unsigned int seed, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
    json m;
    m["command"] = command;
    m["config"] = cfg;
    m["seed"] = seed;
    m["timestamp"] = timestamp_utc();
    m["hash_algorithm"] = "fnv1a64";
    m["inputs"] = json::array();
    for (const auto& p : inputs) {
        m["inputs"].push_back({{"path", p}, {"hash", content_hash(p)}});
    }
    m["outputs"] = outputs;
    std::ofstream f(fs::path(out_dir) / "run_manifest.json");
    if (!f) throw IoError("cannot write run_manifest.json in " + out_dir);
    f << m.dump(2) << "\n";
}

void require_new_dir(const std::string& dir) {
    if (fs::exists(fs::path(dir) / "run_manifest.json")) {
        throw ConfigError("output directory " + dir + " already holds a run (append-only)");
    }
    fs::create_directories(dir);
}

// ------------------------------------------------------------- commands ---

int cmd_gen(const json& cfg, const std::string& out_dir) {
    const std::string preset = get_or<std::string>(cfg, "preset", "stationary");
    VortexStreetConfig vc;
    if (preset == "stationary") {
        vc = stationary_street_preset();
    } else if (preset == "oscillating") {
        vc = oscillating_street_preset();
    } else {
        throw ConfigError("unknown street preset '" + preset + "'");
    }
    vc.n_steps = get_or(cfg, "n_steps", vc.n_steps);
    vc.inflow_speed = get_or(cfg, "inflow_speed", vc.inflow_speed);
    vc.street_spacing = get_or(cfg, "street_spacing", vc.street_spacing);
    vc.row_offset = get_or(cfg, "row_offset", vc.row_offset);
    vc.circulation = get_or(cfg, "circulation", vc.circulation);
    vc.core_radius = get_or(cfg, "core_radius", vc.core_radius);
    vc.advection_speed = get_or(cfg, "advection_speed", vc.advection_speed);
    vc.oscillation_amplitude = get_or(cfg, "oscillation_amplitude", vc.oscillation_amplitude);
    vc.oscillation_period = get_or(cfg, "oscillation_period", vc.oscillation_period);
    vc.window.n_rows = get_or(cfg, "n_rows", vc.window.n_rows);
    vc.window.n_cols = get_or(cfg, "n_cols", vc.window.n_cols);

    auto series = generate_vortex_street(vc);
    require_new_dir(out_dir);
    const std::string pack = (fs::path(out_dir) / "pack").string();
    write_flowpack(series, pack);
    write_manifest(out_dir, "gen", cfg, vc.seed, {}, {pack});
    std::cout << "wrote " << series.size() << " snapshots to " << pack << "\n";
    return 0;
}

int cmd_ingest(const json& cfg, const std::vector<std::string>& files, const std::string& out_dir) {
    if (files.empty()) throw ConfigError("ingest needs at least one CSV file");
    GridSpec spec;
    spec.n_rows = get_or(cfg, "n_rows", 30);
    spec.n_cols = get_or(cfg, "n_cols", 30);
    spec.cell_size = get_or(cfg, "cell_size", 1.0);
    auto series = ingest_csv_currents(files, spec);
    require_new_dir(out_dir);
    const std::string pack = (fs::path(out_dir) / "pack").string();
    write_flowpack(series, pack);
    write_manifest(out_dir, "ingest", cfg, 0, files, {pack});
    std::cout << "ingested " << series.size() << " snapshots (" << series.filled_cells.size()
              << " cells gap-filled)\n";
    return 0;
}

FlowSeries load_window(const std::string& pack, int first, int last) {
    auto series = read_flowpack(pack);
    if (first < 0 || last >= static_cast<int>(series.size()) || first >= last) {
        throw ConfigError("window [" + std::to_string(first) + "," + std::to_string(last) +
                          "] does not fit the pack (" + std::to_string(series.size()) +
                          " snapshots)");
    }
    FlowSeries w;
    w.spec = series.spec;
    w.dt = series.dt;
    w.source = series.source;
    for (int t = first; t <= last; ++t) w.snapshots.push_back(series.snapshots[static_cast<size_t>(t)]);
    return w;
}

int cmd_train_model(const json& cfg, const std::string& pack, const std::string& out_dir) {
    const int first = get_or(cfg, "window_first", 200);
    const int last = get_or(cfg, "window_last", 300);
    auto window = load_window(pack, first, last);

    TrainConfig tc;
    tc.epochs = get_or(cfg, "epochs", tc.epochs);
    tc.learning_rate = get_or(cfg, "learning_rate", tc.learning_rate);
    tc.noise_variance = get_or(cfg, "noise_variance", tc.noise_variance);
    tc.batch_stride = get_or(cfg, "batch_stride", tc.batch_stride);
    tc.rng_seed = resolve_seed(cfg);

    const std::string preset = get_or<std::string>(cfg, "arch", "reference");
    auto arch = arch_preset(preset, window.spec.n_rows, window.spec.n_cols);

    auto result = train(window, arch, tc);
    require_new_dir(out_dir);
    const std::string ckpt = (fs::path(out_dir) / "checkpoint").string();
    save_knode_checkpoint(ckpt, result.model, result.loss_history);
    {
        std::ofstream f(fs::path(out_dir) / "loss_history.csv");
        if (!f) throw IoError("cannot write loss_history.csv in " + out_dir);
        f << "epoch,loss\n";
        for (size_t i = 0; i < result.loss_history.size(); ++i) {
            f << i + 1 << "," << result.loss_history[i] << "\n";
        }
    }
    write_manifest(out_dir, "train-model", cfg, tc.rng_seed, {pack}, {ckpt});
    const double final_loss = result.loss_history.empty() ? loss(result.model, window)
                                                          : result.loss_history.back();
    std::cout << "trained " << tc.epochs << " epochs, final loss " << final_loss << "\n";
    return 0;
}

int cmd_train_policy(const json& cfg, const std::string& out_dir) {
    PolicyTrainConfig pc;
    pc.n_maps = get_or(cfg, "n_maps", pc.n_maps);
    pc.gmm_components = get_or(cfg, "gmm_components", pc.gmm_components);
    pc.horizon = get_or(cfg, "horizon", pc.horizon);
    pc.episodes_per_map = get_or(cfg, "episodes_per_map", pc.episodes_per_map);
    pc.learning_rate = get_or(cfg, "learning_rate", pc.learning_rate);
    pc.map_rows = get_or(cfg, "map_rows", pc.map_rows);
    pc.map_cols = get_or(cfg, "map_cols", pc.map_cols);
    pc.seed = resolve_seed(cfg);

    auto policy = train_policy(pc);
    require_new_dir(out_dir);
    const std::string file = (fs::path(out_dir) / "policy.json").string();
    json pcfg = {{"n_maps", pc.n_maps},       {"gmm_components", pc.gmm_components},
                 {"horizon", pc.horizon},     {"episodes_per_map", pc.episodes_per_map},
                 {"learning_rate", pc.learning_rate}, {"map_rows", pc.map_rows},
                 {"map_cols", pc.map_cols},   {"seed", pc.seed}};
    save_policy(policy, file, pcfg.dump());
    write_manifest(out_dir, "train-policy", cfg, pc.seed, {}, {file});
    std::cout << "trained policy (" << policy.theta.size() << " weights) -> " << file << "\n";
    return 0;
}

int cmd_eval(const json& cfg, const std::string& ckpt, const std::string& pack,
             const std::string& out_dir) {
    const int first = get_or(cfg, "window_first", 300);
    const int last = get_or(cfg, "window_last", 400);
    auto window = load_window(pack, first, last);
    auto model = load_knode_checkpoint(ckpt);

    std::vector<int> lookaheads = get_or(cfg, "lookaheads", kDefaultLookaheads);
    const std::string dataset = get_or<std::string>(cfg, "dataset", "");
    auto report = lookahead_eval(model, window, lookaheads, dataset);

    require_new_dir(out_dir);
    write_lookahead_csv(report, (fs::path(out_dir) / "lookahead.csv").string());
    auto spectrum = pod(window);
    write_pod_csv(spectrum, (fs::path(out_dir) / "pod_truth.csv").string());
    write_manifest(out_dir, "eval", cfg, 0, {ckpt, pack},
                   {(fs::path(out_dir) / "lookahead.csv").string(),
                    (fs::path(out_dir) / "pod_truth.csv").string()});
    std::cout << "lookahead report over [" << first << "," << last << "] -> " << out_dir << "\n";
    return 0;
}

LoopConfig loop_config_from_json(const json& cfg) {
    LoopConfig lc;
    lc.path_horizon = get_or(cfg, "path_horizon", lc.path_horizon);
    lc.total_steps = get_or(cfg, "total_steps", lc.total_steps);
    lc.frozen_world = get_or(cfg, "frozen_world", lc.frozen_world);
    lc.fresh_measurements_only = get_or(cfg, "fresh_measurements_only", lc.fresh_measurements_only);
    lc.staleness_weight = get_or(cfg, "staleness_weight", lc.staleness_weight);
    lc.policy_mode = get_or<std::string>(cfg, "policy_mode", "sample") == "greedy"
                         ? RolloutMode::Greedy
                         : RolloutMode::Sample;
    if (cfg.contains("start_row") || cfg.contains("start_col")) {
        lc.start_cell = Cell{get_or(cfg, "start_row", 0), get_or(cfg, "start_col", 0)};
    }
    if (cfg.contains("gp")) {
        const auto& g = cfg.at("gp");
        lc.gp.length_scale = get_or(g, "length_scale", lc.gp.length_scale);
        lc.gp.signal_variance = get_or(g, "signal_variance", lc.gp.signal_variance);
        lc.gp.noise_variance = get_or(g, "noise_variance", lc.gp.noise_variance);
    }
    return lc;
}

int cmd_run(const json& cfg, const std::string& model_ckpt, const std::string& policy_file,
            const std::string& pack, const std::string& out_dir) {
    const int first = get_or(cfg, "window_first", 0);
    auto series = read_flowpack(pack);
    LoopConfig base = loop_config_from_json(cfg);
    base.seed = resolve_seed(cfg);
    const int n_trials = get_or(cfg, "n_trials", 30);
    if (n_trials < 1) throw ConfigError("n_trials must be >= 1");
    const bool baseline = get_or(cfg, "baseline", false);

    const int needed = base.frozen_world
                           ? (base.total_steps + base.path_horizon - 1) / base.path_horizon + 1
                           : base.total_steps + 1;
    auto window = load_window(pack, first, first + needed - 1);
    (void)series;

    auto model = load_knode_checkpoint(model_ckpt);
    auto policy = load_policy(policy_file);

    require_new_dir(out_dir);
    const int rmse_first = get_or(cfg, "rmse_window_first", 100);
    const int rmse_last = get_or(cfg, "rmse_window_last", std::min(base.total_steps, 300));

    std::vector<LoopTrace> traces(static_cast<size_t>(n_trials));
    if (baseline) {
        traces[0] = run_baseline(model, window, base.total_steps);
        traces.resize(1);
    } else {
        // independent trials, read-only shared inputs
        std::vector<std::future<LoopTrace>> jobs;
        for (int t = 0; t < n_trials; ++t) {
            LoopConfig lc = base;
            lc.seed = base.seed + static_cast<unsigned int>(t);
            jobs.push_back(std::async(std::launch::async, [&model, &window, &policy, lc] {
                return run_passt(model, window, policy, lc);
            }));
        }
        for (int t = 0; t < n_trials; ++t) traces[static_cast<size_t>(t)] = jobs[static_cast<size_t>(t)].get();
    }

    std::ofstream sum(fs::path(out_dir) / "summary.csv");
    if (!sum) throw IoError("cannot write summary.csv in " + out_dir);
    sum << "trial,seed,mean_rmse,pod_cum_1,pod_cum_2,pod_cum_3,pod_cum_4\n";
    std::vector<std::string> outputs;
    for (size_t t = 0; t < traces.size(); ++t) {
        char name[32];
        std::snprintf(name, sizeof(name), "trial_%03zu", t);
        const std::string dir = (fs::path(out_dir) / name).string();
        export_trace(traces[t], window, dir);
        outputs.push_back(dir);

        std::vector<FlowSnapshot> estimates;
        for (const auto& s : traces[t].steps) estimates.push_back(s.estimate);
        auto spectrum = pod(estimates);
        sum << t << "," << base.seed + t << "," << traces[t].mean_rmse(rmse_first, rmse_last);
        for (int m = 1; m <= 4; ++m) sum << "," << spectrum.cumulative_at(m);
        sum << "\n";
    }
    write_manifest(out_dir, "run", cfg, base.seed, {model_ckpt, policy_file, pack}, outputs);
    std::cout << (baseline ? "baseline" : "passt") << " run, " << traces.size() << " trial(s) -> "
              << out_dir << "\n";
    return 0;
}

int cmd_export_plots(const std::string& trace_dir, const std::string& out_dir) {
    std::vector<fs::path> trials;
    if (fs::is_directory(trace_dir)) {
        for (const auto& e : fs::directory_iterator(trace_dir)) {
            if (e.is_directory() && e.path().filename().string().rfind("trial_", 0) == 0) {
                trials.push_back(e.path());
            }
        }
    }
    std::sort(trials.begin(), trials.end());
    if (trials.empty()) throw IoError("no trial_* directories under " + trace_dir);

    // per-step rmse across trials
    std::vector<std::vector<double>> rmse_by_trial;
    for (const auto& trial : trials) {
        std::ifstream f(trial / "trace.csv");
        if (!f) throw IoError("missing trace.csv in " + trial.string());
        std::string line;
        std::getline(f, line);  // header
        std::vector<double> r;
        while (std::getline(f, line)) {
            std::stringstream ss(line);
            std::string tok;
            for (int i = 0; i < 4 && std::getline(ss, tok, ','); ++i) {
                if (i == 3) r.push_back(std::stod(tok));
            }
        }
        if (!rmse_by_trial.empty() && r.size() != rmse_by_trial.front().size()) {
            throw FormatError("trial traces disagree on step count");
        }
        rmse_by_trial.push_back(std::move(r));
    }

    fs::create_directories(out_dir);
    {
        std::ofstream f(fs::path(out_dir) / "rmse_vs_step.csv");
        if (!f) throw IoError("cannot write rmse_vs_step.csv in " + out_dir);
        f << "step,mean_rmse,std_rmse,n_trials\n";
        const size_t n_steps = rmse_by_trial.front().size();
        const double n = static_cast<double>(rmse_by_trial.size());
        for (size_t s = 0; s < n_steps; ++s) {
            double mean = 0.0;
            for (const auto& r : rmse_by_trial) mean += r[s];
            mean /= n;
            double var = 0.0;
            for (const auto& r : rmse_by_trial) var += (r[s] - mean) * (r[s] - mean);
            const double sd = n > 1 ? std::sqrt(var / (n - 1)) : 0.0;
            f << s + 1 << "," << mean << "," << sd << "," << rmse_by_trial.size() << "\n";
        }
    }
    {
        std::ofstream f(fs::path(out_dir) / "pod_energy.csv");
        if (!f) throw IoError("cannot write pod_energy.csv in " + out_dir);
        f << "trial,mode,cumulative\n";
        for (size_t t = 0; t < trials.size(); ++t) {
            auto estimates = read_flowpack((trials[t] / "estimates").string());
            auto spectrum = pod(estimates);
            for (size_t m = 0; m < spectrum.cumulative_energy.size(); ++m) {
                f << t << "," << m + 1 << "," << spectrum.cumulative_energy[m] << "\n";
            }
        }
    }
    // pass through any lookahead report living next to the traces
    if (fs::exists(fs::path(trace_dir) / "lookahead.csv")) {
        fs::copy_file(fs::path(trace_dir) / "lookahead.csv", fs::path(out_dir) / "lookahead.csv",
                      fs::copy_options::overwrite_existing);
    }
    std::cout << "plot data -> " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PASST: predictive adaptive sampling over synthetic flow fields"};
    app.require_subcommand(1);
    // --config/--set live on the app; let them appear after the subcommand too
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> sets;
    app.add_option("--config", config_path, "JSON config file")->capture_default_str();
    app.add_option("--set", sets, "override config keys, key=value (dotted keys nest)");

    std::string out_dir;
    std::string pack, ckpt, policy_file, trace_dir;
    std::vector<std::string> csv_files;

    auto* gen = app.add_subcommand("gen", "generate a synthetic vortex street");
    gen->add_option("--out", out_dir, "output directory")->required();

    auto* ingest = app.add_subcommand("ingest", "ingest per-snapshot CSV current files");
    ingest->add_option("files", csv_files, "CSV files, one per snapshot");
    ingest->add_option("--out", out_dir, "output directory")->required();

    auto* train_model = app.add_subcommand("train-model", "train the KNODE flow model");
    train_model->add_option("--pack", pack, "FlowPack directory")->required();
    train_model->add_option("--out", out_dir, "output directory")->required();

    auto* train_pol = app.add_subcommand("train-policy", "train the REINFORCE sampling policy");
    train_pol->add_option("--out", out_dir, "output directory")->required();

    auto* eval_cmd = app.add_subcommand("eval", "lookahead evaluation of a checkpoint");
    eval_cmd->add_option("--checkpoint", ckpt, "model checkpoint directory")->required();
    eval_cmd->add_option("--pack", pack, "FlowPack directory")->required();
    eval_cmd->add_option("--out", out_dir, "output directory")->required();

    auto* run = app.add_subcommand("run", "closed-loop PASST trials (or baseline)");
    run->add_option("--model", ckpt, "model checkpoint directory")->required();
    run->add_option("--policy", policy_file, "policy JSON file")->required();
    run->add_option("--pack", pack, "FlowPack directory")->required();
    run->add_option("--out", out_dir, "output directory")->required();

    auto* plots = app.add_subcommand("export-plots", "tidy CSVs from a run directory");
    plots->add_option("--trace-dir", trace_dir, "directory holding trial_* subdirectories")
        ->required();
    plots->add_option("--out", out_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        const json cfg = load_config(config_path, sets);
        if (gen->parsed()) return cmd_gen(cfg, out_dir);
        if (ingest->parsed()) return cmd_ingest(cfg, csv_files, out_dir);
        if (train_model->parsed()) return cmd_train_model(cfg, pack, out_dir);
        if (train_pol->parsed()) return cmd_train_policy(cfg, out_dir);
        if (eval_cmd->parsed()) return cmd_eval(cfg, ckpt, pack, out_dir);
        if (run->parsed()) return cmd_run(cfg, ckpt, policy_file, pack, out_dir);
        if (plots->parsed()) return cmd_export_plots(trace_dir, out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const SchemaError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DivergedError& e) {
        std::cerr << "numerical divergence: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
