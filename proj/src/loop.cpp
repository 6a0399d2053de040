#include "passt/loop.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "passt/eval.hpp"

namespace passt {

namespace fs = std::filesystem;

void LoopConfig::validate() const {
    if (path_horizon < 1) throw ConfigError("path_horizon must be >= 1");
    if (total_steps < path_horizon) throw ConfigError("total_steps must be >= path_horizon");
    if (staleness_weight < 0.0) throw ConfigError("staleness_weight must be >= 0");
    gp.validate();
}

double LoopTrace::mean_rmse(int first_step, int last_step) const {
    double total = 0.0;
    int count = 0;
    for (const auto& s : steps) {
        if (s.step >= first_step && s.step <= last_step) {
            total += s.rmse_vs_truth;
            ++count;
        }
    }
    if (count == 0) throw ConfigError("no steps in requested RMSE window");
    return total / count;
}

namespace {

constexpr std::array<int, kNumActions> kRowStep{1, 0, -1, 0};
constexpr std::array<int, kNumActions> kColStep{0, 1, 0, -1};

int choose_action(const PolicyParams& policy, const RewardMap& map, Cell pos,
                  const std::vector<bool>& cycle_visited, RolloutMode mode, std::mt19937_64& rng) {
    const auto base = featurize(map, pos, cycle_visited, policy.feature_config);
    const auto legal = legal_actions(map.spec, pos);
    std::array<std::vector<double>, kNumActions> feats;
    for (int a = 0; a < kNumActions; ++a) {
        feats[static_cast<size_t>(a)] = action_features(base, policy.feature_config, a);
    }
    const auto probs = action_distribution(policy, feats, legal);
    if (mode == RolloutMode::Greedy) {
        int best = -1;
        double best_p = -1.0;
        for (int a = 0; a < kNumActions; ++a) {
            if (legal[static_cast<size_t>(a)] && probs[static_cast<size_t>(a)] > best_p) {
                best = a;
                best_p = probs[static_cast<size_t>(a)];
            }
        }
        return best;
    }
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    const double u = dist(rng);
    double cum = 0.0;
    int last_legal = -1;
    for (int a = 0; a < kNumActions; ++a) {
        if (!legal[static_cast<size_t>(a)]) continue;
        last_legal = a;
        cum += probs[static_cast<size_t>(a)];
        if (u <= cum) return a;
    }
    return last_legal;
}

}  // namespace

LoopTrace run_passt(const KnodeModel& model, const FlowSeries& truth, const PolicyParams& policy,
                    const LoopConfig& config) {
    config.validate();
    model.validate();
    policy.validate();
    truth.validate();
    const auto& g = truth.spec;
    if (g.n_rows != model.arch.n_rows || g.n_cols != model.arch.n_cols) {
        throw ShapeError("truth grid does not match model architecture");
    }
    const int n_cycles = config.frozen_world ? (config.total_steps + config.path_horizon - 1) /
                                                   config.path_horizon
                                             : 0;
    const int needed = config.frozen_world ? n_cycles + 1 : config.total_steps + 1;
    if (static_cast<int>(truth.size()) < needed) {
        throw ConfigError("truth series too short for requested total_steps");
    }

    std::mt19937_64 rng(config.seed);
    Cell robot = config.start_cell.value_or(Cell{g.n_rows / 2, g.n_cols / 2});
    if (robot.row < 0 || robot.row >= g.n_rows || robot.col < 0 || robot.col >= g.n_cols) {
        throw OutOfBoundsError("start cell outside grid");
    }

    LoopTrace trace;
    FlowSnapshot state = truth.snapshots.front();
    std::vector<double> staleness(static_cast<size_t>(g.n_cells()), 0.0);
    std::vector<bool> cycle_visited(static_cast<size_t>(g.n_cells()), false);
    MeasurementSet measurements;
    SamplePath cycle_path;
    cycle_path.cells.push_back(robot);
    std::vector<Vec2> cycle_readings;
    int cycle_id = 0;

    for (int step_i = 1; step_i <= config.total_steps; ++step_i) {
        const int world_time = config.frozen_world ? cycle_id + 1 : step_i;

        // Advance the model one snapshot interval. In frozen-world mode only
        // the first robot step of a cycle advances the model.
        const bool advance_model = !config.frozen_world || ((step_i - 1) % config.path_horizon == 0);
        if (advance_model) state = step(model, state);

        for (double& s : staleness) s += 1.0;
        RewardMap reward = reward_from_prediction(state, staleness, config.staleness_weight);

        const int action = choose_action(policy, reward, robot, cycle_visited, config.policy_mode, rng);
        robot = Cell{robot.row + kRowStep[action], robot.col + kColStep[action]};
        cycle_visited[static_cast<size_t>(robot.row * g.n_cols + robot.col)] = true;
        staleness[static_cast<size_t>(robot.row * g.n_cols + robot.col)] = 0.0;

        const auto& truth_snap = truth.snapshots[static_cast<size_t>(world_time)];
        const Vec2 measurement = truth_snap.vec(robot.row, robot.col);
        cycle_path.cells.push_back(robot);
        cycle_readings.push_back(measurement);

        LoopStep rec;
        rec.step = step_i;
        rec.world_time = world_time;
        rec.cycle_id = cycle_id;
        rec.robot = robot;
        rec.measurement = measurement;
        rec.estimate = state;
        rec.rmse_vs_truth = rmse(state, truth_snap);
        rec.reward_map = reward;
        trace.steps.push_back(std::move(rec));

        const bool cycle_end = step_i % config.path_horizon == 0 || step_i == config.total_steps;
        if (cycle_end) {
            // Ages track how far the world has moved since a sample was
            // taken: one snapshot per cycle when the world is frozen during
            // sampling, one per robot step otherwise.
            const int cycle_steps = static_cast<int>(cycle_readings.size());
            if (config.fresh_measurements_only) {
                measurements = MeasurementSet{};
            } else {
                age_measurements(measurements, config.frozen_world ? 1 : cycle_steps);
            }
            // The start cell of the first cycle carries no reading; drop it
            // from the merge by aligning readings with entered cells only.
            SamplePath entered;
            entered.cells.assign(cycle_path.cells.begin() + 1, cycle_path.cells.end());
            measurements = merge_measurements(
                measurements, entered,
                [&](Cell, size_t i) { return cycle_readings[i]; }, cycle_id);

            // Keep the re-initialized state inside the range spanned by the
            // prior and the measurements, per component; the GP posterior can
            // overshoot when readings taken at different times disagree.
            std::array<double, 2> lo{}, hi{};
            for (int comp = 0; comp < 2; ++comp) {
                lo[static_cast<size_t>(comp)] = std::numeric_limits<double>::infinity();
                hi[static_cast<size_t>(comp)] = -std::numeric_limits<double>::infinity();
            }
            for (int r = 0; r < g.n_rows; ++r) {
                for (int c = 0; c < g.n_cols; ++c) {
                    for (int comp = 0; comp < 2; ++comp) {
                        const double v = state.at(r, c, comp);
                        lo[static_cast<size_t>(comp)] = std::min(lo[static_cast<size_t>(comp)], v);
                        hi[static_cast<size_t>(comp)] = std::max(hi[static_cast<size_t>(comp)], v);
                    }
                }
            }
            for (const auto& m : measurements.items) {
                for (int comp = 0; comp < 2; ++comp) {
                    lo[static_cast<size_t>(comp)] =
                        std::min(lo[static_cast<size_t>(comp)], m.value[static_cast<size_t>(comp)]);
                    hi[static_cast<size_t>(comp)] =
                        std::max(hi[static_cast<size_t>(comp)], m.value[static_cast<size_t>(comp)]);
                }
            }

            state = gp_reconstruct(measurements, state, config.gp);
            for (int r = 0; r < g.n_rows; ++r) {
                for (int c = 0; c < g.n_cols; ++c) {
                    for (int comp = 0; comp < 2; ++comp) {
                        double& v = state.at(r, c, comp);
                        v = std::clamp(v, lo[static_cast<size_t>(comp)],
                                       hi[static_cast<size_t>(comp)]);
                    }
                }
            }
            state.time_index = world_time;
            trace.reconstructions.push_back(state);

            std::fill(cycle_visited.begin(), cycle_visited.end(), false);
            cycle_path = SamplePath{};
            cycle_path.cells.push_back(robot);
            cycle_readings.clear();
            ++cycle_id;
        }
    }
    return trace;
}

LoopTrace run_baseline(const KnodeModel& model, const FlowSeries& truth, int total_steps) {
    model.validate();
    truth.validate();
    if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
    if (static_cast<int>(truth.size()) < total_steps + 1) {
        throw ConfigError("truth series too short for requested total_steps");
    }
    if (truth.spec.n_rows != model.arch.n_rows || truth.spec.n_cols != model.arch.n_cols) {
        throw ShapeError("truth grid does not match model architecture");
    }

    LoopTrace trace;
    trace.baseline = true;
    FlowSnapshot state = truth.snapshots.front();
    for (int step_i = 1; step_i <= total_steps; ++step_i) {
        state = step(model, state);
        LoopStep rec;
        rec.step = step_i;
        rec.world_time = step_i;
        rec.cycle_id = 0;
        rec.robot = Cell{-1, -1};
        rec.estimate = state;
        rec.rmse_vs_truth = rmse(state, truth.snapshots[static_cast<size_t>(step_i)]);
        trace.steps.push_back(std::move(rec));
    }
    return trace;
}

void export_trace(const LoopTrace& trace, const FlowSeries& truth, const std::string& dir) {
    if (trace.steps.empty()) throw ConfigError("empty trace");
    fs::create_directories(dir);

    {
        std::ofstream f(fs::path(dir) / "trace.csv");
        if (!f) throw IoError("cannot write trace.csv in " + dir);
        f << "step,robot_row,robot_col,rmse_vs_truth,cycle_id\n";
        for (const auto& s : trace.steps) {
            f << s.step << "," << s.robot.row << "," << s.robot.col << "," << s.rmse_vs_truth
              << "," << s.cycle_id << "\n";
        }
    }

    FlowSeries estimates;
    estimates.spec = truth.spec;
    estimates.dt = 1.0;
    estimates.source = trace.baseline ? "passt-baseline-estimates" : "passt-estimates";
    for (size_t i = 0; i < trace.steps.size(); ++i) {
        FlowSnapshot snap = trace.steps[i].estimate;
        snap.time_index = static_cast<int>(i);
        estimates.snapshots.push_back(std::move(snap));
    }
    write_flowpack(estimates, (fs::path(dir) / "estimates").string());

    if (trace.reconstructions.size() >= 2) {
        FlowSeries recons;
        recons.spec = truth.spec;
        recons.dt = 1.0;
        recons.source = "passt-reconstructions";
        for (size_t i = 0; i < trace.reconstructions.size(); ++i) {
            FlowSnapshot snap = trace.reconstructions[i];
            snap.time_index = static_cast<int>(i);
            recons.snapshots.push_back(std::move(snap));
        }
        write_flowpack(recons, (fs::path(dir) / "reconstructions").string());
    }
}

}  // namespace passt
