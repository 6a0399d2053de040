#pragma once

#include <optional>
#include <string>
#include <vector>

#include "passt/grid.hpp"
#include "passt/knode.hpp"
#include "passt/planner.hpp"
#include "passt/reconstruct.hpp"

namespace passt {

struct LoopConfig {
    int path_horizon = 30;   // robot steps between re-initializations
    int total_steps = 300;
    std::optional<Cell> start_cell;  // defaults to the grid center
    RolloutMode policy_mode = RolloutMode::Sample;
    unsigned int seed = 0;
    // When true the world pauses while the robot samples and advances one
    // snapshot per completed cycle; otherwise it advances one snapshot per
    // robot step.
    bool frozen_world = false;
    // When true, only the latest cycle's samples feed the reconstruction;
    // older samples are discarded instead of down-weighted by age.
    bool fresh_measurements_only = false;
    double staleness_weight = 0.5;
    GpConfig gp;

    void validate() const;
};

struct LoopStep {
    int step = 0;        // robot step index, 1-based
    int world_time = 0;  // truth snapshot index the step is compared against
    int cycle_id = 0;
    Cell robot;
    Vec2 measurement{0.0, 0.0};
    double rmse_vs_truth = 0.0;
    FlowSnapshot estimate;   // model's current state
    RewardMap reward_map;
};

struct LoopTrace {
    std::vector<LoopStep> steps;
    std::vector<FlowSnapshot> reconstructions;  // re-initialized U(0) per cycle
    bool baseline = false;

    [[nodiscard]] double mean_rmse(int first_step, int last_step) const;
};

// Full PASST loop: one-step prediction -> reward map -> one planner action ->
// ground-truth measurement; after path_horizon steps the accumulated samples
// are GP-fused with the model state, which becomes the new initial state.
LoopTrace run_passt(const KnodeModel& model, const FlowSeries& truth, const PolicyParams& policy,
                    const LoopConfig& config);

// Open-loop rollout from the first truth snapshot; no sampling corrections.
LoopTrace run_baseline(const KnodeModel& model, const FlowSeries& truth, int total_steps);

// Directory of FlowPacks (estimates, reconstructions) plus trace.csv.
void export_trace(const LoopTrace& trace, const FlowSeries& truth, const std::string& dir);

}  // namespace passt
