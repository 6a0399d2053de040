#pragma once

#include <string>
#include <vector>

#include "passt/grid.hpp"
#include "passt/netcore.hpp"

namespace passt {

// Continuous-time predictive model: the learned vector field is the network
// output passed through spatial Gaussian smoothing, integrated with fixed-step
// explicit Euler over one snapshot interval.
struct KnodeModel {
    NetArchitecture arch;
    ParameterVector params;
    SmoothingKernel kernel{5, 0.1};
    int substeps = 6;

    void validate() const;
};

struct TrainConfig {
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int epochs = 2000;
    double noise_variance = 1e-3;  // added to input snapshots each epoch, targets stay clean
    int batch_stride = 1;          // s > 1 partitions transitions by (t mod s)
    unsigned int rng_seed = 0;     // seeds both parameter init and noise

    void validate() const;
};

// Values beyond this magnitude abort integration with DivergedError.
inline constexpr double kDivergenceLimit = 1e6;

// One-step-ahead prediction from `state` over one snapshot interval.
FlowSnapshot step(const KnodeModel& model, const FlowSnapshot& state);

// Iterated step; element 0 is the initial state, length horizon + 1.
FlowSeries rollout(const KnodeModel& model, const FlowSnapshot& initial, int horizon);

// Mean squared one-step error over all cells and transitions; the squared
// 2-vector norm is summed per cell and divided by cell count and transition
// count only.
double loss(const KnodeModel& model, const FlowSeries& series);

struct TrainResult {
    KnodeModel model;
    std::vector<double> loss_history;  // one entry per epoch, Eq.-style loss over all transitions
};

// Thrown when training blows up; carries the history up to the failing epoch.
struct TrainDivergedError : DivergedError {
    TrainDivergedError(const std::string& msg, int epoch, std::vector<double> history)
        : DivergedError(msg, epoch), loss_history(std::move(history)) {}
    std::vector<double> loss_history;
};

TrainResult train(const FlowSeries& series, const NetArchitecture& arch, const TrainConfig& config);

// Checkpoints reuse the netcore format with kernel/substeps in the manifest.
void save_knode_checkpoint(const std::string& dir, const KnodeModel& model,
                           const std::vector<double>& loss_history);
KnodeModel load_knode_checkpoint(const std::string& dir);

}  // namespace passt
