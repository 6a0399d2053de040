#pragma once

#include <string>
#include <vector>

#include "passt/grid.hpp"
#include "passt/knode.hpp"

namespace passt {

struct PodSpectrum {
    std::vector<double> singular_values;   // descending
    std::vector<double> energy_fractions;  // sigma_i^2 / sum sigma^2
    std::vector<double> cumulative_energy;
    int n_snapshots = 0;
    bool mean_subtracted = true;

    [[nodiscard]] double cumulative_at(int n_modes) const;
};

struct LookaheadReport {
    std::vector<int> lookaheads;
    std::vector<double> mean_mse;
    std::vector<double> mean_cosine_distance;
    std::string dataset;
};

inline const std::vector<int> kDefaultLookaheads{1, 2, 5, 10, 20, 50, 100};

// Mean over cells of the squared 2-vector difference (components summed).
double mse(const FlowSnapshot& a, const FlowSnapshot& b);
double rmse(const FlowSnapshot& a, const FlowSnapshot& b);

// 1 - mean cosine similarity over cells; cells where either vector has norm
// below 1e-12 are excluded, and 0 is returned if every cell is excluded.
double cosine_distance(const FlowSnapshot& a, const FlowSnapshot& b);

// Rolls out from every valid start and reports per-lookahead means.
LookaheadReport lookahead_eval(const KnodeModel& model, const FlowSeries& series,
                               const std::vector<int>& lookaheads = kDefaultLookaheads,
                               const std::string& dataset = "");

struct DegenerateDataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Snapshot POD: each snapshot flattened to a column, temporal mean subtracted
// (switchable), singular values from the SVD of the snapshot matrix.
PodSpectrum pod(const std::vector<FlowSnapshot>& snapshots, bool subtract_mean = true);
PodSpectrum pod(const FlowSeries& series, bool subtract_mean = true);

void write_lookahead_csv(const LookaheadReport& report, const std::string& path);
void write_pod_csv(const PodSpectrum& spectrum, const std::string& path);

}  // namespace passt
