#pragma once

#include <functional>
#include <vector>

#include "passt/grid.hpp"
#include "passt/planner.hpp"

namespace passt {

struct Measurement {
    Cell cell;
    Vec2 value{0.0, 0.0};
    int age = 0;  // loop cycles since measured
};

struct MeasurementSet {
    std::vector<Measurement> items;
    std::vector<int> source_path_ids;

    void validate(const GridSpec& spec) const;
};

struct GpConfig {
    // Squared-exponential kernel over (row, col) cell coordinates.
    double length_scale = 3.0;     // cells
    double signal_variance = 1.0;
    double noise_variance = 1e-4;
    enum class Prior { Zero, ModelPrediction } prior = Prior::ModelPrediction;

    void validate() const;
};

// Per-component GP posterior mean over the full grid. The prior mean is
// prior_field (or zero, per config), so the posterior is a measurement-driven
// correction on top of it. Stale measurements get noise inflated by (1+age).
FlowSnapshot gp_reconstruct(const MeasurementSet& meas, const FlowSnapshot& prior_field,
                            const GpConfig& config);

// Appends readings taken along a path; `truth_access(cell, path_index)` yields
// the ground-truth velocity at the visit. A revisited cell keeps only the
// newest reading.
MeasurementSet merge_measurements(const MeasurementSet& existing, const SamplePath& path,
                                  const std::function<Vec2(Cell, size_t)>& truth_access,
                                  int path_id = 0);

// Ages every measurement by the given number of loop cycles.
void age_measurements(MeasurementSet& meas, int cycles = 1);

}  // namespace passt
