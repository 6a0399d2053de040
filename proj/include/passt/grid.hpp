#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "passt/errors.hpp"

namespace passt {

using Vec2 = std::array<double, 2>;

// Uniform lattice. Row 0 is the southernmost row, column 0 the westernmost;
// storage is row-major with the 2 velocity components innermost.
struct GridSpec {
    int n_rows = 0;
    int n_cols = 0;
    double cell_size = 1.0;  // meters per cell, both axes
    double origin_x = 0.0;   // world coordinates of cell (0,0) center
    double origin_y = 0.0;

    void validate() const;
    [[nodiscard]] int n_cells() const { return n_rows * n_cols; }
    [[nodiscard]] double cell_x(int col) const { return origin_x + col * cell_size; }
    [[nodiscard]] double cell_y(int row) const { return origin_y + row * cell_size; }

    bool operator==(const GridSpec&) const = default;
};

// One gridded velocity snapshot, components (u_x eastward, u_y northward) in m/s.
struct FlowSnapshot {
    GridSpec spec;
    int time_index = 0;
    std::vector<double> values;  // [row][col][component], row-major

    FlowSnapshot() = default;
    FlowSnapshot(GridSpec s, int t);
    FlowSnapshot(GridSpec s, int t, std::vector<double> vals);

    [[nodiscard]] double& at(int row, int col, int comp) {
        return values[static_cast<size_t>((row * spec.n_cols + col) * 2 + comp)];
    }
    [[nodiscard]] double at(int row, int col, int comp) const {
        return values[static_cast<size_t>((row * spec.n_cols + col) * 2 + comp)];
    }
    [[nodiscard]] Vec2 vec(int row, int col) const { return {at(row, col, 0), at(row, col, 1)}; }

    // Throws ConfigError on NaN/Inf or size mismatch.
    void validate() const;

    bool operator==(const FlowSnapshot&) const = default;
};

// Time-ordered snapshots with uniform step (dt = 1 model unit by convention).
struct FlowSeries {
    GridSpec spec;
    std::vector<FlowSnapshot> snapshots;
    double dt = 1.0;
    std::string source;                   // free-text provenance
    std::vector<int> filled_cells;        // flat cell indices patched during ingestion

    void validate() const;
    [[nodiscard]] size_t size() const { return snapshots.size(); }
    [[nodiscard]] const FlowSnapshot& operator[](size_t i) const { return snapshots[i]; }

    bool operator==(const FlowSeries& o) const {
        return spec == o.spec && snapshots == o.snapshots && dt == o.dt;
    }
};

// Normalized symmetric Gaussian smoothing kernel on the cell lattice.
struct SmoothingKernel {
    int size = 5;           // odd
    double variance = 0.1;  // cells^2

    void validate() const;
    // size*size weights, row-major, sum exactly normalized to 1.
    [[nodiscard]] std::vector<double> weights() const;

    bool operator==(const SmoothingKernel&) const = default;
};

// Per-component convolution with replicate-edge boundary handling.
FlowSnapshot gaussian_smooth(const FlowSnapshot& field, const SmoothingKernel& kernel);

// In-place flat-buffer variants used by the training inner loop. `field` holds
// n_rows*n_cols*2 doubles in snapshot layout.
void gaussian_smooth_flat(const GridSpec& spec, const std::vector<double>& weights, int ksize,
                          const double* field, double* out);
// Adjoint of gaussian_smooth_flat as a linear map (scatter-add form).
void gaussian_smooth_adjoint_flat(const GridSpec& spec, const std::vector<double>& weights,
                                  int ksize, const double* cotangent, double* out);

// Bilinear interpolation between the four surrounding cell centers. The valid
// domain is the bounding box of the outermost cell centers.
Vec2 bilinear_sample(const FlowSnapshot& field, double world_x, double world_y);

// FlowPack directory format: manifest.json + field.f32 (little-endian float32,
// [t][row][col][component], no header).
void write_flowpack(const FlowSeries& series, const std::string& dir);
FlowSeries read_flowpack(const std::string& dir);

}  // namespace passt
