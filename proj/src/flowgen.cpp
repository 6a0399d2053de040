#include "passt/flowgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace passt {

void VortexStreetConfig::validate() const {
    window.validate();
    if (!(street_spacing > 0.0) || !(row_offset > 0.0) || !(core_radius > 0.0)) {
        throw ConfigError("street lengths must be positive");
    }
    if (!(advection_speed > 0.0)) throw ConfigError("advection_speed must be positive");
    if (oscillation_amplitude < 0.0) throw ConfigError("oscillation_amplitude must be >= 0");
    if (oscillation_amplitude > 0.0 && oscillation_period <= 0) {
        throw ConfigError("oscillation_period must be positive when amplitude > 0");
    }
    if (n_steps < 2) throw ConfigError("n_steps must be at least 2");

    // The vortex rows must pass through (or near) the window, otherwise the
    // generated field is just the uniform inflow.
    const double half_height = 0.5 * (window.n_rows - 1) * window.cell_size;
    if (row_offset + oscillation_amplitude > half_height + 3.0 * core_radius) {
        throw ConfigError("vortex street does not overlap the window");
    }
}

VortexStreetConfig stationary_street_preset() {
    // street_spacing / advection_speed = 24 snapshots, an exact integer period.
    VortexStreetConfig cfg;
    cfg.inflow_speed = 0.5;
    cfg.street_spacing = 12.0;
    cfg.row_offset = 3.0;
    cfg.circulation = 11.0;
    cfg.core_radius = 1.5;
    cfg.advection_speed = 0.5;
    cfg.oscillation_amplitude = 0.0;
    cfg.window = GridSpec{30, 30, 1.0, 0.0, 0.0};
    cfg.n_steps = 400;
    return cfg;
}

VortexStreetConfig oscillating_street_preset() {
    VortexStreetConfig cfg = stationary_street_preset();
    cfg.oscillation_amplitude = 2.0;
    cfg.oscillation_period = 96;
    return cfg;
}

double vortex_tangential_speed(double circulation, double r, double core_radius) {
    return circulation * r / (2.0 * std::numbers::pi * (r * r + core_radius * core_radius));
}

namespace {

void add_vortex(Vec2& vel, double dx, double dy, double circulation, double core_radius) {
    const double denom =
        2.0 * std::numbers::pi * (dx * dx + dy * dy + core_radius * core_radius);
    vel[0] += -circulation * dy / denom;
    vel[1] += circulation * dx / denom;
}

}  // namespace

Vec2 street_velocity(const VortexStreetConfig& cfg, double x, double y, double t) {
    Vec2 vel{cfg.inflow_speed, 0.0};
    if (cfg.circulation == 0.0) return vel;

    const double a = cfg.street_spacing;
    double y_center = cfg.window.origin_y + 0.5 * (cfg.window.n_rows - 1) * cfg.window.cell_size;
    if (cfg.oscillation_amplitude > 0.0) {
        y_center += cfg.oscillation_amplitude *
                    std::sin(2.0 * std::numbers::pi * t / cfg.oscillation_period);
    }

    // Vortex positions depend on t only through the phase, so the stationary
    // street repeats exactly every street_spacing/advection_speed snapshots.
    double phase = std::fmod(cfg.advection_speed * t, a);
    if (phase < 0.0) phase += a;

    const double x_min = cfg.window.origin_x;
    const double x_max = cfg.window.origin_x + (cfg.window.n_cols - 1) * cfg.window.cell_size;
    const double margin = 5.0 * a;
    const int k_lo = static_cast<int>(std::floor((x_min - margin - phase - x_min) / a)) - 1;
    const int k_hi = static_cast<int>(std::ceil((x_max + margin - phase - x_min) / a)) + 1;

    for (int k = k_lo; k <= k_hi; ++k) {
        const double x_bottom = x_min + phase + k * a;
        const double x_top = x_bottom + 0.5 * a;  // staggered half a spacing
        add_vortex(vel, x - x_bottom, y - (y_center - cfg.row_offset), cfg.circulation,
                   cfg.core_radius);
        add_vortex(vel, x - x_top, y - (y_center + cfg.row_offset), -cfg.circulation,
                   cfg.core_radius);
    }
    return vel;
}

FlowSeries generate_vortex_street(const VortexStreetConfig& cfg) {
    cfg.validate();
    FlowSeries series;
    series.spec = cfg.window;
    series.dt = 1.0;
    series.source = cfg.oscillation_amplitude > 0.0 ? "vortex-street/oscillating"
                                                    : "vortex-street/stationary";
    series.snapshots.reserve(static_cast<size_t>(cfg.n_steps));
    for (int t = 0; t < cfg.n_steps; ++t) {
        FlowSnapshot snap(cfg.window, t);
        for (int r = 0; r < cfg.window.n_rows; ++r) {
            for (int c = 0; c < cfg.window.n_cols; ++c) {
                const Vec2 v = street_velocity(cfg, cfg.window.cell_x(c), cfg.window.cell_y(r),
                                               static_cast<double>(t));
                // Quantize to float32 so pack round-trips are exact.
                snap.at(r, c, 0) = static_cast<double>(static_cast<float>(v[0]));
                snap.at(r, c, 1) = static_cast<double>(static_cast<float>(v[1]));
            }
        }
        series.snapshots.push_back(std::move(snap));
    }
    series.validate();
    return series;
}

FlowSeries ingest_csv_currents(const std::vector<std::string>& files, const GridSpec& spec) {
    spec.validate();
    if (files.size() < 2) throw ConfigError("need at least 2 snapshot files");

    FlowSeries series;
    series.spec = spec;
    series.dt = 1.0;
    series.source = "csv-currents";

    const int n_cells = spec.n_cells();
    for (size_t t = 0; t < files.size(); ++t) {
        std::ifstream f(files[t]);
        if (!f) throw IoError("cannot open " + files[t]);
        std::string header;
        if (!std::getline(f, header)) throw SchemaError("empty file: " + files[t]);
        if (!header.empty() && header.back() == '\r') header.pop_back();
        if (header != "row,col,u,v") {
            throw SchemaError("expected header row,col,u,v in " + files[t] + ", got '" + header + "'");
        }

        FlowSnapshot snap(spec, static_cast<int>(t));
        std::vector<bool> present(static_cast<size_t>(n_cells), false);
        std::string line;
        int lineno = 1;
        while (std::getline(f, line)) {
            ++lineno;
            if (line.empty()) continue;
            std::istringstream ss(line);
            int row = 0, col = 0;
            double u = 0.0, v = 0.0;
            char c1 = 0, c2 = 0, c3 = 0;
            if (!(ss >> row >> c1 >> col >> c2 >> u >> c3 >> v) || c1 != ',' || c2 != ',' ||
                c3 != ',') {
                throw SchemaError("bad line " + std::to_string(lineno) + " in " + files[t]);
            }
            if (row < 0 || row >= spec.n_rows || col < 0 || col >= spec.n_cols) {
                throw SchemaError("cell (" + std::to_string(row) + "," + std::to_string(col) +
                                  ") out of range in " + files[t]);
            }
            snap.at(row, col, 0) = u;
            snap.at(row, col, 1) = v;
            present[static_cast<size_t>(row * spec.n_cols + col)] = true;
        }

        std::vector<int> missing;
        for (int i = 0; i < n_cells; ++i) {
            if (!present[static_cast<size_t>(i)]) missing.push_back(i);
        }
        if (missing.size() * 20 > static_cast<size_t>(n_cells)) {
            throw GapError(std::to_string(missing.size()) + " of " + std::to_string(n_cells) +
                           " cells missing in " + files[t] + " (limit 5%)");
        }
        for (int idx : missing) {
            const int mr = idx / spec.n_cols;
            const int mc = idx % spec.n_cols;
            double best = std::numeric_limits<double>::max();
            int best_idx = -1;
            for (int i = 0; i < n_cells; ++i) {
                if (!present[static_cast<size_t>(i)]) continue;
                const int r = i / spec.n_cols;
                const int c = i % spec.n_cols;
                const double d = static_cast<double>((r - mr) * (r - mr) + (c - mc) * (c - mc));
                if (d < best) {
                    best = d;
                    best_idx = i;
                }
            }
            if (best_idx < 0) throw GapError("snapshot " + files[t] + " has no data at all");
            snap.at(mr, mc, 0) = snap.at(best_idx / spec.n_cols, best_idx % spec.n_cols, 0);
            snap.at(mr, mc, 1) = snap.at(best_idx / spec.n_cols, best_idx % spec.n_cols, 1);
            series.filled_cells.push_back(static_cast<int>(t) * n_cells + idx);
        }
        snap.validate();
        series.snapshots.push_back(std::move(snap));
    }
    series.validate();
    return series;
}

}  // namespace passt
