#pragma once

#include <string>
#include <vector>

#include "passt/grid.hpp"

namespace passt {

// Synthetic Kármán-street generator: uniform inflow plus two staggered rows of
// regularized vortices with alternating circulation, advecting downstream. The
// street is centered vertically on the window; vortices re-enter upstream so
// the stationary pattern is exactly time-periodic with period
// street_spacing / advection_speed snapshots.
struct VortexStreetConfig {
    double inflow_speed = 0.5;           // m/s, eastward
    double street_spacing = 12.0;        // m between same-row vortices
    double row_offset = 3.0;             // m, transverse half-gap between rows
    double circulation = 11.0;           // m^2/s, alternating sign
    double core_radius = 1.5;            // m, regularization radius
    double advection_speed = 0.5;        // m/s downstream drift per model time unit
    double oscillation_amplitude = 0.0;  // m, 0 = stationary cylinder
    int oscillation_period = 96;         // snapshots per transverse oscillation
    GridSpec window{30, 30, 1.0, 0.0, 0.0};
    int n_steps = 400;
    unsigned int seed = 0;  // reserved; generation is closed-form and seed-free

    void validate() const;
};

// Defaults matching the stationary desk-scale street (integer period 24).
VortexStreetConfig stationary_street_preset();
// Same street with transverse oscillation, one cycle per 96 snapshots.
VortexStreetConfig oscillating_street_preset();

FlowSeries generate_vortex_street(const VortexStreetConfig& config);

// Velocity of the analytic street at one point and time; exposed for tests.
Vec2 street_velocity(const VortexStreetConfig& config, double x, double y, double t);

// Tangential speed of a single regularized vortex at radius r.
double vortex_tangential_speed(double circulation, double r, double core_radius);

// One CSV file per snapshot, header `row,col,u,v`, one line per cell. Cells
// missing from a file are filled from the nearest present cell and recorded in
// the returned series' filled_cells; more than 5% missing in any snapshot is a
// GapError.
FlowSeries ingest_csv_currents(const std::vector<std::string>& files, const GridSpec& spec);

}  // namespace passt
