#include "passt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <Eigen/SVD>

namespace passt {

namespace {

void check_same_grid(const FlowSnapshot& a, const FlowSnapshot& b) {
    if (!(a.spec == b.spec)) throw ShapeError("snapshots are on different grids");
}

}  // namespace

double mse(const FlowSnapshot& a, const FlowSnapshot& b) {
    check_same_grid(a, b);
    double sq = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        const double d = a.values[i] - b.values[i];
        sq += d * d;
    }
    return sq / static_cast<double>(a.spec.n_cells());
}

double rmse(const FlowSnapshot& a, const FlowSnapshot& b) { return std::sqrt(mse(a, b)); }

double cosine_distance(const FlowSnapshot& a, const FlowSnapshot& b) {
    check_same_grid(a, b);
    const double floor = 1e-12;
    double total = 0.0;
    int counted = 0;
    for (int r = 0; r < a.spec.n_rows; ++r) {
        for (int c = 0; c < a.spec.n_cols; ++c) {
            const double ax = a.at(r, c, 0), ay = a.at(r, c, 1);
            const double bx = b.at(r, c, 0), by = b.at(r, c, 1);
            const double na = std::hypot(ax, ay);
            const double nb = std::hypot(bx, by);
            if (na < floor || nb < floor) continue;
            total += (ax * bx + ay * by) / (na * nb);
            ++counted;
        }
    }
    if (counted == 0) return 0.0;
    return 1.0 - total / counted;
}

LookaheadReport lookahead_eval(const KnodeModel& model, const FlowSeries& series,
                               const std::vector<int>& lookaheads, const std::string& dataset) {
    series.validate();
    const int max_look = *std::max_element(lookaheads.begin(), lookaheads.end());
    if (static_cast<int>(series.size()) <= max_look) {
        throw ConfigError("series too short for maximum lookahead");
    }
    for (size_t i = 0; i < lookaheads.size(); ++i) {
        if (lookaheads[i] < 1 || (i > 0 && lookaheads[i] <= lookaheads[i - 1])) {
            throw ConfigError("lookaheads must be positive and increasing");
        }
    }

    LookaheadReport report;
    report.lookaheads = lookaheads;
    report.dataset = dataset;
    report.mean_mse.assign(lookaheads.size(), 0.0);
    report.mean_cosine_distance.assign(lookaheads.size(), 0.0);
    std::vector<int> counts(lookaheads.size(), 0);

    // One rollout of max_look steps per start covers every lookahead at once.
    const int n = static_cast<int>(series.size());
    for (int start = 0; start + 1 < n; ++start) {
        const int horizon = std::min(max_look, n - 1 - start);
        FlowSnapshot state = series.snapshots[static_cast<size_t>(start)];
        for (int ell = 1; ell <= horizon; ++ell) {
            state = step(model, state);
            const auto it = std::find(lookaheads.begin(), lookaheads.end(), ell);
            if (it == lookaheads.end()) continue;
            const size_t li = static_cast<size_t>(it - lookaheads.begin());
            const auto& truth = series.snapshots[static_cast<size_t>(start + ell)];
            report.mean_mse[li] += mse(state, truth);
            report.mean_cosine_distance[li] += cosine_distance(state, truth);
            counts[li] += 1;
        }
    }
    for (size_t i = 0; i < lookaheads.size(); ++i) {
        if (counts[i] == 0) throw ConfigError("no valid starts for a lookahead");
        report.mean_mse[i] /= counts[i];
        report.mean_cosine_distance[i] /= counts[i];
    }
    return report;
}

PodSpectrum pod(const std::vector<FlowSnapshot>& snapshots, bool subtract_mean) {
    if (snapshots.size() < 2) throw ConfigError("POD needs at least 2 snapshots");
    const Eigen::Index n = static_cast<Eigen::Index>(snapshots.front().values.size());
    Eigen::MatrixXd data(n, static_cast<Eigen::Index>(snapshots.size()));
    for (size_t t = 0; t < snapshots.size(); ++t) {
        if (snapshots[t].values.size() != static_cast<size_t>(n)) {
            throw ShapeError("POD snapshots are on different grids");
        }
        data.col(static_cast<Eigen::Index>(t)) =
            Eigen::Map<const Eigen::VectorXd>(snapshots[t].values.data(), n);
    }
    if (subtract_mean) {
        const Eigen::VectorXd mean = data.rowwise().mean();
        data.colwise() -= mean;
    }
    if (data.norm() < 1e-14) {
        throw DegenerateDataError("all snapshots identical after mean subtraction");
    }

    Eigen::BDCSVD<Eigen::MatrixXd> svd(data);
    PodSpectrum spectrum;
    spectrum.n_snapshots = static_cast<int>(snapshots.size());
    spectrum.mean_subtracted = subtract_mean;
    double total = 0.0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
        const double s = svd.singularValues()(i);
        spectrum.singular_values.push_back(s);
        total += s * s;
    }
    double cum = 0.0;
    for (double s : spectrum.singular_values) {
        const double frac = s * s / total;
        spectrum.energy_fractions.push_back(frac);
        cum += frac;
        spectrum.cumulative_energy.push_back(std::min(cum, 1.0));
    }
    if (!spectrum.cumulative_energy.empty()) spectrum.cumulative_energy.back() = 1.0;
    return spectrum;
}

PodSpectrum pod(const FlowSeries& series, bool subtract_mean) {
    return pod(series.snapshots, subtract_mean);
}

double PodSpectrum::cumulative_at(int n_modes) const {
    if (n_modes <= 0) return 0.0;
    const size_t i = std::min(static_cast<size_t>(n_modes), cumulative_energy.size());
    return cumulative_energy[i - 1];
}

void write_lookahead_csv(const LookaheadReport& report, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << "lookahead,mse,cosine_distance,dataset\n";
    for (size_t i = 0; i < report.lookaheads.size(); ++i) {
        f << report.lookaheads[i] << "," << report.mean_mse[i] << ","
          << report.mean_cosine_distance[i] << "," << report.dataset << "\n";
    }
}

void write_pod_csv(const PodSpectrum& spectrum, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << "mode,singular_value,energy_fraction,cumulative\n";
    for (size_t i = 0; i < spectrum.singular_values.size(); ++i) {
        f << i + 1 << "," << spectrum.singular_values[i] << "," << spectrum.energy_fractions[i]
          << "," << spectrum.cumulative_energy[i] << "\n";
    }
}

}  // namespace passt
