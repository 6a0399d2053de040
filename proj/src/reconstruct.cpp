#include "passt/reconstruct.hpp"

#include <cmath>
#include <map>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace passt {

void MeasurementSet::validate(const GridSpec& spec) const {
    for (const auto& m : items) {
        if (m.cell.row < 0 || m.cell.row >= spec.n_rows || m.cell.col < 0 ||
            m.cell.col >= spec.n_cols) {
            throw OutOfBoundsError("measurement outside grid");
        }
        if (m.age < 0) throw ConfigError("measurement age must be >= 0");
        if (!std::isfinite(m.value[0]) || !std::isfinite(m.value[1])) {
            throw ConfigError("measurement value must be finite");
        }
    }
}

void GpConfig::validate() const {
    if (!(length_scale > 0.0) || !(signal_variance > 0.0) || !(noise_variance > 0.0)) {
        throw ConfigError("GP hyperparameters must be positive");
    }
}

FlowSnapshot gp_reconstruct(const MeasurementSet& meas, const FlowSnapshot& prior_field,
                            const GpConfig& config) {
    config.validate();
    const auto& g = prior_field.spec;
    meas.validate(g);
    if (meas.items.empty()) throw ConfigError("need at least one measurement");

    const int n = static_cast<int>(meas.items.size());
    Eigen::MatrixXd gram(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            const double dr = meas.items[static_cast<size_t>(i)].cell.row -
                              meas.items[static_cast<size_t>(j)].cell.row;
            const double dc = meas.items[static_cast<size_t>(i)].cell.col -
                              meas.items[static_cast<size_t>(j)].cell.col;
            const double k = config.signal_variance *
                             std::exp(-(dr * dr + dc * dc) /
                                      (2.0 * config.length_scale * config.length_scale));
            gram(i, j) = k;
            gram(j, i) = k;
        }
        gram(i, i) += config.noise_variance * (1.0 + meas.items[static_cast<size_t>(i)].age);
    }

    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    double jitter = 1e-12 * config.signal_variance;
    while (llt.info() != Eigen::Success && jitter <= 1e-6 * config.signal_variance) {
        llt.compute(gram + jitter * Eigen::MatrixXd::Identity(n, n));
        jitter *= 10.0;
    }
    if (llt.info() != Eigen::Success) {
        throw SingularKernelError("GP Gram matrix is numerically singular");
    }

    // Residuals against the prior mean, independently per component.
    Eigen::MatrixXd resid(n, 2);
    for (int i = 0; i < n; ++i) {
        const auto& m = meas.items[static_cast<size_t>(i)];
        for (int comp = 0; comp < 2; ++comp) {
            const double prior = config.prior == GpConfig::Prior::Zero
                                     ? 0.0
                                     : prior_field.at(m.cell.row, m.cell.col, comp);
            resid(i, comp) = m.value[static_cast<size_t>(comp)] - prior;
        }
    }
    const Eigen::MatrixXd alpha = llt.solve(resid);

    FlowSnapshot out(g, prior_field.time_index);
    for (int r = 0; r < g.n_rows; ++r) {
        for (int c = 0; c < g.n_cols; ++c) {
            double corr0 = 0.0, corr1 = 0.0;
            for (int i = 0; i < n; ++i) {
                const auto& m = meas.items[static_cast<size_t>(i)];
                const double dr = r - m.cell.row;
                const double dc = c - m.cell.col;
                const double k = config.signal_variance *
                                 std::exp(-(dr * dr + dc * dc) /
                                          (2.0 * config.length_scale * config.length_scale));
                corr0 += k * alpha(i, 0);
                corr1 += k * alpha(i, 1);
            }
            const double p0 =
                config.prior == GpConfig::Prior::Zero ? 0.0 : prior_field.at(r, c, 0);
            const double p1 =
                config.prior == GpConfig::Prior::Zero ? 0.0 : prior_field.at(r, c, 1);
            out.at(r, c, 0) = p0 + corr0;
            out.at(r, c, 1) = p1 + corr1;
        }
    }
    out.validate();
    return out;
}

MeasurementSet merge_measurements(const MeasurementSet& existing, const SamplePath& path,
                                  const std::function<Vec2(Cell, size_t)>& truth_access,
                                  int path_id) {
    MeasurementSet out = existing;
    out.source_path_ids.push_back(path_id);

    std::map<std::pair<int, int>, size_t> index;
    for (size_t i = 0; i < out.items.size(); ++i) {
        index[{out.items[i].cell.row, out.items[i].cell.col}] = i;
    }
    for (size_t i = 0; i < path.cells.size(); ++i) {
        Measurement m;
        m.cell = path.cells[i];
        m.value = truth_access(path.cells[i], i);
        m.age = 0;
        const auto key = std::make_pair(m.cell.row, m.cell.col);
        auto it = index.find(key);
        if (it == index.end()) {
            index[key] = out.items.size();
            out.items.push_back(m);
        } else {
            out.items[it->second] = m;  // newer reading wins
        }
    }
    return out;
}

void age_measurements(MeasurementSet& meas, int cycles) {
    if (cycles < 0) throw ConfigError("cycles must be >= 0");
    for (auto& m : meas.items) m.age += cycles;
}

}  // namespace passt
