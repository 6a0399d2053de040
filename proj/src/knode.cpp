#include "passt/knode.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace passt {

void KnodeModel::validate() const {
    kernel.validate();
    if (substeps < 1) throw ConfigError("substeps must be >= 1");
    const auto layout = parameter_layout(arch);
    if (params.data.size() != layout.total) {
        throw ShapeError("model params do not match architecture");
    }
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (noise_variance < 0.0) throw ConfigError("noise_variance must be >= 0");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_stride < 1) throw ConfigError("batch_stride must be >= 1");
}

namespace {

void check_finite_bounded(const Mat& m, int step_index) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double v = m.data()[i];
        if (!std::isfinite(v) || std::abs(v) > kDivergenceLimit) {
            throw DivergedError("integration diverged", step_index);
        }
    }
}

void smooth_rows(const GridSpec& spec, const std::vector<double>& weights, int ksize, const Mat& in,
                 Mat& out) {
    for (Eigen::Index b = 0; b < in.rows(); ++b) {
        gaussian_smooth_flat(spec, weights, ksize,
                             in.data() + static_cast<size_t>(b) * in.cols(),
                             out.data() + static_cast<size_t>(b) * out.cols());
    }
}

void smooth_adjoint_rows(const GridSpec& spec, const std::vector<double>& weights, int ksize,
                         const Mat& in, Mat& out) {
    for (Eigen::Index b = 0; b < in.rows(); ++b) {
        gaussian_smooth_adjoint_flat(spec, weights, ksize,
                                     in.data() + static_cast<size_t>(b) * in.cols(),
                                     out.data() + static_cast<size_t>(b) * out.cols());
    }
}

// Euler-integrates a batch of states over one snapshot interval. When traces
// is non-null the per-substep forward traces and entry states are kept for the
// backward pass.
Mat step_batch(const KnodeModel& model, const GridSpec& spec, Mat state, int step_index,
               std::vector<ForwardTrace>* traces) {
    const auto weights = model.kernel.weights();
    const double h = 1.0 / model.substeps;
    Mat smoothed(state.rows(), state.cols());
    if (traces) traces->assign(static_cast<size_t>(model.substeps), ForwardTrace{});
    for (int k = 0; k < model.substeps; ++k) {
        ForwardTrace* trace = traces ? &(*traces)[static_cast<size_t>(k)] : nullptr;
        Mat field = forward_batch(model.arch, model.params, state, trace);
        smooth_rows(spec, weights, model.kernel.size, field, smoothed);
        state += h * smoothed;
        check_finite_bounded(state, step_index);
    }
    return state;
}

// Reverse pass matching step_batch: given dL/d(output state), accumulates the
// parameter gradient and returns dL/d(input state).
Mat step_batch_backward(const KnodeModel& model, const GridSpec& spec,
                        const std::vector<ForwardTrace>& traces, Mat g,
                        std::vector<double>& param_grad) {
    const auto weights = model.kernel.weights();
    const double h = 1.0 / model.substeps;
    Mat ct(g.rows(), g.cols());
    for (int k = model.substeps; k-- > 0;) {
        smooth_adjoint_rows(spec, weights, model.kernel.size, g, ct);
        ct *= h;
        Mat dstate = backward_batch(model.arch, model.params, traces[static_cast<size_t>(k)], ct,
                                    param_grad);
        g += dstate;
    }
    return g;
}

}  // namespace

FlowSnapshot step(const KnodeModel& model, const FlowSnapshot& state) {
    model.validate();
    if (state.spec.n_rows != model.arch.n_rows || state.spec.n_cols != model.arch.n_cols) {
        throw ShapeError("state grid does not match model architecture");
    }
    Eigen::Map<const Mat> in(state.values.data(), 1, static_cast<Eigen::Index>(state.values.size()));
    Mat out = step_batch(model, state.spec, in, state.time_index, nullptr);
    FlowSnapshot result(state.spec, state.time_index + 1);
    std::copy(out.data(), out.data() + out.cols(), result.values.begin());
    return result;
}

FlowSeries rollout(const KnodeModel& model, const FlowSnapshot& initial, int horizon) {
    if (horizon < 1) throw ConfigError("rollout horizon must be >= 1");
    FlowSeries series;
    series.spec = initial.spec;
    series.dt = 1.0;
    series.source = "knode-rollout";
    series.snapshots.push_back(initial);
    series.snapshots.front().time_index = 0;
    for (int t = 0; t < horizon; ++t) {
        FlowSnapshot next = step(model, series.snapshots.back());
        series.snapshots.push_back(std::move(next));
    }
    return series;
}

double loss(const KnodeModel& model, const FlowSeries& series) {
    model.validate();
    series.validate();
    if (series.spec.n_rows != model.arch.n_rows || series.spec.n_cols != model.arch.n_cols) {
        throw ShapeError("series grid does not match model architecture");
    }
    const size_t n_trans = series.size() - 1;
    const Eigen::Index n = static_cast<Eigen::Index>(series.snapshots[0].values.size());
    Mat inputs(static_cast<Eigen::Index>(n_trans), n);
    Mat targets(static_cast<Eigen::Index>(n_trans), n);
    for (size_t t = 0; t < n_trans; ++t) {
        inputs.row(static_cast<Eigen::Index>(t)) =
            Eigen::Map<const Eigen::RowVectorXd>(series.snapshots[t].values.data(), n);
        targets.row(static_cast<Eigen::Index>(t)) =
            Eigen::Map<const Eigen::RowVectorXd>(series.snapshots[t + 1].values.data(), n);
    }
    Mat pred = step_batch(model, series.spec, inputs, 0, nullptr);
    const double sq = (pred - targets).squaredNorm();
    return sq / (static_cast<double>(series.spec.n_cells()) * static_cast<double>(n_trans));
}

TrainResult train(const FlowSeries& series, const NetArchitecture& arch, const TrainConfig& config) {
    config.validate();
    series.validate();
    if (series.spec.n_rows != arch.n_rows || series.spec.n_cols != arch.n_cols) {
        throw ShapeError("series grid does not match architecture");
    }

    KnodeModel model;
    model.arch = arch;
    model.params = init_params(arch, config.rng_seed);

    const size_t n_trans = series.size() - 1;
    const Eigen::Index n = static_cast<Eigen::Index>(series.snapshots[0].values.size());
    const double n_cells = static_cast<double>(series.spec.n_cells());

    // Transitions partitioned by (t mod s); s = 1 is the full-series batch.
    const int s = config.batch_stride;
    std::vector<std::vector<size_t>> batches(static_cast<size_t>(s));
    for (size_t t = 1; t <= n_trans; ++t) {
        batches[t % static_cast<size_t>(s)].push_back(t - 1);  // transition index: input snapshot
    }
    batches.erase(std::remove_if(batches.begin(), batches.end(),
                                 [](const auto& b) { return b.empty(); }),
                  batches.end());

    std::vector<Mat> batch_inputs, batch_targets;
    for (const auto& idx : batches) {
        Mat in(static_cast<Eigen::Index>(idx.size()), n);
        Mat tgt(static_cast<Eigen::Index>(idx.size()), n);
        for (size_t b = 0; b < idx.size(); ++b) {
            in.row(static_cast<Eigen::Index>(b)) =
                Eigen::Map<const Eigen::RowVectorXd>(series.snapshots[idx[b]].values.data(), n);
            tgt.row(static_cast<Eigen::Index>(b)) =
                Eigen::Map<const Eigen::RowVectorXd>(series.snapshots[idx[b] + 1].values.data(), n);
        }
        batch_inputs.push_back(std::move(in));
        batch_targets.push_back(std::move(tgt));
    }

    std::mt19937_64 noise_rng(static_cast<uint64_t>(config.rng_seed) ^ 0xA5A5A5A512345678ULL);
    std::normal_distribution<double> noise(0.0, std::sqrt(config.noise_variance));

    std::vector<double> m_adam(model.params.data.size(), 0.0);
    std::vector<double> v_adam(model.params.data.size(), 0.0);
    std::vector<double> grad(model.params.data.size(), 0.0);
    std::vector<ForwardTrace> traces;
    TrainResult result;
    long long adam_t = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        double epoch_sq = 0.0;
        try {
            for (size_t b = 0; b < batch_inputs.size(); ++b) {
                Mat x = batch_inputs[b];
                if (config.noise_variance > 0.0) {
                    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += noise(noise_rng);
                }
                const double norm = n_cells * static_cast<double>(x.rows());

                Mat pred = step_batch(model, series.spec, x, epoch, &traces);
                Mat resid = pred - batch_targets[b];
                epoch_sq += resid.squaredNorm() / norm * static_cast<double>(x.rows());

                std::fill(grad.begin(), grad.end(), 0.0);
                Mat g = (2.0 / norm) * resid;
                step_batch_backward(model, series.spec, traces, std::move(g), grad);

                ++adam_t;
                const double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(adam_t));
                const double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(adam_t));
                for (size_t i = 0; i < grad.size(); ++i) {
                    m_adam[i] = config.adam_beta1 * m_adam[i] + (1.0 - config.adam_beta1) * grad[i];
                    v_adam[i] = config.adam_beta2 * v_adam[i] +
                                (1.0 - config.adam_beta2) * grad[i] * grad[i];
                    model.params.data[i] -= config.learning_rate * (m_adam[i] / bc1) /
                                            (std::sqrt(v_adam[i] / bc2) + config.adam_eps);
                }
            }
        } catch (const DivergedError& e) {
            throw TrainDivergedError(std::string("training diverged: ") + e.what(), epoch,
                                     result.loss_history);
        }
        result.loss_history.push_back(epoch_sq / static_cast<double>(n_trans));
    }

    result.model = std::move(model);
    return result;
}

void save_knode_checkpoint(const std::string& dir, const KnodeModel& model,
                           const std::vector<double>& loss_history) {
    nlohmann::json extra;
    extra["kernel"] = {{"size", model.kernel.size}, {"variance", model.kernel.variance}};
    extra["substeps"] = model.substeps;
    extra["epochs"] = loss_history.size();
    extra["loss_history"] = loss_history;
    save_checkpoint(dir, model.arch, model.params, extra);
}

KnodeModel load_knode_checkpoint(const std::string& dir) {
    Checkpoint ckpt = load_checkpoint(dir);
    KnodeModel model;
    model.arch = std::move(ckpt.arch);
    model.params = std::move(ckpt.params);
    if (ckpt.manifest.contains("kernel")) {
        model.kernel.size = ckpt.manifest["kernel"].value("size", 5);
        model.kernel.variance = ckpt.manifest["kernel"].value("variance", 0.1);
    }
    model.substeps = ckpt.manifest.value("substeps", 6);
    model.validate();
    return model;
}

}  // namespace passt
