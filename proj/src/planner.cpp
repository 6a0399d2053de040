#include "passt/planner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace passt {

using nlohmann::json;

namespace {

constexpr std::array<int, kNumActions> kRowStep{1, 0, -1, 0};  // N, E, S, W
constexpr std::array<int, kNumActions> kColStep{0, 1, 0, -1};

}  // namespace

void RewardMap::normalize() {
    double max_q = 0.0;
    for (double v : q) {
        if (!std::isfinite(v) || v < 0.0) throw ConfigError("reward map must be finite and nonnegative");
        max_q = std::max(max_q, v);
    }
    if (max_q > 0.0) {
        for (double& v : q) v /= max_q;
    }
}

void PolicyParams::validate() const {
    if (static_cast<int>(theta.size()) != feature_config.feature_count()) {
        throw ConfigError("theta length does not match feature configuration");
    }
    for (double v : theta) {
        if (!std::isfinite(v)) throw ConfigError("theta must be finite");
    }
}

PolicyParams zero_policy(const FeatureConfig& config) {
    PolicyParams p;
    p.feature_config = config;
    p.theta.assign(static_cast<size_t>(config.feature_count()), 0.0);
    return p;
}

std::vector<double> featurize(const RewardMap& map, Cell position,
                              const std::vector<bool>& visited_mask, const FeatureConfig& config) {
    const auto& g = map.spec;
    if (position.row < 0 || position.row >= g.n_rows || position.col < 0 ||
        position.col >= g.n_cols) {
        throw OutOfBoundsError("featurize position outside grid");
    }
    if (visited_mask.size() != static_cast<size_t>(g.n_cells())) {
        throw ShapeError("visited mask size mismatch");
    }

    std::vector<double> features(static_cast<size_t>(config.feature_count()), 0.0);
    for (int dir = 0; dir < config.n_cones; ++dir) {
        for (size_t si = 0; si < config.scales.size(); ++si) {
            const int radius = config.scales[si];
            double total = 0.0;
            int count = 0;
            for (int dist = 1; dist <= radius; ++dist) {
                for (int lat = -radius; lat <= radius; ++lat) {
                    const int r = position.row + kRowStep[dir] * dist - kColStep[dir] * lat;
                    const int c = position.col + kColStep[dir] * dist + kRowStep[dir] * lat;
                    if (r < 0 || r >= g.n_rows || c < 0 || c >= g.n_cols) continue;
                    ++count;
                    const size_t idx = static_cast<size_t>(r * g.n_cols + c);
                    if (!visited_mask[idx]) total += map.q[idx];
                }
            }
            features[static_cast<size_t>(dir) * config.scales.size() + si] =
                count > 0 ? total / count : 0.0;
        }
    }
    features.back() = 1.0;  // bias
    return features;
}

std::vector<double> action_features(const std::vector<double>& base_features,
                                    const FeatureConfig& config, int action) {
    if (action < 0 || action >= config.n_cones) throw ConfigError("bad action index");
    std::vector<double> out(base_features.size(), 0.0);
    const size_t n_scales = config.scales.size();
    for (int rel = 0; rel < config.n_cones; ++rel) {
        const int dir = (action + rel) % config.n_cones;
        for (size_t si = 0; si < n_scales; ++si) {
            out[static_cast<size_t>(rel) * n_scales + si] =
                base_features[static_cast<size_t>(dir) * n_scales + si];
        }
    }
    out.back() = base_features.back();
    return out;
}

std::array<bool, kNumActions> legal_actions(const GridSpec& spec, Cell position) {
    std::array<bool, kNumActions> legal{};
    for (int a = 0; a < kNumActions; ++a) {
        const int r = position.row + kRowStep[a];
        const int c = position.col + kColStep[a];
        legal[static_cast<size_t>(a)] = r >= 0 && r < spec.n_rows && c >= 0 && c < spec.n_cols;
    }
    return legal;
}

std::array<double, kNumActions> action_distribution(
    const PolicyParams& policy, const std::array<std::vector<double>, kNumActions>& features,
    const std::array<bool, kNumActions>& legal) {
    policy.validate();
    if (std::none_of(legal.begin(), legal.end(), [](bool b) { return b; })) {
        throw DeadEndError("all actions masked");
    }
    std::array<double, kNumActions> scores{};
    double max_score = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < kNumActions; ++a) {
        if (!legal[static_cast<size_t>(a)]) continue;
        double s = 0.0;
        for (size_t i = 0; i < policy.theta.size(); ++i) {
            s += policy.theta[i] * features[static_cast<size_t>(a)][i];
        }
        scores[static_cast<size_t>(a)] = s;
        max_score = std::max(max_score, s);
    }
    std::array<double, kNumActions> probs{};
    double total = 0.0;
    for (int a = 0; a < kNumActions; ++a) {
        if (!legal[static_cast<size_t>(a)]) continue;
        probs[static_cast<size_t>(a)] = std::exp(scores[static_cast<size_t>(a)] - max_score);
        total += probs[static_cast<size_t>(a)];
    }
    for (double& p : probs) p /= total;
    return probs;
}

namespace {

struct RolloutScratch {
    std::vector<double> residual;
    std::vector<bool> visited;
};

int pick_action(const std::array<double, kNumActions>& probs,
                const std::array<bool, kNumActions>& legal, RolloutMode mode,
                std::mt19937_64& rng) {
    if (mode == RolloutMode::Greedy) {
        int best = -1;
        double best_p = -1.0;
        for (int a = 0; a < kNumActions; ++a) {
            if (legal[static_cast<size_t>(a)] && probs[static_cast<size_t>(a)] > best_p) {
                best = a;
                best_p = probs[static_cast<size_t>(a)];
            }
        }
        return best;
    }
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    const double u = dist(rng);
    double cum = 0.0;
    int last_legal = -1;
    for (int a = 0; a < kNumActions; ++a) {
        if (!legal[static_cast<size_t>(a)]) continue;
        last_legal = a;
        cum += probs[static_cast<size_t>(a)];
        if (u <= cum) return a;
    }
    return last_legal;
}

}  // namespace

SamplePath rollout_policy(const PolicyParams& policy, const RewardMap& map, Cell start, int horizon,
                          RolloutMode mode, unsigned int seed) {
    policy.validate();
    const auto& g = map.spec;
    if (start.row < 0 || start.row >= g.n_rows || start.col < 0 || start.col >= g.n_cols) {
        throw OutOfBoundsError("rollout start outside grid");
    }
    if (horizon < 1) throw ConfigError("rollout horizon must be >= 1");

    std::mt19937_64 rng(seed);
    RewardMap residual = map;
    std::vector<bool> visited(static_cast<size_t>(g.n_cells()), false);

    SamplePath path;
    path.cells.push_back(start);
    Cell pos = start;
    visited[static_cast<size_t>(pos.row * g.n_cols + pos.col)] = true;
    residual.at(pos.row, pos.col) = 0.0;

    for (int t = 0; t < horizon; ++t) {
        const auto base = featurize(residual, pos, visited, policy.feature_config);
        const auto legal = legal_actions(g, pos);
        std::array<std::vector<double>, kNumActions> feats;
        for (int a = 0; a < kNumActions; ++a) {
            feats[static_cast<size_t>(a)] = action_features(base, policy.feature_config, a);
        }
        const auto probs = action_distribution(policy, feats, legal);
        const int a = pick_action(probs, legal, mode, rng);
        pos = Cell{pos.row + kRowStep[a], pos.col + kColStep[a]};
        const double reward = residual.at(pos.row, pos.col);
        residual.at(pos.row, pos.col) = 0.0;
        visited[static_cast<size_t>(pos.row * g.n_cols + pos.col)] = true;
        path.cells.push_back(pos);
        path.rewards.push_back(reward);
        path.total_reward += reward;
    }
    return path;
}

RewardMap random_gmm_map(const GridSpec& spec, int max_components, std::mt19937_64& rng) {
    if (max_components < 1 || max_components > 5) {
        throw ConfigError("gmm_components must be in [1,5]");
    }
    std::uniform_int_distribution<int> k_dist(1, max_components);
    std::uniform_real_distribution<double> row_dist(0.0, spec.n_rows - 1.0);
    std::uniform_real_distribution<double> col_dist(0.0, spec.n_cols - 1.0);
    const double max_sigma = std::max(1.5, std::min(spec.n_rows, spec.n_cols) / 4.0);
    std::uniform_real_distribution<double> sigma_dist(1.0, max_sigma);
    std::uniform_real_distribution<double> weight_dist(0.3, 1.0);

    const int k = k_dist(rng);
    RewardMap map(spec, 0);
    for (int comp = 0; comp < k; ++comp) {
        const double mr = row_dist(rng);
        const double mc = col_dist(rng);
        const double sr = sigma_dist(rng);
        const double sc = sigma_dist(rng);
        const double w = weight_dist(rng);
        for (int r = 0; r < spec.n_rows; ++r) {
            for (int c = 0; c < spec.n_cols; ++c) {
                map.at(r, c) += w * std::exp(-((r - mr) * (r - mr) / (2.0 * sr * sr) +
                                               (c - mc) * (c - mc) / (2.0 * sc * sc)));
            }
        }
    }
    map.normalize();
    return map;
}

void PolicyTrainConfig::validate() const {
    if (n_maps < 0 || episodes_per_map < 1 || horizon < 1) throw ConfigError("bad policy training sizes");
    if (gmm_components < 1 || gmm_components > 5) throw ConfigError("gmm_components must be in [1,5]");
    if (learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
    if (map_rows < 2 || map_cols < 2) throw ConfigError("training maps must be at least 2x2");
}

PolicyParams train_policy(const PolicyTrainConfig& config) {
    config.validate();
    PolicyParams policy = zero_policy(config.feature_config);
    std::mt19937_64 rng(config.seed);
    const GridSpec spec{config.map_rows, config.map_cols, 1.0, 0.0, 0.0};

    double baseline = 0.0;
    long long baseline_n = 0;
    const size_t n_theta = policy.theta.size();
    std::vector<double> grad(n_theta, 0.0);

    for (int map_i = 0; map_i < config.n_maps; ++map_i) {
        const RewardMap map = random_gmm_map(spec, config.gmm_components, rng);
        std::uniform_int_distribution<int> row_dist(0, spec.n_rows - 1);
        std::uniform_int_distribution<int> col_dist(0, spec.n_cols - 1);

        for (int ep = 0; ep < config.episodes_per_map; ++ep) {
            Cell pos{row_dist(rng), col_dist(rng)};
            RewardMap residual = map;
            std::vector<bool> visited(static_cast<size_t>(spec.n_cells()), false);
            visited[static_cast<size_t>(pos.row * spec.n_cols + pos.col)] = true;
            residual.at(pos.row, pos.col) = 0.0;

            struct StepRecord {
                std::array<std::vector<double>, kNumActions> feats;
                std::array<double, kNumActions> probs;
                std::array<bool, kNumActions> legal;
                int action;
                double reward;
            };
            std::vector<StepRecord> episode;
            episode.reserve(static_cast<size_t>(config.horizon));

            for (int t = 0; t < config.horizon; ++t) {
                StepRecord rec;
                const auto base = featurize(residual, pos, visited, config.feature_config);
                rec.legal = legal_actions(spec, pos);
                for (int a = 0; a < kNumActions; ++a) {
                    rec.feats[static_cast<size_t>(a)] =
                        action_features(base, config.feature_config, a);
                }
                rec.probs = action_distribution(policy, rec.feats, rec.legal);
                rec.action = pick_action(rec.probs, rec.legal, RolloutMode::Sample, rng);
                pos = Cell{pos.row + kRowStep[rec.action], pos.col + kColStep[rec.action]};
                rec.reward = residual.at(pos.row, pos.col);
                residual.at(pos.row, pos.col) = 0.0;
                visited[static_cast<size_t>(pos.row * spec.n_cols + pos.col)] = true;
                episode.push_back(std::move(rec));
            }

            // Returns-to-go against a running-mean baseline.
            std::fill(grad.begin(), grad.end(), 0.0);
            double g_return = 0.0;
            std::vector<double> returns(episode.size());
            for (size_t t = episode.size(); t-- > 0;) {
                g_return += episode[t].reward;
                returns[t] = g_return;
            }
            for (size_t t = 0; t < episode.size(); ++t) {
                const auto& rec = episode[t];
                const double advantage = returns[t] - baseline;
                baseline += (returns[t] - baseline) / static_cast<double>(++baseline_n);
                for (size_t i = 0; i < n_theta; ++i) {
                    double expected = 0.0;
                    for (int a = 0; a < kNumActions; ++a) {
                        if (!rec.legal[static_cast<size_t>(a)]) continue;
                        expected += rec.probs[static_cast<size_t>(a)] *
                                    rec.feats[static_cast<size_t>(a)][i];
                    }
                    grad[i] += (rec.feats[static_cast<size_t>(rec.action)][i] - expected) * advantage;
                }
            }
            for (size_t i = 0; i < n_theta; ++i) {
                policy.theta[i] += config.learning_rate * grad[i];
            }
        }
    }
    return policy;
}

RewardMap reward_from_prediction(const FlowSnapshot& pred, const std::vector<double>& staleness,
                                 double staleness_weight) {
    const auto& g = pred.spec;
    if (staleness.size() != static_cast<size_t>(g.n_cells())) {
        throw ShapeError("staleness array size does not match grid");
    }
    RewardMap map(g, pred.time_index);
    double max_speed = 0.0;
    double max_stale = 0.0;
    std::vector<double> speed(static_cast<size_t>(g.n_cells()), 0.0);
    for (int r = 0; r < g.n_rows; ++r) {
        for (int c = 0; c < g.n_cols; ++c) {
            const size_t i = static_cast<size_t>(r * g.n_cols + c);
            speed[i] = std::hypot(pred.at(r, c, 0), pred.at(r, c, 1));
            max_speed = std::max(max_speed, speed[i]);
            if (staleness[i] < 0.0) throw ConfigError("staleness must be nonnegative");
            max_stale = std::max(max_stale, staleness[i]);
        }
    }
    for (size_t i = 0; i < speed.size(); ++i) {
        double v = max_speed > 0.0 ? speed[i] / max_speed : 0.0;
        if (max_stale > 0.0) v += staleness_weight * staleness[i] / max_stale;
        map.q[i] = v;
    }
    map.normalize();
    return map;
}

void save_policy(const PolicyParams& policy, const std::string& path,
                 const std::string& training_config_json) {
    policy.validate();
    json j;
    j["theta"] = policy.theta;
    j["feature_config"] = {{"scales", policy.feature_config.scales},
                           {"n_cones", policy.feature_config.n_cones}};
    j["training_config"] = json::parse(training_config_json);
    std::ofstream f(path);
    if (!f) throw IoError("cannot write policy to " + path);
    f << j.dump(2) << "\n";
}

PolicyParams load_policy(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open policy " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::parse_error& e) {
        throw FormatError("malformed policy file: " + std::string(e.what()),
                          static_cast<long long>(e.byte));
    }
    PolicyParams policy;
    policy.theta = j.at("theta").get<std::vector<double>>();
    policy.feature_config.scales = j.at("feature_config").at("scales").get<std::vector<int>>();
    policy.feature_config.n_cones = j.at("feature_config").at("n_cones").get<int>();
    policy.validate();
    return policy;
}

void write_path_csv(const SamplePath& path, const std::string& file) {
    std::ofstream f(file);
    if (!f) throw IoError("cannot write path to " + file);
    f << "step,row,col,reward\n";
    for (size_t i = 0; i < path.cells.size(); ++i) {
        const double reward = i == 0 ? 0.0 : path.rewards[i - 1];
        f << i << "," << path.cells[i].row << "," << path.cells[i].col << "," << reward << "\n";
    }
}

}  // namespace passt
