#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "passt/grid.hpp"

namespace passt {

struct Cell {
    int row = 0;
    int col = 0;
    bool operator==(const Cell&) const = default;
};

// Per-cell nonnegative reward, max-normalized to 1 when nonzero.
struct RewardMap {
    GridSpec spec;
    std::vector<double> q;
    int time_index = 0;

    RewardMap() = default;
    RewardMap(GridSpec s, int t) : spec(s), q(static_cast<size_t>(s.n_cells()), 0.0), time_index(t) {}

    [[nodiscard]] double& at(int row, int col) { return q[static_cast<size_t>(row * spec.n_cols + col)]; }
    [[nodiscard]] double at(int row, int col) const { return q[static_cast<size_t>(row * spec.n_cols + col)]; }

    // Divides by the max when it is positive; throws ConfigError on negatives
    // or non-finite entries.
    void normalize();
};

// Move directions in fixed tie-break order; north is +row (row 0 southernmost).
enum Action : int { kNorth = 0, kEast = 1, kSouth = 2, kWest = 3 };
inline constexpr int kNumActions = 4;

struct FeatureConfig {
    std::vector<int> scales{1, 3, 9};  // cone half-widths in cells
    int n_cones = kNumActions;

    [[nodiscard]] int feature_count() const {
        return n_cones * static_cast<int>(scales.size()) + 1;  // + shared bias
    }
};

struct PolicyParams {
    std::vector<double> theta;  // length feature_count()
    FeatureConfig feature_config;

    void validate() const;
};

PolicyParams zero_policy(const FeatureConfig& config = {});

struct SamplePath {
    std::vector<Cell> cells;         // visited cells, starting cell first
    std::vector<double> rewards;     // reward collected entering cells[i+1]
    double total_reward = 0.0;       // J
};

// Directional mean-residual-reward features: one value per (direction, scale)
// over the square cone of half-width `scale` in that direction (visited cells
// contribute 0), plus a constant bias feature last.
std::vector<double> featurize(const RewardMap& map, Cell position,
                              const std::vector<bool>& visited_mask,
                              const FeatureConfig& config = {});

// Rotates the base features so the acting direction comes first; per-action
// view scored by theta.
std::vector<double> action_features(const std::vector<double>& base_features,
                                    const FeatureConfig& config, int action);

std::array<bool, kNumActions> legal_actions(const GridSpec& spec, Cell position);

// Masked softmax over per-action scores theta . phi(s, a).
std::array<double, kNumActions> action_distribution(
    const PolicyParams& policy, const std::array<std::vector<double>, kNumActions>& features,
    const std::array<bool, kNumActions>& legal);

enum class RolloutMode { Sample, Greedy };

// Walks `horizon` steps consuming reward (entered cells drop to 0). Greedy
// mode takes the argmax action with N,E,S,W tie-breaking.
SamplePath rollout_policy(const PolicyParams& policy, const RewardMap& map, Cell start, int horizon,
                          RolloutMode mode, unsigned int seed);

struct PolicyTrainConfig {
    int n_maps = 500;
    int gmm_components = 5;  // components drawn uniformly from [1, this]
    int horizon = 30;
    int episodes_per_map = 4;
    double learning_rate = 0.05;
    unsigned int seed = 0;
    int map_rows = 16;
    int map_cols = 16;
    FeatureConfig feature_config;

    void validate() const;
};

// REINFORCE with a running-mean baseline on random Gaussian-mixture maps.
PolicyParams train_policy(const PolicyTrainConfig& config);

// Random normalized Gaussian-mixture reward map (training/evaluation stimulus).
RewardMap random_gmm_map(const GridSpec& spec, int max_components, std::mt19937_64& rng);

// Scalarizes a predicted snapshot into reward: normalized speed plus
// staleness_weight * normalized staleness, max-normalized.
RewardMap reward_from_prediction(const FlowSnapshot& pred, const std::vector<double>& staleness,
                                 double staleness_weight = 0.5);

// Policy checkpoint JSON and path CSV (step,row,col,reward).
void save_policy(const PolicyParams& policy, const std::string& path,
                 const std::string& training_config_json = "{}");
PolicyParams load_policy(const std::string& path);
void write_path_csv(const SamplePath& path, const std::string& file);

}  // namespace passt
