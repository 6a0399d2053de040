#pragma once

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "passt/grid.hpp"

namespace passt {

// Row-major throughout: a batch is B x features with each sample laid out
// [row][col][channel].
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { Tanh, Relu, Identity };

Activation activation_from_string(const std::string& name);
std::string activation_name(Activation act);

struct ConvLayer {
    int channels_out = 0;
    int kernel = 3;
    int stride = 1;
    int padding = 0;
    Activation act = Activation::Tanh;
    bool operator==(const ConvLayer&) const = default;
};

struct DenseLayer {
    int width = 0;
    Activation act = Activation::Relu;
    bool operator==(const DenseLayer&) const = default;
};

struct ReshapeLayer {
    bool operator==(const ReshapeLayer&) const = default;
};

using Layer = std::variant<ConvLayer, DenseLayer, ReshapeLayer>;

// Shape of the tensor flowing between layers; dense layers flatten implicitly.
struct TensorShape {
    int h = 0, w = 0, c = 0;  // c == 0 means already flat with `flat` entries
    int flat = 0;
    [[nodiscard]] int count() const { return c > 0 ? h * w * c : flat; }
};

struct NetArchitecture {
    int n_rows = 0;
    int n_cols = 0;
    std::vector<Layer> layers;

    // Validates the shape chain and that output size equals input size.
    // Returns the per-layer input shapes (layers.size()+1 entries, last is the
    // output shape). Throws ShapeError.
    [[nodiscard]] std::vector<TensorShape> shape_chain() const;

    bool operator==(const NetArchitecture&) const = default;
};

// Desk-scale architecture used throughout the experiments.
NetArchitecture reference_arch(int n_rows, int n_cols);
// Five-conv / wide-dense variant.
NetArchitecture large_arch(int n_rows, int n_cols);
NetArchitecture arch_preset(const std::string& name, int n_rows, int n_cols);

nlohmann::json arch_to_json(const NetArchitecture& arch);
NetArchitecture arch_from_json(const nlohmann::json& j);

// Flat weight storage. Per layer: weights (im2col/GEMM layout, fan_in x out,
// row-major) followed by biases.
struct ParamSlice {
    size_t w_offset = 0, w_count = 0;
    size_t b_offset = 0, b_count = 0;
    int fan_in = 0, fan_out = 0;
};

struct ParameterLayout {
    std::vector<ParamSlice> slices;  // one per layer (empty slice for Reshape)
    size_t total = 0;
};

ParameterLayout parameter_layout(const NetArchitecture& arch);

struct ParameterVector {
    std::vector<double> data;
    unsigned int init_seed = 0;
};

// Uniform init scaled by 1/sqrt(fan_in), deterministic per (seed, layer).
ParameterVector init_params(const NetArchitecture& arch, unsigned int seed);

// Post-activation value of every layer; acts[0] is the input batch.
struct ForwardTrace {
    std::vector<Mat> acts;
};

Mat forward_batch(const NetArchitecture& arch, const ParameterVector& params, const Mat& input,
                  ForwardTrace* trace = nullptr);

// Gradients of <cotangent, forward(input)> summed over the batch. Parameter
// gradients are accumulated into param_grad (must be pre-sized to the layout
// total); the input gradient is returned.
Mat backward_batch(const NetArchitecture& arch, const ParameterVector& params,
                   const ForwardTrace& trace, const Mat& cotangent,
                   std::vector<double>& param_grad);

FlowSnapshot forward(const NetArchitecture& arch, const ParameterVector& params,
                     const FlowSnapshot& input);

std::pair<ParameterVector, FlowSnapshot> backward(const NetArchitecture& arch,
                                                  const ParameterVector& params,
                                                  const FlowSnapshot& input,
                                                  const FlowSnapshot& output_cotangent);

// Checkpoint directory: manifest.json (arch + extra fields) + params.f64
// (little-endian doubles in layout order).
void save_checkpoint(const std::string& dir, const NetArchitecture& arch,
                     const ParameterVector& params, const nlohmann::json& extra = {});
struct Checkpoint {
    NetArchitecture arch;
    ParameterVector params;
    nlohmann::json manifest;
};
Checkpoint load_checkpoint(const std::string& dir);

}  // namespace passt
