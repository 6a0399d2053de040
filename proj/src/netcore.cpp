#include "passt/netcore.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

namespace passt {

namespace fs = std::filesystem;
using nlohmann::json;

Activation activation_from_string(const std::string& name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "relu") return Activation::Relu;
    if (name == "identity") return Activation::Identity;
    throw ConfigError("unknown activation '" + name + "'");
}

std::string activation_name(Activation act) {
    switch (act) {
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
        case Activation::Identity: return "identity";
    }
    throw ConfigError("bad activation enum");
}

std::vector<TensorShape> NetArchitecture::shape_chain() const {
    if (n_rows < 1 || n_cols < 1) throw ShapeError("architecture grid must be positive");
    if (layers.empty()) throw ShapeError("architecture has no layers");
    std::vector<TensorShape> shapes;
    TensorShape cur{n_rows, n_cols, 2, 0};
    shapes.push_back(cur);
    for (size_t i = 0; i < layers.size(); ++i) {
        if (const auto* conv = std::get_if<ConvLayer>(&layers[i])) {
            if (cur.c <= 0) throw ShapeError("conv layer after flatten at layer " + std::to_string(i));
            if (conv->channels_out < 1 || conv->kernel < 1 || conv->stride < 1 || conv->padding < 0) {
                throw ShapeError("bad conv geometry at layer " + std::to_string(i));
            }
            const int oh = (cur.h + 2 * conv->padding - conv->kernel) / conv->stride + 1;
            const int ow = (cur.w + 2 * conv->padding - conv->kernel) / conv->stride + 1;
            if (oh < 1 || ow < 1 || cur.h + 2 * conv->padding < conv->kernel ||
                cur.w + 2 * conv->padding < conv->kernel) {
                throw ShapeError("conv layer " + std::to_string(i) + " shrinks input below 1x1");
            }
            cur = TensorShape{oh, ow, conv->channels_out, 0};
        } else if (const auto* dense = std::get_if<DenseLayer>(&layers[i])) {
            if (dense->width < 1) throw ShapeError("dense width must be positive");
            cur = TensorShape{0, 0, 0, dense->width};
        } else {
            if (cur.count() != n_rows * n_cols * 2) {
                throw ShapeError("reshape at layer " + std::to_string(i) + " expects " +
                                 std::to_string(n_rows * n_cols * 2) + " values, got " +
                                 std::to_string(cur.count()));
            }
            cur = TensorShape{n_rows, n_cols, 2, 0};
        }
        shapes.push_back(cur);
    }
    if (shapes.back().count() != n_rows * n_cols * 2) {
        throw ShapeError("network output size " + std::to_string(shapes.back().count()) +
                         " does not match grid size " + std::to_string(n_rows * n_cols * 2));
    }
    return shapes;
}

NetArchitecture reference_arch(int n_rows, int n_cols) {
    NetArchitecture arch;
    arch.n_rows = n_rows;
    arch.n_cols = n_cols;
    arch.layers = {
        ConvLayer{16, 3, 1, 1, Activation::Tanh},
        ConvLayer{32, 3, 2, 1, Activation::Tanh},
        ConvLayer{32, 3, 2, 1, Activation::Tanh},
        DenseLayer{256, Activation::Relu},
        DenseLayer{n_rows * n_cols * 2, Activation::Identity},
        ReshapeLayer{},
    };
    arch.shape_chain();
    return arch;
}

NetArchitecture large_arch(int n_rows, int n_cols) {
    NetArchitecture arch;
    arch.n_rows = n_rows;
    arch.n_cols = n_cols;
    arch.layers = {
        ConvLayer{32, 3, 1, 0, Activation::Tanh},
        ConvLayer{64, 3, 1, 0, Activation::Tanh},
        ConvLayer{128, 3, 2, 1, Activation::Tanh},
        ConvLayer{128, 3, 2, 1, Activation::Tanh},
        ConvLayer{128, 3, 2, 0, Activation::Tanh},
        DenseLayer{128, Activation::Relu},
        DenseLayer{128, Activation::Relu},
        DenseLayer{n_rows * n_cols * 2, Activation::Identity},
        ReshapeLayer{},
    };
    arch.shape_chain();
    return arch;
}

NetArchitecture arch_preset(const std::string& name, int n_rows, int n_cols) {
    if (name == "reference") return reference_arch(n_rows, n_cols);
    if (name == "large") return large_arch(n_rows, n_cols);
    throw ConfigError("unknown architecture preset '" + name + "'");
}

json arch_to_json(const NetArchitecture& arch) {
    json layers = json::array();
    for (const auto& layer : arch.layers) {
        if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
            layers.push_back({{"type", "conv"},
                              {"channels_out", conv->channels_out},
                              {"kernel", conv->kernel},
                              {"stride", conv->stride},
                              {"padding", conv->padding},
                              {"activation", activation_name(conv->act)}});
        } else if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
            layers.push_back({{"type", "dense"},
                              {"width", dense->width},
                              {"activation", activation_name(dense->act)}});
        } else {
            layers.push_back({{"type", "reshape"}});
        }
    }
    return {{"n_rows", arch.n_rows}, {"n_cols", arch.n_cols}, {"layers", layers}};
}

NetArchitecture arch_from_json(const json& j) {
    NetArchitecture arch;
    arch.n_rows = j.at("n_rows").get<int>();
    arch.n_cols = j.at("n_cols").get<int>();
    for (const auto& lj : j.at("layers")) {
        const std::string type = lj.at("type").get<std::string>();
        if (type == "conv") {
            arch.layers.push_back(ConvLayer{
                lj.at("channels_out").get<int>(), lj.at("kernel").get<int>(),
                lj.at("stride").get<int>(), lj.at("padding").get<int>(),
                activation_from_string(lj.at("activation").get<std::string>())});
        } else if (type == "dense") {
            arch.layers.push_back(DenseLayer{
                lj.at("width").get<int>(),
                activation_from_string(lj.at("activation").get<std::string>())});
        } else if (type == "reshape") {
            arch.layers.push_back(ReshapeLayer{});
        } else {
            throw ConfigError("unknown layer type '" + type + "'");
        }
    }
    arch.shape_chain();
    return arch;
}

ParameterLayout parameter_layout(const NetArchitecture& arch) {
    const auto shapes = arch.shape_chain();
    ParameterLayout layout;
    size_t offset = 0;
    for (size_t i = 0; i < arch.layers.size(); ++i) {
        ParamSlice slice;
        if (const auto* conv = std::get_if<ConvLayer>(&arch.layers[i])) {
            slice.fan_in = conv->kernel * conv->kernel * shapes[i].c;
            slice.fan_out = conv->channels_out;
        } else if (const auto* dense = std::get_if<DenseLayer>(&arch.layers[i])) {
            slice.fan_in = shapes[i].count();
            slice.fan_out = dense->width;
        }
        if (slice.fan_in > 0) {
            slice.w_offset = offset;
            slice.w_count = static_cast<size_t>(slice.fan_in) * slice.fan_out;
            offset += slice.w_count;
            slice.b_offset = offset;
            slice.b_count = static_cast<size_t>(slice.fan_out);
            offset += slice.b_count;
        }
        layout.slices.push_back(slice);
    }
    layout.total = offset;
    return layout;
}

ParameterVector init_params(const NetArchitecture& arch, unsigned int seed) {
    const auto layout = parameter_layout(arch);
    ParameterVector params;
    params.init_seed = seed;
    params.data.assign(layout.total, 0.0);
    for (size_t i = 0; i < layout.slices.size(); ++i) {
        const auto& slice = layout.slices[i];
        if (slice.fan_in == 0) continue;
        std::mt19937_64 rng(static_cast<uint64_t>(seed) * 0x9E3779B97F4A7C15ULL + i + 1);
        const double scale = 1.0 / std::sqrt(static_cast<double>(slice.fan_in));
        std::uniform_real_distribution<double> dist(-scale, scale);
        for (size_t k = 0; k < slice.w_count; ++k) params.data[slice.w_offset + k] = dist(rng);
        for (size_t k = 0; k < slice.b_count; ++k) params.data[slice.b_offset + k] = dist(rng);
    }
    return params;
}

namespace {

void apply_activation(Mat& m, Activation act) {
    switch (act) {
        case Activation::Tanh:
            m = m.array().tanh().matrix();
            break;
        case Activation::Relu:
            m = m.cwiseMax(0.0);
            break;
        case Activation::Identity:
            break;
    }
}

// Derivative of the activation expressed through its output value.
Mat activation_grad_from_output(const Mat& y, Activation act) {
    switch (act) {
        case Activation::Tanh:
            return (1.0 - y.array().square()).matrix();
        case Activation::Relu:
            return (y.array() > 0.0).cast<double>().matrix();
        case Activation::Identity:
            return Mat::Ones(y.rows(), y.cols());
    }
    throw ConfigError("bad activation enum");
}

Mat im2col(const Mat& in, int B, int H, int W, int Cin, const ConvLayer& conv, int OH, int OW) {
    const int K = conv.kernel;
    Mat col = Mat::Zero(static_cast<Eigen::Index>(B) * OH * OW, static_cast<Eigen::Index>(K) * K * Cin);
    for (int b = 0; b < B; ++b) {
        const double* sample = in.data() + static_cast<size_t>(b) * in.cols();
        for (int orow = 0; orow < OH; ++orow) {
            for (int ocol = 0; ocol < OW; ++ocol) {
                double* dst =
                    col.data() + (static_cast<size_t>((b * OH + orow) * OW + ocol)) * col.cols();
                for (int kr = 0; kr < K; ++kr) {
                    const int r = orow * conv.stride - conv.padding + kr;
                    if (r < 0 || r >= H) continue;
                    for (int kc = 0; kc < K; ++kc) {
                        const int c = ocol * conv.stride - conv.padding + kc;
                        if (c < 0 || c >= W) continue;
                        std::memcpy(dst + (kr * K + kc) * Cin, sample + (r * W + c) * Cin,
                                    sizeof(double) * static_cast<size_t>(Cin));
                    }
                }
            }
        }
    }
    return col;
}

void col2im_add(const Mat& dcol, Mat& din, int B, int H, int W, int Cin, const ConvLayer& conv,
                int OH, int OW) {
    const int K = conv.kernel;
    for (int b = 0; b < B; ++b) {
        double* sample = din.data() + static_cast<size_t>(b) * din.cols();
        for (int orow = 0; orow < OH; ++orow) {
            for (int ocol = 0; ocol < OW; ++ocol) {
                const double* src =
                    dcol.data() + (static_cast<size_t>((b * OH + orow) * OW + ocol)) * dcol.cols();
                for (int kr = 0; kr < K; ++kr) {
                    const int r = orow * conv.stride - conv.padding + kr;
                    if (r < 0 || r >= H) continue;
                    for (int kc = 0; kc < K; ++kc) {
                        const int c = ocol * conv.stride - conv.padding + kc;
                        if (c < 0 || c >= W) continue;
                        for (int ci = 0; ci < Cin; ++ci) {
                            sample[(r * W + c) * Cin + ci] += src[(kr * K + kc) * Cin + ci];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

Mat forward_batch(const NetArchitecture& arch, const ParameterVector& params, const Mat& input,
                  ForwardTrace* trace) {
    const auto shapes = arch.shape_chain();
    const auto layout = parameter_layout(arch);
    if (params.data.size() != layout.total) {
        throw ShapeError("parameter vector size " + std::to_string(params.data.size()) +
                         " does not match architecture (" + std::to_string(layout.total) + ")");
    }
    if (input.cols() != shapes[0].count()) {
        throw ShapeError("input feature count " + std::to_string(input.cols()) +
                         " does not match architecture input " + std::to_string(shapes[0].count()));
    }
    const int B = static_cast<int>(input.rows());

    Mat cur = input;
    if (trace) {
        trace->acts.clear();
        trace->acts.push_back(cur);
    }
    for (size_t i = 0; i < arch.layers.size(); ++i) {
        const auto& slice = layout.slices[i];
        if (const auto* conv = std::get_if<ConvLayer>(&arch.layers[i])) {
            const auto& in_shape = shapes[i];
            const auto& out_shape = shapes[i + 1];
            Mat col = im2col(cur, B, in_shape.h, in_shape.w, in_shape.c, *conv, out_shape.h,
                             out_shape.w);
            Eigen::Map<const Mat> wmat(params.data.data() + slice.w_offset, slice.fan_in,
                                       slice.fan_out);
            Eigen::Map<const Eigen::RowVectorXd> bias(params.data.data() + slice.b_offset,
                                                      slice.fan_out);
            Mat pre = col * wmat;
            pre.rowwise() += bias;
            apply_activation(pre, conv->act);
            // (B*OH*OW) x Cout row-major is bitwise the B x (OH*OW*Cout) batch.
            cur = Eigen::Map<const Mat>(pre.data(), B, out_shape.count());
        } else if (const auto* dense = std::get_if<DenseLayer>(&arch.layers[i])) {
            Eigen::Map<const Mat> wmat(params.data.data() + slice.w_offset, slice.fan_in,
                                       slice.fan_out);
            Eigen::Map<const Eigen::RowVectorXd> bias(params.data.data() + slice.b_offset,
                                                      slice.fan_out);
            Mat pre = cur * wmat;
            pre.rowwise() += bias;
            apply_activation(pre, dense->act);
            cur = std::move(pre);
        }
        // Reshape is a no-op on the flat batch layout.
        if (trace) trace->acts.push_back(cur);
    }
    return cur;
}

Mat backward_batch(const NetArchitecture& arch, const ParameterVector& params,
                   const ForwardTrace& trace, const Mat& cotangent,
                   std::vector<double>& param_grad) {
    const auto shapes = arch.shape_chain();
    const auto layout = parameter_layout(arch);
    if (trace.acts.size() != arch.layers.size() + 1) throw ShapeError("trace does not match architecture");
    if (param_grad.size() != layout.total) throw ShapeError("param_grad has wrong size");
    if (cotangent.rows() != trace.acts[0].rows() || cotangent.cols() != shapes.back().count()) {
        throw ShapeError("cotangent shape mismatch");
    }
    const int B = static_cast<int>(cotangent.rows());

    Mat g = cotangent;
    for (size_t i = arch.layers.size(); i-- > 0;) {
        const auto& slice = layout.slices[i];
        const Mat& x = trace.acts[i];
        const Mat& y = trace.acts[i + 1];
        if (const auto* conv = std::get_if<ConvLayer>(&arch.layers[i])) {
            const auto& in_shape = shapes[i];
            const auto& out_shape = shapes[i + 1];
            const Eigen::Index pix = static_cast<Eigen::Index>(B) * out_shape.h * out_shape.w;
            Eigen::Map<const Mat> y_pix(y.data(), pix, out_shape.c);
            Eigen::Map<const Mat> g_pix(g.data(), pix, out_shape.c);
            Mat dpre = g_pix.cwiseProduct(activation_grad_from_output(y_pix, conv->act));
            Mat col = im2col(x, B, in_shape.h, in_shape.w, in_shape.c, *conv, out_shape.h,
                             out_shape.w);
            Eigen::Map<Mat> dw(param_grad.data() + slice.w_offset, slice.fan_in, slice.fan_out);
            dw.noalias() += col.transpose() * dpre;
            Eigen::Map<Eigen::RowVectorXd> db(param_grad.data() + slice.b_offset, slice.fan_out);
            db += dpre.colwise().sum();
            Eigen::Map<const Mat> wmat(params.data.data() + slice.w_offset, slice.fan_in,
                                       slice.fan_out);
            Mat dcol = dpre * wmat.transpose();
            Mat dx = Mat::Zero(B, in_shape.count());
            col2im_add(dcol, dx, B, in_shape.h, in_shape.w, in_shape.c, *conv, out_shape.h,
                       out_shape.w);
            g = std::move(dx);
        } else if (const auto* dense = std::get_if<DenseLayer>(&arch.layers[i])) {
            Mat dpre = g.cwiseProduct(activation_grad_from_output(y, dense->act));
            Eigen::Map<Mat> dw(param_grad.data() + slice.w_offset, slice.fan_in, slice.fan_out);
            dw.noalias() += x.transpose() * dpre;
            Eigen::Map<Eigen::RowVectorXd> db(param_grad.data() + slice.b_offset, slice.fan_out);
            db += dpre.colwise().sum();
            Eigen::Map<const Mat> wmat(params.data.data() + slice.w_offset, slice.fan_in,
                                       slice.fan_out);
            g = dpre * wmat.transpose();
        }
    }
    return g;
}

FlowSnapshot forward(const NetArchitecture& arch, const ParameterVector& params,
                     const FlowSnapshot& input) {
    if (input.spec.n_rows != arch.n_rows || input.spec.n_cols != arch.n_cols) {
        throw ShapeError("snapshot grid does not match architecture");
    }
    Eigen::Map<const Mat> in(input.values.data(), 1, static_cast<Eigen::Index>(input.values.size()));
    Mat out = forward_batch(arch, params, in);
    FlowSnapshot result(input.spec, input.time_index);
    std::copy(out.data(), out.data() + out.cols(), result.values.begin());
    return result;
}

std::pair<ParameterVector, FlowSnapshot> backward(const NetArchitecture& arch,
                                                  const ParameterVector& params,
                                                  const FlowSnapshot& input,
                                                  const FlowSnapshot& output_cotangent) {
    if (input.spec.n_rows != arch.n_rows || input.spec.n_cols != arch.n_cols ||
        !(output_cotangent.spec == input.spec)) {
        throw ShapeError("snapshot grid does not match architecture");
    }
    Eigen::Map<const Mat> in(input.values.data(), 1, static_cast<Eigen::Index>(input.values.size()));
    Eigen::Map<const Mat> ct(output_cotangent.values.data(), 1,
                             static_cast<Eigen::Index>(output_cotangent.values.size()));
    ForwardTrace trace;
    forward_batch(arch, params, in, &trace);
    ParameterVector grad;
    grad.init_seed = params.init_seed;
    grad.data.assign(params.data.size(), 0.0);
    Mat din = backward_batch(arch, params, trace, ct, grad.data);
    FlowSnapshot input_grad(input.spec, input.time_index);
    std::copy(din.data(), din.data() + din.cols(), input_grad.values.begin());
    return {std::move(grad), std::move(input_grad)};
}

void save_checkpoint(const std::string& dir, const NetArchitecture& arch,
                     const ParameterVector& params, const json& extra) {
    const auto layout = parameter_layout(arch);
    if (params.data.size() != layout.total) throw ShapeError("params do not match architecture");
    fs::create_directories(dir);
    json manifest;
    manifest["version"] = 1;
    manifest["architecture"] = arch_to_json(arch);
    manifest["init_seed"] = params.init_seed;
    manifest["param_count"] = params.data.size();
    if (!extra.is_null()) {
        for (auto it = extra.begin(); it != extra.end(); ++it) manifest[it.key()] = it.value();
    }
    {
        std::ofstream mf(fs::path(dir) / "manifest.json");
        if (!mf) throw IoError("cannot write checkpoint manifest in " + dir);
        mf << manifest.dump(2) << "\n";
    }
    std::ofstream f(fs::path(dir) / "params.f64", std::ios::binary);
    if (!f) throw IoError("cannot write params.f64 in " + dir);
    f.write(reinterpret_cast<const char*>(params.data.data()),
            static_cast<std::streamsize>(params.data.size() * sizeof(double)));
    if (!f) throw IoError("short write to params.f64 in " + dir);
}

Checkpoint load_checkpoint(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw IoError("cannot open checkpoint manifest in " + dir);
    json manifest;
    try {
        manifest = json::parse(mf);
    } catch (const json::parse_error& e) {
        throw FormatError("malformed checkpoint manifest: " + std::string(e.what()),
                          static_cast<long long>(e.byte));
    }
    if (manifest.value("version", -1) != 1) {
        throw VersionError("unsupported checkpoint version");
    }

    Checkpoint ckpt;
    ckpt.arch = arch_from_json(manifest.at("architecture"));
    ckpt.manifest = manifest;
    ckpt.params.init_seed = manifest.value("init_seed", 0u);

    const auto layout = parameter_layout(ckpt.arch);
    const auto path = fs::path(dir) / "params.f64";
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open params.f64 in " + dir);
    const auto actual = fs::file_size(path);
    if (actual != layout.total * sizeof(double)) {
        throw FormatError("params.f64 length does not match architecture",
                          static_cast<long long>(actual));
    }
    ckpt.params.data.assign(layout.total, 0.0);
    f.read(reinterpret_cast<char*>(ckpt.params.data.data()),
           static_cast<std::streamsize>(layout.total * sizeof(double)));
    if (!f) throw FormatError("truncated params.f64", 0);
    return ckpt;
}

}  // namespace passt
