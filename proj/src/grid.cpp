#include "passt/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace passt {

namespace fs = std::filesystem;
using nlohmann::json;

void GridSpec::validate() const {
    if (n_rows < 2 || n_cols < 2) {
        throw ConfigError("grid must be at least 2x2, got " + std::to_string(n_rows) + "x" +
                          std::to_string(n_cols));
    }
    if (!(cell_size > 0.0) || !std::isfinite(cell_size)) {
        throw ConfigError("cell_size must be positive and finite");
    }
    if (!std::isfinite(origin_x) || !std::isfinite(origin_y)) {
        throw ConfigError("grid origin must be finite");
    }
}

FlowSnapshot::FlowSnapshot(GridSpec s, int t)
    : spec(s), time_index(t), values(static_cast<size_t>(s.n_rows) * s.n_cols * 2, 0.0) {
    spec.validate();
}

FlowSnapshot::FlowSnapshot(GridSpec s, int t, std::vector<double> vals)
    : spec(s), time_index(t), values(std::move(vals)) {
    validate();
}

void FlowSnapshot::validate() const {
    spec.validate();
    if (values.size() != static_cast<size_t>(spec.n_rows) * spec.n_cols * 2) {
        throw ConfigError("snapshot buffer size does not match grid spec");
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw ConfigError("snapshot contains non-finite values");
    }
}

void FlowSeries::validate() const {
    spec.validate();
    if (snapshots.size() < 2) throw ConfigError("series needs at least 2 snapshots");
    for (size_t i = 0; i < snapshots.size(); ++i) {
        const auto& s = snapshots[i];
        s.validate();
        if (!(s.spec == spec)) throw ConfigError("snapshot spec mismatch in series");
        if (i > 0 && s.time_index != snapshots[i - 1].time_index + 1) {
            throw ConfigError("snapshot time indices must increase by 1");
        }
    }
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
}

void SmoothingKernel::validate() const {
    if (size < 1 || size % 2 == 0) throw ConfigError("kernel size must be odd and positive");
    if (!(variance > 0.0)) throw ConfigError("kernel variance must be positive");
}

std::vector<double> SmoothingKernel::weights() const {
    validate();
    const int half = size / 2;
    std::vector<double> w(static_cast<size_t>(size) * size);
    double total = 0.0;
    for (int dy = -half; dy <= half; ++dy) {
        for (int dx = -half; dx <= half; ++dx) {
            double v = std::exp(-(dx * dx + dy * dy) / (2.0 * variance));
            w[static_cast<size_t>((dy + half) * size + dx + half)] = v;
            total += v;
        }
    }
    for (double& v : w) v /= total;
    return w;
}

void gaussian_smooth_flat(const GridSpec& spec, const std::vector<double>& weights, int ksize,
                          const double* field, double* out) {
    const int half = ksize / 2;
    const int R = spec.n_rows;
    const int C = spec.n_cols;
    for (int r = 0; r < R; ++r) {
        for (int c = 0; c < C; ++c) {
            double acc0 = 0.0, acc1 = 0.0;
            for (int dy = -half; dy <= half; ++dy) {
                const int rr = std::clamp(r + dy, 0, R - 1);
                for (int dx = -half; dx <= half; ++dx) {
                    const int cc = std::clamp(c + dx, 0, C - 1);
                    const double w = weights[static_cast<size_t>((dy + half) * ksize + dx + half)];
                    acc0 += w * field[(rr * C + cc) * 2 + 0];
                    acc1 += w * field[(rr * C + cc) * 2 + 1];
                }
            }
            out[(r * C + c) * 2 + 0] = acc0;
            out[(r * C + c) * 2 + 1] = acc1;
        }
    }
}

void gaussian_smooth_adjoint_flat(const GridSpec& spec, const std::vector<double>& weights,
                                  int ksize, const double* cotangent, double* out) {
    const int half = ksize / 2;
    const int R = spec.n_rows;
    const int C = spec.n_cols;
    std::fill(out, out + static_cast<size_t>(R) * C * 2, 0.0);
    for (int r = 0; r < R; ++r) {
        for (int c = 0; c < C; ++c) {
            const double g0 = cotangent[(r * C + c) * 2 + 0];
            const double g1 = cotangent[(r * C + c) * 2 + 1];
            for (int dy = -half; dy <= half; ++dy) {
                const int rr = std::clamp(r + dy, 0, R - 1);
                for (int dx = -half; dx <= half; ++dx) {
                    const int cc = std::clamp(c + dx, 0, C - 1);
                    const double w = weights[static_cast<size_t>((dy + half) * ksize + dx + half)];
                    out[(rr * C + cc) * 2 + 0] += w * g0;
                    out[(rr * C + cc) * 2 + 1] += w * g1;
                }
            }
        }
    }
}

FlowSnapshot gaussian_smooth(const FlowSnapshot& field, const SmoothingKernel& kernel) {
    const auto w = kernel.weights();
    FlowSnapshot out(field.spec, field.time_index);
    gaussian_smooth_flat(field.spec, w, kernel.size, field.values.data(), out.values.data());
    return out;
}

Vec2 bilinear_sample(const FlowSnapshot& field, double world_x, double world_y) {
    const auto& g = field.spec;
    const double fc = (world_x - g.origin_x) / g.cell_size;
    const double fr = (world_y - g.origin_y) / g.cell_size;
    const double eps = 1e-9;
    if (fc < -eps || fc > g.n_cols - 1 + eps || fr < -eps || fr > g.n_rows - 1 + eps) {
        throw OutOfBoundsError("sample point outside grid bounding box");
    }
    const int c0 = std::clamp(static_cast<int>(std::floor(fc)), 0, g.n_cols - 2);
    const int r0 = std::clamp(static_cast<int>(std::floor(fr)), 0, g.n_rows - 2);
    const double tx = std::clamp(fc - c0, 0.0, 1.0);
    const double ty = std::clamp(fr - r0, 0.0, 1.0);
    Vec2 out{};
    for (int comp = 0; comp < 2; ++comp) {
        const double v00 = field.at(r0, c0, comp);
        const double v01 = field.at(r0, c0 + 1, comp);
        const double v10 = field.at(r0 + 1, c0, comp);
        const double v11 = field.at(r0 + 1, c0 + 1, comp);
        out[static_cast<size_t>(comp)] = (1 - ty) * ((1 - tx) * v00 + tx * v01) +
                                         ty * ((1 - tx) * v10 + tx * v11);
    }
    return out;
}

void write_flowpack(const FlowSeries& series, const std::string& dir) {
    series.validate();
    fs::create_directories(dir);
    const auto& g = series.spec;

    json manifest;
    manifest["version"] = 1;
    manifest["n_rows"] = g.n_rows;
    manifest["n_cols"] = g.n_cols;
    manifest["n_steps"] = series.snapshots.size();
    manifest["components"] = 2;
    manifest["cell_size_m"] = g.cell_size;
    manifest["origin"] = {g.origin_x, g.origin_y};
    manifest["dt"] = series.dt;
    manifest["source"] = series.source;
    {
        std::ofstream mf(fs::path(dir) / "manifest.json");
        if (!mf) throw IoError("cannot write manifest in " + dir);
        mf << manifest.dump(2) << "\n";
    }

    std::ofstream f(fs::path(dir) / "field.f32", std::ios::binary);
    if (!f) throw IoError("cannot write field.f32 in " + dir);
    std::vector<float> buf;
    buf.reserve(series.snapshots.front().values.size());
    for (const auto& snap : series.snapshots) {
        buf.clear();
        for (double v : snap.values) buf.push_back(static_cast<float>(v));
        f.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!f) throw IoError("short write to field.f32 in " + dir);
}

FlowSeries read_flowpack(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw IoError("cannot open manifest.json in " + dir);
    json manifest;
    try {
        manifest = json::parse(mf);
    } catch (const json::parse_error& e) {
        throw FormatError("malformed manifest.json: " + std::string(e.what()),
                          static_cast<long long>(e.byte));
    }

    if (!manifest.contains("version")) throw FormatError("manifest missing version", 0);
    if (manifest["version"].get<int>() != 1) {
        throw VersionError("unsupported flowpack version " + manifest["version"].dump());
    }
    for (const char* key : {"n_rows", "n_cols", "n_steps", "components", "cell_size_m", "origin", "dt"}) {
        if (!manifest.contains(key)) throw FormatError(std::string("manifest missing ") + key, 0);
    }
    if (manifest["components"].get<int>() != 2) {
        throw FormatError("flowpack must have 2 components", 0);
    }

    FlowSeries series;
    series.spec.n_rows = manifest["n_rows"].get<int>();
    series.spec.n_cols = manifest["n_cols"].get<int>();
    series.spec.cell_size = manifest["cell_size_m"].get<double>();
    series.spec.origin_x = manifest["origin"][0].get<double>();
    series.spec.origin_y = manifest["origin"][1].get<double>();
    series.dt = manifest["dt"].get<double>();
    series.source = manifest.value("source", std::string());
    series.spec.validate();

    const auto n_steps = manifest["n_steps"].get<size_t>();
    const size_t per_snap = static_cast<size_t>(series.spec.n_rows) * series.spec.n_cols * 2;
    const auto path = fs::path(dir) / "field.f32";
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open field.f32 in " + dir);
    const auto actual = fs::file_size(path);
    const auto expected = n_steps * per_snap * sizeof(float);
    if (actual != expected) {
        throw FormatError("field.f32 length " + std::to_string(actual) + " does not match manifest (" +
                              std::to_string(expected) + " expected)",
                          static_cast<long long>(std::min<uintmax_t>(actual, expected)));
    }

    std::vector<float> buf(per_snap);
    for (size_t t = 0; t < n_steps; ++t) {
        f.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(per_snap * sizeof(float)));
        if (!f) throw FormatError("truncated field.f32", static_cast<long long>(t * per_snap * 4));
        FlowSnapshot snap(series.spec, static_cast<int>(t));
        for (size_t i = 0; i < per_snap; ++i) snap.values[i] = static_cast<double>(buf[i]);
        snap.validate();
        series.snapshots.push_back(std::move(snap));
    }
    series.validate();
    return series;
}

}  // namespace passt
