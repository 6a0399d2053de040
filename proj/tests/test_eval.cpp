#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "passt/eval.hpp"

using namespace passt;

namespace {

GridSpec grid(int r, int c) { return GridSpec{r, c, 1.0, 0.0, 0.0}; }

FlowSnapshot random_snapshot(const GridSpec& g, unsigned seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-scale, scale);
    FlowSnapshot snap(g, 0);
    for (double& v : snap.values) v = dist(rng);
    return snap;
}

KnodeModel identity_model(int n_rows, int n_cols) {
    NetArchitecture arch;
    arch.n_rows = n_rows;
    arch.n_cols = n_cols;
    arch.layers = {ConvLayer{2, 1, 1, 0, Activation::Identity},
                   DenseLayer{n_rows * n_cols * 2, Activation::Identity}, ReshapeLayer{}};
    KnodeModel model;
    model.arch = arch;
    model.params = init_params(arch, 0);
    std::fill(model.params.data.begin(), model.params.data.end(), 0.0);
    model.kernel = SmoothingKernel{3, 0.5};
    model.substeps = 6;
    return model;
}

// Hand-rolled singular values via Jacobi eigenvalue iteration on A^T A.
// Independent of Eigen; O(n^3) per sweep, fine for the small test matrices.
std::vector<double> jacobi_singular_values(const std::vector<std::vector<double>>& a) {
    const size_t m = a.size();
    const size_t n = a[0].size();
    std::vector<std::vector<double>> s(n, std::vector<double>(n, 0.0));
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (size_t k = 0; k < m; ++k) acc += a[k][i] * a[k][j];
            s[i][j] = acc;
        }
    }
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (size_t p = 0; p < n; ++p) {
            for (size_t q = p + 1; q < n; ++q) off += s[p][q] * s[p][q];
        }
        if (off < 1e-24) break;
        for (size_t p = 0; p < n; ++p) {
            for (size_t q = p + 1; q < n; ++q) {
                if (std::abs(s[p][q]) < 1e-30) continue;
                const double theta = 0.5 * std::atan2(2.0 * s[p][q], s[q][q] - s[p][p]);
                const double c = std::cos(theta);
                const double t = std::sin(theta);
                for (size_t k = 0; k < n; ++k) {
                    const double skp = s[k][p];
                    const double skq = s[k][q];
                    s[k][p] = c * skp - t * skq;
                    s[k][q] = t * skp + c * skq;
                }
                for (size_t k = 0; k < n; ++k) {
                    const double spk = s[p][k];
                    const double sqk = s[q][k];
                    s[p][k] = c * spk - t * sqk;
                    s[q][k] = t * spk + c * sqk;
                }
            }
        }
    }
    std::vector<double> sv(n);
    for (size_t i = 0; i < n; ++i) sv[i] = std::sqrt(std::max(0.0, s[i][i]));
    std::sort(sv.rbegin(), sv.rend());
    return sv;
}

}  // namespace

TEST_CASE("mse on hand values") {
    FlowSnapshot a(grid(2, 2), 0), b(grid(2, 2), 0);
    a.at(0, 0, 0) = 1.0;
    a.at(0, 0, 1) = 2.0;
    b.at(0, 1, 0) = 3.0;
    // cell (0,0): (1-0)^2 + (2-0)^2 = 5; cell (0,1): (0-3)^2 = 9; the other
    // two cells contribute 0; mean over 4 cells = 3.5
    CHECK(mse(a, b) == doctest::Approx(3.5));
    CHECK(rmse(a, b) == doctest::Approx(std::sqrt(3.5)));
    CHECK(mse(a, a) == doctest::Approx(0.0));
}

TEST_CASE("mse shape mismatch throws") {
    FlowSnapshot a(grid(2, 2), 0), b(grid(2, 3), 0);
    CHECK_THROWS_AS(mse(a, b), ShapeError);
    CHECK_THROWS_AS(cosine_distance(a, b), ShapeError);
}

TEST_CASE("cosine distance on hand values") {
    FlowSnapshot a(grid(2, 2), 0), b(grid(2, 2), 0);
    // cell (0,0): parallel -> sim 1
    a.at(0, 0, 0) = 2.0;
    b.at(0, 0, 0) = 5.0;
    // cell (0,1): orthogonal -> sim 0
    a.at(0, 1, 0) = 1.0;
    b.at(0, 1, 1) = 1.0;
    // remaining cells: both zero -> excluded
    const double expected = 1.0 - (1.0 + 0.0) / 2.0;
    CHECK(cosine_distance(a, b) == doctest::Approx(expected));
}

TEST_CASE("cosine distance is scale invariant and mse is not") {
    const auto a = random_snapshot(grid(5, 5), 1);
    auto b = random_snapshot(grid(5, 5), 2);
    const double cd = cosine_distance(a, b);
    const double m = mse(a, b);
    auto b2 = b;
    for (double& v : b2.values) v *= 3.0;
    CHECK(cosine_distance(a, b2) == doctest::Approx(cd).epsilon(1e-12));
    CHECK(mse(a, b2) != doctest::Approx(m));
}

TEST_CASE("cosine distance of anti-parallel fields is 2") {
    const auto a = random_snapshot(grid(4, 4), 3);
    auto b = a;
    for (double& v : b.values) v = -v;
    CHECK(cosine_distance(a, b) == doctest::Approx(2.0));
    CHECK(cosine_distance(a, a) == doctest::Approx(0.0));
}

TEST_CASE("cosine distance returns 0 when every cell is excluded") {
    FlowSnapshot a(grid(2, 2), 0), b(grid(2, 2), 0);
    CHECK(cosine_distance(a, b) == 0.0);
}

TEST_CASE("lookahead_eval with an identity model reports persistence errors") {
    // Zero-params model predicts "no change", so lookahead-l MSE equals the
    // mean of mse(u(t), u(t+l)) over valid starts -- computable by hand.
    const auto model = identity_model(3, 3);
    FlowSeries s;
    s.spec = grid(3, 3);
    for (int t = 0; t < 8; ++t) {
        auto snap = random_snapshot(s.spec, 10 + static_cast<unsigned>(t), 0.5);
        snap.time_index = t;
        s.snapshots.push_back(snap);
    }
    const std::vector<int> ls{1, 3};
    const auto report = lookahead_eval(model, s, ls);
    REQUIRE(report.lookaheads == ls);
    REQUIRE(report.mean_mse.size() == 2);

    for (size_t li = 0; li < ls.size(); ++li) {
        const int l = ls[li];
        double acc = 0.0;
        double cacc = 0.0;
        int count = 0;
        // Every start with start + l inside the series counts for lookahead l.
        for (size_t t = 0; t + static_cast<size_t>(l) < s.size(); ++t) {
            acc += mse(s.snapshots[t], s.snapshots[t + static_cast<size_t>(l)]);
            cacc += cosine_distance(s.snapshots[t], s.snapshots[t + static_cast<size_t>(l)]);
            ++count;
        }
        CHECK(report.mean_mse[li] == doctest::Approx(acc / count).epsilon(1e-12));
        CHECK(report.mean_cosine_distance[li] == doctest::Approx(cacc / count).epsilon(1e-12));
    }
}

TEST_CASE("lookahead_eval rejects lookaheads longer than the series") {
    const auto model = identity_model(3, 3);
    FlowSeries s;
    s.spec = grid(3, 3);
    for (int t = 0; t < 4; ++t) s.snapshots.push_back(random_snapshot(s.spec, 20u + t, 0.5));
    CHECK_THROWS_AS(lookahead_eval(model, s, {5}), ConfigError);
}

TEST_CASE("pod of a rank-1 alternating series has one nonzero mode") {
    // Snapshots alternate +f, -f: zero temporal mean, rank-1 matrix.
    const auto f = random_snapshot(grid(3, 4), 30);
    std::vector<FlowSnapshot> snaps;
    for (int t = 0; t < 6; ++t) {
        auto s = f;
        if (t % 2 == 1)
            for (double& v : s.values) v = -v;
        snaps.push_back(s);
    }
    const auto spec = pod(snaps, true);
    REQUIRE(!spec.singular_values.empty());
    CHECK(spec.energy_fractions[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(spec.cumulative_at(1) == doctest::Approx(1.0).epsilon(1e-12));
    for (size_t i = 1; i < spec.energy_fractions.size(); ++i) {
        CHECK(spec.energy_fractions[i] == doctest::Approx(0.0).epsilon(1e-10));
    }
    // sigma_1 = ||f||_2 * sqrt(n_snapshots) for the +-f matrix.
    double norm2 = 0.0;
    for (double v : f.values) norm2 += v * v;
    CHECK(spec.singular_values[0] ==
          doctest::Approx(std::sqrt(norm2 * 6.0)).epsilon(1e-10));
}

TEST_CASE("pod singular values match a hand-rolled Jacobi oracle") {
    // 20 cells x 12 snapshots, mean subtraction on; Eigen's BDCSVD in the
    // implementation vs the Jacobi eigensolver above.
    const GridSpec g = grid(2, 5);  // 20-dim state
    std::vector<FlowSnapshot> snaps;
    for (int t = 0; t < 12; ++t) snaps.push_back(random_snapshot(g, 40u + t));
    const auto spec = pod(snaps, true);

    // Build the mean-subtracted snapshot matrix (rows = state dim, cols = t).
    std::vector<double> mean(20, 0.0);
    for (const auto& s : snaps)
        for (size_t i = 0; i < 20; ++i) mean[i] += s.values[i] / 12.0;
    std::vector<std::vector<double>> a(20, std::vector<double>(12));
    for (size_t i = 0; i < 20; ++i)
        for (size_t t = 0; t < 12; ++t) a[i][t] = snaps[t].values[i] - mean[i];
    const auto oracle = jacobi_singular_values(a);

    REQUIRE(spec.singular_values.size() <= oracle.size());
    for (size_t i = 0; i < spec.singular_values.size(); ++i) {
        CHECK(spec.singular_values[i] == doctest::Approx(oracle[i]).epsilon(1e-10));
    }
    const double total =
        std::accumulate(spec.energy_fractions.begin(), spec.energy_fractions.end(), 0.0);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::is_sorted(spec.singular_values.rbegin(), spec.singular_values.rend()));
}

TEST_CASE("pod without mean subtraction keeps the mean mode") {
    // Constant series: with mean subtraction everything is degenerate; without
    // it the single mode carries all the energy.
    const auto f = random_snapshot(grid(3, 3), 50);
    std::vector<FlowSnapshot> snaps(5, f);
    CHECK_THROWS_AS(pod(snaps, true), DegenerateDataError);
    const auto spec = pod(snaps, false);
    CHECK(spec.energy_fractions[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(!spec.mean_subtracted);
}

TEST_CASE("pod energy fractions are invariant to uniform scaling") {
    std::vector<FlowSnapshot> snaps;
    for (int t = 0; t < 6; ++t) snaps.push_back(random_snapshot(grid(3, 3), 60u + t));
    const auto base = pod(snaps, true);
    for (auto& s : snaps)
        for (double& v : s.values) v *= 7.5;
    const auto scaled = pod(snaps, true);
    REQUIRE(base.energy_fractions.size() == scaled.energy_fractions.size());
    for (size_t i = 0; i < base.energy_fractions.size(); ++i) {
        CHECK(scaled.energy_fractions[i] ==
              doctest::Approx(base.energy_fractions[i]).epsilon(1e-10));
        CHECK(scaled.singular_values[i] ==
              doctest::Approx(7.5 * base.singular_values[i]).epsilon(1e-10));
    }
}

TEST_CASE("pod rejects empty and mismatched input") {
    CHECK_THROWS_AS(pod(std::vector<FlowSnapshot>{}, true), ConfigError);
    std::vector<FlowSnapshot> snaps{FlowSnapshot(grid(2, 2), 0), FlowSnapshot(grid(2, 3), 1)};
    CHECK_THROWS_AS(pod(snaps, true), ShapeError);
}

TEST_CASE("cumulative_at clamps and accumulates") {
    std::vector<FlowSnapshot> snaps;
    for (int t = 0; t < 5; ++t) snaps.push_back(random_snapshot(grid(3, 3), 70u + t));
    const auto spec = pod(snaps, true);
    CHECK(spec.cumulative_at(0) == 0.0);
    CHECK(spec.cumulative_at(1) == doctest::Approx(spec.energy_fractions[0]));
    CHECK(spec.cumulative_at(1000) == doctest::Approx(1.0).epsilon(1e-12));
}
