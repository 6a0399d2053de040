#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "passt/reconstruct.hpp"

using namespace passt;

namespace {

GridSpec grid(int r, int c) { return GridSpec{r, c, 1.0, 0.0, 0.0}; }

FlowSnapshot random_field(const GridSpec& g, unsigned seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-scale, scale);
    FlowSnapshot snap(g, 0);
    for (double& v : snap.values) v = dist(rng);
    return snap;
}

double se_kernel(const GpConfig& cfg, Cell a, Cell b) {
    const double dr = a.row - b.row;
    const double dc = a.col - b.col;
    return cfg.signal_variance *
           std::exp(-(dr * dr + dc * dc) / (2.0 * cfg.length_scale * cfg.length_scale));
}

// Plain Gaussian elimination with partial pivoting; independent linear-solve
// oracle for the GP posterior on small measurement sets.
std::vector<double> gauss_solve(std::vector<std::vector<double>> a, std::vector<double> b) {
    const size_t n = b.size();
    for (size_t col = 0; col < n; ++col) {
        size_t pivot = col;
        for (size_t r = col + 1; r < n; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        }
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (size_t r = col + 1; r < n; ++r) {
            const double f = a[r][col] / a[col][col];
            for (size_t k = col; k < n; ++k) a[r][k] -= f * a[col][k];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (size_t r = n; r-- > 0;) {
        double acc = b[r];
        for (size_t k = r + 1; k < n; ++k) acc -= a[r][k] * x[k];
        x[r] = acc / a[r][r];
    }
    return x;
}

// Full GP posterior mean computed from first principles with the oracle solver.
FlowSnapshot gp_oracle(const MeasurementSet& meas, const FlowSnapshot& prior,
                       const GpConfig& cfg) {
    const size_t n = meas.items.size();
    std::vector<std::vector<double>> gram(n, std::vector<double>(n, 0.0));
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
            gram[i][j] = se_kernel(cfg, meas.items[i].cell, meas.items[j].cell);
        }
        gram[i][i] += cfg.noise_variance * (1.0 + meas.items[i].age);
    }
    FlowSnapshot out(prior.spec, prior.time_index);
    for (int comp = 0; comp < 2; ++comp) {
        std::vector<double> resid(n);
        for (size_t i = 0; i < n; ++i) {
            const auto& m = meas.items[i];
            const double p = cfg.prior == GpConfig::Prior::Zero
                                 ? 0.0
                                 : prior.at(m.cell.row, m.cell.col, comp);
            resid[i] = m.value[static_cast<size_t>(comp)] - p;
        }
        const auto alpha = gauss_solve(gram, resid);
        for (int r = 0; r < prior.spec.n_rows; ++r) {
            for (int c = 0; c < prior.spec.n_cols; ++c) {
                double corr = 0.0;
                for (size_t i = 0; i < n; ++i) {
                    corr += se_kernel(cfg, Cell{r, c}, meas.items[i].cell) * alpha[i];
                }
                const double p =
                    cfg.prior == GpConfig::Prior::Zero ? 0.0 : prior.at(r, c, comp);
                out.at(r, c, comp) = p + corr;
            }
        }
    }
    return out;
}

}  // namespace

TEST_CASE("single measurement on a zero prior has the closed form") {
    // One reading v at cell x: posterior(r) = k(r,x) * v / (sv + nv) since the
    // 1x1 Gram matrix is sv + nv.
    GpConfig cfg;
    cfg.prior = GpConfig::Prior::Zero;
    MeasurementSet meas;
    meas.items.push_back({Cell{2, 3}, Vec2{1.5, -0.5}, 0});
    const FlowSnapshot prior(grid(5, 5), 0);
    const auto post = gp_reconstruct(meas, prior, cfg);
    const double denom = cfg.signal_variance + cfg.noise_variance;
    for (int r = 0; r < 5; ++r) {
        for (int c = 0; c < 5; ++c) {
            const double k = se_kernel(cfg, Cell{r, c}, Cell{2, 3});
            CHECK(post.at(r, c, 0) == doctest::Approx(k * 1.5 / denom).epsilon(1e-12));
            CHECK(post.at(r, c, 1) == doctest::Approx(k * -0.5 / denom).epsilon(1e-12));
        }
    }
    // At the measured cell the posterior shrinks toward the reading by
    // sv / (sv + nv), i.e. almost exactly the reading at nv = 1e-4.
    CHECK(post.at(2, 3, 0) == doctest::Approx(1.5).epsilon(1e-3));
}

TEST_CASE("posterior matches a hand-rolled dense-solve oracle") {
    GpConfig cfg;
    cfg.prior = GpConfig::Prior::ModelPrediction;
    const auto prior = random_field(grid(7, 6), 1);
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> rd(0, 6), cd(0, 5);
    std::uniform_real_distribution<double> vd(-2.0, 2.0);
    std::uniform_int_distribution<int> ad(0, 3);
    MeasurementSet meas;
    std::set<std::pair<int, int>> used;
    while (meas.items.size() < 12) {
        const Cell cell{rd(rng), cd(rng)};
        if (!used.insert({cell.row, cell.col}).second) continue;
        meas.items.push_back({cell, Vec2{vd(rng), vd(rng)}, ad(rng)});
    }
    const auto post = gp_reconstruct(meas, prior, cfg);
    const auto oracle = gp_oracle(meas, prior, cfg);
    for (size_t i = 0; i < post.values.size(); ++i) {
        CHECK(post.values[i] == doctest::Approx(oracle.values[i]).epsilon(1e-8));
    }
}

TEST_CASE("measurements equal to the prior leave it unchanged") {
    GpConfig cfg;
    const auto prior = random_field(grid(6, 6), 3);
    MeasurementSet meas;
    for (const Cell cell : {Cell{0, 0}, Cell{2, 4}, Cell{5, 1}, Cell{3, 3}}) {
        meas.items.push_back(
            {cell, Vec2{prior.at(cell.row, cell.col, 0), prior.at(cell.row, cell.col, 1)}, 0});
    }
    const auto post = gp_reconstruct(meas, prior, cfg);
    for (size_t i = 0; i < post.values.size(); ++i) {
        CHECK(post.values[i] == doctest::Approx(prior.values[i]).epsilon(1e-10));
    }
}

TEST_CASE("posterior correction is linear in the residuals") {
    // post(prior, v) - prior depends only on v - prior at the measured cells,
    // and doubles when the residuals double.
    GpConfig cfg;
    const auto prior = random_field(grid(5, 5), 4);
    MeasurementSet meas1, meas2;
    for (const Cell cell : {Cell{1, 1}, Cell{3, 2}, Cell{0, 4}}) {
        const Vec2 pv{prior.at(cell.row, cell.col, 0), prior.at(cell.row, cell.col, 1)};
        const Vec2 d{0.3, -0.7};
        meas1.items.push_back({cell, Vec2{pv[0] + d[0], pv[1] + d[1]}, 0});
        meas2.items.push_back({cell, Vec2{pv[0] + 2 * d[0], pv[1] + 2 * d[1]}, 0});
    }
    const auto p1 = gp_reconstruct(meas1, prior, cfg);
    const auto p2 = gp_reconstruct(meas2, prior, cfg);
    for (size_t i = 0; i < p1.values.size(); ++i) {
        const double c1 = p1.values[i] - prior.values[i];
        const double c2 = p2.values[i] - prior.values[i];
        CHECK(c2 == doctest::Approx(2.0 * c1).epsilon(1e-8));
    }
}

TEST_CASE("near-zero noise interpolates the readings") {
    GpConfig cfg;
    cfg.noise_variance = 1e-10;
    cfg.prior = GpConfig::Prior::Zero;
    const FlowSnapshot prior(grid(6, 6), 0);
    MeasurementSet meas;
    meas.items.push_back({Cell{1, 1}, Vec2{0.8, -0.2}, 0});
    meas.items.push_back({Cell{4, 2}, Vec2{-0.4, 0.6}, 0});
    meas.items.push_back({Cell{2, 5}, Vec2{0.1, 0.9}, 0});
    const auto post = gp_reconstruct(meas, prior, cfg);
    for (const auto& m : meas.items) {
        CHECK(post.at(m.cell.row, m.cell.col, 0) == doctest::Approx(m.value[0]).epsilon(1e-6));
        CHECK(post.at(m.cell.row, m.cell.col, 1) == doctest::Approx(m.value[1]).epsilon(1e-6));
    }
}

TEST_CASE("stale measurements pull the posterior less") {
    // Same two conflicting readings; aging one of them must shift the
    // posterior at its cell toward the fresh reading.
    GpConfig cfg;
    cfg.prior = GpConfig::Prior::Zero;
    cfg.noise_variance = 0.05;  // large enough for age to matter
    const FlowSnapshot prior(grid(5, 5), 0);

    MeasurementSet fresh;
    fresh.items.push_back({Cell{2, 1}, Vec2{1.0, 0.0}, 0});
    fresh.items.push_back({Cell{2, 3}, Vec2{-1.0, 0.0}, 0});
    MeasurementSet aged = fresh;
    aged.items[1].age = 20;

    const auto p_fresh = gp_reconstruct(fresh, prior, cfg);
    const auto p_aged = gp_reconstruct(aged, prior, cfg);
    // The aged reading at (2,3) is trusted less, so the posterior there moves
    // away from -1 (toward the fresh +1 reading's influence).
    CHECK(p_aged.at(2, 3, 0) > p_fresh.at(2, 3, 0));
    // The fresh reading's cell barely changes by comparison.
    CHECK(std::abs(p_aged.at(2, 1, 0) - p_fresh.at(2, 1, 0)) <
          std::abs(p_aged.at(2, 3, 0) - p_fresh.at(2, 3, 0)));
}

TEST_CASE("input validation") {
    GpConfig cfg;
    const FlowSnapshot prior(grid(4, 4), 0);
    MeasurementSet empty;
    CHECK_THROWS_AS(gp_reconstruct(empty, prior, cfg), ConfigError);

    MeasurementSet oob;
    oob.items.push_back({Cell{4, 0}, Vec2{0, 0}, 0});
    CHECK_THROWS_AS(gp_reconstruct(oob, prior, cfg), OutOfBoundsError);

    MeasurementSet neg_age;
    neg_age.items.push_back({Cell{0, 0}, Vec2{0, 0}, -1});
    CHECK_THROWS_AS(gp_reconstruct(neg_age, prior, cfg), ConfigError);

    GpConfig bad = cfg;
    bad.length_scale = 0.0;
    MeasurementSet one;
    one.items.push_back({Cell{0, 0}, Vec2{0, 0}, 0});
    CHECK_THROWS_AS(gp_reconstruct(one, prior, bad), ConfigError);
}

TEST_CASE("duplicate cells with tiny noise stay solvable via jitter") {
    // Two identical readings at the same cell make the noiseless Gram matrix
    // singular; the inflated diagonal plus jitter escalation must still solve.
    GpConfig cfg;
    cfg.noise_variance = 1e-10;
    cfg.prior = GpConfig::Prior::Zero;
    const FlowSnapshot prior(grid(4, 4), 0);
    MeasurementSet meas;
    meas.items.push_back({Cell{1, 1}, Vec2{0.5, 0.5}, 0});
    meas.items.push_back({Cell{1, 1}, Vec2{0.5, 0.5}, 0});
    const auto post = gp_reconstruct(meas, prior, cfg);
    CHECK(post.at(1, 1, 0) == doctest::Approx(0.5).epsilon(1e-4));
}

TEST_CASE("merge keeps the newest reading per cell") {
    SamplePath path;
    path.cells = {Cell{0, 0}, Cell{0, 1}, Cell{0, 0}};  // revisit the start
    auto truth = [](Cell cell, size_t i) {
        return Vec2{static_cast<double>(i), static_cast<double>(cell.row + cell.col)};
    };
    MeasurementSet existing;
    existing.items.push_back({Cell{2, 2}, Vec2{9, 9}, 3});
    const auto merged = merge_measurements(existing, path, truth, 7);

    REQUIRE(merged.items.size() == 3);  // (2,2), (0,0), (0,1)
    CHECK(merged.source_path_ids == std::vector<int>{7});
    // Existing entry untouched.
    CHECK(merged.items[0].cell == Cell{2, 2});
    CHECK(merged.items[0].age == 3);
    // (0,0) measured at i=0 then overwritten by i=2.
    CHECK(merged.items[1].cell == Cell{0, 0});
    CHECK(merged.items[1].value[0] == 2.0);
    CHECK(merged.items[1].age == 0);
    CHECK(merged.items[2].cell == Cell{0, 1});
    CHECK(merged.items[2].value[0] == 1.0);
}

TEST_CASE("merge replaces stale entries for revisited cells") {
    MeasurementSet existing;
    existing.items.push_back({Cell{1, 1}, Vec2{5, 5}, 4});
    SamplePath path;
    path.cells = {Cell{1, 1}};
    const auto merged =
        merge_measurements(existing, path, [](Cell, size_t) { return Vec2{-1, -1}; }, 0);
    REQUIRE(merged.items.size() == 1);
    CHECK(merged.items[0].value[0] == -1.0);
    CHECK(merged.items[0].age == 0);
}

TEST_CASE("aging accumulates and validates") {
    MeasurementSet meas;
    meas.items.push_back({Cell{0, 0}, Vec2{0, 0}, 0});
    meas.items.push_back({Cell{1, 1}, Vec2{0, 0}, 2});
    age_measurements(meas);
    age_measurements(meas, 3);
    CHECK(meas.items[0].age == 4);
    CHECK(meas.items[1].age == 6);
    CHECK_THROWS_AS(age_measurements(meas, -1), ConfigError);
}
