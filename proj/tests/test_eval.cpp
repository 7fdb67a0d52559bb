#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "crreg/eval.hpp"
#include "crreg/pipeline.hpp"
#include "oracles.hpp"

using namespace crreg;

namespace {

std::vector<Vec3> random_points(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    std::vector<Vec3> p(n);
    for (Vec3 &v : p) {
        v = {u(rng), u(rng), u(rng)};
    }
    return p;
}

} // namespace

TEST_CASE("synthetic pair structure") {
    SyntheticConfig cfg;
    cfg.dims = {48, 40, 36};
    cfg.amplitude = 3.0;
    cfg.warp_spacing = 12.0;
    cfg.seed = 4;
    const SyntheticPair p = generate_synthetic(cfg);
    CHECK(p.original.dims() == cfg.dims);
    CHECK(p.u_gt.dims() == cfg.dims);
    for (std::size_t i = 0; i < p.original.size(); ++i) {
        REQUIRE((p.original[i] == 0.0 || p.original[i] == 31.0));
    }
    const Volume w = warp_with_field(p.original, p.u_gt);
    for (std::size_t i = 0; i < w.size(); ++i) {
        REQUIRE(p.warped[i] == w[i]);
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < p.u_gt.size(); ++i) {
        for (int axis = 0; axis < 3; ++axis) {
            worst = std::max(worst, std::abs(p.u_gt[i][axis]));
        }
    }
    CHECK(worst <= cfg.amplitude);
    CHECK(worst > 0.0);

    const SyntheticPair again = generate_synthetic(cfg);
    CHECK(again.u_gt[1234] == p.u_gt[1234]);
    cfg.seed = 5;
    CHECK_FALSE(generate_synthetic(cfg).u_gt[1234] == p.u_gt[1234]);
}

TEST_CASE("grid pattern follows the warp spacing unless given") {
    SyntheticConfig cfg;
    CHECK(cfg.effective_period() == 24);
    CHECK(cfg.effective_thick() == 4);
    cfg.warp_spacing = 16.0;
    CHECK(cfg.effective_period() == 12);
    CHECK(cfg.effective_thick() == 2);
    cfg.period = 10;
    cfg.thick = 3;
    CHECK(cfg.effective_period() == 10);
    CHECK(cfg.effective_thick() == 3);

    cfg.dims = {32, 32, 32};
    cfg.amplitude = 0.0;
    const SyntheticPair p = generate_synthetic(cfg);
    for (int i = 0; i < 32; ++i) {
        const bool white = i % 10 < 3;
        REQUIRE(p.original(i, 5, 5) == (white ? 31.0 : 0.0));
    }
}

TEST_CASE("zero amplitude leaves the pattern untouched") {
    SyntheticConfig cfg;
    cfg.dims = {32, 32, 32};
    cfg.amplitude = 0.0;
    cfg.warp_spacing = 8.0;
    const SyntheticPair p = generate_synthetic(cfg);
    for (std::size_t i = 0; i < p.original.size(); ++i) {
        REQUIRE(p.warped[i] == p.original[i]);
        REQUIRE(p.u_gt[i] == Vec3{});
    }
}

TEST_CASE("initial displacement is linear in the amplitude") {
    SyntheticConfig cfg;
    cfg.dims = {40, 40, 40};
    cfg.warp_spacing = 12.0;
    std::vector<double> r;
    for (double a : {1.0, 2.0, 4.0}) {
        cfg.amplitude = a;
        r.push_back(rmse_displacement(DisplacementField(cfg.dims), generate_synthetic(cfg).u_gt));
    }
    CHECK(r[0] > 0.0);
    CHECK(r[1] == doctest::Approx(2.0 * r[0]).epsilon(1e-9));
    CHECK(r[2] == doctest::Approx(4.0 * r[0]).epsilon(1e-9));
}

TEST_CASE("synthetic displacement scale") {
    SyntheticConfig cfg;
    cfg.dims = {64, 64, 64};
    cfg.amplitude = 7.5;
    cfg.warp_spacing = 16.0;
    double mean = 0.0;
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        cfg.seed = seed;
        mean += rmse_displacement(DisplacementField(cfg.dims), generate_synthetic(cfg).u_gt) / 4.0;
    }
    // per-axis B-spline weights of uniform node noise
    CHECK(mean == doctest::Approx(2.26).epsilon(0.15));
}

TEST_CASE("synthetic configuration validation") {
    SyntheticConfig cfg;
    cfg.amplitude = 20.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.dims = {16, 64, 64};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("rmse of displacement fields") {
    DisplacementField a({2, 1, 1}), b({2, 1, 1});
    a[0] = {3, 4, 0};
    CHECK(rmse_displacement(a, b) == doctest::Approx(std::sqrt(12.5)));
    CHECK(rmse_displacement(a, a) == 0.0);
    DisplacementField c({3, 2, 2}), d({3, 2, 2});
    for (std::size_t i = 0; i < c.size(); ++i) {
        c[i] = {double(i), 2.0, -1.0};
        d[i] = c[i] + Vec3{1.0, 0.0, 0.0};
    }
    CHECK(rmse_displacement(d, c) == doctest::Approx(1.0));
    CHECK_THROWS_AS(rmse_displacement(a, DisplacementField({3, 1, 1})), std::invalid_argument);
}

TEST_CASE("point files and target registration error") {
    const auto dir = std::filesystem::temp_directory_path() / "crreg_test_points";
    std::filesystem::create_directories(dir);
    PointSet p{{{1.0, 2.0, 3.0}, {4.5, 5.5, 6.5}}, PointUnit::Millimeter};
    save_points(dir / "p.txt", p);
    const PointSet q = load_points(dir / "p.txt", PointUnit::Millimeter);
    REQUIRE(q.points.size() == 2);
    CHECK(q.points[1] == p.points[1]);

    const PointSet v = to_voxels(p, {0.5, 1.0, 2.5});
    CHECK(v.unit == PointUnit::Voxel);
    CHECK(v.points[0] == Vec3{2.0, 2.0, 1.2});

    DisplacementField f({8, 8, 8});
    for (std::size_t i = 0; i < f.size(); ++i) {
        f[i] = {1.0, 0.0, 0.0};
    }
    const PointSet fixed_pts{{{2, 2, 2}, {3, 3, 3}}, PointUnit::Voxel};
    const PointSet moving_pts{{{3, 2, 2}, {4, 3, 5}}, PointUnit::Voxel};
    // residuals 0 and 2 voxels; z spacing 2.5 mm
    CHECK(mean_tre(fixed_pts, moving_pts, f, {1.0, 1.0, 2.5}) == doctest::Approx(2.5));
}

TEST_CASE("hausdorff and mean surface distance equal brute force") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto xs = random_points(40 + seed, seed);
        const auto ys = random_points(25 + 3 * seed, seed + 50);
        const PointSet a{xs, PointUnit::Voxel}, b{ys, PointUnit::Voxel};
        CHECK(hausdorff(a, b) == oracle::hausdorff(xs, ys));
        CHECK(mhd(a, b) == oracle::mhd(xs, ys));
        CHECK(hausdorff(a, b, 4) == hausdorff(a, b, 1));
        CHECK(mhd(a, b, 4) == mhd(a, b, 1));
        CHECK(hausdorff(a, a) == 0.0);
        CHECK(hausdorff(a, b) == hausdorff(b, a));
        CHECK(mhd(a, b) <= hausdorff(a, b));
    }
}

TEST_CASE("surface distance examples") {
    const PointSet x{{{0, 0, 0}}, PointUnit::Voxel}, y{{{3, 0, 0}}, PointUnit::Voxel};
    CHECK(hausdorff(x, y) == 3.0);
    const PointSet two{{{0, 0, 0}, {2, 0, 0}}, PointUnit::Voxel}, zero{{{0, 0, 0}}, PointUnit::Voxel};
    CHECK(mhd(two, zero) == 1.0);
    CHECK_THROWS_AS(hausdorff(PointSet{}, x), std::invalid_argument);
    CHECK_THROWS_AS(mean_tre(two, zero, DisplacementField({4, 4, 4}), {1, 1, 1}), std::invalid_argument);
}

TEST_CASE("gradient check passes with a small step") {
    GradcheckConfig cfg;
    cfg.dims = 12;
    cfg.step = 1e-5;
    const GradcheckReport rep = gradient_check(cfg);
    CHECK(rep.cases.size() == 4);
    for (const GradcheckCase &c : rep.cases) {
        CHECK(c.checked > 0);
        INFO(to_string(c.role) << " " << to_string(c.kind) << " rel " << c.max_rel_error);
        CHECK(c.pass);
    }
    CHECK(rep.pass);
}

TEST_CASE("random smooth volume spans the bin range") {
    const Volume v = random_smooth_volume({12, 12, 12}, 2.0, 31, 3);
    const auto [lo, hi] = v.min_max();
    CHECK(lo == doctest::Approx(0.0));
    CHECK(hi == doctest::Approx(31.0));
}
