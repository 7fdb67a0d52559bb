#include <doctest.h>

#include <cmath>

#include "crreg/eval.hpp"
#include "crreg/pipeline.hpp"
#include "oracles.hpp"

using namespace crreg;

namespace {

DisplacementField smooth_field(Dims d, double spacing, double amplitude, std::uint64_t seed) {
    FFDGrid g = FFDGrid::covering(d, {spacing, spacing, spacing});
    oracle::randomize_grid(g, amplitude, seed);
    return densify(g);
}

} // namespace

TEST_CASE("config parsing") {
    const RegistrationConfig c = parse_config("# comment\n"
                                              "levels = 2\n"
                                              "grid_spacing = 4 5 6   # per axis\n"
                                              "bins = 63\n"
                                              "penalty_weight = 30\n"
                                              "orientation = M-as-B\n"
                                              "weight_kind = boxcar\n"
                                              "similarity = raptor\n"
                                              "threads = 3\n"
                                              "deterministic = off\n"
                                              "max_iter_l0 = 11\n"
                                              "max_iter_l2 = 33\n"
                                              "intensity_window = -100 400\n");
    CHECK(c.levels == 2);
    CHECK(c.grid_spacing == Vec3{4, 5, 6});
    CHECK(c.bins.max_bin == 63);
    CHECK(c.penalty_weight == 30.0);
    CHECK(c.orientation == MovingRole::Estimated);
    CHECK(c.weight_kind == SpatialWeightKind::Boxcar);
    CHECK(c.similarity == SimilarityKind::Raptor);
    CHECK(c.threads == 3);
    CHECK_FALSE(c.deterministic);
    CHECK(c.max_iter[0] == 11);
    CHECK(c.max_iter[2] == 33);
    REQUIRE(c.intensity_window.has_value());
    CHECK(c.intensity_window->lo == -100.0);

    CHECK(parse_config("grid_spacing = 7").grid_spacing == Vec3{7, 7, 7});
    CHECK(parse_config("orientation = moving-model").orientation == MovingRole::Model);
    CHECK_THROWS_WITH_AS(parse_config("levels = 2\nfoo = 1\n"), doctest::Contains("line 2"), std::runtime_error);
    CHECK_THROWS_AS(parse_config("levels = two"), std::runtime_error);
    CHECK_THROWS_AS(parse_config("levels 2"), std::runtime_error);
    CHECK_THROWS_AS(parse_config("orientation = sideways"), std::runtime_error);
    CHECK_THROWS_AS(parse_config("grid_spacing = 1 2"), std::runtime_error);
    CHECK_THROWS_AS(parse_config("levels = 0"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("grid_spacing = 1"), std::invalid_argument);
}

TEST_CASE("iteration caps are indexed from the coarsest level") {
    RegistrationConfig c;
    CHECK(c.max_iter_for(0) == 200);
    CHECK(c.max_iter_for(2) == 120);
    c.levels = 1;
    CHECK(c.max_iter_for(0) == 120);
    c.levels = 2;
    CHECK(c.max_iter_for(0) == 200);
    CHECK(c.max_iter_for(1) == 120);
}

TEST_CASE("warp_with_field samples at x + f(x)") {
    const Volume v = oracle::random_volume({10, 9, 8}, 0.0, 31.0, 1);
    const DisplacementField f = smooth_field(v.dims(), 4.0, 1.5, 2);
    const Volume w1 = warp_with_field(v, f, 1);
    const Volume w3 = warp_with_field(v, f, 3);
    for (int k = 0; k < 8; ++k) {
        for (int j = 0; j < 9; ++j) {
            for (int i = 0; i < 10; ++i) {
                const Vec3 y = Vec3{double(i), double(j), double(k)} + f(i, j, k);
                CHECK(w1(i, j, k) == doctest::Approx(oracle::trilinear(v, y)).epsilon(1e-12));
                CHECK(w1(i, j, k) == w3(i, j, k));
            }
        }
    }
    CHECK_THROWS_AS(warp_with_field(v, DisplacementField({3, 3, 3})), std::invalid_argument);
}

TEST_CASE("landmarks move with the field") {
    DisplacementField f({6, 6, 6});
    for (std::size_t i = 0; i < f.size(); ++i) {
        f[i] = {1.0, -2.0, 0.5};
    }
    const auto out = transform_landmarks({{1.5, 2.0, 3.25}}, f);
    CHECK(out[0] == Vec3{2.5, 0.0, 3.75});
}

TEST_CASE("upsampling doubles a coarse field") {
    DisplacementField coarse({8, 8, 8}, {2, 2, 2});
    for (int k = 0; k < 8; ++k) {
        for (int j = 0; j < 8; ++j) {
            for (int i = 0; i < 8; ++i) {
                coarse(i, j, k) = {0.1 * i, 0.5, -0.25 * k};
            }
        }
    }
    const DisplacementField fine = upsample_field(coarse, {15, 15, 15}, {1, 1, 1});
    CHECK(fine.dims() == Dims{15, 15, 15});
    CHECK(fine(6, 3, 4).x == doctest::Approx(2.0 * 0.1 * 3.0));
    CHECK(fine(6, 3, 4).y == doctest::Approx(1.0));
    CHECK(fine(6, 3, 4).z == doctest::Approx(2.0 * -0.25 * 2.0));
}

TEST_CASE("registration input checks") {
    const Volume a = oracle::random_volume({20, 20, 20}, 0.0, 1.0, 1);
    RegistrationConfig cfg;
    cfg.levels = 1;
    CHECK_THROWS_AS(register_images(a, Volume({20, 20, 20}, {1, 1, 1}, 2.0), cfg), std::invalid_argument);
    CHECK_THROWS_AS(register_images(a, oracle::random_volume({20, 20, 19}, 0.0, 1.0, 2), cfg),
                    std::invalid_argument);
    cfg.levels = 2;
    CHECK_THROWS_WITH_AS(register_images(a, a, cfg), doctest::Contains("fewer levels"), std::invalid_argument);
}

TEST_CASE("registration recovers a smooth warp and is deterministic") {
    const Dims d{32, 32, 32};
    const Volume fixed = random_smooth_volume(d, 2.0, 255, 11);
    const DisplacementField truth = smooth_field(d, 10.0, 1.5, 12);
    // fixed(x) = moving(x + truth(x)) when moving is fixed warped by the inverse
    const Volume moving = warp_with_field(fixed, invert_field(truth, 1.0));
    RegistrationConfig cfg;
    cfg.levels = 1;
    cfg.max_iter = {60};
    const RegistrationResult r = register_images(fixed, moving, cfg);
    REQUIRE(r.levels.size() == 1);
    CHECK(r.field.dims() == d);
    CHECK(r.warped.dims() == d);
    const double before = rmse_displacement(DisplacementField(d), truth);
    const double after = rmse_displacement(r.field, truth);
    CHECK(after < 0.5 * before);
    CHECK(r.levels[0].cost.back() < r.levels[0].cost.front());

    cfg.threads = 3;
    const RegistrationResult r3 = register_images(fixed, moving, cfg);
    for (std::size_t i = 0; i < r.field.size(); ++i) {
        REQUIRE(r.field[i] == r3.field[i]);
    }
}

TEST_CASE("two-level registration traces both levels") {
    const Dims d{32, 32, 32};
    const Volume fixed = random_smooth_volume(d, 2.0, 255, 21);
    const Volume moving = warp_with_field(fixed, smooth_field(d, 12.0, 1.0, 22));
    RegistrationConfig cfg;
    cfg.levels = 2;
    cfg.max_iter = {10, 10};
    std::vector<std::string> lines;
    const RegistrationResult r = register_images(fixed, moving, cfg, [&](const std::string &s) { lines.push_back(s); });
    REQUIRE(r.levels.size() == 2);
    CHECK(r.levels[0].dims == Dims{16, 16, 16});
    CHECK(r.levels[1].dims == d);
    CHECK(r.levels[0].iterations <= 10);
    CHECK_FALSE(lines.empty());
}
