#include <doctest.h>

#include <cmath>
#include <random>

#include "crreg/histogram.hpp"
#include "oracles.hpp"

using namespace crreg;

TEST_CASE("parzen window values and integral") {
    CHECK(parzen(0.0) == doctest::Approx(1.0));
    CHECK(parzen(1.0) == 0.0);
    CHECK(parzen(-1.5) == 0.0);
    for (double t = -1.2; t <= 1.2; t += 0.013) {
        CHECK(parzen(t) == doctest::Approx(oracle::parzen(t)));
        CHECK(parzen(t) == doctest::Approx(parzen(-t)));
    }
    // Riemann sum of the window is 1
    double area = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        area += parzen(-1.0 + (i + 0.5) * 2.0 / n) * 2.0 / n;
    }
    CHECK(area == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("parzen and tent windows form a partition of unity over integer bins") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 31.0);
    for (int n = 0; n < 1000; ++n) {
        const double v = u(rng);
        double sp = 0.0, st = 0.0, dp = 0.0;
        for (int a = 0; a <= 31; ++a) {
            sp += parzen(a - v);
            st += tent(a - v);
            dp += parzen_deriv(a - v);
        }
        CHECK(sp == doctest::Approx(1.0));
        CHECK(st == doctest::Approx(1.0));
        CHECK(dp == doctest::Approx(0.0));
    }
}

TEST_CASE("window derivatives") {
    for (double t : {-0.9, -0.6, -0.3, -0.05, 0.05, 0.25, 0.7, 0.95}) {
        const double h = 1e-7;
        CHECK(parzen_deriv(t) == doctest::Approx((parzen(t + h) - parzen(t - h)) / (2 * h)).epsilon(1e-6));
        CHECK(tent_deriv(t) == doctest::Approx((tent(t + h) - tent(t - h)) / (2 * h)).epsilon(1e-6));
    }
    CHECK(parzen_deriv(0.0) == 0.0);
    CHECK(parzen_deriv(1.0) == 0.0);
    CHECK(parzen_deriv(-1.0) == 0.0);
    CHECK(parzen_deriv(2.0) == 0.0);
    CHECK(tent_deriv(0.0) == 0.0);
}

TEST_CASE("soft_bin spreads mass over the two neighbouring bins") {
    const BinConfig cfg;
    const SoftBin b = soft_bin(4.3, cfg);
    CHECK(b.lower == 4);
    CHECK(b.w0 == doctest::Approx(parzen(4.0 - 4.3)));
    CHECK(b.w1 == doctest::Approx(parzen(5.0 - 4.3)));
    CHECK(b.d0 == doctest::Approx(parzen_deriv(4.0 - 4.3)));
    CHECK(b.w0 + b.w1 == doctest::Approx(1.0));

    const SoftBin top = soft_bin(31.0, cfg);
    CHECK(top.w0 + top.w1 == doctest::Approx(1.0));
    CHECK(top.lower + 1 <= 31 + 1);

    const SoftBin t = soft_bin(2.25, cfg, BinKernel::Tent);
    CHECK(t.w0 == doctest::Approx(0.75));
    CHECK(t.w1 == doctest::Approx(0.25));

    const Volume bad({2, 1, 1}, {1, 1, 1}, std::vector<double>{0.0, 40.0});
    CHECK_THROWS_AS(soft_bins(bad, cfg), std::invalid_argument);
    CHECK_THROWS_AS(BinConfig{0}.validate(), std::invalid_argument);
}

TEST_CASE("regional joint tables match the triple-loop oracle") {
    const BinConfig cfg{7};
    const Volume A = oracle::random_volume({9, 8, 7}, 0.0, 7.0, 1);
    const Volume B = oracle::random_volume({9, 8, 7}, 0.0, 7.0, 2);
    const FFDGrid g = FFDGrid::covering(A.dims(), {3, 4, 3});
    for (SpatialWeightKind kind : {SpatialWeightKind::CubicBSpline, SpatialWeightKind::Boxcar}) {
        const RegionalPDF pdf = build_regional_pdf(A, B, g, kind, cfg, 2);
        const auto ref = oracle::regional_joint(A, B, g, kind == SpatialWeightKind::CubicBSpline, cfg.max_bin);
        const std::size_t nb = cfg.bins();
        double total = 0.0;
        for (std::size_t r = 0; r < pdf.regions; ++r) {
            for (std::size_t a = 0; a < nb; ++a) {
                for (std::size_t b = 0; b < nb; ++b) {
                    CHECK(pdf.joint_prob(r, a, b) == doctest::Approx(ref[(r * nb + a) * nb + b]).epsilon(1e-10));
                    total += pdf.joint_prob(r, a, b);
                }
            }
        }
        CHECK(total == doctest::Approx(1.0));
    }
}

TEST_CASE("B-spline normaliser equals the voxel count") {
    const BinConfig cfg{15};
    const Volume A = oracle::random_volume({11, 10, 9}, 0.0, 15.0, 5);
    const FFDGrid g = FFDGrid::covering(A.dims(), {4, 4, 4});
    const RegionalPDF pdf = build_regional_pdf(A, A, g, SpatialWeightKind::CubicBSpline, cfg);
    CHECK(pdf.normalizer == doctest::Approx(double(A.size())));
}

TEST_CASE("streamed statistics equal statistics of the full tables") {
    const BinConfig cfg{15};
    const Volume A = oracle::random_volume({13, 11, 10}, 0.0, 15.0, 8);
    const Volume B = oracle::random_volume({13, 11, 10}, 0.0, 15.0, 9);
    const FFDGrid g = FFDGrid::covering(A.dims(), {4, 5, 4});
    for (SpatialWeightKind kind : {SpatialWeightKind::CubicBSpline, SpatialWeightKind::Boxcar}) {
        const RegionalStats full = regional_stats(build_regional_pdf(A, B, g, kind, cfg));
        const auto ab = soft_bins(A, cfg);
        const auto bb = soft_bins(B, cfg);
        const NodeSupport sup = NodeSupport::build(g, kind);
        const RegionalStats s1 = build_regional_stats(ab, bb, g, sup, cfg, 1);
        const RegionalStats s4 = build_regional_stats(ab, bb, g, sup, cfg, 4);
        REQUIRE(s1.regions == full.regions);
        CHECK(s1.normalizer == doctest::Approx(full.normalizer));
        for (std::size_t r = 0; r < full.regions; ++r) {
            CHECK(s1.retained[r] == full.retained[r]);
            CHECK(s1.mass[r] == doctest::Approx(full.mass[r]).epsilon(1e-10));
            if (full.retained[r]) {
                CHECK(s1.variance[r] == doctest::Approx(full.variance[r]).epsilon(1e-9));
                CHECK(s1.cr[r] == doctest::Approx(full.cr[r]).epsilon(1e-9));
            }
            // bitwise identical across worker counts
            CHECK(s1.mass[r] == s4.mass[r]);
            CHECK(s1.variance[r] == s4.variance[r]);
            CHECK(s1.cr[r] == s4.cr[r]);
        }
    }
}

TEST_CASE("constant estimated image leaves every region below the variance floor") {
    const BinConfig cfg{15};
    const Volume A = oracle::random_volume({8, 8, 8}, 0.0, 15.0, 1);
    const Volume B({8, 8, 8}, {1, 1, 1}, 6.0);
    const FFDGrid g = FFDGrid::covering(A.dims(), {4, 4, 4});
    const RegionalStats s = regional_stats(build_regional_pdf(A, B, g, SpatialWeightKind::CubicBSpline, cfg));
    CHECK(s.retained_count() == 0);
}

TEST_CASE("node supports list every supported voxel") {
    const FFDGrid g = FFDGrid::covering({17, 9, 6}, {4, 3, 2});
    for (SpatialWeightKind kind : {SpatialWeightKind::CubicBSpline, SpatialWeightKind::Boxcar}) {
        const NodeSupport sup = NodeSupport::build(g, kind);
        for (int axis = 0; axis < 3; ++axis) {
            const AxisRuns &runs = sup.axes[static_cast<std::size_t>(axis)];
            REQUIRE(runs.begin.size() == static_cast<std::size_t>(g.node_dims()[axis]));
            for (std::size_t n = 0; n < runs.begin.size(); ++n) {
                const double c = g.origin()[axis] + double(n) * g.spacing()[axis];
                for (int x = 0; x < g.image_dims()[axis]; ++x) {
                    const double u = (x - c) / g.spacing()[axis];
                    const int off = x - runs.begin[n];
                    const bool listed = off >= 0 && off < int(runs.weights[n].size());
                    const double w = listed ? runs.weights[n][static_cast<std::size_t>(off)] : 0.0;
                    if (kind == SpatialWeightKind::CubicBSpline) {
                        CHECK(w == doctest::Approx(oracle::cubic_bspline(u)));
                    } else {
                        CHECK(w == ((u >= -2.0 && u < 2.0) ? 1.0 : 0.0));
                    }
                }
            }
        }
    }
}
