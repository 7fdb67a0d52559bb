#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "crreg/cli.hpp"
#include "crreg/eval.hpp"
#include "crreg/volume.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::map<std::string, double> values;
};

// Runs the tool in-process and collects its `name value` lines.
Run run_cli(std::vector<std::string> args) {
    const fs::path capture = fs::temp_directory_path() / "crreg_test_cli_stdout.txt";
    std::fflush(stdout);
    const int saved = dup(fileno(stdout));
    REQUIRE(std::freopen(capture.c_str(), "w", stdout) != nullptr);

    args.insert(args.begin(), "crreg");
    std::vector<char *> argv;
    for (std::string &a : args) {
        argv.push_back(a.data());
    }
    Run r;
    r.code = crreg::run(static_cast<int>(argv.size()), argv.data());

    std::fflush(stdout);
    dup2(saved, fileno(stdout));
    close(saved);

    std::ifstream in(capture);
    std::string name;
    double value = 0.0;
    while (in >> name >> value) {
        r.values[name] = value;
    }
    return r;
}

fs::path scratch() {
    const fs::path dir = fs::temp_directory_path() / "crreg_test_cli";
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("synth writes the pair and reports the initial rmse") {
    const std::string prefix = (scratch() / "s").string();
    const Run r = run_cli({"synth", "--dims", "40", "--amplitude", "3", "--warp-spacing", "10", "--seed", "3",
                           "--out-prefix", prefix});
    REQUIRE(r.code == 0);
    REQUIRE(r.values.count("initial_rmse") == 1);
    const crreg::Volume o = crreg::load_volume(prefix + "_original.hdr");
    const crreg::DisplacementField gt = crreg::load_field(prefix + "_gt.hdr");
    CHECK(o.dims() == crreg::Dims{40, 40, 40});
    CHECK(crreg::read_header(prefix + "_original.hdr").element_type == crreg::ElementType::UInt8);
    CHECK(r.values.at("initial_rmse") ==
          doctest::Approx(crreg::rmse_displacement(crreg::DisplacementField(gt.dims()), gt)).epsilon(1e-6));

    const Run e = run_cli({"eval-rmse", "--gt", prefix + "_gt.hdr"});
    CHECK(e.code == 0);
    CHECK(e.values.at("rmse") == doctest::Approx(r.values.at("initial_rmse")).epsilon(1e-6));
    const Run z = run_cli({"eval-rmse", "--gt", prefix + "_gt.hdr", "--field", prefix + "_gt.hdr"});
    CHECK(z.values.at("rmse") == 0.0);
}

TEST_CASE("warp and invert round trip through files") {
    const std::string prefix = (scratch() / "w").string();
    REQUIRE(run_cli({"synth", "--dims", "36", "--amplitude", "2", "--warp-spacing", "12", "--out-prefix", prefix})
                .code == 0);
    const std::string out = (scratch() / "w_rewarped.hdr").string();
    REQUIRE(run_cli({"warp", "--in", prefix + "_original.hdr", "--field", prefix + "_gt.hdr", "--out", out}).code ==
            0);
    const crreg::Volume a = crreg::load_volume(out);
    const crreg::Volume b = crreg::load_volume(prefix + "_warped.hdr");
    // the warp keeps the uint8 element type, so values are rounded
    for (std::size_t i = 0; i < a.size(); i += 97) {
        CHECK(std::abs(a[i] - b[i]) <= 0.5 + 1e-9);
    }
    const std::string inv = (scratch() / "w_inv.hdr").string();
    REQUIRE(run_cli({"invert", "--field", prefix + "_gt.hdr", "--out", inv}).code == 0);
    CHECK(crreg::load_field(inv).dims() == crreg::Dims{36, 36, 36});
}

TEST_CASE("register runs from a config file") {
    const fs::path dir = scratch();
    const std::string prefix = (dir / "r").string();
    REQUIRE(run_cli({"synth", "--dims", "32", "--amplitude", "1", "--warp-spacing", "8", "--period", "6",
                     "--thick", "2", "--out-prefix", prefix})
                .code == 0);
    {
        std::ofstream cfg(dir / "r.cfg");
        cfg << "levels = 1\nmax_iter_l2 = 5\ngrid_spacing = 6\n";
    }
    const Run r = run_cli({"register", "--fixed", prefix + "_warped.hdr", "--moving", prefix + "_original.hdr",
                           "--config", (dir / "r.cfg").string(), "--out-field", (dir / "r_field.hdr").string(),
                           "--out-warped", (dir / "r_out.hdr").string(), "--quiet", "--threads", "2"});
    REQUIRE(r.code == 0);
    CHECK(r.values.at("levels") == 1.0);
    CHECK(r.values.at("level0_iterations") <= 5.0);
    CHECK(fs::exists(dir / "r_field.hdr"));
    CHECK(fs::exists(dir / "r_out.hdr"));
}

TEST_CASE("surface and landmark evaluation") {
    const fs::path dir = scratch();
    {
        std::ofstream a(dir / "a.txt");
        a << "# points\n0 0 0\n1 0 0\n";
        std::ofstream b(dir / "b.txt");
        b << "0 0 3\n\n1 0 0\n";
    }
    const Run s = run_cli({"eval-surface", "--pts-a", (dir / "a.txt").string(), "--pts-b", (dir / "b.txt").string()});
    REQUIRE(s.code == 0);
    CHECK(s.values.at("hausdorff") == doctest::Approx(3.0));
    CHECK(s.values.at("mhd") == doctest::Approx(std::max(0.5, (3.0 + 0.0) / 2.0)));

    crreg::save_field(dir / "zero.hdr", crreg::DisplacementField({4, 4, 4}));
    const Run t = run_cli({"eval-tre", "--fixed-pts", (dir / "a.txt").string(), "--moving-pts",
                           (dir / "b.txt").string(), "--field", (dir / "zero.hdr").string(), "--spacing", "2"});
    REQUIRE(t.code == 0);
    CHECK(t.values.at("mtre") == doctest::Approx((6.0 + 0.0) / 2.0));
}

TEST_CASE("gradcheck subcommand") {
    const Run r = run_cli({"gradcheck", "--dims", "10", "--step", "1e-5"});
    CHECK(r.code == 0);
    CHECK(r.values.count("max_rel_error") == 1);
    CHECK(r.values.count("model_bspline_max_rel_error") == 1);
    CHECK(r.values.at("max_rel_error") < 1e-3);
}

TEST_CASE("usage errors give a non-zero exit code") {
    CHECK(run_cli({}).code != 0);
    CHECK(run_cli({"register", "--fixed", "/nonexistent.hdr"}).code != 0);
    CHECK(run_cli({"eval-tre", "--fixed-pts", "x"}).code != 0);
    const fs::path dir = scratch();
    {
        std::ofstream bad(dir / "bad.hdr");
        bad << "dim_size = 2 2 2\n";
    }
    crreg::save_field(dir / "zero2.hdr", crreg::DisplacementField({4, 4, 4}));
    CHECK(run_cli({"eval-rmse", "--gt", (dir / "bad.hdr").string()}).code == 1);
}
