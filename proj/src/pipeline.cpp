#include "crreg/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "crreg/parallel.hpp"

namespace crreg {

void RegistrationConfig::validate() const {
    if (levels < 1) {
        throw std::invalid_argument("config: levels must be >= 1");
    }
    if (!(grid_spacing.x >= 2.0 && grid_spacing.y >= 2.0 && grid_spacing.z >= 2.0)) {
        throw std::invalid_argument("config: grid_spacing must be >= 2 voxels on every axis");
    }
    bins.validate();
    if (!(penalty_weight >= 0.0)) {
        throw std::invalid_argument("config: penalty_weight must be >= 0");
    }
    if (threads < 1) {
        throw std::invalid_argument("config: threads must be >= 1");
    }
    if (max_iter.empty()) {
        throw std::invalid_argument("config: no iteration caps");
    }
    for (const int m : max_iter) {
        if (m < 0) {
            throw std::invalid_argument("config: iteration caps must be >= 0");
        }
    }
    if (intensity_window && !(intensity_window->lo < intensity_window->hi)) {
        throw std::invalid_argument("config: intensity_window needs lo < hi");
    }
    lbfgs.validate();
}

int RegistrationConfig::max_iter_for(int level) const {
    const int n = static_cast<int>(max_iter.size());
    const int idx = std::clamp(level + n - levels, 0, n - 1);
    return max_iter[static_cast<std::size_t>(idx)];
}

namespace {

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<double> numbers(const std::string &value, const std::string &where) {
    std::istringstream in(value);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception &) {
            used = 0;
        }
        if (used != tok.size()) {
            throw std::runtime_error(where + ": '" + tok + "' is not a number");
        }
        out.push_back(v);
    }
    return out;
}

double one_number(const std::string &value, const std::string &where) {
    const auto v = numbers(value, where);
    if (v.size() != 1) {
        throw std::runtime_error(where + ": expected one number, got '" + value + "'");
    }
    return v[0];
}

int one_int(const std::string &value, const std::string &where) {
    const double v = one_number(value, where);
    if (v != static_cast<double>(static_cast<int>(v))) {
        throw std::runtime_error(where + ": expected an integer, got '" + value + "'");
    }
    return static_cast<int>(v);
}

bool parse_switch(const std::string &value, const std::string &where) {
    if (value == "on" || value == "true" || value == "1" || value == "yes") {
        return true;
    }
    if (value == "off" || value == "false" || value == "0" || value == "no") {
        return false;
    }
    throw std::runtime_error(where + ": expected on/off, got '" + value + "'");
}

} // namespace

RegistrationConfig parse_config(const std::string &text) {
    RegistrationConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        const std::string where = "config line " + std::to_string(lineno);
        if (eq == std::string::npos) {
            throw std::runtime_error(where + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string at = where + " (" + key + ")";
        if (key == "levels") {
            cfg.levels = one_int(value, at);
        } else if (key == "grid_spacing") {
            const auto v = numbers(value, at);
            if (v.size() == 1) {
                cfg.grid_spacing = {v[0], v[0], v[0]};
            } else if (v.size() == 3) {
                cfg.grid_spacing = {v[0], v[1], v[2]};
            } else {
                throw std::runtime_error(at + ": expected 1 or 3 numbers");
            }
        } else if (key == "bins") {
            cfg.bins.max_bin = one_int(value, at);
        } else if (key == "penalty_weight") {
            cfg.penalty_weight = one_number(value, at);
        } else if (key == "orientation") {
            if (value == "moving-model" || value == "M-as-A") {
                cfg.orientation = MovingRole::Model;
            } else if (value == "moving-estimated" || value == "M-as-B") {
                cfg.orientation = MovingRole::Estimated;
            } else {
                throw std::runtime_error(at + ": expected moving-model or moving-estimated, got '" + value + "'");
            }
        } else if (key == "weight_kind") {
            if (value == "bspline") {
                cfg.weight_kind = SpatialWeightKind::CubicBSpline;
            } else if (value == "boxcar") {
                cfg.weight_kind = SpatialWeightKind::Boxcar;
            } else {
                throw std::runtime_error(at + ": expected bspline or boxcar, got '" + value + "'");
            }
        } else if (key == "similarity") {
            if (value == "srwcr") {
                cfg.similarity = SimilarityKind::Srwcr;
            } else if (value == "raptor") {
                cfg.similarity = SimilarityKind::Raptor;
            } else {
                throw std::runtime_error(at + ": expected srwcr or raptor, got '" + value + "'");
            }
        } else if (key == "threads") {
            cfg.threads = one_int(value, at);
        } else if (key == "deterministic") {
            cfg.deterministic = parse_switch(value, at);
        } else if (key == "max_iter_l0" || key == "max_iter_l1" || key == "max_iter_l2") {
            const auto idx = static_cast<std::size_t>(key.back() - '0');
            cfg.max_iter.resize(std::max(cfg.max_iter.size(), idx + 1), cfg.max_iter.back());
            cfg.max_iter[idx] = one_int(value, at);
        } else if (key == "intensity_window") {
            const auto v = numbers(value, at);
            if (v.size() != 2) {
                throw std::runtime_error(at + ": expected 'lo hi'");
            }
            cfg.intensity_window = IntensityWindow{v[0], v[1]};
        } else {
            throw std::runtime_error(where + ": unknown key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

RegistrationConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config file " + path.string());
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

Volume warp_with_field(const Volume &v, const DisplacementField &f, int workers) {
    require_same_dims(v.dims(), f.dims(), "warp_with_field");
    const Dims d = v.dims();
    Volume out(d, v.spacing());
    parallel_for(static_cast<std::size_t>(d.z), workers, [&](std::size_t begin, std::size_t end, int) {
        for (int k = static_cast<int>(begin); k < static_cast<int>(end); ++k) {
            for (int j = 0; j < d.y; ++j) {
                for (int i = 0; i < d.x; ++i) {
                    const Vec3 &u = f(i, j, k);
                    out(i, j, k) = trilinear_sample(v, Vec3{i + u.x, j + u.y, k + u.z});
                }
            }
        }
    });
    return out;
}

std::vector<Vec3> transform_landmarks(const std::vector<Vec3> &points, const DisplacementField &f) {
    std::vector<Vec3> out;
    out.reserve(points.size());
    for (const Vec3 &p : points) {
        out.push_back(p + trilinear_sample(f, p));
    }
    return out;
}

DisplacementField upsample_field(const DisplacementField &coarse, Dims fine, Vec3 fine_spacing) {
    DisplacementField out(fine, fine_spacing);
    for (int k = 0; k < fine.z; ++k) {
        for (int j = 0; j < fine.y; ++j) {
            for (int i = 0; i < fine.x; ++i) {
                out(i, j, k) = trilinear_sample(coarse, Vec3{0.5 * i, 0.5 * j, 0.5 * k}) * 2.0;
            }
        }
    }
    return out;
}

namespace {

std::string format_iteration(int level, const IterationInfo &it, const CostBreakdown &c) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "level %d iter %d cost %.8g similarity %.8g penalty %.6g gnorm %.4g step %.4g",
                  level, it.iteration, it.cost, c.similarity, c.penalty, it.gradient_norm, it.step);
    return buf;
}

} // namespace

RegistrationResult register_images(const Volume &fixed, const Volume &moving, const RegistrationConfig &cfg,
                                   const LogSink &log) {
    cfg.validate();
    require_same_dims(fixed.dims(), moving.dims(), "register");
    for (const Volume *v : {&fixed, &moving}) {
        const auto [lo, hi] = v->min_max();
        if (!(lo < hi)) {
            throw std::invalid_argument("register: input image is constant");
        }
    }

    std::vector<Volume> pf{normalize_intensity(fixed, cfg.bins.max_bin, cfg.intensity_window)};
    std::vector<Volume> pm{normalize_intensity(moving, cfg.bins.max_bin, cfg.intensity_window)};
    for (int l = 1; l < cfg.levels; ++l) {
        pf.push_back(gaussian_downsample(pf.back()));
        pm.push_back(gaussian_downsample(pm.back()));
    }
    const Dims coarsest = pf.back().dims();
    if (coarsest.x < 16 || coarsest.y < 16 || coarsest.z < 16) {
        throw std::invalid_argument("register: coarsest level " + coarsest.str() +
                                    " is smaller than 16 voxels per axis; use fewer levels");
    }

    EvalPlan plan;
    plan.moving_role = cfg.orientation;
    plan.weight_kind = cfg.weight_kind;
    plan.similarity = cfg.similarity;
    plan.bins = cfg.bins;
    plan.penalty_weight = cfg.penalty_weight;
    plan.workers = cfg.threads;
    plan.deterministic = cfg.deterministic;

    RegistrationResult res;
    DisplacementField total(coarsest, pf.back().spacing());
    for (int level = 0; level < cfg.levels; ++level) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto p = static_cast<std::size_t>(cfg.levels - 1 - level);
        const Volume &f = pf[p];
        if (level > 0) {
            total = upsample_field(total, f.dims(), f.spacing());
        }
        const Volume prewarped = warp_with_field(pm[p], total, cfg.threads);
        const FFDGrid layout = FFDGrid::covering(f.dims(), cfg.grid_spacing);
        Evaluator ev(plan, f, prewarped, layout);

        LbfgsConfig lc = cfg.lbfgs;
        lc.max_iter = cfg.max_iter_for(level);
        Observer observer;
        if (log) {
            observer = [&](const IterationInfo &it) { log(format_iteration(level, it, ev.last().cost)); };
            log("level " + std::to_string(level) + " dims " + f.dims().str() + " nodes " + layout.node_dims().str());
        }
        Objective objective = [&ev](std::span<const double> x, std::span<double> g) { return ev(x, g); };
        MinimizeResult mr = minimize(objective, layout.parameters(), lc, observer);

        FFDGrid solved = layout;
        solved.set_parameters(mr.x);
        total = compose(total, densify(solved, cfg.threads), cfg.threads);

        LevelTrace tr;
        tr.level = level;
        tr.dims = f.dims();
        tr.nodes = layout.node_dims();
        tr.iterations = mr.iterations;
        tr.evaluations = mr.evaluations;
        tr.termination = mr.reason;
        tr.cost = std::move(mr.cost_history);
        tr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (log) {
            log("level " + std::to_string(level) + " done: " + std::to_string(tr.iterations) + " iterations, " +
                to_string(tr.termination));
        }
        res.levels.push_back(std::move(tr));
    }
    res.field = DisplacementField(fixed.dims(), fixed.spacing(), std::vector<Vec3>(total.data().begin(), total.data().end()));
    res.warped = warp_with_field(moving, res.field, cfg.threads);
    return res;
}

} // namespace crreg
