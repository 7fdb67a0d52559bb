#include "crreg/engine.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

#include "crreg/parallel.hpp"

namespace crreg {

void EvalPlan::validate() const {
    bins.validate();
    if (workers < 1) {
        throw std::invalid_argument("EvalPlan: worker count must be >= 1");
    }
    if (!(penalty_weight >= 0.0)) {
        throw std::invalid_argument("EvalPlan: penalty weight must be >= 0");
    }
}

std::string to_string(MovingRole r) {
    return r == MovingRole::Model ? "model" : "estimated";
}

std::string to_string(SpatialWeightKind k) {
    return k == SpatialWeightKind::CubicBSpline ? "bspline" : "boxcar";
}

std::string to_string(SimilarityKind k) {
    return k == SimilarityKind::Srwcr ? "srwcr" : "raptor";
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

BinKernel kernel_for(const EvalPlan &plan) {
    return plan.similarity == SimilarityKind::Raptor ? BinKernel::Tent : BinKernel::Parzen;
}

} // namespace

Evaluator::Evaluator(EvalPlan plan, Volume fixed, Volume moving, const FFDGrid &layout)
    : plan_(plan), fixed_(std::move(fixed)), moving_(std::move(moving)), layout_(layout), scratch_(layout) {
    plan_.validate();
    require_same_dims(fixed_.dims(), moving_.dims(), "evaluator");
    require_same_dims(fixed_.dims(), layout_.image_dims(), "evaluator (grid)");
    if (moving_.dims().x < 2 || moving_.dims().y < 2 || moving_.dims().z < 2) {
        throw std::invalid_argument("evaluator: images need at least 2 voxels per axis");
    }
    region_support_ = NodeSupport::build(layout_, plan_.weight_kind);
    if (plan_.similarity == SimilarityKind::Raptor) {
        patch_support_ = NodeSupport::build(layout_, SpatialWeightKind::Boxcar);
    }
    // Fixed-image bins are needed unless the fixed image is the raw B of the baseline.
    const bool fixed_is_a = plan_.moving_role == MovingRole::Estimated;
    if (plan_.similarity == SimilarityKind::Srwcr || fixed_is_a) {
        fixed_bins_ = soft_bins(fixed_, plan_.bins, kernel_for(plan_), plan_.workers);
    }
    const std::size_t n = fixed_.size();
    warped_values_.assign(n, 0.0);
    moving_bins_.assign(n, SoftBin{});
    tables_.dims = fixed_.dims();
    tables_.dD_dM.assign(n, 0.0);
    tables_.grad_M.assign(n, Vec3{});
}

void Evaluator::warp_stage(const FFDGrid &g, bool want_gradient) {
    const DisplacementField u = densify(g, plan_.workers);
    const Dims d = fixed_.dims();
    const double top = static_cast<double>(plan_.bins.max_bin);
    const BinKernel kernel = kernel_for(plan_);
    const bool need_bins = plan_.similarity == SimilarityKind::Srwcr || plan_.moving_role == MovingRole::Model;
    parallel_for(
        static_cast<std::size_t>(d.z), plan_.workers,
        [&](std::size_t begin, std::size_t end, int) {
            for (int k = static_cast<int>(begin); k < static_cast<int>(end); ++k) {
                for (int j = 0; j < d.y; ++j) {
                    for (int i = 0; i < d.x; ++i) {
                        const std::size_t idx = d.index(i, j, k);
                        const Vec3 y = Vec3{static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)} +
                                       u[idx];
                        Vec3 grad;
                        double v = sample_gradient(moving_, y, grad, plan_.interpolation);
                        v = std::clamp(v, 0.0, top);
                        warped_values_[idx] = v;
                        if (want_gradient) {
                            tables_.grad_M[idx] = grad;
                        }
                        if (need_bins) {
                            moving_bins_[idx] = soft_bin(v, plan_.bins, kernel);
                        }
                    }
                }
            }
        },
        plan_.deterministic ? Schedule::Static : Schedule::Dynamic);
}

EvalResult Evaluator::evaluate(const FFDGrid &g, bool want_gradient) {
    if (g.image_dims() != layout_.image_dims() || g.node_dims() != layout_.node_dims() ||
        !(g.spacing() == layout_.spacing())) {
        throw std::invalid_argument("evaluator: grid layout differs from the one the evaluator was built for");
    }
    EvalResult res;
    auto t0 = Clock::now();
    warp_stage(g, want_gradient);
    res.times.warp = seconds_since(t0);

    const bool a_moving = plan_.moving_role == MovingRole::Model;
    const std::span<const SoftBin> moving_bins = moving_bins_;
    const std::span<const SoftBin> fixed_bins = fixed_bins_;
    double similarity = 0.0;

    if (plan_.similarity == SimilarityKind::Srwcr) {
        const auto a_bins = a_moving ? moving_bins : fixed_bins;
        const auto b_bins = a_moving ? fixed_bins : moving_bins;
        t0 = Clock::now();
        const RegionalStats stats = build_regional_stats(a_bins, b_bins, layout_, region_support_, plan_.bins,
                                                         plan_.workers, plan_.deterministic);
        similarity = srwcr(stats);
        res.times.statistics = seconds_since(t0);
        if (want_gradient) {
            t0 = Clock::now();
            srwcr_voxel_derivatives(plan_.moving_role, stats, a_bins, b_bins, layout_, plan_.weight_kind,
                                    tables_.dD_dM, plan_.workers, plan_.deterministic);
            res.times.voxel = seconds_since(t0);
        }
    } else {
        const auto a_bins = a_moving ? moving_bins : fixed_bins;
        const std::span<const double> b = a_moving ? fixed_.data() : std::span<const double>(warped_values_);
        t0 = Clock::now();
        const PatchStats stats =
            build_patch_stats(a_bins, b, layout_, patch_support_, plan_.bins, plan_.workers, plan_.deterministic);
        similarity = raptor_value(stats);
        res.times.statistics = seconds_since(t0);
        if (want_gradient) {
            t0 = Clock::now();
            raptor_voxel_derivatives(plan_.moving_role, stats, a_bins, b, layout_, tables_.dD_dM, plan_.workers,
                                     plan_.deterministic);
            res.times.voxel = seconds_since(t0);
        }
    }

    t0 = Clock::now();
    BendingEnergy be = bending_energy(g);
    res.times.penalty = seconds_since(t0);
    res.cost.similarity = similarity;
    res.cost.penalty = be.value;
    res.cost.weight = plan_.penalty_weight;
    res.cost.total = similarity + plan_.penalty_weight * be.value;

    if (want_gradient) {
        t0 = Clock::now();
        res.gradient = assemble_param_gradient(tables_, g, be.gradient, plan_.penalty_weight, plan_.workers);
        res.times.assemble = seconds_since(t0);
    }
    return res;
}

Volume Evaluator::warped(const FFDGrid &g) const {
    const DisplacementField u = densify(g, plan_.workers);
    const Dims d = moving_.dims();
    Volume out(d, fixed_.spacing());
    parallel_for(static_cast<std::size_t>(d.z), plan_.workers, [&](std::size_t begin, std::size_t end, int) {
        for (int k = static_cast<int>(begin); k < static_cast<int>(end); ++k) {
            for (int j = 0; j < d.y; ++j) {
                for (int i = 0; i < d.x; ++i) {
                    const Vec3 y = Vec3{static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)} +
                                   u(i, j, k);
                    Vec3 grad;
                    out(i, j, k) = sample_gradient(moving_, y, grad, plan_.interpolation);
                }
            }
        }
    });
    return out;
}

double Evaluator::operator()(std::span<const double> params, std::span<double> grad) {
    scratch_.set_parameters(params);
    last_ = evaluate(scratch_, !grad.empty());
    for (std::size_t s = 0; s < last_.gradient.size(); ++s) {
        grad[3 * s] = last_.gradient[s].x;
        grad[3 * s + 1] = last_.gradient[s].y;
        grad[3 * s + 2] = last_.gradient[s].z;
    }
    return last_.cost.total;
}

EvaluationOutput evaluate(const EvalPlan &plan, const Volume &fixed, const Volume &moving, const FFDGrid &g) {
    Evaluator ev(plan, fixed, moving, g);
    EvalResult r = ev.evaluate(g, true);
    return {r.cost, std::move(r.gradient), ev.warped(g), r.times};
}

} // namespace crreg
