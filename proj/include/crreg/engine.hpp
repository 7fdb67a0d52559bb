#pragma once

#include <span>
#include <string>
#include <vector>

#include "crreg/bspline.hpp"
#include "crreg/gradient.hpp"
#include "crreg/histogram.hpp"
#include "crreg/metric.hpp"
#include "crreg/volume.hpp"

namespace crreg {

enum class SimilarityKind { Srwcr, Raptor };

struct EvalPlan {
    MovingRole moving_role = MovingRole::Model;
    SpatialWeightKind weight_kind = SpatialWeightKind::CubicBSpline;
    SimilarityKind similarity = SimilarityKind::Srwcr;
    Interpolation interpolation = Interpolation::Linear;
    BinConfig bins;
    double penalty_weight = kPenaltyWeightMonoModal;
    int workers = 1;
    bool deterministic = true;

    void validate() const;
};

/// Wall time in seconds per stage of the last evaluation.
struct StageTimes {
    double warp = 0.0;       ///< 1: densify and warp the moving image
    double statistics = 0.0; ///< 2: regional tables and their statistics
    double voxel = 0.0;      ///< 3: per-voxel ∂D/∂M and ∇M
    double assemble = 0.0;   ///< 4: per-node gradient assembly
    double penalty = 0.0;    ///< bending energy and its gradient
};

struct EvalResult {
    CostBreakdown cost;
    ParamGradient gradient;
    StageTimes times;
};

/// Cost and gradient of one (fixed, moving) pair over FFD grids of a fixed
/// layout. Per-pair data (fixed-image bins, node supports) is built once.
/// Both images must already be normalised to [0, max_bin].
class Evaluator {
  public:
    Evaluator(EvalPlan plan, Volume fixed, Volume moving, const FFDGrid &layout);

    const EvalPlan &plan() const { return plan_; }
    const FFDGrid &layout() const { return layout_; }

    /// Cost of g, and its gradient when want_gradient is set.
    EvalResult evaluate(const FFDGrid &g, bool want_gradient = true);

    /// The moving image warped by g.
    Volume warped(const FFDGrid &g) const;

    /// Objective adaptor over the grid's flattened parameters. The breakdown
    /// of the most recent call is kept in last().
    double operator()(std::span<const double> params, std::span<double> grad);
    const EvalResult &last() const { return last_; }

  private:
    void warp_stage(const FFDGrid &g, bool want_gradient);

    EvalPlan plan_;
    Volume fixed_;
    Volume moving_;
    FFDGrid layout_;
    FFDGrid scratch_;
    NodeSupport region_support_;
    NodeSupport patch_support_;
    std::vector<SoftBin> fixed_bins_;
    std::vector<double> warped_values_;
    std::vector<SoftBin> moving_bins_;
    VoxelDerivTables tables_;
    EvalResult last_;
};

/// One-shot evaluation; returns the warped moving image as well.
struct EvaluationOutput {
    CostBreakdown cost;
    ParamGradient gradient;
    Volume warped;
    StageTimes times;
};

EvaluationOutput evaluate(const EvalPlan &plan, const Volume &fixed, const Volume &moving, const FFDGrid &g);

std::string to_string(MovingRole r);
std::string to_string(SpatialWeightKind k);
std::string to_string(SimilarityKind k);

} // namespace crreg
