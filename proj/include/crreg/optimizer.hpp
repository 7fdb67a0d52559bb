#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace crreg {

struct LbfgsConfig {
    int history = 5;
    int max_iter = 200;
    double wolfe_c1 = 1e-4;
    double wolfe_c2 = 0.9;
    int stability_window = 20;
    double stability_rel_tol = 1e-5;
    int max_line_search_steps = 20;
    /// Stop when ‖g‖ falls to this absolute value.
    double gradient_tol = 1e-12;

    void validate() const;
};

enum class Termination { MaxIterations, Stable, GradientVanished, LineSearchFailed };

std::string to_string(Termination t);

/// Returns the cost at x and writes the gradient into grad (same length as x).
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct IterationInfo {
    int iteration = 0;
    double cost = 0.0;
    double gradient_norm = 0.0;
    double step = 0.0;
    int evaluations = 0;
};

/// Called after every accepted iterate. The objective's most recent call was
/// made at that iterate.
using Observer = std::function<void(const IterationInfo &)>;

struct MinimizeResult {
    std::vector<double> x;
    double cost = 0.0;
    int iterations = 0;
    int evaluations = 0;
    Termination reason = Termination::MaxIterations;
    std::vector<double> cost_history; ///< cost at x0 followed by every accepted iterate
};

/// Limited-memory BFGS with a backtracking line search enforcing the strong
/// Wolfe conditions. Throws std::runtime_error on a non-finite cost or gradient.
MinimizeResult minimize(const Objective &objective, std::vector<double> x0, const LbfgsConfig &cfg,
                        const Observer &observer = {});

} // namespace crreg
