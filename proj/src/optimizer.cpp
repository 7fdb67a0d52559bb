#include "crreg/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace crreg {

void LbfgsConfig::validate() const {
    if (history < 1) {
        throw std::invalid_argument("lbfgs: history size must be >= 1");
    }
    if (!(wolfe_c1 > 0.0 && wolfe_c1 < wolfe_c2 && wolfe_c2 < 1.0)) {
        throw std::invalid_argument("lbfgs: Wolfe constants must satisfy 0 < c1 < c2 < 1");
    }
    if (max_iter < 0 || stability_window < 2 || max_line_search_steps < 1) {
        throw std::invalid_argument("lbfgs: iteration limits out of range");
    }
}

std::string to_string(Termination t) {
    switch (t) {
    case Termination::MaxIterations:
        return "max_iterations";
    case Termination::Stable:
        return "stable";
    case Termination::GradientVanished:
        return "gradient_vanished";
    case Termination::LineSearchFailed:
        return "line_search_failed";
    }
    return "unknown";
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

struct Pair {
    std::vector<double> s, y;
    double ys = 0.0;
};

} // namespace

MinimizeResult minimize(const Objective &objective, std::vector<double> x0, const LbfgsConfig &cfg,
                        const Observer &observer) {
    cfg.validate();
    const std::size_t n = x0.size();
    MinimizeResult res;
    res.x = std::move(x0);

    std::vector<double> g(n);
    auto evaluate = [&](std::span<const double> x, std::span<double> grad) {
        const double f = objective(x, grad);
        ++res.evaluations;
        if (!std::isfinite(f) || !all_finite(grad)) {
            throw std::runtime_error("lbfgs: objective returned a non-finite cost or gradient at evaluation " +
                                     std::to_string(res.evaluations));
        }
        return f;
    };

    double f = evaluate(res.x, g);
    res.cost = f;
    res.cost_history.push_back(f);
    double gnorm = std::sqrt(dot(g, g));
    if (gnorm <= cfg.gradient_tol) {
        res.reason = Termination::GradientVanished;
        return res;
    }

    std::deque<Pair> pairs;
    std::vector<double> d(n), xt(n), gt(n), best_x, best_g;
    std::vector<double> alpha(static_cast<std::size_t>(cfg.history));
    for (std::size_t i = 0; i < n; ++i) {
        d[i] = -g[i];
    }
    double step0 = 1.0 / gnorm;
    res.reason = Termination::MaxIterations;

    for (int iter = 1; iter <= cfg.max_iter; ++iter) {
        double dg0 = dot(g, d);
        if (!(dg0 < 0.0)) {
            // Lost descent; fall back to steepest descent.
            pairs.clear();
            for (std::size_t i = 0; i < n; ++i) {
                d[i] = -g[i];
            }
            dg0 = -gnorm * gnorm;
            step0 = 1.0 / gnorm;
        }

        double step = step0;
        bool accepted = false;
        bool have_best = false;
        double best_f = f;
        double best_step = 0.0;
        double ft = f;
        for (int ls = 0; ls < cfg.max_line_search_steps; ++ls) {
            for (std::size_t i = 0; i < n; ++i) {
                xt[i] = res.x[i] + step * d[i];
            }
            ft = evaluate(xt, gt);
            double width;
            if (ft > f + cfg.wolfe_c1 * step * dg0) {
                width = 0.5;
            } else {
                if (ft < best_f) {
                    have_best = true;
                    best_f = ft;
                    best_step = step;
                    best_x = xt;
                    best_g = gt;
                }
                const double dg = dot(gt, d);
                if (dg < cfg.wolfe_c2 * dg0) {
                    width = 2.1;
                } else if (dg > -cfg.wolfe_c2 * dg0) {
                    width = 0.5;
                } else {
                    accepted = true;
                    break;
                }
            }
            step *= width;
        }
        if (!accepted) {
            if (!have_best) {
                res.reason = Termination::LineSearchFailed;
                // Leave the objective's last call at the returned iterate.
                evaluate(res.x, g);
                break;
            }
            step = best_step;
            xt = best_x;
            gt = best_g;
            ft = evaluate(xt, gt);
        }

        Pair p;
        p.s.resize(n);
        p.y.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            p.s[i] = xt[i] - res.x[i];
            p.y[i] = gt[i] - g[i];
        }
        p.ys = dot(p.y, p.s);
        const double yy = dot(p.y, p.y);
        res.x.swap(xt);
        g.swap(gt);
        f = ft;
        gnorm = std::sqrt(dot(g, g));
        res.cost = f;
        res.iterations = iter;
        res.cost_history.push_back(f);
        if (observer) {
            observer(IterationInfo{iter, f, gnorm, step, res.evaluations});
        }

        if (p.ys > 0.0 && yy > 0.0) {
            pairs.push_back(std::move(p));
            if (pairs.size() > static_cast<std::size_t>(cfg.history)) {
                pairs.pop_front();
            }
        }

        if (gnorm <= cfg.gradient_tol) {
            res.reason = Termination::GradientVanished;
            break;
        }
        const auto window = static_cast<std::size_t>(cfg.stability_window);
        if (res.cost_history.size() >= window) {
            const auto tail = std::span<const double>(res.cost_history).last(window);
            const auto [lo, hi] = std::minmax_element(tail.begin(), tail.end());
            if ((*hi - *lo) / std::max(std::abs(*lo), 1e-12) < cfg.stability_rel_tol) {
                res.reason = Termination::Stable;
                break;
            }
        }
        if (iter == cfg.max_iter) {
            break;
        }

        // Two-loop recursion.
        for (std::size_t i = 0; i < n; ++i) {
            d[i] = -g[i];
        }
        if (pairs.empty()) {
            step0 = 1.0 / gnorm;
            continue;
        }
        for (std::size_t k = pairs.size(); k-- > 0;) {
            alpha[k] = dot(pairs[k].s, d) / pairs[k].ys;
            for (std::size_t i = 0; i < n; ++i) {
                d[i] -= alpha[k] * pairs[k].y[i];
            }
        }
        const Pair &last = pairs.back();
        const double gamma = last.ys / dot(last.y, last.y);
        for (double &v : d) {
            v *= gamma;
        }
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            const double beta = dot(pairs[k].y, d) / pairs[k].ys;
            for (std::size_t i = 0; i < n; ++i) {
                d[i] += (alpha[k] - beta) * pairs[k].s[i];
            }
        }
        step0 = 1.0;
    }
    return res;
}

} // namespace crreg
