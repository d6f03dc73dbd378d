#include "popcast/optim.hpp"

#include "popcast/errors.hpp"

#include <cmath>

namespace popcast {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamOptions& opts) {
    const std::size_t n = params.size();
    if (grads.size() != n) {
        throw config_error("adam: gradient length mismatch");
    }
    if (state.m.size() != n) {
        state.reset(n);
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(opts.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(opts.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i];
        state.m[i] = opts.beta1 * state.m[i] + (1.0 - opts.beta1) * g;
        state.v[i] = opts.beta2 * state.v[i] + (1.0 - opts.beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= opts.lr * m_hat / (std::sqrt(v_hat) + opts.eps);
    }
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

} // namespace

LbfgsOutcome lbfgs_step(std::vector<double>& params, const LossFn& loss_fn, LbfgsState& state,
                        const LbfgsOptions& opts) {
    const std::size_t n = params.size();
    if (opts.history < 1) {
        throw config_error("lbfgs: history size must be >= 1");
    }

    std::vector<double> grad(n, 0.0);
    const double f0 = loss_fn(params, grad);

    LbfgsOutcome out;
    out.loss = f0;

    // curvature pair from the previous accepted iterate (consumed once)
    if (state.have_prev) {
        state.have_prev = false;
        std::vector<double> s(n);
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = params[i] - state.prev_params[i];
            y[i] = grad[i] - state.prev_grad[i];
        }
        const double sy = dot(s, y);
        if (sy > 1e-12 * std::sqrt(dot(s, s)) * std::sqrt(dot(y, y))) {
            state.pairs.emplace_back(std::move(s), std::move(y));
            while (state.pairs.size() > opts.history) {
                state.pairs.pop_front();
            }
        }
    }

    const double gnorm2 = dot(grad, grad);
    if (gnorm2 == 0.0) {
        out.stalled = true;
        return out;
    }

    // two-loop recursion
    std::vector<double> dir(grad.begin(), grad.end());
    std::vector<double> alpha(state.pairs.size(), 0.0);
    for (std::size_t k = state.pairs.size(); k-- > 0;) {
        const auto& [s, y] = state.pairs[k];
        const double rho = 1.0 / dot(s, y);
        alpha[k] = rho * dot(s, dir);
        for (std::size_t i = 0; i < n; ++i) {
            dir[i] -= alpha[k] * y[i];
        }
    }
    if (!state.pairs.empty()) {
        const auto& [s, y] = state.pairs.back();
        const double gamma = dot(s, y) / dot(y, y);
        for (double& d : dir) {
            d *= gamma;
        }
    }
    for (std::size_t k = 0; k < state.pairs.size(); ++k) {
        const auto& [s, y] = state.pairs[k];
        const double rho = 1.0 / dot(s, y);
        const double beta = rho * dot(y, dir);
        for (std::size_t i = 0; i < n; ++i) {
            dir[i] += (alpha[k] - beta) * s[i];
        }
    }
    for (double& d : dir) {
        d = -d;
    }

    double gd = dot(grad, dir);
    if (gd >= 0.0) {
        // not a descent direction (stale curvature); restart from steepest descent
        state.pairs.clear();
        for (std::size_t i = 0; i < n; ++i) {
            dir[i] = -grad[i];
        }
        gd = -gnorm2;
    }

    // backtracking Armijo line search
    std::vector<double> trial(n);
    std::vector<double> trial_grad(n);
    double step = 1.0;
    for (int ls = 0; ls < opts.max_line_search; ++ls) {
        for (std::size_t i = 0; i < n; ++i) {
            trial[i] = params[i] + step * dir[i];
        }
        const double f_trial = loss_fn(trial, trial_grad);
        if (std::isfinite(f_trial) && f_trial <= f0 + opts.armijo_c * step * gd) {
            state.prev_params = params;
            state.prev_grad = grad;
            state.have_prev = true;
            params = trial;
            out.loss = f_trial;
            out.accepted = true;
            out.step_length = step;
            out.predicted_decrease = -opts.armijo_c * step * gd;
            return out;
        }
        step *= opts.backtrack;
    }

    out.stalled = true;
    return out;
}

} // namespace popcast
