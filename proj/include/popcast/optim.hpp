#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

namespace popcast {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;

    void reset(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
        step = 0;
    }
};

/// Bias-corrected Adam update, in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamOptions& opts);

struct LbfgsOptions {
    std::size_t history = 10;
    int max_line_search = 40;
    double armijo_c = 1e-4;
    double backtrack = 0.5;
};

struct LbfgsState {
    std::deque<std::pair<std::vector<double>, std::vector<double>>> pairs; // (s, y)
    std::vector<double> prev_params;
    std::vector<double> prev_grad;
    bool have_prev = false;

    void reset() {
        pairs.clear();
        prev_params.clear();
        prev_grad.clear();
        have_prev = false;
    }
};

struct LbfgsOutcome {
    double loss = 0.0;       // loss at the returned parameters
    bool accepted = false;   // a step satisfying the Armijo condition was taken
    bool stalled = false;    // zero gradient or exhausted line search; params unchanged
    double step_length = 0.0;
    double predicted_decrease = 0.0; // armijo_c * step * g'd at acceptance
};

/// Loss callback: fills grads_out (same length as params) and returns the loss.
using LossFn = std::function<double(std::span<const double> params, std::span<double> grads_out)>;

/// One L-BFGS iteration: two-loop recursion direction from the stored (s, y)
/// history plus backtracking Armijo line search. Accepted steps never increase
/// the loss. On stall the parameters are returned unchanged.
LbfgsOutcome lbfgs_step(std::vector<double>& params, const LossFn& loss_fn, LbfgsState& state,
                        const LbfgsOptions& opts);

} // namespace popcast
