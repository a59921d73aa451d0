// SPDX-License-Identifier: Apache-2.0
#include "splatlift/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace splatlift {

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
               double lr) {
    if (params.size() != grads.size()) throw std::invalid_argument("parameter/gradient shape mismatch");
    if (state.m.size() != params.size()) state.resize(params.size());
    for (double g : grads)
        if (!std::isfinite(g)) throw std::runtime_error("non-finite gradient");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
}

} // namespace splatlift
