// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace splatlift {

// Adam with bias correction over a flat parameter array.
// One AdamState per parameter group; moments stay aligned with the group.
struct AdamState {
    std::vector<double> m; // first moments
    std::vector<double> v; // second moments
    int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    explicit AdamState(size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
    void resize(size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
    }
};

// In-place update. Throws std::invalid_argument on shape mismatch and
// std::runtime_error("non-finite gradient") when any gradient is NaN/Inf.
void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
               double lr);

} // namespace splatlift
