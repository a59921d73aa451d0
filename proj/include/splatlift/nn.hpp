// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splatlift/adam.hpp"
#include "splatlift/rng.hpp"

namespace splatlift {

// CHW double tensor; the whole lifter runs in double so chained
// finite-difference checks stay clean.
struct Tensor3 {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor3() = default;
    Tensor3(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, 0.0) {}
    double& at(int ch, int y, int x) { return v[(static_cast<size_t>(ch) * h + y) * w + x]; }
    double at(int ch, int y, int x) const { return v[(static_cast<size_t>(ch) * h + y) * w + x]; }
    void zero() { std::fill(v.begin(), v.end(), 0.0); }
    bool same_shape(const Tensor3& o) const { return c == o.c && h == o.h && w == o.w; }
};

// Square conv with padding (k-1)/2. Stride 1 or 2.
struct ConvLayer {
    std::string name;
    int in_c = 0, out_c = 0, k = 3, stride = 1;
    std::vector<double> weight; // [out_c][in_c][k][k]
    std::vector<double> bias;   // [out_c]
    std::vector<double> d_weight, d_bias;
    AdamState st_weight, st_bias;

    ConvLayer() = default;
    ConvLayer(std::string name_, int in_c_, int out_c_, int k_, int stride_);

    void init_he(Rng& rng);
    void init_zero();
    void zero_grad();
    size_t param_count() const { return weight.size() + bias.size(); }

    Tensor3 forward(const Tensor3& x) const;
    // accumulates d_weight/d_bias and returns dL/dx
    Tensor3 backward(const Tensor3& x, const Tensor3& dy);
};

Tensor3 relu(const Tensor3& x);
Tensor3 relu_backward(const Tensor3& y_post, const Tensor3& dy); // uses post-activation sign

Tensor3 upsample2(const Tensor3& x); // nearest neighbor x2
Tensor3 upsample2_backward(const Tensor3& dy);

Tensor3 add(const Tensor3& a, const Tensor3& b);

} // namespace splatlift
