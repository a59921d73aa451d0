// SPDX-License-Identifier: Apache-2.0
#include "splatlift/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace splatlift {

ConvLayer::ConvLayer(std::string name_, int in_c_, int out_c_, int k_, int stride_)
    : name(std::move(name_)), in_c(in_c_), out_c(out_c_), k(k_), stride(stride_) {
    weight.assign(static_cast<size_t>(out_c) * in_c * k * k, 0.0);
    bias.assign(out_c, 0.0);
    d_weight.assign(weight.size(), 0.0);
    d_bias.assign(bias.size(), 0.0);
    st_weight.resize(weight.size());
    st_bias.resize(bias.size());
}

void ConvLayer::init_he(Rng& rng) {
    const double stddev = std::sqrt(2.0 / (static_cast<double>(in_c) * k * k));
    for (auto& v : weight) v = rng.normal(0.0, stddev);
    for (auto& v : bias) v = 0.0;
}

void ConvLayer::init_zero() {
    std::fill(weight.begin(), weight.end(), 0.0);
    std::fill(bias.begin(), bias.end(), 0.0);
}

void ConvLayer::zero_grad() {
    std::fill(d_weight.begin(), d_weight.end(), 0.0);
    std::fill(d_bias.begin(), d_bias.end(), 0.0);
}

Tensor3 ConvLayer::forward(const Tensor3& x) const {
    if (x.c != in_c) throw std::invalid_argument("conv input channel mismatch");
    const int pad = (k - 1) / 2;
    const int oh = (x.h + 2 * pad - k) / stride + 1;
    const int ow = (x.w + 2 * pad - k) / stride + 1;
    Tensor3 y(out_c, oh, ow);
    for (int oc = 0; oc < out_c; ++oc) {
        const double b = bias[oc];
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double acc = b;
                const int iy0 = oy * stride - pad;
                const int ix0 = ox * stride - pad;
                for (int ic = 0; ic < in_c; ++ic) {
                    const double* wrow = &weight[((static_cast<size_t>(oc) * in_c + ic) * k) * k];
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = iy0 + ky;
                        if (iy < 0 || iy >= x.h) continue;
                        const double* xrow = &x.v[(static_cast<size_t>(ic) * x.h + iy) * x.w];
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ix0 + kx;
                            if (ix < 0 || ix >= x.w) continue;
                            acc += wrow[ky * k + kx] * xrow[ix];
                        }
                    }
                }
                y.at(oc, oy, ox) = acc;
            }
        }
    }
    return y;
}

Tensor3 ConvLayer::backward(const Tensor3& x, const Tensor3& dy) {
    const int pad = (k - 1) / 2;
    Tensor3 dx(x.c, x.h, x.w);
    for (int oc = 0; oc < out_c; ++oc) {
        double db = 0.0;
        for (int oy = 0; oy < dy.h; ++oy) {
            for (int ox = 0; ox < dy.w; ++ox) {
                const double g = dy.at(oc, oy, ox);
                if (g == 0.0) continue;
                db += g;
                const int iy0 = oy * stride - pad;
                const int ix0 = ox * stride - pad;
                for (int ic = 0; ic < in_c; ++ic) {
                    double* wgrow = &d_weight[((static_cast<size_t>(oc) * in_c + ic) * k) * k];
                    const double* wrow = &weight[((static_cast<size_t>(oc) * in_c + ic) * k) * k];
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = iy0 + ky;
                        if (iy < 0 || iy >= x.h) continue;
                        const double* xrow = &x.v[(static_cast<size_t>(ic) * x.h + iy) * x.w];
                        double* dxrow = &dx.v[(static_cast<size_t>(ic) * x.h + iy) * x.w];
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ix0 + kx;
                            if (ix < 0 || ix >= x.w) continue;
                            wgrow[ky * k + kx] += g * xrow[ix];
                            dxrow[ix] += g * wrow[ky * k + kx];
                        }
                    }
                }
            }
        }
        d_bias[oc] += db;
    }
    return dx;
}

Tensor3 relu(const Tensor3& x) {
    Tensor3 y = x;
    for (auto& v : y.v) v = v > 0.0 ? v : 0.0;
    return y;
}

Tensor3 relu_backward(const Tensor3& y_post, const Tensor3& dy) {
    Tensor3 dx = dy;
    for (size_t i = 0; i < dx.v.size(); ++i)
        if (y_post.v[i] <= 0.0) dx.v[i] = 0.0;
    return dx;
}

Tensor3 upsample2(const Tensor3& x) {
    Tensor3 y(x.c, x.h * 2, x.w * 2);
    for (int c = 0; c < x.c; ++c)
        for (int yy = 0; yy < y.h; ++yy)
            for (int xx = 0; xx < y.w; ++xx) y.at(c, yy, xx) = x.at(c, yy / 2, xx / 2);
    return y;
}

Tensor3 upsample2_backward(const Tensor3& dy) {
    Tensor3 dx(dy.c, dy.h / 2, dy.w / 2);
    for (int c = 0; c < dy.c; ++c)
        for (int yy = 0; yy < dy.h; ++yy)
            for (int xx = 0; xx < dy.w; ++xx) dx.at(c, yy / 2, xx / 2) += dy.at(c, yy, xx);
    return dx;
}

Tensor3 add(const Tensor3& a, const Tensor3& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("tensor shape mismatch in add");
    Tensor3 y = a;
    for (size_t i = 0; i < y.v.size(); ++i) y.v[i] += b.v[i];
    return y;
}

} // namespace splatlift
