// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splatlift/geometry.hpp"
#include "splatlift/image.hpp"
#include "splatlift/nn.hpp"
#include "splatlift/splat_render.hpp"

namespace splatlift {

// Per-pixel raw channel layout (per gaussian j of k):
//   [0] depth, [1..3] delta, [4] opacity, [5..8] quat, [9..11] scales,
//   [12..] color (3 at degree 0, 12 at degree 1)
struct LifterConfig {
    int k = 1;
    int sh_degree = 0;
    int base_width = 8; // trunk widths: base, 2*base, 4*base, 4*base
    int stages = 3;     // number of stride-2 downsamplings
    int width = 96, height = 96;

    double d_min = 0.5, d_max = 6.0; // depth activation bounds
    double delta_scale = 0.15;       // tanh bound on the positional offset
    double s_min = 0.004, s_max = 0.25;

    int raw_channels_per_gaussian() const { return 12 + Gaussian3D::color_count(sh_degree); }
    int raw_channels() const { return k * raw_channels_per_gaussian(); }
    void validate() const; // throws on inconsistent settings
};

// Raw (pre-activation) per-pixel attributes: Tensor3 with raw_channels()
// channels at input resolution.
using RawPixelAttributes = Tensor3;

// Activated per-pixel attributes, one gaussian per (pixel, j).
struct PixelAttributes {
    int h = 0, w = 0, k = 1, sh_degree = 0;
    std::vector<double> depth;    // h*w*k
    std::vector<Eigen::Vector3d> delta;
    std::vector<double> opacity;
    std::vector<Quaternion> quat;
    std::vector<Eigen::Vector3d> scales;
    std::vector<std::array<double, 12>> color;
    size_t count() const { return depth.size(); }
};

// Trainable state: trunk + head conv layers with attached Adam moments.
struct LifterParams {
    LifterConfig cfg;
    std::vector<ConvLayer> trunk; // enc0..encN, mid, dec(N-1)..dec0
    ConvLayer head;

    static LifterParams create(const LifterConfig& cfg, uint64_t seed); // head zero-init
    size_t param_count() const;
    void zero_grad();
    void adam_update(double lr_trunk, double lr_head);
    // flat named views for checkpoints and tests
    std::vector<std::pair<std::string, std::vector<double>*>> parameter_groups();
    std::vector<std::pair<std::string, const std::vector<double>*>> parameter_groups() const;
};

// Activations kept from the forward pass; backward consumes them.
struct LifterTape {
    Tensor3 input;
    std::vector<Tensor3> enc_post; // post-relu per encoder stage
    Tensor3 mid_post;
    std::vector<Tensor3> dec_post; // post-relu per decoder stage (reverse order)
    RawPixelAttributes raw;
};

// Deterministic map image -> raw attributes. Shape mismatch throws.
RawPixelAttributes lifter_forward(const FloatImage& image, LifterParams& params,
                                  LifterTape* tape = nullptr);

// Backprop through the trunk: accumulates layer gradients from d(raw).
void lifter_backward(LifterParams& params, const LifterTape& tape, const Tensor3& d_raw);

PixelAttributes apply_activations(const RawPixelAttributes& raw, const LifterConfig& cfg);

// d(attributes)/d(raw) chain: maps attribute-space gradients back to raw.
Tensor3 activations_backward(const RawPixelAttributes& raw, const LifterConfig& cfg,
                             const PixelAttributes& attrs, const SceneGradients& scene_grads,
                             const Camera& cam);

// mu = unproject(pixel center, depth) + delta, row-major pixel order.
GaussianScene attributes_to_scene(const PixelAttributes& attrs, const Camera& cam);

} // namespace splatlift
