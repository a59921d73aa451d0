// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "splatlift/geometry.hpp"
#include "splatlift/image.hpp"

namespace splatlift {

// One splat primitive. Color coefficients are stored basis-major:
// c[3*m + ch] with m = 0 the DC term and m = 1..3 the degree-1 basis
// functions. sh_degree 0 uses c[0..2] only, and the DC term IS the color
// (no spherical-harmonics scaling on the DC band).
struct Gaussian3D {
    Eigen::Vector3d mu = Eigen::Vector3d::Zero();
    double opacity = 1.0;                       // [0,1]
    Quaternion rot;                             // normalized by the renderer
    Eigen::Vector3d scales = Eigen::Vector3d::Ones();
    std::array<double, 12> color{};             // see layout note above

    static int color_count(int sh_degree) { return sh_degree == 0 ? 3 : 12; }
};

struct GaussianScene {
    std::vector<Gaussian3D> gaussians;
    int sh_degree = 0; // 0 or 1
    std::string scene_id;

    size_t size() const { return gaussians.size(); }
};

struct RenderOutput {
    FloatImage color;       // H x W x 3
    FloatImage mean_depth;  // H x W x 1, value <= 0 marks invalid
    FloatImage accum_alpha; // H x W x 1
    Image<int> contributor_count;
    ImageD color_fp64;      // same color values before float32 storage; the
                            // differentiable training path reads this one
};

// Per-gaussian gradients, aligned with scene order. d_rot is with respect to
// the raw quaternion fed in (the internal normalization is part of the chain).
struct SceneGradients {
    std::vector<Eigen::Vector3d> d_mu;
    std::vector<double> d_opacity;
    std::vector<Eigen::Vector4d> d_rot;
    std::vector<Eigen::Vector3d> d_scales;
    std::vector<std::array<double, 12>> d_color;
    // screen-space center gradient in pixels; scene-fit densification reads it
    std::vector<Eigen::Vector2d> d_center_px;
    std::vector<uint8_t> visible; // 1 when the gaussian survived culling

    void resize(size_t n);
    bool all_finite() const;
};

struct RenderOptions {
    double mahalanobis_cutoff = 3.0;  // contributor iff sqrt(dx^T Q dx) <= this
    double min_transmittance = 1e-4;  // early exit threshold; <= 0 disables
    double min_alpha_for_depth = 0.02;
    // median depth: report the camera depth where accumulated opacity first
    // crosses 1/2 instead of the alpha-weighted mean. Robust against
    // semi-transparent "fog" stacks; falls back to the mean when coverage
    // never reaches 1/2.
    bool median_depth = false;
};

// g(dx) = exp(-1/2 dx^T sigma2d^{-1} dx)
double eval_gaussian_2d(const Eigen::Matrix2d& sigma2d, const Eigen::Vector2d& dx);

// Front-to-back alpha compositing over contributors sorted by camera depth
// (ties broken by scene index), black background. Throws on an empty scene.
RenderOutput render(const GaussianScene& scene, const Camera& cam,
                    const RenderOptions& opts = {});

// Gradients of L = sum_pixels upstream . color with respect to every
// gaussian attribute. upstream must be H x W x 3 matching the camera.
SceneGradients render_backward(const GaussianScene& scene, const Camera& cam,
                               const ImageD& upstream, const RenderOptions& opts = {});
SceneGradients render_backward(const GaussianScene& scene, const Camera& cam,
                               const FloatImage& upstream, const RenderOptions& opts = {});

// L = sum_pixels upstream . color, evaluated in double precision end to end.
// This is the scalar whose gradient render_backward returns; finite-difference
// oracles probe it directly.
double render_loss(const GaussianScene& scene, const Camera& cam, const ImageD& upstream,
                   const RenderOptions& opts = {});

// Mean-depth convenience projection (value <= 0 marks invalid pixels).
FloatImage render_depth(const GaussianScene& scene, const Camera& cam,
                        const RenderOptions& opts = {});

} // namespace splatlift
