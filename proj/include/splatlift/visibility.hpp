// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <utility>
#include <vector>

#include "splatlift/geometry.hpp"
#include "splatlift/image.hpp"
#include "splatlift/splat_render.hpp"

namespace splatlift {

// logistic(-scale * |depth_diff| - shift). Peaks at ~0.4875 for zero
// difference; the ceiling is kept as-is (normalize=false everywhere by
// default) because training consumes the raw values.
double soft_visibility(double depth_diff, double scale = 3.0, double shift = 0.05);

struct VisibilityOptions {
    double scale = 3.0;
    double shift = 0.05;
    bool normalized = false; // divide by the zero-difference ceiling
    RenderOptions render;
};

// Mask over the target view: renders mean depth in both views, reprojects
// each valid target pixel into the input view and scores the depth agreement.
// Out-of-frustum or invalid-depth pixels get exactly 0.
FloatImage compute_visibility_mask(const GaussianScene& scene, const Camera& cam_input,
                                   const Camera& cam_target,
                                   const VisibilityOptions& opts = {});

// Same, but with precomputed input-view depth (saves renders in pairwise use).
FloatImage compute_visibility_mask_from_depths(const FloatImage& depth_input,
                                               const FloatImage& depth_target,
                                               const Camera& cam_input, const Camera& cam_target,
                                               const VisibilityOptions& opts = {});

// Masks for every ordered camera pair (i != j), keyed by (input, target).
std::map<std::pair<int, int>, FloatImage> compute_pairwise_masks(
    const GaussianScene& scene, const std::vector<Camera>& cameras,
    const VisibilityOptions& opts = {});

} // namespace splatlift
