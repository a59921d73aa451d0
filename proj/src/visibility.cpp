// SPDX-License-Identifier: Apache-2.0
#include "splatlift/visibility.hpp"

#include <cmath>
#include <stdexcept>

namespace splatlift {

double soft_visibility(double depth_diff, double scale, double shift) {
    const double z = -scale * std::abs(depth_diff) - shift;
    return 1.0 / (1.0 + std::exp(-z));
}

namespace {

// bilinear sample over valid (> 0) depth pixels only; false when no valid
// neighbor carries weight
bool sample_depth(const FloatImage& depth, double u, double v, double& out) {
    const double fx = u - 0.5, fy = v - 0.5; // to pixel-index space
    const int x0 = static_cast<int>(std::floor(fx));
    const int y0 = static_cast<int>(std::floor(fy));
    const double tx = fx - x0, ty = fy - y0;
    double wsum = 0, vsum = 0;
    for (int dy = 0; dy <= 1; ++dy)
        for (int dx = 0; dx <= 1; ++dx) {
            const int x = x0 + dx, y = y0 + dy;
            if (!depth.in_bounds(y, x)) continue;
            const double d = depth.at(y, x);
            if (d <= 0.0) continue;
            const double w = (dx ? tx : 1 - tx) * (dy ? ty : 1 - ty);
            wsum += w;
            vsum += w * d;
        }
    if (wsum <= 1e-12) return false;
    out = vsum / wsum;
    return true;
}

} // namespace

FloatImage compute_visibility_mask_from_depths(const FloatImage& depth_input,
                                               const FloatImage& depth_target,
                                               const Camera& cam_input, const Camera& cam_target,
                                               const VisibilityOptions& opts) {
    FloatImage mask(cam_target.height, cam_target.width, 1, ImageSemantics::Mask);
    const double ceiling = soft_visibility(0.0, opts.scale, opts.shift);
    for (int y = 0; y < cam_target.height; ++y) {
        for (int x = 0; x < cam_target.width; ++x) {
            const double d_target = depth_target.at(y, x);
            if (d_target <= 0.0) continue; // invalid target depth -> 0
            const Eigen::Vector3d world =
                unproject_pixel(cam_target, x + 0.5, y + 0.5, d_target);
            const PixelProjection proj = project_point(cam_input, world);
            if (!proj.valid || proj.z <= kNearPlane) continue;
            if (proj.u < 0.0 || proj.u >= cam_input.width || proj.v < 0.0 ||
                proj.v >= cam_input.height)
                continue;
            double d_input;
            if (!sample_depth(depth_input, proj.u, proj.v, d_input)) continue;
            double m = soft_visibility(d_input - proj.z, opts.scale, opts.shift);
            if (opts.normalized) m /= ceiling;
            mask.at(y, x) = static_cast<float>(m);
        }
    }
    return mask;
}

FloatImage compute_visibility_mask(const GaussianScene& scene, const Camera& cam_input,
                                   const Camera& cam_target, const VisibilityOptions& opts) {
    if (scene.gaussians.empty()) throw std::invalid_argument("empty scene");
    const FloatImage depth_input = render_depth(scene, cam_input, opts.render);
    const FloatImage depth_target = render_depth(scene, cam_target, opts.render);
    return compute_visibility_mask_from_depths(depth_input, depth_target, cam_input, cam_target,
                                               opts);
}

std::map<std::pair<int, int>, FloatImage> compute_pairwise_masks(
    const GaussianScene& scene, const std::vector<Camera>& cameras,
    const VisibilityOptions& opts) {
    if (cameras.size() < 2) throw std::invalid_argument("need at least 2 cameras");
    if (scene.gaussians.empty()) throw std::invalid_argument("empty scene");
    std::vector<FloatImage> depths;
    depths.reserve(cameras.size());
    for (const auto& cam : cameras) depths.push_back(render_depth(scene, cam, opts.render));
    std::map<std::pair<int, int>, FloatImage> masks;
    for (size_t i = 0; i < cameras.size(); ++i)
        for (size_t j = 0; j < cameras.size(); ++j) {
            if (i == j) continue;
            masks.emplace(std::make_pair(static_cast<int>(i), static_cast<int>(j)),
                          compute_visibility_mask_from_depths(depths[i], depths[j], cameras[i],
                                                              cameras[j], opts));
        }
    return masks;
}

} // namespace splatlift
