// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splatlift/geometry.hpp"
#include "splatlift/image.hpp"
#include "splatlift/splat_render.hpp"

namespace splatlift {

struct FitConfig {
    int iterations = 2000; // desk scale; the reference recipe runs 30000
    int init_point_count = 8000;
    int max_gaussians = 20000;

    // per-attribute learning rates; mu is additionally scaled by scene extent
    // and decays exponentially to lr_mu_final over the run
    double lr_mu = 1e-3;
    double lr_mu_final = 2e-5;
    double lr_opacity = 0.1;
    double lr_scale = 5e-3;
    double lr_rot = 1e-3;
    double lr_color = 0.01;

    int densify_interval = 100;
    int densify_from = 300;
    int densify_until = 1600;
    // mean screen-space gradient (NDC units). The usual splatting recipe says
    // 2e-4, calibrated for an L1-mean photometric loss; the mean-squared loss
    // here produces gradients roughly 4x smaller.
    double densify_grad_threshold = 5e-5;
    double duplication_scale_threshold = 0.002; // x extent: clone below, split above
    double prune_scale_threshold = 0.02;        // x extent: hard ceiling
    double opacity_prune_threshold = 0.005;

    bool opacity_reset = false; // off at desk scale
    int opacity_reset_interval = 3000;

    double loss_l2_weight = 0.8;
    double loss_dssim_weight = 0.2;
    // per-gaussian alpha*(1-alpha) penalty pushing opacities to 0 or 1;
    // soft "fog" stacks satisfy the photometric loss but poison the depth
    // maps the visibility masks are built from
    double opacity_sharpen_weight = 2e-4;
    int opacity_sharpen_from = 1200;
    // final iterations average the gradient over every view instead of
    // sampling one, trading time for a multi-view-consistent polish
    int full_batch_tail = 100;

    double init_near = 0.8; // frustum sampling depth range
    double init_far = 6.0;
};

struct FitView {
    FloatImage image; // H x W x 3
    Camera camera;
};

struct FitLogEntry {
    int iteration = 0;
    double loss = 0;
    int gaussian_count = 0;
};

struct FitResult {
    GaussianScene scene;
    std::vector<FitLogEntry> log;
    double extent = 0; // AABB diagonal of the initial point cloud
};

// Densification bookkeeping so the optimizer can remap its moment vectors.
struct DensifyOutcome {
    std::vector<int> source_of;  // output index -> input index (attribute copy)
    std::vector<uint8_t> fresh;  // 1 when optimizer state must reset
    int cloned = 0, split = 0, pruned = 0;
    bool changed() const { return cloned + split + pruned > 0; }
};

// Clone/split gaussians whose mean positional gradient exceeds the threshold,
// prune transparent or oversized ones. mean_pos_grad is in NDC units per
// gaussian. Never empties the scene: if pruning would, the single
// highest-opacity gaussian survives (with a warning).
DensifyOutcome densify_and_prune(GaussianScene& scene, const std::vector<double>& mean_pos_grad,
                                 const FitConfig& cfg, double extent, uint64_t seed);

// Optimizes a fresh gaussian scene against posed views: frustum-intersection
// random init, Adam on all five attribute groups, photometric
// l2/d-ssim loss, periodic densify/prune. Deterministic per seed.
FitResult fit_scene(const std::vector<FitView>& views, const FitConfig& cfg, uint64_t seed);

// CSV with header "iteration,loss,count".
std::string fit_log_to_csv(const std::vector<FitLogEntry>& log);

} // namespace splatlift
