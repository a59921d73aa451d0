// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "splatlift/datagen.hpp"
#include "splatlift/visibility.hpp"

using namespace splatlift;

namespace {

// gaussian impostor of a quad scene: a dense grid of small near-opaque
// splats on every quad surface. Lets the reprojection masks be tested
// against the exact ray-cast oracle without running an optimization.
GaussianScene gaussianize(const QuadScene& quads, int grid = 96) {
    GaussianScene scene;
    scene.sh_degree = 0;
    for (const auto& q : quads.quads) {
        const double step_u = q.edge_u.norm() / grid;
        const double step_v = q.edge_v.norm() / grid;
        const double scale = 0.75 * std::max(step_u, step_v);
        for (int j = 0; j < grid; ++j)
            for (int i = 0; i < grid; ++i) {
                Gaussian3D g;
                const double a = (i + 0.5) / grid, b = (j + 0.5) / grid;
                g.mu = q.corner + a * q.edge_u + b * q.edge_v;
                g.opacity = 0.98;
                g.scales = Eigen::Vector3d(scale, scale, 0.2 * scale);
                // orient the flat axis along the quad normal
                const Eigen::Vector3d n = q.edge_u.cross(q.edge_v).normalized();
                const Eigen::Vector3d u = q.edge_u.normalized();
                const Eigen::Vector3d v = n.cross(u);
                Eigen::Matrix3d rot;
                rot.col(0) = u;
                rot.col(1) = v;
                rot.col(2) = n;
                // rotation matrix -> quaternion
                const double tr = rot.trace();
                const double w = std::sqrt(std::max(0.0, 1.0 + tr)) / 2.0;
                const double s = w > 1e-8 ? 1.0 / (4.0 * w) : 0.0;
                g.rot = w > 1e-8 ? Quaternion(w, (rot(2, 1) - rot(1, 2)) * s,
                                              (rot(0, 2) - rot(2, 0)) * s,
                                              (rot(1, 0) - rot(0, 1)) * s)
                                 : Quaternion(1, 0, 0, 0);
                g.color = {0.5, 0.5, 0.5, 0, 0, 0, 0, 0, 0, 0, 0, 0};
                scene.gaussians.push_back(g);
            }
    }
    return scene;
}

double binarized_iou(const FloatImage& soft, const FloatImage& oracle, float threshold) {
    int inter = 0, uni = 0;
    for (int y = 0; y < soft.height(); ++y)
        for (int x = 0; x < soft.width(); ++x) {
            const bool a = soft.at(y, x) > threshold;
            const bool b = oracle.at(y, x) > 0.5f;
            inter += (a && b);
            uni += (a || b);
        }
    return uni > 0 ? static_cast<double>(inter) / uni : 1.0;
}

} // namespace

TEST_CASE("soft_visibility closed-form logistic values") {
    CHECK(soft_visibility(0.0) == doctest::Approx(0.487503).epsilon(1e-6));
    CHECK(soft_visibility(0.1) == doctest::Approx(0.413382).epsilon(1e-6));
    CHECK(soft_visibility(1.0) == doctest::Approx(0.045220).epsilon(2e-5));
    CHECK(soft_visibility(-0.1) == soft_visibility(0.1)); // |diff|
}

TEST_CASE("soft_visibility is monotone non-increasing and bounded") {
    double last = soft_visibility(0.0);
    CHECK(last <= 0.487503 + 1e-9);
    for (double d = 0.01; d < 5.0; d += 0.01) {
        const double v = soft_visibility(d);
        CHECK(v <= last + 1e-15);
        CHECK(v > 0.0);
        last = v;
    }
}

TEST_CASE("identical views score the zero-difference ceiling everywhere valid") {
    const QuadScene quads = gen_scene(SceneKind::Wall, 4);
    TrajectoryConfig traj;
    traj.camera_count = 2;
    traj.width = traj.height = 32;
    const auto cams = make_trajectory(quads, traj);
    const GaussianScene scene = gaussianize(quads, 64);

    const FloatImage mask = compute_visibility_mask(scene, cams[0], cams[0]);
    const FloatImage depth = render_depth(scene, cams[0]);
    int valid = 0;
    for (int y = 1; y + 1 < 32; ++y)
        for (int x = 1; x + 1 < 32; ++x) {
            if (depth.at(y, x) <= 0) continue;
            ++valid;
            CHECK(mask.at(y, x) == doctest::Approx(0.487503).epsilon(1e-3));
        }
    CHECK(valid > 500);
}

TEST_CASE("mask values never exceed the formula ceiling") {
    const QuadScene quads = gen_scene(SceneKind::WallOccluder, 6);
    TrajectoryConfig traj;
    traj.camera_count = 3;
    traj.width = traj.height = 32;
    const auto cams = make_trajectory(quads, traj);
    const GaussianScene scene = gaussianize(quads, 64);
    const FloatImage mask = compute_visibility_mask(scene, cams[0], cams[2]);
    for (float v : mask.raw()) {
        CHECK(v <= 0.487504f);
        CHECK(v >= 0.0f);
    }
}

TEST_CASE("target pixels projecting outside the input frame get zero") {
    QuadScene quads;
    Quad wall;
    wall.corner = Eigen::Vector3d(-6, -3, 2.5);
    wall.edge_u = Eigen::Vector3d(12, 0, 0);
    wall.edge_v = Eigen::Vector3d(0, 6, 0);
    quads.quads.push_back(wall);
    quads.extent = 12;

    Camera input;
    input.width = input.height = 32;
    input.fx = input.fy = 32;
    input.cx = input.cy = 16;
    Camera target = input;
    target.pose.translation = Eigen::Vector3d(-3.0, 0, 0); // center strafed right

    const GaussianScene scene = gaussianize(quads, 128);
    const FloatImage mask = compute_visibility_mask(scene, input, target);
    const FloatImage depth_t = render_depth(scene, target);
    int zero_checked = 0;
    for (int y = 8; y < 24; ++y)
        for (int x = 28; x < 32; ++x) {
            if (depth_t.at(y, x) <= 0) continue;
            const Eigen::Vector3d world =
                unproject_pixel(target, x + 0.5, y + 0.5, depth_t.at(y, x));
            const PixelProjection proj = project_point(input, world);
            if (proj.u >= 0 && proj.u < input.width && proj.v >= 0 && proj.v < input.height)
                continue;
            CHECK(mask.at(y, x) == 0.0f);
            ++zero_checked;
        }
    CHECK(zero_checked > 10);
}

TEST_CASE("gaussian-derived masks agree with the ray-cast oracle (IoU >= 0.9)") {
    const QuadScene quads = gen_scene(SceneKind::WallOccluder, 12);
    TrajectoryConfig traj;
    traj.camera_count = 3;
    traj.width = traj.height = 64;
    const auto cams = make_trajectory(quads, traj);
    const GaussianScene scene = gaussianize(quads, 128);
    for (int target : {1, 2}) {
        const FloatImage soft = compute_visibility_mask(scene, cams[0], cams[target]);
        const FloatImage oracle = oracle_visibility(quads, cams[0], cams[target]);
        CHECK(binarized_iou(soft, oracle, 0.24375f) >= 0.9);
    }
}

TEST_CASE("pairwise masks: counting, duplicates, errors") {
    const QuadScene quads = gen_scene(SceneKind::Wall, 19);
    TrajectoryConfig traj;
    traj.camera_count = 3;
    traj.width = traj.height = 24;
    auto cams = make_trajectory(quads, traj);
    const GaussianScene scene = gaussianize(quads, 48);

    const auto masks = compute_pairwise_masks(scene, cams);
    CHECK(masks.size() == 6); // 3 * 2 ordered pairs
    CHECK(masks.count({0, 0}) == 0);

    // duplicate cameras: every valid pixel scores the ceiling
    std::vector<Camera> dup{cams[0], cams[0]};
    const auto dup_masks = compute_pairwise_masks(scene, dup);
    const FloatImage depth = render_depth(scene, cams[0]);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x)
            if (depth.at(y, x) > 0)
                CHECK(dup_masks.at({0, 1}).at(y, x) == doctest::Approx(0.487503).epsilon(1e-3));

    CHECK_THROWS_AS(compute_pairwise_masks(scene, {cams[0]}), std::invalid_argument);
    GaussianScene empty;
    CHECK_THROWS_WITH_AS(compute_pairwise_masks(empty, cams), "empty scene",
                         std::invalid_argument);
}

TEST_CASE("mirrored camera pair over a symmetric scene gives mirrored masks") {
    QuadScene quads;
    Quad wall;
    wall.corner = Eigen::Vector3d(-4, -4, 2.2);
    wall.edge_u = Eigen::Vector3d(8, 0, 0);
    wall.edge_v = Eigen::Vector3d(0, 8, 0);
    quads.quads.push_back(wall);
    Quad occ; // centered occluder keeps the setup mirror-symmetric
    occ.corner = Eigen::Vector3d(-0.5, -0.5, 1.4);
    occ.edge_u = Eigen::Vector3d(1, 0, 0);
    occ.edge_v = Eigen::Vector3d(0, 1, 0);
    quads.quads.push_back(occ);
    quads.extent = 8;

    Camera left;
    left.width = left.height = 48;
    left.fx = left.fy = 48;
    left.cx = left.cy = 24;
    Camera right = left;
    left.pose.translation = Eigen::Vector3d(0.4, 0, 0);   // center at -0.4
    right.pose.translation = Eigen::Vector3d(-0.4, 0, 0); // center at +0.4

    const GaussianScene scene = gaussianize(quads, 128);
    const FloatImage m_lr = compute_visibility_mask(scene, left, right);
    const FloatImage m_rl = compute_visibility_mask(scene, right, left);
    double abs_diff = 0;
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 48; ++x)
            abs_diff += std::abs(m_lr.at(y, x) - m_rl.at(y, 47 - x));
    abs_diff /= 48.0 * 48.0;
    CHECK(abs_diff <= 1e-3);
}

TEST_CASE("increasing the depth discrepancy never increases the mask value") {
    Camera cam;
    cam.width = cam.height = 16;
    cam.fx = cam.fy = 16;
    cam.cx = cam.cy = 8;
    FloatImage depth_target(16, 16, 1, ImageSemantics::Depth, 2.0f);
    float last_center = 1.0f;
    for (float bias : {0.0f, 0.05f, 0.15f, 0.4f, 1.0f, 2.5f}) {
        FloatImage depth_input(16, 16, 1, ImageSemantics::Depth, 2.0f + bias);
        const FloatImage mask =
            compute_visibility_mask_from_depths(depth_input, depth_target, cam, cam);
        CHECK(mask.at(8, 8) <= last_center + 1e-7f);
        last_center = mask.at(8, 8);
    }
}
