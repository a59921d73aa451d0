// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "splatlift/rng.hpp"
#include "splatlift/splat_render.hpp"

namespace splatlift::testing {

inline Camera simple_camera(int width = 16, int height = 16, double focal = 16.0) {
    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.fx = cam.fy = focal;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    return cam;
}

inline Quaternion random_unit_quat(Rng& rng) {
    Quaternion q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    return q.normalized();
}

inline RigidTransform random_pose(Rng& rng, double translation_scale = 1.0) {
    RigidTransform pose;
    pose.rotation = quat_to_rotmat(random_unit_quat(rng));
    pose.translation = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()) * translation_scale;
    return pose;
}

// gaussians inside the frustum of simple_camera, moderate footprints
inline GaussianScene random_scene(Rng& rng, int count, double depth_min = 1.5,
                                  double depth_max = 4.0) {
    GaussianScene scene;
    scene.sh_degree = 0;
    for (int i = 0; i < count; ++i) {
        Gaussian3D g;
        const double z = rng.uniform(depth_min, depth_max);
        g.mu = Eigen::Vector3d(rng.uniform(-0.45, 0.45) * z, rng.uniform(-0.45, 0.45) * z, z);
        g.opacity = rng.uniform(0.2, 0.95);
        g.rot = random_unit_quat(rng);
        g.scales = Eigen::Vector3d(rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.3),
                                   rng.uniform(0.05, 0.3));
        g.color = {rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0),
                   0, 0, 0, 0, 0, 0, 0, 0, 0};
        scene.gaussians.push_back(g);
    }
    return scene;
}

inline ImageD random_upstream(Rng& rng, int height, int width) {
    ImageD up(height, width, 3);
    for (auto& v : up.raw()) v = rng.normal();
    return up;
}

} // namespace splatlift::testing
