// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "splatlift/geometry.hpp"
#include "splatlift/image.hpp"

namespace splatlift {

// Opaque textured rectangle: corner + two edge vectors spanning the surface.
struct Quad {
    Eigen::Vector3d corner = Eigen::Vector3d::Zero();
    Eigen::Vector3d edge_u = Eigen::Vector3d::UnitX();
    Eigen::Vector3d edge_v = Eigen::Vector3d::UnitY();
    uint32_t texture_id = 0;
    uint64_t texture_seed = 0;
};

struct QuadScene {
    std::vector<Quad> quads;
    double extent = 1.0; // world-unit diameter of the populated region
    std::string kind;
    uint64_t seed = 0;
};

struct TrajectoryConfig {
    int camera_count = 8;
    int width = 64, height = 64;
    double focal_scale = 1.0;    // fx = fy = focal_scale * width
    double baseline_span = 1.0;  // total sideways travel in world units
    double orbit_degrees = 8.0;  // extra yaw sweep across the trajectory
};

struct RayHit {
    bool hit = false;
    double t = 0;          // distance along the (unit) ray direction
    int quad = -1;
    double qu = 0, qv = 0; // parametric coordinates on the quad in [0,1]
};

enum class SceneKind { Wall, WallOccluder, RoomCorner, RandomQuads };

SceneKind parse_scene_kind(const std::string& name); // throws on unknown kind
std::string scene_kind_name(SceneKind kind);

// Deterministic per (kind, seed). "wall+occluder" retries derived sub-seeds
// until the occluder hides 10-40% of the wall from camera 0 of the default
// trajectory.
QuadScene gen_scene(SceneKind kind, uint64_t seed, int random_quad_count = 6);

// Strafe-with-slight-orbit cameras looking at the scene center. Every camera
// is validated to see at least half the frame filled (oracle hit coverage).
std::vector<Camera> make_trajectory(const QuadScene& scene, const TrajectoryConfig& cfg);

RayHit raycast(const QuadScene& scene, const Eigen::Vector3d& origin,
               const Eigen::Vector3d& dir);

// Exact per-pixel nearest intersection: color from the procedural texture,
// depth in camera units (<= 0 where the ray misses everything).
std::pair<FloatImage, FloatImage> raycast_render(const QuadScene& scene, const Camera& cam);

// Binary mask over the target view: 1 where the target pixel's exact hit
// point is visible from the input camera (projects in frame, input ray
// reaches it within 1e-4), else 0.
FloatImage oracle_visibility(const QuadScene& scene, const Camera& cam_input,
                             const Camera& cam_target);

// Fraction of wall-surface samples hidden from the camera by closer geometry.
// Drives the wall+occluder guarantee and its tests.
double occluded_fraction(const QuadScene& scene, const Camera& cam, int wall_quad = 0);

// Fraction of pixels whose ray hits any quad.
double hit_coverage(const QuadScene& scene, const Camera& cam);

double texture_value(uint32_t texture_id, uint64_t texture_seed, double u, double v,
                     int channel);

} // namespace splatlift
