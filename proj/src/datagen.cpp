// SPDX-License-Identifier: Apache-2.0
#include "splatlift/datagen.hpp"

#include <cmath>
#include <stdexcept>

#include "splatlift/rng.hpp"

namespace splatlift {

namespace {

uint64_t hash_mix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// lattice value in [0,1), deterministic in (seed, ix, iy, channel)
double lattice_value(uint64_t seed, int64_t ix, int64_t iy, int channel) {
    uint64_t h = seed;
    h = hash_mix(h ^ static_cast<uint64_t>(ix) * 0x100000001b3ULL);
    h = hash_mix(h ^ static_cast<uint64_t>(iy) * 0xc2b2ae3d27d4eb4fULL);
    h = hash_mix(h ^ static_cast<uint64_t>(channel) * 0x165667b19e3779f9ULL);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// bilinear value noise, one octave
double value_noise(uint64_t seed, double x, double y, int channel) {
    const double fx = std::floor(x), fy = std::floor(y);
    const int64_t ix = static_cast<int64_t>(fx), iy = static_cast<int64_t>(fy);
    const double tx = smoothstep(x - fx), ty = smoothstep(y - fy);
    const double v00 = lattice_value(seed, ix, iy, channel);
    const double v10 = lattice_value(seed, ix + 1, iy, channel);
    const double v01 = lattice_value(seed, ix, iy + 1, channel);
    const double v11 = lattice_value(seed, ix + 1, iy + 1, channel);
    return (v00 * (1 - tx) + v10 * tx) * (1 - ty) + (v01 * (1 - tx) + v11 * tx) * ty;
}

Eigen::Vector3d scene_center(const QuadScene& scene) {
    Eigen::Vector3d lo(1e30, 1e30, 1e30), hi(-1e30, -1e30, -1e30);
    for (const auto& q : scene.quads) {
        for (int a = 0; a <= 1; ++a)
            for (int b = 0; b <= 1; ++b) {
                const Eigen::Vector3d p = q.corner + a * q.edge_u + b * q.edge_v;
                lo = lo.cwiseMin(p);
                hi = hi.cwiseMax(p);
            }
    }
    return 0.5 * (lo + hi);
}

Camera look_at_camera(const Eigen::Vector3d& pos, const Eigen::Vector3d& target, int width,
                      int height, double focal_scale) {
    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.fx = cam.fy = focal_scale * width;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    const Eigen::Vector3d z_axis = (target - pos).normalized();
    const Eigen::Vector3d world_down(0.0, 1.0, 0.0); // y points down everywhere
    Eigen::Vector3d x_axis = world_down.cross(z_axis);
    if (x_axis.norm() < 1e-9) x_axis = Eigen::Vector3d::UnitX();
    x_axis.normalize();
    const Eigen::Vector3d y_axis = z_axis.cross(x_axis);
    Eigen::Matrix3d r;
    r.row(0) = x_axis;
    r.row(1) = y_axis;
    r.row(2) = z_axis;
    cam.pose.rotation = r;
    cam.pose.translation = -(r * pos);
    return cam;
}

QuadScene make_wall(uint64_t seed, Rng& rng) {
    QuadScene scene;
    scene.kind = "wall";
    scene.seed = seed;
    Quad wall;
    const double z = rng.uniform(2.0, 2.6);
    const double half = rng.uniform(2.6, 3.2);
    wall.corner = Eigen::Vector3d(-half, -half, z);
    wall.edge_u = Eigen::Vector3d(2 * half, 0, 0);
    wall.edge_v = Eigen::Vector3d(0, 2 * half, rng.uniform(-0.15, 0.15));
    wall.texture_id = static_cast<uint32_t>(rng.uniform_index(4));
    wall.texture_seed = rng.next_u64();
    scene.quads.push_back(wall);
    scene.extent = 2 * half;
    return scene;
}

// occluder sits well in front of the wall: the depth gap along input rays
// must dominate the fitted-depth noise for the visibility sigmoid to separate
void add_occluder(QuadScene& scene, Rng& rng) {
    Quad occ;
    const double z = rng.uniform(1.1, 1.4);
    const double w = rng.uniform(0.7, 1.1);
    const double h = rng.uniform(0.7, 1.1);
    const double ox = rng.uniform(-0.45, 0.45);
    const double oy = rng.uniform(-0.4, 0.4);
    occ.corner = Eigen::Vector3d(ox - 0.5 * w, oy - 0.5 * h, z);
    occ.edge_u = Eigen::Vector3d(w, 0, rng.uniform(-0.08, 0.08));
    occ.edge_v = Eigen::Vector3d(0, h, rng.uniform(-0.08, 0.08));
    occ.texture_id = static_cast<uint32_t>(rng.uniform_index(4));
    occ.texture_seed = rng.next_u64();
    scene.quads.push_back(occ);
}

} // namespace

SceneKind parse_scene_kind(const std::string& name) {
    if (name == "wall") return SceneKind::Wall;
    if (name == "wall+occluder") return SceneKind::WallOccluder;
    if (name == "room-corner") return SceneKind::RoomCorner;
    if (name == "random-quads") return SceneKind::RandomQuads;
    throw std::invalid_argument("unknown scene kind: " + name);
}

std::string scene_kind_name(SceneKind kind) {
    switch (kind) {
        case SceneKind::Wall: return "wall";
        case SceneKind::WallOccluder: return "wall+occluder";
        case SceneKind::RoomCorner: return "room-corner";
        case SceneKind::RandomQuads: return "random-quads";
    }
    return "unknown";
}

double texture_value(uint32_t texture_id, uint64_t texture_seed, double u, double v,
                     int channel) {
    // base tone per channel
    const double base = 0.25 + 0.5 * lattice_value(texture_seed, 101, 7, channel);
    double value = base;
    // two value-noise octaves: mid frequencies so parallax pins depth at
    // every patch, but nothing a desk-scale splat fit cannot resolve
    value += 0.32 * (value_noise(texture_seed, u * 4.0, v * 4.0, channel) - 0.5);
    value += 0.12 * (value_noise(texture_seed ^ 0xabcdef12345ULL, u * 9.0, v * 9.0, channel) - 0.5);
    // stripes, orientation by texture id
    const double phase = (texture_id % 2 == 0) ? u : v;
    const double freq = 3.0 + static_cast<double>(texture_id % 4) * 1.5;
    value += 0.14 * std::sin(2.0 * M_PI * freq * phase + 0.7 * static_cast<double>(channel));
    return std::min(1.0, std::max(0.0, value));
}

QuadScene gen_scene(SceneKind kind, uint64_t seed, int random_quad_count) {
    switch (kind) {
        case SceneKind::Wall: {
            Rng rng(hash_mix(seed ^ 0x77a11ULL));
            return make_wall(seed, rng);
        }
        case SceneKind::WallOccluder: {
            // retry derived sub-seeds until the occlusion guarantee holds
            for (int attempt = 0; attempt < 64; ++attempt) {
                Rng rng(hash_mix(seed ^ 0x0cc1ULL) + static_cast<uint64_t>(attempt) * 0x9e37ULL);
                QuadScene scene = make_wall(seed, rng);
                scene.kind = "wall+occluder";
                add_occluder(scene, rng);
                TrajectoryConfig probe;
                probe.camera_count = 3;
                probe.width = probe.height = 48;
                auto cams = make_trajectory(scene, probe);
                const double frac = occluded_fraction(scene, cams.front());
                if (frac >= 0.10 && frac <= 0.40) return scene;
            }
            throw std::runtime_error("wall+occluder generation failed to satisfy occlusion bounds");
        }
        case SceneKind::RoomCorner: {
            Rng rng(hash_mix(seed ^ 0xc0284ULL));
            QuadScene scene;
            scene.kind = "room-corner";
            scene.seed = seed;
            const double d = rng.uniform(2.2, 2.8);
            const double half = rng.uniform(2.2, 2.8);
            Quad back; // frontal wall
            back.corner = Eigen::Vector3d(-half, -half, d);
            back.edge_u = Eigen::Vector3d(2 * half, 0, 0);
            back.edge_v = Eigen::Vector3d(0, 2 * half, 0);
            Quad side; // receding side wall
            side.corner = Eigen::Vector3d(-half, -half, d);
            side.edge_u = Eigen::Vector3d(0, 0, -1.6);
            side.edge_v = Eigen::Vector3d(0, 2 * half, 0);
            Quad floor_q; // receding floor
            floor_q.corner = Eigen::Vector3d(-half, half, d);
            floor_q.edge_u = Eigen::Vector3d(2 * half, 0, 0);
            floor_q.edge_v = Eigen::Vector3d(0, 0, -1.6);
            for (Quad* q : {&back, &side, &floor_q}) {
                q->texture_id = static_cast<uint32_t>(rng.uniform_index(4));
                q->texture_seed = rng.next_u64();
                scene.quads.push_back(*q);
            }
            scene.extent = 2 * half;
            return scene;
        }
        case SceneKind::RandomQuads: {
            if (random_quad_count <= 0) throw std::invalid_argument("random-quads needs at least 1 quad");
            Rng rng(hash_mix(seed ^ 0x4a4dULL));
            QuadScene scene = make_wall(seed, rng); // backdrop keeps the frame filled
            scene.kind = "random-quads";
            for (int i = 0; i < random_quad_count; ++i) {
                Quad q;
                const double z = rng.uniform(1.2, 2.0);
                q.corner = Eigen::Vector3d(rng.uniform(-1.0, 0.6), rng.uniform(-1.0, 0.6), z);
                q.edge_u = Eigen::Vector3d(rng.uniform(0.3, 0.8), rng.uniform(-0.15, 0.15),
                                           rng.uniform(-0.1, 0.1));
                q.edge_v = Eigen::Vector3d(rng.uniform(-0.15, 0.15), rng.uniform(0.3, 0.8),
                                           rng.uniform(-0.1, 0.1));
                q.texture_id = static_cast<uint32_t>(rng.uniform_index(4));
                q.texture_seed = rng.next_u64();
                scene.quads.push_back(q);
            }
            return scene;
        }
    }
    throw std::invalid_argument("unknown scene kind");
}

std::vector<Camera> make_trajectory(const QuadScene& scene, const TrajectoryConfig& cfg) {
    if (cfg.camera_count < 1) throw std::invalid_argument("need at least 1 camera");
    const Eigen::Vector3d center = scene_center(scene);
    std::vector<Camera> cams;
    cams.reserve(cfg.camera_count);
    for (int i = 0; i < cfg.camera_count; ++i) {
        const double s = cfg.camera_count == 1
                             ? 0.0
                             : static_cast<double>(i) / (cfg.camera_count - 1) - 0.5;
        const Eigen::Vector3d pos(s * cfg.baseline_span, 0.12 * std::sin(s * M_PI), 0.0);
        // look-at point swings slightly so the sweep is an orbit, not pure strafe
        const double yaw = s * cfg.orbit_degrees * M_PI / 180.0;
        const Eigen::Vector3d target =
            center + Eigen::Vector3d(std::tan(yaw) * (center.z() - pos.z()), 0, 0);
        Camera cam = look_at_camera(pos, target, cfg.width, cfg.height, cfg.focal_scale);
        if (hit_coverage(scene, cam) < 0.5)
            throw std::runtime_error("trajectory camera sees less than half the scene");
        cams.push_back(cam);
    }
    return cams;
}

RayHit raycast(const QuadScene& scene, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
    RayHit best;
    for (size_t qi = 0; qi < scene.quads.size(); ++qi) {
        const Quad& q = scene.quads[qi];
        const Eigen::Vector3d n = q.edge_u.cross(q.edge_v);
        const double denom = n.dot(dir);
        if (std::abs(denom) < 1e-14) continue; // parallel
        const double t = n.dot(q.corner - origin) / denom;
        if (t <= 1e-9) continue;
        const Eigen::Vector3d p = origin + t * dir - q.corner;
        // decompose p = a*edge_u + b*edge_v on the quad plane
        const double uu = q.edge_u.squaredNorm();
        const double vv = q.edge_v.squaredNorm();
        const double uv = q.edge_u.dot(q.edge_v);
        const double pu = p.dot(q.edge_u);
        const double pv = p.dot(q.edge_v);
        const double det = uu * vv - uv * uv;
        if (std::abs(det) < 1e-14) continue; // degenerate quad
        const double a = (pu * vv - pv * uv) / det;
        const double b = (pv * uu - pu * uv) / det;
        if (a < 0.0 || a > 1.0 || b < 0.0 || b > 1.0) continue;
        if (!best.hit || t < best.t) {
            best.hit = true;
            best.t = t;
            best.quad = static_cast<int>(qi);
            best.qu = a;
            best.qv = b;
        }
    }
    return best;
}

std::pair<FloatImage, FloatImage> raycast_render(const QuadScene& scene, const Camera& cam) {
    FloatImage color(cam.height, cam.width, 3, ImageSemantics::Color);
    FloatImage depth(cam.height, cam.width, 1, ImageSemantics::Depth);
    const RigidTransform cam_to_world = cam.pose.inverse();
    const Eigen::Vector3d origin = cam_to_world.translation;
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const Eigen::Vector3d dir_cam((x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy,
                                          1.0);
            const Eigen::Vector3d dir = (cam_to_world.rotation * dir_cam).normalized();
            const RayHit hit = raycast(scene, origin, dir);
            if (!hit.hit) {
                depth.at(y, x) = 0.0f;
                continue;
            }
            const Eigen::Vector3d p = origin + hit.t * dir;
            depth.at(y, x) = static_cast<float>(cam.pose.apply(p).z());
            const Quad& q = scene.quads[hit.quad];
            for (int ch = 0; ch < 3; ++ch)
                color.at(y, x, ch) =
                    static_cast<float>(texture_value(q.texture_id, q.texture_seed, hit.qu, hit.qv, ch));
        }
    }
    return {std::move(color), std::move(depth)};
}

FloatImage oracle_visibility(const QuadScene& scene, const Camera& cam_input,
                             const Camera& cam_target) {
    FloatImage mask(cam_target.height, cam_target.width, 1, ImageSemantics::Mask);
    const RigidTransform target_to_world = cam_target.pose.inverse();
    const Eigen::Vector3d target_origin = target_to_world.translation;
    const RigidTransform input_to_world = cam_input.pose.inverse();
    const Eigen::Vector3d input_origin = input_to_world.translation;
    for (int y = 0; y < cam_target.height; ++y) {
        for (int x = 0; x < cam_target.width; ++x) {
            const Eigen::Vector3d dir_cam((x + 0.5 - cam_target.cx) / cam_target.fx,
                                          (y + 0.5 - cam_target.cy) / cam_target.fy, 1.0);
            const Eigen::Vector3d dir = (target_to_world.rotation * dir_cam).normalized();
            const RayHit hit = raycast(scene, target_origin, dir);
            if (!hit.hit) continue;
            const Eigen::Vector3d p = target_origin + hit.t * dir;
            const PixelProjection proj = project_point(cam_input, p);
            if (!proj.valid || proj.z <= kNearPlane) continue;
            if (proj.u < 0.0 || proj.u >= cam_input.width || proj.v < 0.0 ||
                proj.v >= cam_input.height)
                continue;
            const Eigen::Vector3d to_p = p - input_origin;
            const double dist = to_p.norm();
            if (dist < 1e-12) continue;
            const RayHit input_hit = raycast(scene, input_origin, to_p / dist);
            if (input_hit.hit && input_hit.t < dist - 1e-4) continue; // something closer blocks
            mask.at(y, x) = 1.0f;
        }
    }
    return mask;
}

double occluded_fraction(const QuadScene& scene, const Camera& cam, int wall_quad) {
    const Quad& wall = scene.quads.at(wall_quad);
    const RigidTransform cam_to_world = cam.pose.inverse();
    const Eigen::Vector3d origin = cam_to_world.translation;
    const int n = 96;
    int total = 0, hidden = 0;
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const double a = (i + 0.5) / n, b = (j + 0.5) / n;
            const Eigen::Vector3d p = wall.corner + a * wall.edge_u + b * wall.edge_v;
            const PixelProjection proj = project_point(cam, p);
            if (!proj.valid || proj.z <= kNearPlane) continue;
            if (proj.u < 0 || proj.u >= cam.width || proj.v < 0 || proj.v >= cam.height) continue;
            ++total;
            const Eigen::Vector3d to_p = p - origin;
            const double dist = to_p.norm();
            const RayHit hit = raycast(scene, origin, to_p / dist);
            if (hit.hit && hit.quad != wall_quad && hit.t < dist - 1e-6) ++hidden;
        }
    }
    return total > 0 ? static_cast<double>(hidden) / total : 0.0;
}

double hit_coverage(const QuadScene& scene, const Camera& cam) {
    const RigidTransform cam_to_world = cam.pose.inverse();
    const Eigen::Vector3d origin = cam_to_world.translation;
    int hits = 0;
    const int step = 2; // subsample for speed; coverage is a coarse gate
    int total = 0;
    for (int y = 0; y < cam.height; y += step) {
        for (int x = 0; x < cam.width; x += step) {
            ++total;
            const Eigen::Vector3d dir_cam((x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy,
                                          1.0);
            const Eigen::Vector3d dir = (cam_to_world.rotation * dir_cam).normalized();
            if (raycast(scene, origin, dir).hit) ++hits;
        }
    }
    return total > 0 ? static_cast<double>(hits) / total : 0.0;
}

} // namespace splatlift
