// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace splatlift {

// Convention used throughout: column vectors, world-to-camera x_c = R*x_w + t,
// camera looks along +z, y down, x right. Pixel (px,py) samples the point
// (px + 0.5, py + 0.5).
inline constexpr double kNearPlane = 0.01;       // world units
inline constexpr double kCovarianceFloor = 0.3;  // px^2 added to sigma' diagonal

struct Quaternion {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    Quaternion() = default;
    Quaternion(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}

    double norm() const;
    Quaternion normalized() const; // throws on zero norm
};

struct RigidTransform {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
    RigidTransform inverse() const;
    RigidTransform compose(const RigidTransform& inner) const; // this ∘ inner
    bool is_valid(double tol = 1e-6) const;                    // R^T R = I, det = +1
};

struct Camera {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;
    RigidTransform pose; // world-to-camera

    void validate() const; // throws on violated invariants
};

struct PixelProjection {
    double u = 0, v = 0;
    double z = 0;       // camera-frame depth, returned even when <= 0
    bool valid = true;  // false when |z| < 1e-8 ("at camera plane")
};

struct ProjectedCovariance {
    Eigen::Matrix2d sigma = Eigen::Matrix2d::Zero();
    bool culled = false; // center behind the near plane
};

// q -> orthonormal rotation matrix, det +1. Normalizes internally; throws
// std::invalid_argument("degenerate quaternion") on (near-)zero norm.
Eigen::Matrix3d quat_to_rotmat(const Quaternion& q);

// Sigma = R diag(s^2) R^T. Throws std::invalid_argument("invalid scale")
// unless all scales are positive.
Eigen::Matrix3d build_covariance(const Quaternion& q, const Eigen::Vector3d& scales);

PixelProjection project_point(const Camera& cam, const Eigen::Vector3d& world_point);

// Inverse of project_point. Throws std::invalid_argument("non-positive depth")
// when depth <= 0.
Eigen::Vector3d unproject_pixel(const Camera& cam, double u, double v, double depth);

// Sigma' = J W Sigma W^T J^T + floor*I, J the 2x3 perspective Jacobian at the
// camera-frame center. Culled (sigma untouched) behind the near plane.
ProjectedCovariance project_covariance(const Camera& cam, const Eigen::Vector3d& mu,
                                       const Eigen::Matrix3d& sigma);

// d(vec R)/d(q) for R = quat_to_rotmat(q), including the internal
// normalization: rotmat_grad_to_quat maps dL/dR to dL/dq for the raw
// (not necessarily unit) quaternion. Used by the renderer backward pass.
Eigen::Vector4d rotmat_grad_to_quat(const Quaternion& q_raw, const Eigen::Matrix3d& dL_dR);

} // namespace splatlift
