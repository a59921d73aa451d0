// SPDX-License-Identifier: Apache-2.0
#include "splatlift/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace splatlift {

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quaternion Quaternion::normalized() const {
    const double n = norm();
    if (n < 1e-12) throw std::invalid_argument("degenerate quaternion");
    return {w / n, x / n, y / n, z / n};
}

RigidTransform RigidTransform::inverse() const {
    RigidTransform inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
}

RigidTransform RigidTransform::compose(const RigidTransform& inner) const {
    RigidTransform out;
    out.rotation = rotation * inner.rotation;
    out.translation = rotation * inner.translation + translation;
    return out;
}

bool RigidTransform::is_valid(double tol) const {
    const Eigen::Matrix3d should_be_identity = rotation.transpose() * rotation;
    if ((should_be_identity - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) return false;
    return rotation.determinant() > 0.0;
}

void Camera::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("focal lengths must be positive");
    if (width <= 0 || height <= 0) throw std::invalid_argument("image size must be positive");
    if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
        throw std::invalid_argument("principal point outside image");
    if (!pose.is_valid()) throw std::invalid_argument("pose rotation is not orthonormal");
}

Eigen::Matrix3d quat_to_rotmat(const Quaternion& q_raw) {
    const Quaternion q = q_raw.normalized();
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
         2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
         2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y);
    return r;
}

Eigen::Matrix3d build_covariance(const Quaternion& q, const Eigen::Vector3d& scales) {
    if (!(scales.x() > 0.0 && scales.y() > 0.0 && scales.z() > 0.0))
        throw std::invalid_argument("invalid scale");
    const Eigen::Matrix3d r = quat_to_rotmat(q);
    const Eigen::Matrix3d a = r * scales.asDiagonal();
    return a * a.transpose();
}

PixelProjection project_point(const Camera& cam, const Eigen::Vector3d& world_point) {
    const Eigen::Vector3d p = cam.pose.apply(world_point);
    PixelProjection out;
    out.z = p.z();
    if (std::abs(p.z()) < 1e-8) {
        out.valid = false;
        out.u = 0.0;
        out.v = 0.0;
        return out;
    }
    out.u = cam.fx * p.x() / p.z() + cam.cx;
    out.v = cam.fy * p.y() / p.z() + cam.cy;
    return out;
}

Eigen::Vector3d unproject_pixel(const Camera& cam, double u, double v, double depth) {
    if (!(depth > 0.0)) throw std::invalid_argument("non-positive depth");
    const Eigen::Vector3d p_cam((u - cam.cx) / cam.fx * depth, (v - cam.cy) / cam.fy * depth, depth);
    return cam.pose.inverse().apply(p_cam);
}

ProjectedCovariance project_covariance(const Camera& cam, const Eigen::Vector3d& mu,
                                       const Eigen::Matrix3d& sigma) {
    ProjectedCovariance out;
    const Eigen::Vector3d p = cam.pose.apply(mu);
    if (p.z() <= kNearPlane) {
        out.culled = true;
        return out;
    }
    const double iz = 1.0 / p.z();
    Eigen::Matrix<double, 2, 3> jac;
    jac << cam.fx * iz, 0.0, -cam.fx * p.x() * iz * iz,
           0.0, cam.fy * iz, -cam.fy * p.y() * iz * iz;
    const Eigen::Matrix<double, 2, 3> m = jac * cam.pose.rotation;
    out.sigma = m * sigma * m.transpose();
    const double off = 0.5 * (out.sigma(0, 1) + out.sigma(1, 0));
    out.sigma(0, 1) = off;
    out.sigma(1, 0) = off;
    out.sigma(0, 0) += kCovarianceFloor;
    out.sigma(1, 1) += kCovarianceFloor;
    return out;
}

Eigen::Vector4d rotmat_grad_to_quat(const Quaternion& q_raw, const Eigen::Matrix3d& g) {
    const Quaternion q = q_raw.normalized();
    const double w = q.w, x = q.x, y = q.y, z = q.z;

    // dR/d(unit q) applied to the upstream matrix gradient, entry by entry.
    Eigen::Vector4d du; // gradient wrt the unit quaternion (w,x,y,z)
    du[0] = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    du[1] = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) +
                   z * g(2, 0) + w * g(2, 1) - 2 * x * g(2, 2));
    du[2] = 2.0 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
                   w * g(2, 0) + z * g(2, 1) - 2 * y * g(2, 2));
    du[3] = 2.0 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) +
                   y * g(1, 2) + x * g(2, 0) + y * g(2, 1));

    // chain through u = q_raw / |q_raw|:  du/dq_raw = (I - u u^T) / |q_raw|
    const double n = q_raw.norm();
    const Eigen::Vector4d u(w, x, y, z);
    return (du - u * u.dot(du)) / n;
}

} // namespace splatlift
