// SPDX-License-Identifier: Apache-2.0
#include "splatlift/splat_render.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace splatlift {

namespace {

constexpr double kSH1 = 0.4886025119029199; // sqrt(3/(4 pi))

struct PreparedSplat {
    double u = 0, v = 0, z = 0;
    double sa = 0, sb = 0, sc = 0; // sigma' = [[sa, sb], [sb, sc]]
    double qa = 0, qb = 0, qc = 0; // inverse of sigma'
    double color[3] = {0, 0, 0};
    double opacity = 0;
    int x0 = 0, x1 = 0, y0 = 0, y1 = 0; // pixel bbox, half-open
    bool culled = true;
    // cached geometry for the backward chain
    Eigen::Vector3d p_cam = Eigen::Vector3d::Zero();
    Eigen::Vector3d view_dir = Eigen::Vector3d::Zero(); // unit, sh_degree 1 only
    double view_dist = 0;
};

struct Contribution {
    int splat;      // index into prepared/scene
    double alpha;   // opacity * g
    double g;
    double t_before;
    double dx, dy;  // pixel sample minus projected center
};

void eval_color(const Gaussian3D& gs, int sh_degree, const Eigen::Vector3d& dir,
                double out[3]) {
    out[0] = gs.color[0];
    out[1] = gs.color[1];
    out[2] = gs.color[2];
    if (sh_degree >= 1) {
        const double bx = -kSH1 * dir.y(), by = kSH1 * dir.z(), bz = -kSH1 * dir.x();
        for (int ch = 0; ch < 3; ++ch)
            out[ch] += bx * gs.color[3 + ch] + by * gs.color[6 + ch] + bz * gs.color[9 + ch];
    }
}

std::vector<PreparedSplat> prepare(const GaussianScene& scene, const Camera& cam) {
    const Eigen::Vector3d cam_center = cam.pose.inverse().translation;
    std::vector<PreparedSplat> out(scene.size());
    for (size_t i = 0; i < scene.size(); ++i) {
        const Gaussian3D& gs = scene.gaussians[i];
        PreparedSplat& ps = out[i];
        ps.p_cam = cam.pose.apply(gs.mu);
        if (ps.p_cam.z() <= kNearPlane) continue; // stays culled
        ps.z = ps.p_cam.z();
        const double iz = 1.0 / ps.z;
        ps.u = cam.fx * ps.p_cam.x() * iz + cam.cx;
        ps.v = cam.fy * ps.p_cam.y() * iz + cam.cy;

        const Eigen::Matrix3d sigma3 = build_covariance(gs.rot, gs.scales);
        Eigen::Matrix<double, 2, 3> jac;
        jac << cam.fx * iz, 0.0, -cam.fx * ps.p_cam.x() * iz * iz,
               0.0, cam.fy * iz, -cam.fy * ps.p_cam.y() * iz * iz;
        const Eigen::Matrix<double, 2, 3> m = jac * cam.pose.rotation;
        const Eigen::Matrix2d sig2 = m * sigma3 * m.transpose();
        ps.sa = sig2(0, 0) + kCovarianceFloor;
        ps.sb = sig2(0, 1);
        ps.sc = sig2(1, 1) + kCovarianceFloor;
        const double det = ps.sa * ps.sc - ps.sb * ps.sb;
        ps.qa = ps.sc / det;
        ps.qb = -ps.sb / det;
        ps.qc = ps.sa / det;

        if (scene.sh_degree >= 1) {
            const Eigen::Vector3d d = gs.mu - cam_center;
            ps.view_dist = d.norm();
            ps.view_dir = ps.view_dist > 0 ? (d / ps.view_dist).eval() : Eigen::Vector3d::UnitZ();
        }
        eval_color(gs, scene.sh_degree, ps.view_dir, ps.color);
        ps.opacity = gs.opacity;
        ps.culled = false;
    }
    return out;
}

// Bounding box of pixels whose sample point can satisfy the 3-sigma cutoff.
// Loose by design; the Mahalanobis test decides membership.
void fill_bbox(PreparedSplat& ps, int width, int height, double cutoff) {
    const double rx = cutoff * std::sqrt(ps.sa) + 1e-9;
    const double ry = cutoff * std::sqrt(ps.sc) + 1e-9;
    ps.x0 = std::max(0, static_cast<int>(std::floor(ps.u - rx - 0.5)));
    ps.x1 = std::min(width, static_cast<int>(std::ceil(ps.u + rx - 0.5)) + 1);
    ps.y0 = std::max(0, static_cast<int>(std::floor(ps.v - ry - 0.5)));
    ps.y1 = std::min(height, static_cast<int>(std::ceil(ps.v + ry - 0.5)) + 1);
    if (ps.x1 <= ps.x0 || ps.y1 <= ps.y0) ps.culled = true;
}

// CSR pixel -> contributing splat candidates, each pixel's list sorted by
// (depth, splat index). Candidate membership still requires the Mahalanobis
// test at composite time.
struct PixelBins {
    std::vector<uint32_t> offsets; // H*W + 1
    std::vector<uint32_t> entries; // splat indices
};

PixelBins bin_splats(std::vector<PreparedSplat>& prepared, int width, int height,
                     double cutoff) {
    PixelBins bins;
    const size_t n_px = static_cast<size_t>(width) * height;
    bins.offsets.assign(n_px + 1, 0);
    for (auto& ps : prepared) {
        if (ps.culled) continue;
        fill_bbox(ps, width, height, cutoff);
        if (ps.culled) continue;
        for (int y = ps.y0; y < ps.y1; ++y)
            for (int x = ps.x0; x < ps.x1; ++x)
                bins.offsets[static_cast<size_t>(y) * width + x + 1]++;
    }
    for (size_t i = 1; i <= n_px; ++i) bins.offsets[i] += bins.offsets[i - 1];
    bins.entries.resize(bins.offsets[n_px]);
    std::vector<uint32_t> cursor(bins.offsets.begin(), bins.offsets.end() - 1);
    for (uint32_t s = 0; s < prepared.size(); ++s) {
        const PreparedSplat& ps = prepared[s];
        if (ps.culled) continue;
        for (int y = ps.y0; y < ps.y1; ++y)
            for (int x = ps.x0; x < ps.x1; ++x)
                bins.entries[cursor[static_cast<size_t>(y) * width + x]++] = s;
    }
    for (size_t p = 0; p < n_px; ++p) {
        auto begin = bins.entries.begin() + bins.offsets[p];
        auto end = bins.entries.begin() + bins.offsets[p + 1];
        std::sort(begin, end, [&](uint32_t a, uint32_t b) {
            if (prepared[a].z != prepared[b].z) return prepared[a].z < prepared[b].z;
            return a < b;
        });
    }
    return bins;
}

// Walks one pixel front to back, recording contributions when `record` is set.
// Returns final transmittance.
double composite_pixel(const std::vector<PreparedSplat>& prepared, const PixelBins& bins,
                       int width, int y, int x, const RenderOptions& opts, double color[3],
                       double& depth_acc, double& median_z, int& count,
                       std::vector<Contribution>* record) {
    const double px = x + 0.5, py = y + 0.5;
    const double cutoff2 = opts.mahalanobis_cutoff * opts.mahalanobis_cutoff;
    const size_t p = static_cast<size_t>(y) * width + x;
    double t = 1.0;
    color[0] = color[1] = color[2] = 0.0;
    depth_acc = 0.0;
    median_z = 0.0;
    count = 0;
    for (uint32_t e = bins.offsets[p]; e < bins.offsets[p + 1]; ++e) {
        const PreparedSplat& ps = prepared[bins.entries[e]];
        const double dx = px - ps.u, dy = py - ps.v;
        const double d2 = ps.qa * dx * dx + 2.0 * ps.qb * dx * dy + ps.qc * dy * dy;
        if (d2 > cutoff2) continue;
        const double g = std::exp(-0.5 * d2);
        const double alpha = ps.opacity * g;
        const double w = alpha * t;
        color[0] += w * ps.color[0];
        color[1] += w * ps.color[1];
        color[2] += w * ps.color[2];
        depth_acc += w * ps.z;
        ++count;
        if (record) record->push_back({static_cast<int>(bins.entries[e]), alpha, g, t, dx, dy});
        t *= (1.0 - alpha);
        if (median_z == 0.0 && t < 0.5) median_z = ps.z; // opacity crossed 1/2 here
        if (opts.min_transmittance > 0.0 && t < opts.min_transmittance) break;
    }
    return t;
}

// per-splat accumulators gathered over pixels before the per-splat chain
struct SplatAccum {
    double d_color[3] = {0, 0, 0};
    double d_opacity = 0;
    double d_u = 0, d_v = 0;       // wrt projected center (px)
    double d_qa = 0, d_qb = 0, d_qc = 0; // wrt inverse covariance (qb tied)
};

} // namespace

void SceneGradients::resize(size_t n) {
    d_mu.assign(n, Eigen::Vector3d::Zero());
    d_opacity.assign(n, 0.0);
    d_rot.assign(n, Eigen::Vector4d::Zero());
    d_scales.assign(n, Eigen::Vector3d::Zero());
    d_color.assign(n, std::array<double, 12>{});
    d_center_px.assign(n, Eigen::Vector2d::Zero());
    visible.assign(n, 0);
}

bool SceneGradients::all_finite() const {
    auto ok = [](double v) { return std::isfinite(v); };
    for (size_t i = 0; i < d_mu.size(); ++i) {
        if (!d_mu[i].allFinite() || !ok(d_opacity[i]) || !d_rot[i].allFinite() ||
            !d_scales[i].allFinite() || !d_center_px[i].allFinite())
            return false;
        for (double v : d_color[i])
            if (!ok(v)) return false;
    }
    return true;
}

double eval_gaussian_2d(const Eigen::Matrix2d& sigma2d, const Eigen::Vector2d& dx) {
    const double det = sigma2d(0, 0) * sigma2d(1, 1) - sigma2d(0, 1) * sigma2d(1, 0);
    const double qa = sigma2d(1, 1) / det;
    const double qb = -sigma2d(0, 1) / det;
    const double qc = sigma2d(0, 0) / det;
    const double d2 = qa * dx.x() * dx.x() + 2.0 * qb * dx.x() * dx.y() + qc * dx.y() * dx.y();
    return std::exp(-0.5 * d2);
}

RenderOutput render(const GaussianScene& scene, const Camera& cam, const RenderOptions& opts) {
    if (scene.gaussians.empty()) throw std::invalid_argument("empty scene");
    cam.validate();
    auto prepared = prepare(scene, cam);
    const PixelBins bins = bin_splats(prepared, cam.width, cam.height, opts.mahalanobis_cutoff);

    RenderOutput out;
    out.color = FloatImage(cam.height, cam.width, 3, ImageSemantics::Color);
    out.mean_depth = FloatImage(cam.height, cam.width, 1, ImageSemantics::Depth);
    out.accum_alpha = FloatImage(cam.height, cam.width, 1, ImageSemantics::Alpha);
    out.contributor_count = Image<int>(cam.height, cam.width, 1, ImageSemantics::Mask);
    out.color_fp64 = ImageD(cam.height, cam.width, 3, ImageSemantics::Color);

    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            double color[3], depth_acc, median_z;
            int count;
            const double t = composite_pixel(prepared, bins, cam.width, y, x, opts, color,
                                             depth_acc, median_z, count, nullptr);
            const double accum = 1.0 - t;
            for (int ch = 0; ch < 3; ++ch) {
                out.color_fp64.at(y, x, ch) = color[ch];
                out.color.at(y, x, ch) = static_cast<float>(color[ch]);
            }
            out.accum_alpha.at(y, x) = static_cast<float>(accum);
            out.contributor_count.at(y, x) = count;
            double depth = 0.0;
            if (accum >= opts.min_alpha_for_depth) {
                depth = depth_acc / accum;
                if (opts.median_depth && median_z > 0.0) depth = median_z;
            }
            out.mean_depth.at(y, x) = static_cast<float>(depth);
        }
    }
    return out;
}

double render_loss(const GaussianScene& scene, const Camera& cam, const ImageD& upstream,
                   const RenderOptions& opts) {
    if (scene.gaussians.empty()) throw std::invalid_argument("empty scene");
    if (upstream.height() != cam.height || upstream.width() != cam.width || upstream.channels() != 3)
        throw std::invalid_argument("mismatched image dimensions");
    auto prepared = prepare(scene, cam);
    const PixelBins bins = bin_splats(prepared, cam.width, cam.height, opts.mahalanobis_cutoff);
    double loss = 0.0;
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            double color[3], depth_acc, median_z;
            int count;
            composite_pixel(prepared, bins, cam.width, y, x, opts, color, depth_acc, median_z,
                            count, nullptr);
            loss += upstream.at(y, x, 0) * color[0] + upstream.at(y, x, 1) * color[1] +
                    upstream.at(y, x, 2) * color[2];
        }
    }
    return loss;
}

SceneGradients render_backward(const GaussianScene& scene, const Camera& cam,
                               const ImageD& upstream, const RenderOptions& opts) {
    if (scene.gaussians.empty()) throw std::invalid_argument("empty scene");
    if (upstream.height() != cam.height || upstream.width() != cam.width || upstream.channels() != 3)
        throw std::invalid_argument("mismatched image dimensions");
    cam.validate();
    auto prepared = prepare(scene, cam);
    const PixelBins bins = bin_splats(prepared, cam.width, cam.height, opts.mahalanobis_cutoff);

    std::vector<SplatAccum> accum(scene.size());
    std::vector<Contribution> contribs;
    contribs.reserve(256);

    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            contribs.clear();
            double color[3], depth_acc, median_z;
            int count;
            composite_pixel(prepared, bins, cam.width, y, x, opts, color, depth_acc, median_z,
                            count, &contribs);
            if (contribs.empty()) continue;
            const double up[3] = {upstream.at(y, x, 0), upstream.at(y, x, 1),
                                  upstream.at(y, x, 2)};
            // back-to-front: b[ch] composites everything behind contributor i
            double b[3] = {0, 0, 0};
            for (size_t k = contribs.size(); k-- > 0;) {
                const Contribution& cb = contribs[k];
                const PreparedSplat& ps = prepared[cb.splat];
                SplatAccum& acc = accum[cb.splat];

                const double w = cb.alpha * cb.t_before;
                double s_alpha = 0.0;
                for (int ch = 0; ch < 3; ++ch) {
                    acc.d_color[ch] += up[ch] * w;
                    s_alpha += up[ch] * cb.t_before * (ps.color[ch] - b[ch]);
                }
                acc.d_opacity += s_alpha * cb.g;
                const double d_g = s_alpha * ps.opacity;

                // g = exp(-1/2 dx^T Q dx)
                const double gdx = cb.g * (ps.qa * cb.dx + ps.qb * cb.dy);
                const double gdy = cb.g * (ps.qb * cb.dx + ps.qc * cb.dy);
                acc.d_u += d_g * gdx; // dx = pixel - center, so d/du = +g Q dx
                acc.d_v += d_g * gdy;
                const double hq = -0.5 * d_g * cb.g;
                acc.d_qa += hq * cb.dx * cb.dx;
                acc.d_qb += hq * 2.0 * cb.dx * cb.dy;
                acc.d_qc += hq * cb.dy * cb.dy;

                for (int ch = 0; ch < 3; ++ch)
                    b[ch] = cb.alpha * ps.color[ch] + (1.0 - cb.alpha) * b[ch];
            }
        }
    }

    SceneGradients grads;
    grads.resize(scene.size());
    for (size_t i = 0; i < scene.size(); ++i) {
        const PreparedSplat& ps = prepared[i];
        if (ps.culled) continue;
        grads.visible[i] = 1;
        const SplatAccum& acc = accum[i];
        const Gaussian3D& gs = scene.gaussians[i];

        grads.d_opacity[i] = acc.d_opacity;
        grads.d_center_px[i] = Eigen::Vector2d(acc.d_u, acc.d_v);

        // color: DC straight through, degree-1 through the basis weights
        for (int ch = 0; ch < 3; ++ch) grads.d_color[i][ch] = acc.d_color[ch];
        Eigen::Vector3d d_mu_sh = Eigen::Vector3d::Zero();
        if (scene.sh_degree >= 1) {
            const Eigen::Vector3d& d = ps.view_dir;
            const double bx = -kSH1 * d.y(), by = kSH1 * d.z(), bz = -kSH1 * d.x();
            Eigen::Vector3d d_dir = Eigen::Vector3d::Zero();
            for (int ch = 0; ch < 3; ++ch) {
                grads.d_color[i][3 + ch] = acc.d_color[ch] * bx;
                grads.d_color[i][6 + ch] = acc.d_color[ch] * by;
                grads.d_color[i][9 + ch] = acc.d_color[ch] * bz;
                // dir dependence of the evaluated color
                d_dir.x() += acc.d_color[ch] * (-kSH1 * gs.color[9 + ch]);
                d_dir.y() += acc.d_color[ch] * (-kSH1 * gs.color[3 + ch]);
                d_dir.z() += acc.d_color[ch] * (kSH1 * gs.color[6 + ch]);
            }
            if (ps.view_dist > 0)
                d_mu_sh = (d_dir - d * d.dot(d_dir)) / ps.view_dist;
        }

        // Q = inv(sigma'), explicit 2x2 partials (qb, sb tied off-diagonals)
        const double det = ps.sa * ps.sc - ps.sb * ps.sb;
        const double idet2 = 1.0 / (det * det);
        const double d_sa =
            (acc.d_qa * (-ps.sc * ps.sc) + acc.d_qb * (ps.sb * ps.sc) + acc.d_qc * (-ps.sb * ps.sb)) *
            idet2;
        const double d_sb = (acc.d_qa * (2.0 * ps.sb * ps.sc) + acc.d_qb * (-det - 2.0 * ps.sb * ps.sb) +
                             acc.d_qc * (2.0 * ps.sb * ps.sa)) *
                            idet2;
        const double d_sc =
            (acc.d_qa * (-ps.sb * ps.sb) + acc.d_qb * (ps.sb * ps.sa) + acc.d_qc * (-ps.sa * ps.sa)) *
            idet2;

        // sigma' = M Sigma M^T + floor, M = J R
        Eigen::Matrix2d g2;
        g2 << d_sa, 0.5 * d_sb, 0.5 * d_sb, d_sc;
        const double iz = 1.0 / ps.z;
        Eigen::Matrix<double, 2, 3> jac;
        jac << cam.fx * iz, 0.0, -cam.fx * ps.p_cam.x() * iz * iz,
               0.0, cam.fy * iz, -cam.fy * ps.p_cam.y() * iz * iz;
        const Eigen::Matrix<double, 2, 3> m = jac * cam.pose.rotation;
        const Eigen::Matrix3d sigma3 = build_covariance(gs.rot, gs.scales);
        const Eigen::Matrix3d g3 = m.transpose() * g2 * m;            // dL/dSigma
        const Eigen::Matrix<double, 2, 3> d_m = 2.0 * g2 * m * sigma3; // dL/dM
        const Eigen::Matrix<double, 2, 3> d_jac = d_m * cam.pose.rotation.transpose();

        // Sigma = A A^T, A = R_q diag(s)
        const Eigen::Matrix3d rot = quat_to_rotmat(gs.rot);
        const Eigen::Matrix3d a = rot * gs.scales.asDiagonal();
        const Eigen::Matrix3d d_a = 2.0 * g3 * a;
        const Eigen::Matrix3d d_rot_mat = d_a * gs.scales.asDiagonal();
        grads.d_rot[i] = rotmat_grad_to_quat(gs.rot, d_rot_mat);
        const Eigen::Matrix3d rt_da = rot.transpose() * d_a;
        grads.d_scales[i] = Eigen::Vector3d(rt_da(0, 0), rt_da(1, 1), rt_da(2, 2));

        // center chain: projected (u,v) and the Jacobian both move with p_cam
        Eigen::Vector3d d_pcam(acc.d_u * cam.fx * iz, acc.d_v * cam.fy * iz,
                               -acc.d_u * cam.fx * ps.p_cam.x() * iz * iz -
                                   acc.d_v * cam.fy * ps.p_cam.y() * iz * iz);
        d_pcam.x() += d_jac(0, 2) * (-cam.fx * iz * iz);
        d_pcam.y() += d_jac(1, 2) * (-cam.fy * iz * iz);
        d_pcam.z() += d_jac(0, 0) * (-cam.fx * iz * iz) + d_jac(1, 1) * (-cam.fy * iz * iz) +
                      d_jac(0, 2) * (2.0 * cam.fx * ps.p_cam.x() * iz * iz * iz) +
                      d_jac(1, 2) * (2.0 * cam.fy * ps.p_cam.y() * iz * iz * iz);

        grads.d_mu[i] = cam.pose.rotation.transpose() * d_pcam + d_mu_sh;
    }
    return grads;
}

SceneGradients render_backward(const GaussianScene& scene, const Camera& cam,
                               const FloatImage& upstream, const RenderOptions& opts) {
    return render_backward(scene, cam, upstream.cast<double>(), opts);
}

FloatImage render_depth(const GaussianScene& scene, const Camera& cam,
                        const RenderOptions& opts) {
    return render(scene, cam, opts).mean_depth;
}

} // namespace splatlift
