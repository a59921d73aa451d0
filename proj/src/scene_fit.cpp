// SPDX-License-Identifier: Apache-2.0
#include "splatlift/scene_fit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "splatlift/adam.hpp"
#include "splatlift/metrics.hpp"
#include "splatlift/rng.hpp"

namespace splatlift {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

bool in_frustum(const Camera& cam, const Eigen::Vector3d& p, double near, double far) {
    const PixelProjection proj = project_point(cam, p);
    if (!proj.valid || proj.z < near || proj.z > far) return false;
    return proj.u >= 0.0 && proj.u < cam.width && proj.v >= 0.0 && proj.v < cam.height;
}

struct InitCloud {
    std::vector<Eigen::Vector3d> points;
    double extent = 0;
    double spacing = 0;
};

InitCloud sample_frustum_intersection(const std::vector<FitView>& views, const FitConfig& cfg,
                                      Rng& rng) {
    // AABB of all frustum corners at the near/far sampling depths
    Eigen::Vector3d lo(1e30, 1e30, 1e30), hi(-1e30, -1e30, -1e30);
    for (const auto& view : views) {
        const Camera& cam = view.camera;
        const RigidTransform inv = cam.pose.inverse();
        for (double depth : {cfg.init_near, cfg.init_far})
            for (double u : {0.0, static_cast<double>(cam.width)})
                for (double v : {0.0, static_cast<double>(cam.height)}) {
                    const Eigen::Vector3d corner =
                        inv.apply(Eigen::Vector3d((u - cam.cx) / cam.fx * depth,
                                                  (v - cam.cy) / cam.fy * depth, depth));
                    lo = lo.cwiseMin(corner);
                    hi = hi.cwiseMax(corner);
                }
    }
    InitCloud cloud;
    const int64_t max_attempts = static_cast<int64_t>(cfg.init_point_count) * 20000;
    for (int64_t attempt = 0;
         attempt < max_attempts && static_cast<int>(cloud.points.size()) < cfg.init_point_count;
         ++attempt) {
        const Eigen::Vector3d p(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()),
                                rng.uniform(lo.z(), hi.z()));
        bool inside_all = true;
        for (const auto& view : views)
            if (!in_frustum(view.camera, p, cfg.init_near, cfg.init_far)) {
                inside_all = false;
                break;
            }
        if (inside_all) cloud.points.push_back(p);
    }
    if (static_cast<int>(cloud.points.size()) < cfg.init_point_count)
        throw std::runtime_error("frustum intersection too small for requested init points");

    Eigen::Vector3d plo(1e30, 1e30, 1e30), phi(-1e30, -1e30, -1e30);
    for (const auto& p : cloud.points) {
        plo = plo.cwiseMin(p);
        phi = phi.cwiseMax(p);
    }
    cloud.extent = (phi - plo).norm();
    const double volume = std::max(1e-9, (phi - plo).prod());
    cloud.spacing = std::cbrt(volume / std::max<size_t>(1, cloud.points.size()));
    return cloud;
}

// raw (pre-activation) parameter table
struct FitParams {
    std::vector<double> mu;       // 3N
    std::vector<double> op_raw;   // N, opacity = sigmoid
    std::vector<double> quat;     // 4N
    std::vector<double> log_s;    // 3N, scale = exp
    std::vector<double> color;    // 3N, direct
    AdamState st_mu, st_op, st_quat, st_s, st_color;

    size_t count() const { return op_raw.size(); }

    GaussianScene to_scene(const std::string& id) const {
        GaussianScene scene;
        scene.sh_degree = 0;
        scene.scene_id = id;
        scene.gaussians.resize(count());
        for (size_t i = 0; i < count(); ++i) {
            Gaussian3D& g = scene.gaussians[i];
            g.mu = Eigen::Vector3d(mu[3 * i], mu[3 * i + 1], mu[3 * i + 2]);
            g.opacity = sigmoid(op_raw[i]);
            g.rot = Quaternion(quat[4 * i], quat[4 * i + 1], quat[4 * i + 2], quat[4 * i + 3]);
            g.scales = Eigen::Vector3d(std::exp(log_s[3 * i]), std::exp(log_s[3 * i + 1]),
                                       std::exp(log_s[3 * i + 2]));
            g.color = {color[3 * i], color[3 * i + 1], color[3 * i + 2], 0, 0, 0, 0, 0, 0, 0, 0, 0};
        }
        return scene;
    }

    // rebuild from an edited scene; moments copied per outcome mapping
    void rebuild_from(const GaussianScene& scene, const DensifyOutcome& outcome) {
        const size_t n = scene.size();
        FitParams next;
        next.mu.resize(3 * n);
        next.op_raw.resize(n);
        next.quat.resize(4 * n);
        next.log_s.resize(3 * n);
        next.color.resize(3 * n);
        next.st_mu.resize(3 * n);
        next.st_op.resize(n);
        next.st_quat.resize(4 * n);
        next.st_s.resize(3 * n);
        next.st_color.resize(3 * n);
        next.st_mu.step = st_mu.step;
        next.st_op.step = st_op.step;
        next.st_quat.step = st_quat.step;
        next.st_s.step = st_s.step;
        next.st_color.step = st_color.step;
        for (size_t i = 0; i < n; ++i) {
            const Gaussian3D& g = scene.gaussians[i];
            for (int k = 0; k < 3; ++k) {
                next.mu[3 * i + k] = g.mu[k];
                next.log_s[3 * i + k] = std::log(g.scales[k]);
                next.color[3 * i + k] = g.color[k];
            }
            next.op_raw[i] = logit(std::clamp(g.opacity, 1e-6, 1.0 - 1e-6));
            next.quat[4 * i] = g.rot.w;
            next.quat[4 * i + 1] = g.rot.x;
            next.quat[4 * i + 2] = g.rot.y;
            next.quat[4 * i + 3] = g.rot.z;
            const int src = outcome.source_of[i];
            if (!outcome.fresh[i] && src >= 0) {
                for (int k = 0; k < 3; ++k) {
                    next.st_mu.m[3 * i + k] = st_mu.m[3 * src + k];
                    next.st_mu.v[3 * i + k] = st_mu.v[3 * src + k];
                    next.st_s.m[3 * i + k] = st_s.m[3 * src + k];
                    next.st_s.v[3 * i + k] = st_s.v[3 * src + k];
                    next.st_color.m[3 * i + k] = st_color.m[3 * src + k];
                    next.st_color.v[3 * i + k] = st_color.v[3 * src + k];
                }
                next.st_op.m[i] = st_op.m[src];
                next.st_op.v[i] = st_op.v[src];
                for (int k = 0; k < 4; ++k) {
                    next.st_quat.m[4 * i + k] = st_quat.m[4 * src + k];
                    next.st_quat.v[4 * i + k] = st_quat.v[4 * src + k];
                }
            }
        }
        *this = std::move(next);
    }
};

// photometric loss and its gradient image: w_l2 * mean squared error +
// w_dssim * (1 - ssim(gray))
double photometric_loss(const ImageD& pred, const FloatImage& gt, double w_l2, double w_dssim,
                        ImageD& grad) {
    const int h = pred.height(), w = pred.width();
    grad = ImageD(h, w, 3);
    const double inv_n = 1.0 / (static_cast<double>(h) * w * 3);
    double l2 = 0;
    ImageD pred_gray(h, w, 1), gt_gray(h, w, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double pg = 0, tg = 0;
            for (int c = 0; c < 3; ++c) {
                const double d = pred.at(y, x, c) - gt.at(y, x, c);
                l2 += d * d;
                grad.at(y, x, c) = w_l2 * 2.0 * d * inv_n;
                pg += pred.at(y, x, c);
                tg += gt.at(y, x, c);
            }
            pred_gray.at(y, x) = pg / 3.0;
            gt_gray.at(y, x) = tg / 3.0;
        }
    l2 *= inv_n;
    const SsimGradResult sg = ssim_with_grad(pred_gray, gt_gray);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double g = -w_dssim * sg.grad_a.at(y, x) / 3.0;
            for (int c = 0; c < 3; ++c) grad.at(y, x, c) += g;
        }
    return w_l2 * l2 + w_dssim * (1.0 - sg.value);
}

} // namespace

DensifyOutcome densify_and_prune(GaussianScene& scene, const std::vector<double>& mean_pos_grad,
                                 const FitConfig& cfg, double extent, uint64_t seed) {
    if (mean_pos_grad.size() != scene.size())
        throw std::invalid_argument("gradient accumulator not aligned with scene");
    Rng rng(seed);
    DensifyOutcome outcome;
    std::vector<Gaussian3D> next;
    next.reserve(scene.size() + 64);
    const double dup_threshold = cfg.duplication_scale_threshold * extent;
    const double prune_threshold = cfg.prune_scale_threshold * extent;
    const int room = cfg.max_gaussians - static_cast<int>(scene.size());
    int budget = std::max(0, room);

    for (size_t i = 0; i < scene.size(); ++i) {
        const Gaussian3D& g = scene.gaussians[i];
        const double max_scale = g.scales.maxCoeff();
        if (g.opacity < cfg.opacity_prune_threshold || max_scale > prune_threshold) {
            outcome.pruned++;
            continue;
        }
        const bool wants_densify = mean_pos_grad[i] > cfg.densify_grad_threshold && budget > 0;
        if (!wants_densify) {
            next.push_back(g);
            outcome.source_of.push_back(static_cast<int>(i));
            outcome.fresh.push_back(0);
            continue;
        }
        if (max_scale < dup_threshold) {
            // clone: survivor keeps its optimizer state, the copy starts fresh
            next.push_back(g);
            outcome.source_of.push_back(static_cast<int>(i));
            outcome.fresh.push_back(0);
            next.push_back(g);
            outcome.source_of.push_back(static_cast<int>(i));
            outcome.fresh.push_back(1);
            outcome.cloned++;
            budget--;
        } else {
            // split into two smaller ones sampled from the gaussian itself
            const Eigen::Matrix3d rot = quat_to_rotmat(g.rot);
            for (int child = 0; child < 2; ++child) {
                Gaussian3D c = g;
                const Eigen::Vector3d local(rng.normal() * g.scales.x(),
                                            rng.normal() * g.scales.y(),
                                            rng.normal() * g.scales.z());
                c.mu = g.mu + rot * local;
                c.scales = g.scales / 1.6;
                next.push_back(c);
                outcome.source_of.push_back(static_cast<int>(i));
                outcome.fresh.push_back(1);
            }
            outcome.split++;
            budget--;
        }
    }

    if (next.empty()) {
        // keep the most opaque gaussian rather than emptying the scene
        size_t best = 0;
        for (size_t i = 1; i < scene.size(); ++i)
            if (scene.gaussians[i].opacity > scene.gaussians[best].opacity) best = i;
        std::cerr << "warning: pruning would empty the scene; keeping 1 gaussian\n";
        next.push_back(scene.gaussians[best]);
        outcome.source_of.push_back(static_cast<int>(best));
        outcome.fresh.push_back(0);
        outcome.pruned--;
    }
    scene.gaussians = std::move(next);
    return outcome;
}

FitResult fit_scene(const std::vector<FitView>& views, const FitConfig& cfg, uint64_t seed) {
    if (views.size() < 2) throw std::invalid_argument("need at least 2 views");
    const int h = views.front().image.height(), w = views.front().image.width();
    for (const auto& view : views) {
        if (view.image.height() != h || view.image.width() != w || view.image.channels() != 3)
            throw std::invalid_argument("inconsistent view image sizes");
        view.camera.validate();
    }
    if (cfg.iterations < 1) throw std::invalid_argument("iterations must be >= 1");

    Rng rng(seed);
    const InitCloud cloud = sample_frustum_intersection(views, cfg, rng);

    FitParams params;
    const size_t n0 = cloud.points.size();
    params.mu.resize(3 * n0);
    params.op_raw.assign(n0, logit(0.1));
    params.quat.resize(4 * n0);
    // init scale: spacing-derived but well below the prune ceiling
    const double init_scale =
        std::min(0.6 * cloud.spacing, 0.25 * cfg.prune_scale_threshold * cloud.extent);
    params.log_s.assign(3 * n0, std::log(init_scale));
    params.color.resize(3 * n0);
    params.st_mu.resize(3 * n0);
    params.st_op.resize(n0);
    params.st_quat.resize(4 * n0);
    params.st_s.resize(3 * n0);
    params.st_color.resize(3 * n0);
    for (size_t i = 0; i < n0; ++i) {
        for (int k = 0; k < 3; ++k) params.mu[3 * i + k] = cloud.points[i][k];
        params.quat[4 * i] = 1.0;
        params.quat[4 * i + 1] = params.quat[4 * i + 2] = params.quat[4 * i + 3] = 0.0;
        // color init: average the views that see the point
        double rgb[3] = {0, 0, 0};
        int hits = 0;
        for (const auto& view : views) {
            const PixelProjection proj = project_point(view.camera, cloud.points[i]);
            if (!proj.valid || proj.z <= kNearPlane) continue;
            const int px = static_cast<int>(proj.u), py = static_cast<int>(proj.v);
            if (!view.image.in_bounds(py, px)) continue;
            for (int c = 0; c < 3; ++c) rgb[c] += view.image.at(py, px, c);
            ++hits;
        }
        for (int c = 0; c < 3; ++c)
            params.color[3 * i + c] = hits > 0 ? rgb[c] / hits : 0.5;
    }

    FitResult result;
    result.extent = cloud.extent;

    std::vector<double> grad_accum(params.count(), 0.0);
    std::vector<int> grad_count(params.count(), 0);
    std::vector<size_t> view_order(views.size());
    std::iota(view_order.begin(), view_order.end(), 0);
    Rng order_rng = rng.fork(0x0bdeULL);
    Rng densify_rng = rng.fork(0xde24ULL);
    size_t order_pos = view_order.size(); // forces an initial shuffle

    for (int iter = 1; iter <= cfg.iterations; ++iter) {
        // final iterations use the full view set for a consistent gradient
        const bool full_batch = iter > cfg.iterations - cfg.full_batch_tail;
        std::vector<size_t> batch;
        if (full_batch) {
            batch.resize(views.size());
            std::iota(batch.begin(), batch.end(), 0);
        } else {
            if (order_pos >= view_order.size()) {
                shuffle(view_order, order_rng);
                order_pos = 0;
            }
            batch.push_back(view_order[order_pos++]);
        }

        GaussianScene scene = params.to_scene("fit");
        const size_t n = params.count();
        std::vector<double> g_mu(3 * n), g_op(n), g_quat(4 * n), g_s(3 * n), g_color(3 * n);
        double loss = 0;
        const double inv_batch = 1.0 / static_cast<double>(batch.size());
        for (size_t view_idx : batch) {
            const FitView& view = views[view_idx];
            const RenderOutput render_out = render(scene, view.camera);
            ImageD grad_img;
            loss += inv_batch *
                    photometric_loss(render_out.color_fp64, view.image, cfg.loss_l2_weight,
                                     cfg.loss_dssim_weight, grad_img);
            const SceneGradients grads = render_backward(scene, view.camera, grad_img);
            for (size_t i = 0; i < n; ++i) {
                const Gaussian3D& g = scene.gaussians[i];
                for (int k = 0; k < 3; ++k) {
                    g_mu[3 * i + k] += inv_batch * grads.d_mu[i][k];
                    g_s[3 * i + k] += inv_batch * grads.d_scales[i][k] * g.scales[k]; // d/d log s
                    g_color[3 * i + k] += inv_batch * grads.d_color[i][k];
                }
                g_op[i] += inv_batch * grads.d_opacity[i] * g.opacity * (1.0 - g.opacity);
                for (int k = 0; k < 4; ++k) g_quat[4 * i + k] += inv_batch * grads.d_rot[i][k];
                if (grads.visible[i]) {
                    grad_accum[i] += inv_batch *
                                     Eigen::Vector2d(grads.d_center_px[i].x() * 2.0 / w,
                                                     grads.d_center_px[i].y() * 2.0 / h)
                                         .norm();
                    grad_count[i] += 1;
                }
            }
        }
        if (!std::isfinite(loss)) {
            char msg[96];
            std::snprintf(msg, sizeof(msg), "fit diverged (non-finite loss) at iteration %d", iter);
            throw std::runtime_error(msg);
        }
        result.log.push_back({iter, loss, static_cast<int>(params.count())});
        if (cfg.opacity_sharpen_weight > 0.0 && iter >= cfg.opacity_sharpen_from)
            for (size_t i = 0; i < n; ++i) {
                const double op = scene.gaussians[i].opacity;
                g_op[i] += cfg.opacity_sharpen_weight * (1.0 - 2.0 * op) * op * (1.0 - op);
            }
        const double lr_decay =
            std::pow(cfg.lr_mu_final / cfg.lr_mu,
                     static_cast<double>(iter - 1) / std::max(1, cfg.iterations - 1));
        adam_step(params.mu, g_mu, params.st_mu, cfg.lr_mu * lr_decay * result.extent);
        adam_step(params.op_raw, g_op, params.st_op, cfg.lr_opacity);
        adam_step(params.quat, g_quat, params.st_quat, cfg.lr_rot);
        adam_step(params.log_s, g_s, params.st_s, cfg.lr_scale);
        adam_step(params.color, g_color, params.st_color, cfg.lr_color);

        const bool densify_window = iter >= cfg.densify_from && iter <= cfg.densify_until;
        if (densify_window && iter % cfg.densify_interval == 0) {
            std::vector<double> mean_grad(n, 0.0);
            for (size_t i = 0; i < n; ++i)
                mean_grad[i] = grad_count[i] > 0 ? grad_accum[i] / grad_count[i] : 0.0;
            GaussianScene edited = params.to_scene("fit");
            const DensifyOutcome outcome =
                densify_and_prune(edited, mean_grad, cfg, result.extent, densify_rng.next_u64());
            if (outcome.changed()) params.rebuild_from(edited, outcome);
            grad_accum.assign(params.count(), 0.0);
            grad_count.assign(params.count(), 0);
        }
        if (cfg.opacity_reset && iter % cfg.opacity_reset_interval == 0)
            for (auto& o : params.op_raw) o = std::min(o, logit(0.05));
    }

    result.scene = params.to_scene("fit");
    return result;
}

std::string fit_log_to_csv(const std::vector<FitLogEntry>& log) {
    std::ostringstream os;
    os << "iteration,loss,count\n";
    char line[80];
    for (const auto& e : log) {
        std::snprintf(line, sizeof(line), "%d,%.9g,%d\n", e.iteration, e.loss, e.gaussian_count);
        os << line;
    }
    return os.str();
}

} // namespace splatlift
