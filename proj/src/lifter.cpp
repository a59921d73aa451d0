// SPDX-License-Identifier: Apache-2.0
#include "splatlift/lifter.hpp"

#include <cmath>
#include <stdexcept>

namespace splatlift {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

int stage_width(int base, int stage) { return base << std::min(stage, 2); }

} // namespace

void LifterConfig::validate() const {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (sh_degree != 0 && sh_degree != 1) throw std::invalid_argument("sh_degree must be 0 or 1");
    if (stages < 1 || stages > 4) throw std::invalid_argument("stages must be in [1,4]");
    const int div = 1 << stages;
    if (width % div != 0 || height % div != 0)
        throw std::invalid_argument("resolution must be divisible by 2^stages");
    if (!(d_min > 0 && d_max > d_min)) throw std::invalid_argument("bad depth bounds");
    if (!(s_min > 0 && s_max > s_min)) throw std::invalid_argument("bad scale bounds");
}

LifterParams LifterParams::create(const LifterConfig& cfg, uint64_t seed) {
    cfg.validate();
    LifterParams p;
    p.cfg = cfg;
    Rng rng(seed);
    const int base = cfg.base_width;
    p.trunk.emplace_back("enc0", 3, base, 3, 1);
    for (int s = 1; s <= cfg.stages; ++s)
        p.trunk.emplace_back("enc" + std::to_string(s), stage_width(base, s - 1),
                             stage_width(base, s), 3, 2);
    const int deep = stage_width(base, cfg.stages);
    p.trunk.emplace_back("mid", deep, deep, 3, 1);
    for (int s = cfg.stages; s >= 1; --s)
        p.trunk.emplace_back("dec" + std::to_string(s - 1), stage_width(base, s),
                             stage_width(base, s - 1), 1, 1);
    for (auto& layer : p.trunk) layer.init_he(rng);
    p.head = ConvLayer("head", base, cfg.raw_channels(), 1, 1);
    p.head.init_zero();
    return p;
}

size_t LifterParams::param_count() const {
    size_t n = head.param_count();
    for (const auto& layer : trunk) n += layer.param_count();
    return n;
}

void LifterParams::zero_grad() {
    for (auto& layer : trunk) layer.zero_grad();
    head.zero_grad();
}

void LifterParams::adam_update(double lr_trunk, double lr_head) {
    for (auto& layer : trunk) {
        adam_step(layer.weight, layer.d_weight, layer.st_weight, lr_trunk);
        adam_step(layer.bias, layer.d_bias, layer.st_bias, lr_trunk);
    }
    adam_step(head.weight, head.d_weight, head.st_weight, lr_head);
    adam_step(head.bias, head.d_bias, head.st_bias, lr_head);
}

std::vector<std::pair<std::string, std::vector<double>*>> LifterParams::parameter_groups() {
    std::vector<std::pair<std::string, std::vector<double>*>> groups;
    for (auto& layer : trunk) {
        groups.emplace_back(layer.name + ".weight", &layer.weight);
        groups.emplace_back(layer.name + ".bias", &layer.bias);
    }
    groups.emplace_back("head.weight", &head.weight);
    groups.emplace_back("head.bias", &head.bias);
    return groups;
}

std::vector<std::pair<std::string, const std::vector<double>*>> LifterParams::parameter_groups()
    const {
    std::vector<std::pair<std::string, const std::vector<double>*>> groups;
    for (const auto& layer : trunk) {
        groups.emplace_back(layer.name + ".weight", &layer.weight);
        groups.emplace_back(layer.name + ".bias", &layer.bias);
    }
    groups.emplace_back("head.weight", &head.weight);
    groups.emplace_back("head.bias", &head.bias);
    return groups;
}

RawPixelAttributes lifter_forward(const FloatImage& image, LifterParams& params, LifterTape* tape) {
    const LifterConfig& cfg = params.cfg;
    if (image.height() != cfg.height || image.width() != cfg.width || image.channels() != 3)
        throw std::invalid_argument("resolution mismatch");

    Tensor3 x(3, cfg.height, cfg.width);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < cfg.height; ++y)
            for (int px = 0; px < cfg.width; ++px) x.at(c, y, px) = image.at(y, px, c);

    LifterTape local;
    LifterTape& t = tape ? *tape : local;
    t.input = x;
    t.enc_post.clear();
    t.dec_post.clear();

    // encoders: enc0 .. enc{stages}
    Tensor3 cur = x;
    for (int s = 0; s <= cfg.stages; ++s) {
        cur = relu(params.trunk[s].forward(cur));
        t.enc_post.push_back(cur);
    }
    // mid
    const int mid_idx = cfg.stages + 1;
    cur = relu(params.trunk[mid_idx].forward(cur));
    t.mid_post = cur;
    // decoders with additive skips: dec{stages-1} .. dec0
    for (int d = 0; d < cfg.stages; ++d) {
        const int layer_idx = mid_idx + 1 + d;
        const int enc_level = cfg.stages - 1 - d;
        cur = upsample2(cur);
        cur = params.trunk[layer_idx].forward(cur);
        cur = add(cur, t.enc_post[enc_level]);
        cur = relu(cur);
        t.dec_post.push_back(cur);
    }
    t.raw = params.head.forward(cur);
    return t.raw;
}

void lifter_backward(LifterParams& params, const LifterTape& tape, const Tensor3& d_raw) {
    const LifterConfig& cfg = params.cfg;
    const int mid_idx = cfg.stages + 1;

    Tensor3 grad = params.head.backward(tape.dec_post.back(), d_raw);

    // gradients of skip additions feed the matching encoder output directly
    std::vector<Tensor3> skip_grads(cfg.stages + 1);
    for (int d = cfg.stages - 1; d >= 0; --d) {
        const int layer_idx = mid_idx + 1 + d;
        const int enc_level = cfg.stages - 1 - d;
        grad = relu_backward(tape.dec_post[d], grad);
        skip_grads[enc_level] = grad; // the add node copies gradients
        const Tensor3& conv_in =
            d == 0 ? upsample2(tape.mid_post) : upsample2(tape.dec_post[d - 1]);
        grad = params.trunk[layer_idx].backward(conv_in, grad);
        grad = upsample2_backward(grad);
    }

    grad = relu_backward(tape.mid_post, grad);
    grad = params.trunk[mid_idx].backward(tape.enc_post[cfg.stages], grad);

    for (int s = cfg.stages; s >= 0; --s) {
        if (skip_grads[s].v.size() > 0) grad = add(grad, skip_grads[s]);
        grad = relu_backward(tape.enc_post[s], grad);
        const Tensor3& conv_in = s == 0 ? tape.input : tape.enc_post[s - 1];
        grad = params.trunk[s].backward(conv_in, grad);
    }
}

PixelAttributes apply_activations(const RawPixelAttributes& raw, const LifterConfig& cfg) {
    for (double v : raw.v)
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite raw attributes");
    const int per = cfg.raw_channels_per_gaussian();
    PixelAttributes attrs;
    attrs.h = raw.h;
    attrs.w = raw.w;
    attrs.k = cfg.k;
    attrs.sh_degree = cfg.sh_degree;
    const size_t n = static_cast<size_t>(raw.h) * raw.w * cfg.k;
    attrs.depth.resize(n);
    attrs.delta.resize(n);
    attrs.opacity.resize(n);
    attrs.quat.resize(n);
    attrs.scales.resize(n);
    attrs.color.assign(n, {});
    const int colors = Gaussian3D::color_count(cfg.sh_degree);
    for (int y = 0; y < raw.h; ++y)
        for (int x = 0; x < raw.w; ++x)
            for (int j = 0; j < cfg.k; ++j) {
                const size_t i = (static_cast<size_t>(y) * raw.w + x) * cfg.k + j;
                const int c0 = j * per;
                attrs.depth[i] = cfg.d_min + (cfg.d_max - cfg.d_min) * sigmoid(raw.at(c0 + 0, y, x));
                attrs.delta[i] =
                    cfg.delta_scale * Eigen::Vector3d(std::tanh(raw.at(c0 + 1, y, x)),
                                                      std::tanh(raw.at(c0 + 2, y, x)),
                                                      std::tanh(raw.at(c0 + 3, y, x)));
                attrs.opacity[i] = sigmoid(raw.at(c0 + 4, y, x));
                const Quaternion q(raw.at(c0 + 5, y, x) + 1.0, raw.at(c0 + 6, y, x),
                                   raw.at(c0 + 7, y, x), raw.at(c0 + 8, y, x));
                attrs.quat[i] = q.normalized();
                for (int s = 0; s < 3; ++s) {
                    const double unclamped = cfg.s_min * std::exp(raw.at(c0 + 9 + s, y, x));
                    attrs.scales[i][s] = std::min(cfg.s_max, std::max(cfg.s_min, unclamped));
                }
                for (int c = 0; c < colors; ++c)
                    attrs.color[i][c] = sigmoid(raw.at(c0 + 12 + c, y, x));
            }
    return attrs;
}

GaussianScene attributes_to_scene(const PixelAttributes& attrs, const Camera& cam) {
    if (attrs.h != cam.height || attrs.w != cam.width)
        throw std::invalid_argument("resolution mismatch");
    GaussianScene scene;
    scene.sh_degree = attrs.sh_degree;
    scene.gaussians.resize(attrs.count());
    for (int y = 0; y < attrs.h; ++y)
        for (int x = 0; x < attrs.w; ++x)
            for (int j = 0; j < attrs.k; ++j) {
                const size_t i = (static_cast<size_t>(y) * attrs.w + x) * attrs.k + j;
                Gaussian3D& g = scene.gaussians[i];
                g.mu = unproject_pixel(cam, x + 0.5, y + 0.5, attrs.depth[i]) + attrs.delta[i];
                g.opacity = attrs.opacity[i];
                g.rot = attrs.quat[i];
                g.scales = attrs.scales[i];
                g.color = attrs.color[i];
            }
    return scene;
}

Tensor3 activations_backward(const RawPixelAttributes& raw, const LifterConfig& cfg,
                             const PixelAttributes& attrs, const SceneGradients& grads,
                             const Camera& cam) {
    const int per = cfg.raw_channels_per_gaussian();
    Tensor3 d_raw(raw.c, raw.h, raw.w);
    const int colors = Gaussian3D::color_count(cfg.sh_degree);
    const Eigen::Matrix3d rot_t = cam.pose.rotation.transpose();
    for (int y = 0; y < raw.h; ++y)
        for (int x = 0; x < raw.w; ++x)
            for (int j = 0; j < cfg.k; ++j) {
                const size_t i = (static_cast<size_t>(y) * raw.w + x) * cfg.k + j;
                const int c0 = j * per;
                const Eigen::Vector3d& d_mu = grads.d_mu[i];

                // depth: mu moves along the unprojection ray
                const Eigen::Vector3d ray((x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy,
                                          1.0);
                const double d_depth = d_mu.dot(rot_t * ray);
                const double sig_d = (attrs.depth[i] - cfg.d_min) / (cfg.d_max - cfg.d_min);
                d_raw.at(c0 + 0, y, x) =
                    d_depth * (cfg.d_max - cfg.d_min) * sig_d * (1.0 - sig_d);

                // delta: bounded tanh
                for (int a = 0; a < 3; ++a) {
                    const double th = attrs.delta[i][a] / cfg.delta_scale;
                    d_raw.at(c0 + 1 + a, y, x) = d_mu[a] * cfg.delta_scale * (1.0 - th * th);
                }

                d_raw.at(c0 + 4, y, x) =
                    grads.d_opacity[i] * attrs.opacity[i] * (1.0 - attrs.opacity[i]);

                // quaternion: normalize(raw + e1); the renderer gradient is wrt
                // the normalized value, project and rescale
                const Quaternion& q = attrs.quat[i];
                const Eigen::Vector4d qv(q.w, q.x, q.y, q.z);
                const Eigen::Vector4d dq = grads.d_rot[i];
                const Eigen::Vector4d pre(raw.at(c0 + 5, y, x) + 1.0, raw.at(c0 + 6, y, x),
                                          raw.at(c0 + 7, y, x), raw.at(c0 + 8, y, x));
                const Eigen::Vector4d proj = (dq - qv * qv.dot(dq)) / pre.norm();
                for (int a = 0; a < 4; ++a) d_raw.at(c0 + 5 + a, y, x) = proj[a];

                // scales: s_min * exp(raw), clamped; zero gradient where clamped
                for (int a = 0; a < 3; ++a) {
                    const double unclamped = cfg.s_min * std::exp(raw.at(c0 + 9 + a, y, x));
                    const bool clamped = unclamped < cfg.s_min || unclamped > cfg.s_max;
                    d_raw.at(c0 + 9 + a, y, x) = clamped ? 0.0 : grads.d_scales[i][a] * unclamped;
                }

                for (int c = 0; c < colors; ++c) {
                    const double col = attrs.color[i][c];
                    d_raw.at(c0 + 12 + c, y, x) = grads.d_color[i][c] * col * (1.0 - col);
                }
            }
    return d_raw;
}

} // namespace splatlift
