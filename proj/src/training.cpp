// SPDX-License-Identifier: Apache-2.0
#include "splatlift/training.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "splatlift/metrics.hpp"
#include "splatlift/rng.hpp"

namespace splatlift {

namespace {

void check_shapes(const ImageD& pred, const ImageD& target, const ImageD& mask) {
    if (!pred.same_shape(target)) throw std::invalid_argument("mismatched image dimensions");
    if (mask.height() != pred.height() || mask.width() != pred.width() || mask.channels() != 1)
        throw std::invalid_argument("mismatched image dimensions");
}

ImageD downsample2(const ImageD& img) {
    const int nh = img.height() / 2, nw = img.width() / 2;
    ImageD out(nh, nw, img.channels());
    for (int y = 0; y < nh; ++y)
        for (int x = 0; x < nw; ++x)
            for (int c = 0; c < img.channels(); ++c)
                out.at(y, x, c) = 0.25 * (img.at(2 * y, 2 * x, c) + img.at(2 * y, 2 * x + 1, c) +
                                          img.at(2 * y + 1, 2 * x, c) +
                                          img.at(2 * y + 1, 2 * x + 1, c));
    return out;
}

void upsample2_add(const ImageD& grad_small, ImageD& grad_big) {
    for (int y = 0; y < grad_small.height(); ++y)
        for (int x = 0; x < grad_small.width(); ++x)
            for (int c = 0; c < grad_small.channels(); ++c) {
                const double g = 0.25 * grad_small.at(y, x, c);
                grad_big.at(2 * y, 2 * x, c) += g;
                grad_big.at(2 * y, 2 * x + 1, c) += g;
                grad_big.at(2 * y + 1, 2 * x, c) += g;
                grad_big.at(2 * y + 1, 2 * x + 1, c) += g;
            }
}

// |gx(pred)-gx(target)| + |gy(...)| averaged over valid positions and channels
double octave_grad_diff(const ImageD& pred, const ImageD& target, ImageD* grad, double scale) {
    const int h = pred.height(), w = pred.width(), c = pred.channels();
    const int64_t count =
        static_cast<int64_t>(c) * (static_cast<int64_t>(h) * (w - 1) + static_cast<int64_t>(h - 1) * w);
    if (count <= 0) return 0.0;
    const double inv = 1.0 / static_cast<double>(count);
    double sum = 0;
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x + 1 < w; ++x) {
                const double d = (pred.at(y, x + 1, ch) - pred.at(y, x, ch)) -
                                 (target.at(y, x + 1, ch) - target.at(y, x, ch));
                sum += std::abs(d);
                if (grad && d != 0.0) {
                    const double s = scale * inv * (d > 0 ? 1.0 : -1.0);
                    grad->at(y, x + 1, ch) += s;
                    grad->at(y, x, ch) -= s;
                }
            }
        for (int y = 0; y + 1 < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double d = (pred.at(y + 1, x, ch) - pred.at(y, x, ch)) -
                                 (target.at(y + 1, x, ch) - target.at(y, x, ch));
                sum += std::abs(d);
                if (grad && d != 0.0) {
                    const double s = scale * inv * (d > 0 ? 1.0 : -1.0);
                    grad->at(y + 1, x, ch) += s;
                    grad->at(y, x, ch) -= s;
                }
            }
    }
    return sum * inv;
}

} // namespace

double GradientDifferenceLoss::eval(const ImageD& pred, const ImageD& target, ImageD* grad_pred,
                                    double scale) const {
    if (!pred.same_shape(target)) throw std::invalid_argument("mismatched image dimensions");
    double total = 0;
    std::vector<ImageD> preds{pred}, targets{target};
    for (int o = 1; o < octaves_; ++o) {
        if (preds.back().height() < 4 || preds.back().width() < 4) break;
        preds.push_back(downsample2(preds.back()));
        targets.push_back(downsample2(targets.back()));
    }
    const double per_octave = 1.0 / static_cast<double>(preds.size());
    std::vector<ImageD> octave_grads;
    for (size_t o = 0; o < preds.size(); ++o) {
        ImageD* g = nullptr;
        if (grad_pred) {
            octave_grads.emplace_back(preds[o].height(), preds[o].width(), preds[o].channels());
            g = &octave_grads.back();
        }
        total += per_octave * octave_grad_diff(preds[o], targets[o], g, per_octave);
    }
    if (grad_pred) {
        // fold the octave gradients back to full resolution
        for (size_t o = octave_grads.size(); o-- > 1;) upsample2_add(octave_grads[o], octave_grads[o - 1]);
        for (size_t i = 0; i < grad_pred->raw().size(); ++i)
            grad_pred->raw()[i] += scale * octave_grads[0].raw()[i];
    }
    return total;
}

double masked_l2(const ImageD& pred, const ImageD& target, const ImageD& mask, ImageD* grad_pred,
                 double grad_scale) {
    check_shapes(pred, target, mask);
    const int h = pred.height(), w = pred.width(), c = pred.channels();
    const double inv = 1.0 / (static_cast<double>(h) * w);
    double sum = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double m = mask.at(y, x);
            for (int ch = 0; ch < c; ++ch) {
                const double d = pred.at(y, x, ch) - target.at(y, x, ch);
                sum += m * d * d;
                if (grad_pred) grad_pred->at(y, x, ch) += grad_scale * inv * m * 2.0 * d;
            }
        }
    return sum * inv;
}

double masked_l2(const FloatImage& pred, const FloatImage& target, const FloatImage& mask) {
    return masked_l2(pred.cast<double>(), target.cast<double>(), mask.cast<double>());
}

double weighted_perceptual(const ImageD& pred, const ImageD& target, const ImageD& mask,
                           const PerceptualLossFn& fn, ImageD* grad_pred) {
    check_shapes(pred, target, mask);
    double msum = 0;
    for (double m : mask.raw()) msum += m;
    const double proportion = msum / (static_cast<double>(mask.height()) * mask.width());
    if (proportion == 0.0) return 0.0;
    const double value = fn.eval(pred, target, grad_pred, proportion);
    return proportion * value;
}

double weighted_perceptual(const FloatImage& pred, const FloatImage& target,
                           const FloatImage& mask, const PerceptualLossFn& fn) {
    return weighted_perceptual(pred.cast<double>(), target.cast<double>(), mask.cast<double>(), fn);
}

double total_loss(const ImageD& pred, const ImageD& target, const ImageD& mask,
                  const LossConfig& cfg, ImageD* grad_pred) {
    check_shapes(pred, target, mask);
    const ImageD* m = &mask;
    ImageD ones;
    if (!cfg.masking_enabled) {
        ones = ImageD(mask.height(), mask.width(), 1, ImageSemantics::Mask, 1.0);
        m = &ones;
    }
    if (grad_pred && !grad_pred->same_shape(pred))
        *grad_pred = ImageD(pred.height(), pred.width(), pred.channels());
    double loss = 0;
    if (cfg.alpha_l2 != 0.0)
        loss += cfg.alpha_l2 * masked_l2(pred, target, *m, grad_pred, cfg.alpha_l2);
    if (cfg.alpha_perceptual != 0.0 && cfg.perceptual) {
        ImageD perceptual_grad;
        ImageD* pg = nullptr;
        if (grad_pred) {
            perceptual_grad = ImageD(pred.height(), pred.width(), pred.channels());
            pg = &perceptual_grad;
        }
        loss += cfg.alpha_perceptual * weighted_perceptual(pred, target, *m, *cfg.perceptual, pg);
        if (grad_pred)
            for (size_t i = 0; i < grad_pred->raw().size(); ++i)
                grad_pred->raw()[i] += cfg.alpha_perceptual * perceptual_grad.raw()[i];
    }
    return loss;
}

double total_loss(const FloatImage& pred, const FloatImage& target, const FloatImage& mask,
                  const LossConfig& cfg) {
    return total_loss(pred.cast<double>(), target.cast<double>(), mask.cast<double>(), cfg);
}

ImageD predict_view(LifterParams& params, const FloatImage& input, const Camera& cam_input,
                    const Camera& cam_target) {
    const RawPixelAttributes raw = lifter_forward(input, params);
    const PixelAttributes attrs = apply_activations(raw, params.cfg);
    const GaussianScene scene = attributes_to_scene(attrs, cam_input);
    return render(scene, cam_target).color_fp64;
}

double masked_psnr_over(LifterParams& params, const std::vector<TrainSample>& samples) {
    if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
    double sum = 0;
    int n = 0;
    for (const auto& s : samples) {
        const ImageD pred = predict_view(params, s.x_input, s.cam_input, s.cam_target);
        FloatImage pred_f = pred.cast<float>().clamped01();
        const double v = psnr(pred_f, s.x_target, &s.mask);
        if (!std::isnan(v) && !std::isinf(v)) {
            sum += v;
            ++n;
        }
    }
    return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

std::vector<TrainLogEntry> train_lifter(const TrainDataset& dataset, LifterParams& params,
                                        const TrainConfig& cfg) {
    if (dataset.train.empty()) throw std::invalid_argument("empty training dataset");
    for (const auto& s : dataset.train)
        if (cfg.loss.masking_enabled && s.mask.empty())
            throw std::invalid_argument("sample " + s.id + " carries no mask");

    std::vector<TrainLogEntry> log;
    Rng order_rng(cfg.seed);
    std::vector<size_t> order(dataset.train.size());
    std::iota(order.begin(), order.end(), 0);
    size_t pos = order.size();

    for (int step = 1; step <= cfg.steps; ++step) {
        params.zero_grad();
        double step_loss = 0;
        for (int b = 0; b < cfg.batch; ++b) {
            if (pos >= order.size()) {
                shuffle(order, order_rng);
                pos = 0;
            }
            const TrainSample& sample = dataset.train[order[pos++]];

            LifterTape tape;
            const RawPixelAttributes raw = lifter_forward(sample.x_input, params, &tape);
            const PixelAttributes attrs = apply_activations(raw, params.cfg);
            const GaussianScene scene = attributes_to_scene(attrs, sample.cam_input);
            const RenderOutput out = render(scene, sample.cam_target);

            ImageD grad_pred;
            const double loss = total_loss(out.color_fp64, sample.x_target.cast<double>(),
                                           sample.mask.cast<double>(), cfg.loss, &grad_pred);
            if (!std::isfinite(loss)) {
                char msg[128];
                std::snprintf(msg, sizeof(msg), "non-finite loss at step %d, sample %s", step,
                              sample.id.c_str());
                throw std::runtime_error(msg);
            }
            step_loss += loss;

            // scale so weight gradients average over the batch
            const double inv_batch = 1.0 / cfg.batch;
            for (auto& v : grad_pred.raw()) v *= inv_batch;

            const SceneGradients scene_grads =
                render_backward(scene, sample.cam_target, grad_pred);
            const Tensor3 d_raw =
                activations_backward(raw, params.cfg, attrs, scene_grads, sample.cam_input);
            lifter_backward(params, tape, d_raw);
        }
        params.adam_update(cfg.lr_trunk, cfg.lr_head);

        if (step % cfg.eval_every == 0 || step == cfg.steps) {
            TrainLogEntry e;
            e.step = step;
            e.loss = step_loss / cfg.batch;
            e.masked_psnr_holdout = masked_psnr_over(params, dataset.holdout);
            log.push_back(e);
        }
    }
    return log;
}

std::string train_log_to_csv(const std::vector<TrainLogEntry>& log) {
    std::ostringstream os;
    os << "step,loss,masked_psnr_holdout\n";
    char line[96];
    for (const auto& e : log) {
        std::snprintf(line, sizeof(line), "%d,%.9g,%.9g\n", e.step, e.loss,
                      e.masked_psnr_holdout);
        os << line;
    }
    return os.str();
}

} // namespace splatlift
