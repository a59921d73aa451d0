// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "splatlift/geometry.hpp"
#include "splatlift/image.hpp"
#include "splatlift/lifter.hpp"

namespace splatlift {

// One (input view, target view) pair. The predicted scene lives in the input
// camera frame, so cam_input carries an identity pose and cam_target carries
// the input-to-target transform K.
struct TrainSample {
    std::string id;
    FloatImage x_input;
    FloatImage x_target;
    RigidTransform K; // input -> target
    FloatImage mask;  // visibility of target pixels from the input view
    Camera cam_input;
    Camera cam_target;
};

// Differentiable image-pair distance; zero for identical images.
class PerceptualLossFn {
  public:
    virtual ~PerceptualLossFn() = default;
    virtual std::string name() const = 0;
    // returns the loss; when grad_pred != nullptr, ADDS scale * d(loss)/d(pred)
    virtual double eval(const ImageD& pred, const ImageD& target, ImageD* grad_pred,
                       double scale) const = 0;
};

// Built-in stand-in: mean absolute difference of finite-difference image
// gradients over 3 octaves of 2x2 average pooling. Deterministic and
// weight-free; an LPIPS-style network can be plugged in instead.
class GradientDifferenceLoss final : public PerceptualLossFn {
  public:
    explicit GradientDifferenceLoss(int octaves = 3) : octaves_(octaves) {}
    std::string name() const override { return "grad-diff-msx" + std::to_string(octaves_); }
    double eval(const ImageD& pred, const ImageD& target, ImageD* grad_pred,
                double scale) const override;

  private:
    int octaves_;
};

struct LossConfig {
    double alpha_l2 = 1.0;
    double alpha_perceptual = 0.1;
    bool masking_enabled = true; // disabled: M is replaced by all-ones
    std::shared_ptr<PerceptualLossFn> perceptual = std::make_shared<GradientDifferenceLoss>();
};

// sum_px M * |pred - target|^2 / (H*W); channel differences summed per pixel.
double masked_l2(const ImageD& pred, const ImageD& target, const ImageD& mask,
                 ImageD* grad_pred = nullptr, double grad_scale = 1.0);
double masked_l2(const FloatImage& pred, const FloatImage& target, const FloatImage& mask);

// (sum M / (H*W)) * fn(pred, target); fn sees the full unmasked images.
double weighted_perceptual(const ImageD& pred, const ImageD& target, const ImageD& mask,
                           const PerceptualLossFn& fn, ImageD* grad_pred = nullptr);
double weighted_perceptual(const FloatImage& pred, const FloatImage& target,
                           const FloatImage& mask, const PerceptualLossFn& fn);

// alpha_l2 * masked_l2 + alpha_perceptual * weighted_perceptual (+ gradient)
double total_loss(const ImageD& pred, const ImageD& target, const ImageD& mask,
                  const LossConfig& cfg, ImageD* grad_pred = nullptr);
double total_loss(const FloatImage& pred, const FloatImage& target, const FloatImage& mask,
                  const LossConfig& cfg);

struct TrainConfig {
    int steps = 5000;
    int batch = 4;
    double lr_head = 1e-3;
    double lr_trunk = 1e-4; // paper keeps a 10:1 head:backbone ratio
    uint64_t seed = 7;
    int eval_every = 250;
    LossConfig loss;
};

struct TrainLogEntry {
    int step = 0;
    double loss = 0;
    double masked_psnr_holdout = 0; // NaN when no holdout set
};

struct TrainDataset {
    std::vector<TrainSample> train;
    std::vector<TrainSample> holdout;
};

// Masked novel-view training loop: lifter -> scene -> render at the target
// camera -> total_loss -> backprop -> Adam (two learning-rate groups).
// Aborts with step index and sample id on a non-finite loss.
std::vector<TrainLogEntry> train_lifter(const TrainDataset& dataset, LifterParams& params,
                                        const TrainConfig& cfg);

// Renders the lifter prediction for one input image at a target camera.
ImageD predict_view(LifterParams& params, const FloatImage& input, const Camera& cam_input,
                    const Camera& cam_target);

// Average masked PSNR over a sample set (render + compare).
double masked_psnr_over(LifterParams& params, const std::vector<TrainSample>& samples);

std::string train_log_to_csv(const std::vector<TrainLogEntry>& log);

} // namespace splatlift
