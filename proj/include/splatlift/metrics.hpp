// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "splatlift/geometry.hpp"
#include "splatlift/image.hpp"

namespace splatlift {

// PSNR in dB. Masked variant replaces the MSE by sum(M * |a-b|^2) / (C * sum(M)).
// Returns +inf for exact matches and quiet NaN ("n/a") when sum(M) == 0.
double psnr(const FloatImage& a, const FloatImage& b, const FloatImage* mask = nullptr);

// Single-scale SSIM on the channel-mean grayscale: 11x11 Gaussian window,
// sigma = 1.5, k1 = 0.01, k2 = 0.03, valid-region map. The masked variant
// averages the SSIM map weighted by the mask at window centers. Throws when
// the image is smaller than the window.
double ssim(const FloatImage& a, const FloatImage& b, const FloatImage* mask = nullptr);

// Removes floor(fraction * dim) pixels from each side. fraction in [0, 0.5).
FloatImage border_crop(const FloatImage& img, double fraction = 0.05);

// --- differentiable SSIM core (single channel, double precision) ---------
// Used by the scene-fit photometric loss; the same windowed statistics as
// ssim() above.
struct SsimGradResult {
    double value = 0;
    ImageD grad_a; // d(value)/d(a)
};
double ssim_value(const ImageD& a, const ImageD& b);
SsimGradResult ssim_with_grad(const ImageD& a, const ImageD& b);

// --- frame-offset evaluation report ---------------------------------------
// Bucket key for samples drawn uniformly inside the offset window.
inline constexpr int kUniformBucket = INT32_MAX;

struct EvalSample {
    const FloatImage* input_image = nullptr;
    Camera cam_input;  // identity pose; prediction happens in this frame
    Camera cam_target; // pose carries the input->target transform
    const FloatImage* target_image = nullptr;
    const FloatImage* mask = nullptr; // visibility of target pixels from input
    int offset = 0;                   // camera-index offset, bucket key
};

struct EvalBucket {
    std::string name;
    double psnr = 0, ssim = 0, masked_psnr = 0, masked_ssim = 0;
    int count = 0;
};

struct EvalReport {
    std::vector<EvalBucket> buckets;
    std::string to_json() const;  // "inf"/"n/a" encoded as strings
    std::string to_table() const; // aligned columns, one row per bucket
};

struct EvalConfig {
    std::vector<int> offsets{0, 5, 10};
    int uniform_window = 30; // adds a bucket sampled uniformly in +-window
    uint64_t seed = 0;
    double border_crop_fraction = 0.05;
};

// Renders the predicted target view for one sample.
using PredictFn = std::function<FloatImage(const EvalSample&)>;

// Samples must already carry their offset bucket keys; evaluate() groups by
// offset, applies the border crop, and aggregates the four metrics. Empty
// buckets are omitted (a warning is emitted on stderr).
EvalReport evaluate(const std::vector<EvalSample>& samples, const PredictFn& predict,
                    double border_crop_fraction = 0.05);

std::string format_metric(double v); // "inf", "n/a", or fixed 3-decimal text

} // namespace splatlift
