// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "splatlift/rng.hpp"
#include "splatlift/training.hpp"

using namespace splatlift;

namespace {

ImageD random_imaged(Rng& rng, int h, int w, int c = 3) {
    ImageD img(h, w, c);
    for (auto& v : img.raw()) v = rng.uniform(0.0, 1.0);
    return img;
}

} // namespace

TEST_CASE("masked_l2 basics and hand arithmetic") {
    Rng rng(1);
    const ImageD img = random_imaged(rng, 6, 6);
    const ImageD mask(6, 6, 1, ImageSemantics::Mask, 0.7);
    CHECK(masked_l2(img, img, mask) == 0.0);

    const ImageD other = random_imaged(rng, 6, 6);
    const ImageD zero_mask(6, 6, 1, ImageSemantics::Mask, 0.0);
    CHECK(masked_l2(img, other, zero_mask) == 0.0);

    // 2x1 image: per-pixel channel-summed squared diffs (1, 1), M = (1, 0.5)
    ImageD pred(1, 2, 3), target(1, 2, 3), m(1, 2, 1);
    pred.at(0, 0, 0) = 1.0; // diff (1,0,0) -> |.|^2 = 1
    pred.at(0, 1, 1) = 1.0; // diff (0,1,0) -> 1
    m.at(0, 0) = 1.0;
    m.at(0, 1) = 0.5;
    CHECK(masked_l2(pred, target, m) == doctest::Approx(0.75).epsilon(1e-12));

    CHECK_THROWS_AS(masked_l2(pred, random_imaged(rng, 2, 2), m), std::invalid_argument);
}

TEST_CASE("weighted_perceptual proportion arithmetic") {
    Rng rng(2);
    const ImageD pred = random_imaged(rng, 8, 8);
    const ImageD target = random_imaged(rng, 8, 8);
    GradientDifferenceLoss fn;

    const ImageD ones(8, 8, 1, ImageSemantics::Mask, 1.0);
    const double full = weighted_perceptual(pred, target, ones, fn);
    CHECK(full == doctest::Approx(fn.eval(pred, target, nullptr, 1.0)).epsilon(1e-12));

    const ImageD zeros(8, 8, 1, ImageSemantics::Mask, 0.0);
    CHECK(weighted_perceptual(pred, target, zeros, fn) == 0.0);

    ImageD quarter(8, 8, 1, ImageSemantics::Mask, 0.25);
    const double got = weighted_perceptual(pred, target, quarter, fn);
    CHECK(got == doctest::Approx(0.25 * fn.eval(pred, target, nullptr, 1.0)).epsilon(1e-12));
}

TEST_CASE("perceptual stand-in: zero for identical images, nonnegative, symmetricish") {
    Rng rng(3);
    const ImageD a = random_imaged(rng, 16, 16);
    const ImageD b = random_imaged(rng, 16, 16);
    GradientDifferenceLoss fn;
    CHECK(fn.eval(a, a, nullptr, 1.0) == 0.0);
    CHECK(fn.eval(a, b, nullptr, 1.0) > 0.0);
    CHECK(fn.eval(a, b, nullptr, 1.0) == doctest::Approx(fn.eval(b, a, nullptr, 1.0)));
}

TEST_CASE("perceptual stand-in gradient matches finite differences") {
    Rng rng(4);
    ImageD pred = random_imaged(rng, 8, 8);
    const ImageD target = random_imaged(rng, 8, 8);
    GradientDifferenceLoss fn;
    ImageD grad(8, 8, 3);
    fn.eval(pred, target, &grad, 1.0);
    const double h = 1e-6;
    for (int probe = 0; probe < 30; ++probe) {
        const size_t idx = rng.uniform_index(pred.raw().size());
        const double saved = pred.raw()[idx];
        pred.raw()[idx] = saved + h;
        const double hi = fn.eval(pred, target, nullptr, 1.0);
        pred.raw()[idx] = saved - h;
        const double lo = fn.eval(pred, target, nullptr, 1.0);
        pred.raw()[idx] = saved;
        const double fd = (hi - lo) / (2 * h);
        CHECK(grad.raw()[idx] == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
    }
}

TEST_CASE("total_loss: identity, masking-disabled equivalence, composition") {
    Rng rng(5);
    const ImageD img = random_imaged(rng, 8, 8);
    const ImageD target = random_imaged(rng, 8, 8);
    ImageD mask(8, 8, 1, ImageSemantics::Mask);
    for (auto& v : mask.raw()) v = rng.uniform(0.0, 1.0);
    LossConfig cfg;

    ImageD grad;
    CHECK(total_loss(img, img, mask, cfg, &grad) == 0.0);
    for (double v : grad.raw()) CHECK(v == 0.0);

    // masking disabled must be bit-identical to an all-ones mask
    LossConfig disabled = cfg;
    disabled.masking_enabled = false;
    const ImageD ones(8, 8, 1, ImageSemantics::Mask, 1.0);
    CHECK(total_loss(img, target, mask, disabled) == total_loss(img, target, ones, cfg));

    // weights compose linearly
    LossConfig only_l2 = cfg;
    only_l2.alpha_perceptual = 0.0;
    LossConfig only_p = cfg;
    only_p.alpha_l2 = 0.0;
    CHECK(total_loss(img, target, mask, cfg) ==
          doctest::Approx(total_loss(img, target, mask, only_l2) +
                          total_loss(img, target, mask, only_p))
              .epsilon(1e-12));
}

TEST_CASE("total_loss gradient matches central finite differences to rel 1e-4") {
    Rng rng(6);
    ImageD pred = random_imaged(rng, 8, 8);
    const ImageD target = random_imaged(rng, 8, 8);
    ImageD mask(8, 8, 1, ImageSemantics::Mask);
    for (auto& v : mask.raw()) v = rng.uniform(0.0, 1.0);
    LossConfig cfg;

    ImageD grad;
    total_loss(pred, target, mask, cfg, &grad);
    const double h = 1e-5;
    int checked = 0;
    for (int probe = 0; probe < 60; ++probe) {
        const size_t idx = rng.uniform_index(pred.raw().size());
        const double saved = pred.raw()[idx];
        pred.raw()[idx] = saved + h;
        const double hi = total_loss(pred, target, mask, cfg);
        pred.raw()[idx] = saved - h;
        const double lo = total_loss(pred, target, mask, cfg);
        pred.raw()[idx] = saved;
        const double fd = (hi - lo) / (2 * h);
        if (std::abs(fd) < 1e-9) continue;
        CHECK(grad.raw()[idx] == doctest::Approx(fd).epsilon(1e-4));
        ++checked;
    }
    CHECK(checked > 40);
}

TEST_CASE("pixels with zero mask get gradient only through the perceptual term") {
    Rng rng(7);
    ImageD pred = random_imaged(rng, 8, 8);
    const ImageD target = random_imaged(rng, 8, 8);
    ImageD mask(8, 8, 1, ImageSemantics::Mask, 1.0);
    mask.at(3, 3) = 0.0;
    mask.at(4, 5) = 0.0;

    LossConfig no_perceptual;
    no_perceptual.alpha_perceptual = 0.0;
    ImageD grad;
    total_loss(pred, target, mask, no_perceptual, &grad);
    for (int c = 0; c < 3; ++c) {
        CHECK(grad.at(3, 3, c) == 0.0);
        CHECK(grad.at(4, 5, c) == 0.0);
        CHECK(grad.at(0, 0, c) != 0.0);
    }
}

TEST_CASE("train_lifter validates inputs") {
    TrainDataset dataset;
    LifterConfig cfg;
    cfg.width = cfg.height = 8;
    cfg.base_width = 2;
    cfg.stages = 1;
    LifterParams params = LifterParams::create(cfg, 1);
    TrainConfig tc;
    tc.steps = 1;
    CHECK_THROWS_AS(train_lifter(dataset, params, tc), std::invalid_argument);
}

TEST_CASE("short training runs are reproducible bit for bit") {
    const int n = 16;
    LifterConfig cfg;
    cfg.width = cfg.height = n;
    cfg.base_width = 4;
    cfg.stages = 2;
    cfg.d_min = 0.8;
    cfg.d_max = 4.0;

    // two-sample toy dataset from flat colored planes
    Rng rng(8);
    TrainDataset dataset;
    for (int s = 0; s < 2; ++s) {
        TrainSample sample;
        sample.id = "toy_" + std::to_string(s);
        sample.x_input = FloatImage(n, n, 3, ImageSemantics::Color, 0.3f + 0.2f * s);
        for (auto& v : sample.x_input.raw()) v += static_cast<float>(rng.uniform(0.0, 0.2));
        sample.x_target = sample.x_input;
        sample.cam_input.width = sample.cam_input.height = n;
        sample.cam_input.fx = sample.cam_input.fy = n;
        sample.cam_input.cx = sample.cam_input.cy = n / 2.0;
        sample.cam_target = sample.cam_input;
        sample.mask = FloatImage(n, n, 1, ImageSemantics::Mask, 1.0f);
        dataset.train.push_back(sample);
    }
    dataset.holdout.push_back(dataset.train[0]);

    TrainConfig tc;
    tc.steps = 6;
    tc.batch = 2;
    tc.eval_every = 3;
    tc.seed = 99;

    LifterParams p1 = LifterParams::create(cfg, 5);
    LifterParams p2 = LifterParams::create(cfg, 5);
    const auto log1 = train_lifter(dataset, p1, tc);
    const auto log2 = train_lifter(dataset, p2, tc);
    CHECK(train_log_to_csv(log1) == train_log_to_csv(log2));
    for (size_t l = 0; l < p1.trunk.size(); ++l) CHECK(p1.trunk[l].weight == p2.trunk[l].weight);
    CHECK(p1.head.weight == p2.head.weight);

    // loss should drop on this trivial overfit task
    CHECK(log1.back().loss < log1.front().loss * 1.5);
}

TEST_CASE("train_lifter requires masks when masking is on") {
    LifterConfig cfg;
    cfg.width = cfg.height = 8;
    cfg.base_width = 2;
    cfg.stages = 1;
    LifterParams params = LifterParams::create(cfg, 1);
    TrainDataset dataset;
    TrainSample s;
    s.id = "nomask";
    s.x_input = FloatImage(8, 8, 3, ImageSemantics::Color, 0.5f);
    s.x_target = s.x_input;
    s.cam_input.width = s.cam_input.height = 8;
    s.cam_input.fx = s.cam_input.fy = 8;
    s.cam_input.cx = s.cam_input.cy = 4;
    s.cam_target = s.cam_input;
    dataset.train.push_back(s);
    TrainConfig tc;
    tc.steps = 1;
    tc.batch = 1;
    CHECK_THROWS_AS(train_lifter(dataset, params, tc), std::invalid_argument);
}
