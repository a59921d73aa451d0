// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "splatlift/splat_render.hpp"
#include "support/fixtures.hpp"
#include "support/grad_check.hpp"
#include "support/reference_renderer.hpp"

using namespace splatlift;
using namespace splatlift::testing;

namespace {

// camera whose center pixel sample point receives the optical axis exactly
Camera centered_camera(int size = 9, double focal = 20.0) {
    Camera cam;
    cam.width = cam.height = size;
    cam.fx = cam.fy = focal;
    cam.cx = cam.cy = size / 2 + 0.5;
    return cam;
}

Gaussian3D pixel_covering_gaussian(double z, double opacity, double r, double g, double b) {
    Gaussian3D gs;
    gs.mu = Eigen::Vector3d(0, 0, z);
    gs.opacity = opacity;
    gs.scales = Eigen::Vector3d(0.5, 0.5, 0.5); // broad enough to cover the pixel with g ~ 1
    gs.color = {r, g, b, 0, 0, 0, 0, 0, 0, 0, 0, 0};
    return gs;
}

} // namespace

TEST_CASE("eval_gaussian_2d closed forms") {
    CHECK(eval_gaussian_2d(Eigen::Matrix2d::Identity(), {0, 0}) == doctest::Approx(1.0));
    CHECK(eval_gaussian_2d(Eigen::Matrix2d::Identity(), {std::sqrt(2.0), 0}) ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    Eigen::Matrix2d aniso = Eigen::Vector2d(4, 1).asDiagonal();
    CHECK(eval_gaussian_2d(aniso, {2, 0}) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("single opaque pixel-centered gaussian") {
    Camera cam = centered_camera();
    GaussianScene scene;
    scene.gaussians.push_back(pixel_covering_gaussian(2.0, 1.0, 0.2, 0.5, 0.8));
    const RenderOutput out = render(scene, cam);
    const int c = cam.width / 2;
    // pixel (c, c) samples (c+0.5, c+0.5) == projection of the center
    CHECK(out.color.at(c, c, 0) == doctest::Approx(0.2).epsilon(1e-6));
    CHECK(out.color.at(c, c, 1) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(out.color.at(c, c, 2) == doctest::Approx(0.8).epsilon(1e-6));
    CHECK(out.accum_alpha.at(c, c) == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(out.mean_depth.at(c, c) == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(out.contributor_count.at(c, c) == 1);
}

TEST_CASE("two coincident gaussians composite front to back") {
    Camera cam = centered_camera();
    GaussianScene scene;
    scene.gaussians.push_back(pixel_covering_gaussian(2.0, 0.5, 1.0, 0.0, 0.0));
    scene.gaussians.push_back(pixel_covering_gaussian(3.0, 0.5, 0.0, 1.0, 0.0));
    const RenderOutput out = render(scene, cam);
    const int c = cam.width / 2;
    CHECK(out.color.at(c, c, 0) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(out.color.at(c, c, 1) == doctest::Approx(0.25).epsilon(1e-6));
    CHECK(out.accum_alpha.at(c, c) == doctest::Approx(0.75).epsilon(1e-6));
    CHECK(out.mean_depth.at(c, c) ==
          doctest::Approx((0.5 * 2.0 + 0.25 * 3.0) / 0.75).epsilon(1e-6));
}

TEST_CASE("optimized renderer equals the exhaustive reference") {
    Rng rng(101);
    for (int trial = 0; trial < 12; ++trial) {
        const Camera cam = simple_camera(16, 16, 16);
        const GaussianScene scene = random_scene(rng, 10);
        const RenderOutput fast = render(scene, cam);
        const RenderOutput ref = reference_render(scene, cam);
        for (size_t i = 0; i < fast.color_fp64.raw().size(); ++i)
            CHECK(std::abs(fast.color_fp64.raw()[i] - ref.color_fp64.raw()[i]) < 1e-4);
        for (size_t i = 0; i < fast.accum_alpha.raw().size(); ++i)
            CHECK(std::abs(fast.accum_alpha.raw()[i] - ref.accum_alpha.raw()[i]) < 1e-4);
    }
}

TEST_CASE("render_depth reports the near layer over the far wall") {
    Camera cam = centered_camera(17, 24.0);
    GaussianScene scene;
    // far wall: grid of gaussians at z = 3
    Rng rng(7);
    for (int gy = -4; gy <= 4; ++gy)
        for (int gx = -4; gx <= 4; ++gx) {
            Gaussian3D g = pixel_covering_gaussian(3.0, 0.95, 0.8, 0.2, 0.2);
            g.mu = Eigen::Vector3d(gx * 0.35, gy * 0.35, 3.0);
            g.scales = Eigen::Vector3d(0.25, 0.25, 0.05);
            scene.gaussians.push_back(g);
        }
    // near occluder over the center
    Gaussian3D occ = pixel_covering_gaussian(1.5, 1.0, 0.1, 0.9, 0.1);
    occ.scales = Eigen::Vector3d(0.12, 0.12, 0.05);
    scene.gaussians.push_back(occ);

    const FloatImage depth = render_depth(scene, cam);
    const int c = cam.width / 2;
    CHECK(depth.at(c, c) == doctest::Approx(1.5).epsilon(0.02));
    // corner pixels see only the wall
    CHECK(depth.at(1, 1) == doctest::Approx(3.0).epsilon(0.05));

    const RenderOutput ref = reference_render(scene, cam);
    for (size_t i = 0; i < depth.raw().size(); ++i)
        CHECK(std::abs(depth.raw()[i] - ref.mean_depth.raw()[i]) < 1e-4);
}

TEST_CASE("pixels without contributors are invalid in depth and empty scenes throw") {
    Camera cam = centered_camera();
    GaussianScene scene;
    CHECK_THROWS_WITH_AS(render(scene, cam), "empty scene", std::invalid_argument);

    Gaussian3D g = pixel_covering_gaussian(2.0, 1.0, 1, 1, 1);
    g.scales = Eigen::Vector3d(0.01, 0.01, 0.01); // tiny: covers only the center
    scene.gaussians.push_back(g);
    const RenderOutput out = render(scene, cam);
    CHECK(out.accum_alpha.at(0, 0) == 0.0f);
    CHECK(out.mean_depth.at(0, 0) == 0.0f); // invalid marker
    CHECK(out.contributor_count.at(0, 0) == 0);
}

TEST_CASE("color is invariant under permutation of gaussian order") {
    Rng rng(131);
    const Camera cam = simple_camera(12, 12, 12);
    GaussianScene scene = random_scene(rng, 14);
    const RenderOutput a = render(scene, cam);
    // rotate the order; depths are generically distinct
    std::rotate(scene.gaussians.begin(), scene.gaussians.begin() + 5, scene.gaussians.end());
    const RenderOutput b = render(scene, cam);
    for (size_t i = 0; i < a.color_fp64.raw().size(); ++i)
        CHECK(a.color_fp64.raw()[i] == doctest::Approx(b.color_fp64.raw()[i]).epsilon(1e-12));
}

TEST_CASE("determinism: identical inputs give bit-identical renders") {
    Rng rng(137);
    const Camera cam = simple_camera(16, 16, 16);
    const GaussianScene scene = random_scene(rng, 25);
    const RenderOutput a = render(scene, cam);
    const RenderOutput b = render(scene, cam);
    CHECK(a.color.raw() == b.color.raw());
    CHECK(a.mean_depth.raw() == b.mean_depth.raw());
    CHECK(a.accum_alpha.raw() == b.accum_alpha.raw());
}

TEST_CASE("compositing weights sum to accumulated alpha") {
    Rng rng(139);
    const Camera cam = simple_camera(16, 16, 16);
    const GaussianScene scene = random_scene(rng, 20);
    const RenderOutput out = render(scene, cam);
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            const float a = out.accum_alpha.at(y, x);
            CHECK(a >= 0.0f);
            CHECK(a <= 1.0f);
        }
}

TEST_CASE("zero upstream gives zero gradients") {
    Rng rng(149);
    const Camera cam = simple_camera(12, 12, 12);
    const GaussianScene scene = random_scene(rng, 8);
    const ImageD upstream(12, 12, 3);
    const SceneGradients grads = render_backward(scene, cam, upstream);
    REQUIRE(grads.all_finite());
    for (size_t i = 0; i < scene.size(); ++i) {
        CHECK(grads.d_mu[i].norm() == 0.0);
        CHECK(grads.d_opacity[i] == 0.0);
        CHECK(grads.d_rot[i].norm() == 0.0);
        CHECK(grads.d_scales[i].norm() == 0.0);
    }
}

TEST_CASE("single-splat color gradient matches the closed form") {
    Camera cam = centered_camera(9, 20.0);
    GaussianScene scene;
    scene.gaussians.push_back(pixel_covering_gaussian(2.0, 0.7, 0.3, 0.4, 0.5));
    Rng rng(151);
    const ImageD upstream = random_upstream(rng, 9, 9);
    const SceneGradients grads = render_backward(scene, cam, upstream);

    // d_color[ch] = sum_px upstream * alpha' * T, with T = 1 for one splat
    const RenderOutput out = render(scene, cam);
    double expected[3] = {0, 0, 0};
    for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 9; ++x) {
            const double alpha = out.accum_alpha.at(y, x);
            for (int ch = 0; ch < 3; ++ch) expected[ch] += upstream.at(y, x, ch) * alpha;
        }
    for (int ch = 0; ch < 3; ++ch)
        CHECK(grads.d_color[0][ch] == doctest::Approx(expected[ch]).epsilon(1e-6));
}

TEST_CASE("culled gaussians receive exactly zero gradients") {
    Camera cam = centered_camera();
    GaussianScene scene;
    scene.gaussians.push_back(pixel_covering_gaussian(2.0, 0.8, 1, 0, 0));
    Gaussian3D behind = pixel_covering_gaussian(-1.0, 0.9, 0, 1, 0);
    scene.gaussians.push_back(behind);
    Rng rng(157);
    const ImageD upstream = random_upstream(rng, 9, 9);
    const SceneGradients grads = render_backward(scene, cam, upstream);
    CHECK(grads.visible[0] == 1);
    CHECK(grads.visible[1] == 0);
    CHECK(grads.d_mu[1].norm() == 0.0);
    CHECK(grads.d_opacity[1] == 0.0);
    CHECK(grads.d_rot[1].norm() == 0.0);
    CHECK(grads.d_scales[1].norm() == 0.0);
    CHECK(grads.d_color[1][0] == 0.0);
}

TEST_CASE("analytic gradients match central finite differences") {
    Rng rng(163);
    const Camera cam = simple_camera(12, 12, 12);
    const GaussianScene scene = random_scene(rng, 6);
    const ImageD upstream = random_upstream(rng, 12, 12);
    const SceneGradients grads = render_backward(scene, cam, upstream);
    REQUIRE(grads.all_finite());

    GradCheckStats stats;
    for (size_t i = 0; i < scene.size(); ++i) {
        for (AttrGroup group : {AttrGroup::Mu, AttrGroup::Opacity, AttrGroup::Rot,
                                AttrGroup::Scales, AttrGroup::Color}) {
            for (int comp = 0; comp < group_size(group); ++comp) {
                const double analytic = analytic_grad(grads, i, group, comp);
                if (std::abs(analytic) <= 1e-6) continue;
                const double fd = fd_grad(scene, cam, upstream, i, group, comp, 1e-4);
                stats.checked++;
                if (std::abs(fd - analytic) <= 1e-3 * std::max(std::abs(fd), std::abs(analytic)))
                    stats.passed++;
            }
        }
    }
    CHECK(stats.checked > 50);
    CHECK(stats.pass_rate() >= 0.95);
}

TEST_CASE("degree-1 spherical harmonics gradients also pass finite differences") {
    Rng rng(167);
    const Camera cam = simple_camera(10, 10, 10);
    GaussianScene scene = random_scene(rng, 4);
    scene.sh_degree = 1;
    for (auto& g : scene.gaussians)
        for (int k = 3; k < 12; ++k) g.color[k] = rng.uniform(-0.2, 0.2);
    const ImageD upstream = random_upstream(rng, 10, 10);
    const SceneGradients grads = render_backward(scene, cam, upstream);
    REQUIRE(grads.all_finite());

    GradCheckStats stats;
    for (size_t i = 0; i < scene.size(); ++i) {
        for (AttrGroup group : {AttrGroup::Mu, AttrGroup::Color}) {
            for (int comp = 0; comp < group_size(group, 1); ++comp) {
                const double analytic = analytic_grad(grads, i, group, comp);
                if (std::abs(analytic) <= 1e-6) continue;
                const double fd = fd_grad(scene, cam, upstream, i, group, comp, 1e-4);
                stats.checked++;
                if (std::abs(fd - analytic) <= 1e-3 * std::max(std::abs(fd), std::abs(analytic)))
                    stats.passed++;
            }
        }
    }
    CHECK(stats.checked > 20);
    CHECK(stats.pass_rate() >= 0.95);
}

TEST_CASE("render_backward validates upstream dimensions") {
    Rng rng(173);
    const Camera cam = simple_camera(8, 8, 8);
    const GaussianScene scene = random_scene(rng, 3);
    const ImageD wrong(4, 4, 3);
    CHECK_THROWS_WITH_AS(render_backward(scene, cam, wrong), "mismatched image dimensions",
                         std::invalid_argument);
}
