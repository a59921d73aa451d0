// SPDX-License-Identifier: Apache-2.0
#include "reference_ssim.hpp"

#include <cmath>
#include <stdexcept>

namespace splatlift::testing {

double reference_ssim(const ImageD& a, const ImageD& b) {
    constexpr int win = 11;
    constexpr double sigma = 1.5;
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    if (a.height() < win || a.width() < win)
        throw std::invalid_argument("image smaller than SSIM window");

    double kernel[win][win];
    double ksum = 0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            const double dy = i - (win - 1) / 2, dx = j - (win - 1) / 2;
            kernel[i][j] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            ksum += kernel[i][j];
        }
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) kernel[i][j] /= ksum;

    double total = 0;
    int count = 0;
    for (int y = 0; y + win <= a.height(); ++y) {
        for (int x = 0; x + win <= a.width(); ++x) {
            double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    const double va = a.at(y + i, x + j), vb = b.at(y + i, x + j);
                    const double k = kernel[i][j];
                    mu_a += k * va;
                    mu_b += k * vb;
                    aa += k * va * va;
                    bb += k * vb * vb;
                    ab += k * va * vb;
                }
            const double var_a = aa - mu_a * mu_a;
            const double var_b = bb - mu_b * mu_b;
            const double cov = ab - mu_a * mu_b;
            total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                     ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            ++count;
        }
    }
    return total / count;
}

} // namespace splatlift::testing
