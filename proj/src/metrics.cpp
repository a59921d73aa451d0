// SPDX-License-Identifier: Apache-2.0
#include "splatlift/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace splatlift {

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWin>& gaussian_taps() {
    static const std::array<double, kWin> taps = [] {
        std::array<double, kWin> t{};
        double sum = 0;
        for (int i = 0; i < kWin; ++i) {
            const double d = i - (kWin - 1) / 2;
            t[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
            sum += t[i];
        }
        for (auto& v : t) v /= sum;
        return t;
    }();
    return taps;
}

// valid-region separable correlation with the gaussian window
ImageD window_filter(const ImageD& img) {
    const auto& g = gaussian_taps();
    const int h = img.height(), w = img.width();
    ImageD tmp(h, w - kWin + 1, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x + kWin <= w; ++x) {
            double s = 0;
            for (int k = 0; k < kWin; ++k) s += g[k] * img.at(y, x + k);
            tmp.at(y, x) = s;
        }
    ImageD out(h - kWin + 1, w - kWin + 1, 1);
    for (int y = 0; y + kWin <= h; ++y)
        for (int x = 0; x < tmp.width(); ++x) {
            double s = 0;
            for (int k = 0; k < kWin; ++k) s += g[k] * tmp.at(y + k, x);
            out.at(y, x) = s;
        }
    return out;
}

// transpose of window_filter: scatter a map back into image space
ImageD window_scatter(const ImageD& map, int img_h, int img_w) {
    const auto& g = gaussian_taps();
    ImageD tmp(map.height(), img_w, 1);
    for (int y = 0; y < map.height(); ++y)
        for (int x = 0; x < map.width(); ++x) {
            const double v = map.at(y, x);
            if (v == 0.0) continue;
            for (int k = 0; k < kWin; ++k) tmp.at(y, x + k) += g[k] * v;
        }
    ImageD out(img_h, img_w, 1);
    for (int y = 0; y < map.height(); ++y)
        for (int x = 0; x < img_w; ++x) {
            const double v = tmp.at(y, x);
            if (v == 0.0) continue;
            for (int k = 0; k < kWin; ++k) out.at(y + k, x) += g[k] * v;
        }
    return out;
}

ImageD to_gray(const FloatImage& img) {
    ImageD out(img.height(), img.width(), 1);
    const int c = img.channels();
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            double s = 0;
            for (int ch = 0; ch < c; ++ch) s += img.at(y, x, ch);
            out.at(y, x) = s / c;
        }
    return out;
}

struct SsimMaps {
    ImageD s;                       // SSIM map (valid region)
    ImageD mu_a, mu_b, sa2, sb2, sab; // windowed stats, kept for the gradient
};

SsimMaps ssim_maps(const ImageD& a, const ImageD& b) {
    if (a.height() < kWin || a.width() < kWin)
        throw std::invalid_argument("image smaller than SSIM window");
    SsimMaps m;
    m.mu_a = window_filter(a);
    m.mu_b = window_filter(b);
    ImageD a2(a.height(), a.width(), 1), b2 = a2, ab = a2;
    for (size_t i = 0; i < a.raw().size(); ++i) {
        a2.raw()[i] = a.raw()[i] * a.raw()[i];
        b2.raw()[i] = b.raw()[i] * b.raw()[i];
        ab.raw()[i] = a.raw()[i] * b.raw()[i];
    }
    m.sa2 = window_filter(a2);
    m.sb2 = window_filter(b2);
    m.sab = window_filter(ab);
    m.s = ImageD(m.mu_a.height(), m.mu_a.width(), 1);
    for (size_t i = 0; i < m.s.raw().size(); ++i) {
        const double mu_a = m.mu_a.raw()[i], mu_b = m.mu_b.raw()[i];
        const double va = m.sa2.raw()[i] - mu_a * mu_a;
        const double vb = m.sb2.raw()[i] - mu_b * mu_b;
        const double vab = m.sab.raw()[i] - mu_a * mu_b;
        const double a1 = 2 * mu_a * mu_b + kC1, a2_ = 2 * vab + kC2;
        const double b1 = mu_a * mu_a + mu_b * mu_b + kC1, b2_ = va + vb + kC2;
        m.s.raw()[i] = (a1 * a2_) / (b1 * b2_);
    }
    return m;
}

} // namespace

double psnr(const FloatImage& a, const FloatImage& b, const FloatImage* mask) {
    if (!a.same_shape(b)) throw std::invalid_argument("mismatched image dimensions");
    const int c = a.channels();
    double mse = 0.0;
    if (mask == nullptr) {
        for (size_t i = 0; i < a.raw().size(); ++i) {
            const double d = static_cast<double>(a.raw()[i]) - b.raw()[i];
            mse += d * d;
        }
        mse /= static_cast<double>(a.raw().size());
    } else {
        if (mask->height() != a.height() || mask->width() != a.width())
            throw std::invalid_argument("mismatched image dimensions");
        double num = 0.0, msum = 0.0;
        for (int y = 0; y < a.height(); ++y)
            for (int x = 0; x < a.width(); ++x) {
                const double m = mask->at(y, x);
                msum += m;
                double d2 = 0;
                for (int ch = 0; ch < c; ++ch) {
                    const double d = static_cast<double>(a.at(y, x, ch)) - b.at(y, x, ch);
                    d2 += d * d;
                }
                num += m * d2;
            }
        if (msum == 0.0) return std::numeric_limits<double>::quiet_NaN();
        mse = num / (c * msum);
    }
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const FloatImage& a, const FloatImage& b, const FloatImage* mask) {
    if (!a.same_shape(b)) throw std::invalid_argument("mismatched image dimensions");
    const SsimMaps m = ssim_maps(to_gray(a), to_gray(b));
    if (mask == nullptr) {
        double sum = 0;
        for (double v : m.s.raw()) sum += v;
        return sum / static_cast<double>(m.s.raw().size());
    }
    if (mask->height() != a.height() || mask->width() != a.width())
        throw std::invalid_argument("mismatched image dimensions");
    // weight by the mask at window centers
    const int pad = (kWin - 1) / 2;
    double num = 0, den = 0;
    for (int y = 0; y < m.s.height(); ++y)
        for (int x = 0; x < m.s.width(); ++x) {
            const double w = mask->at(y + pad, x + pad);
            num += w * m.s.at(y, x);
            den += w;
        }
    if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return num / den;
}

double ssim_value(const ImageD& a, const ImageD& b) {
    const SsimMaps m = ssim_maps(a, b);
    double sum = 0;
    for (double v : m.s.raw()) sum += v;
    return sum / static_cast<double>(m.s.raw().size());
}

SsimGradResult ssim_with_grad(const ImageD& a, const ImageD& b) {
    const SsimMaps m = ssim_maps(a, b);
    const int mh = m.s.height(), mw = m.s.width();
    const double inv_n = 1.0 / (static_cast<double>(mh) * mw);

    // d(mean S)/da decomposes into three scattered window terms
    ImageD u0(mh, mw, 1), u1(mh, mw, 1), u2(mh, mw, 1);
    double total = 0;
    for (int y = 0; y < mh; ++y)
        for (int x = 0; x < mw; ++x) {
            const double mu_a = m.mu_a.at(y, x), mu_b = m.mu_b.at(y, x);
            const double va = m.sa2.at(y, x) - mu_a * mu_a;
            const double vb = m.sb2.at(y, x) - mu_b * mu_b;
            const double vab = m.sab.at(y, x) - mu_a * mu_b;
            const double a1 = 2 * mu_a * mu_b + kC1, a2_ = 2 * vab + kC2;
            const double b1 = mu_a * mu_a + mu_b * mu_b + kC1, b2_ = va + vb + kC2;
            const double d = b1 * b2_;
            const double s = (a1 * a2_) / d;
            total += s;
            const double p = 2.0 * (mu_b * a2_ / d - s * mu_a / b1);
            const double qa = -2.0 * s / b2_;
            const double qb = 2.0 * a1 / d;
            u0.at(y, x) = (p - qa * mu_a - qb * mu_b) * inv_n;
            u1.at(y, x) = qa * inv_n;
            u2.at(y, x) = qb * inv_n;
        }

    SsimGradResult out;
    out.value = total * inv_n;
    const ImageD g0 = window_scatter(u0, a.height(), a.width());
    const ImageD g1 = window_scatter(u1, a.height(), a.width());
    const ImageD g2 = window_scatter(u2, a.height(), a.width());
    out.grad_a = ImageD(a.height(), a.width(), 1);
    for (size_t i = 0; i < out.grad_a.raw().size(); ++i)
        out.grad_a.raw()[i] = g0.raw()[i] + a.raw()[i] * g1.raw()[i] + b.raw()[i] * g2.raw()[i];
    return out;
}

FloatImage border_crop(const FloatImage& img, double fraction) {
    if (fraction < 0.0 || fraction >= 0.5) throw std::invalid_argument("crop fraction out of range");
    const int dx = static_cast<int>(std::floor(fraction * img.width()));
    const int dy = static_cast<int>(std::floor(fraction * img.height()));
    const int nw = img.width() - 2 * dx, nh = img.height() - 2 * dy;
    if (nw <= 0 || nh <= 0) throw std::invalid_argument("border crop leaves no pixels");
    FloatImage out(nh, nw, img.channels(), img.semantics());
    for (int y = 0; y < nh; ++y)
        for (int x = 0; x < nw; ++x)
            for (int c = 0; c < img.channels(); ++c) out.at(y, x, c) = img.at(y + dy, x + dx, c);
    return out;
}

std::string format_metric(double v) {
    if (std::isnan(v)) return "n/a";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

namespace {

std::string bucket_name(int offset) {
    if (offset == kUniformBucket) return "uniform";
    if (offset == 0) return "input";
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%+d", offset);
    return buf;
}

nlohmann::json metric_json(double v) {
    if (std::isnan(v) || std::isinf(v)) return format_metric(v);
    return v;
}

} // namespace

EvalReport evaluate(const std::vector<EvalSample>& samples, const PredictFn& predict,
                    double border_crop_fraction) {
    struct Acc {
        double psnr = 0, ssim = 0, mpsnr = 0, mssim = 0;
        int n = 0, n_masked = 0;
        bool psnr_inf = false, mpsnr_inf = false;
    };
    std::map<int, Acc> by_offset;
    for (const auto& s : samples) {
        FloatImage pred = predict(s);
        FloatImage pred_c = border_crop(pred.clamped01(), border_crop_fraction);
        FloatImage target_c = border_crop(s.target_image->clamped01(), border_crop_fraction);
        Acc& acc = by_offset[s.offset];
        const double p = psnr(pred_c, target_c);
        const double q = ssim(pred_c, target_c);
        if (std::isinf(p)) acc.psnr_inf = true; else acc.psnr += p;
        acc.ssim += q;
        acc.n += 1;
        if (s.mask != nullptr) {
            FloatImage mask_c = border_crop(*s.mask, border_crop_fraction);
            const double mp = psnr(pred_c, target_c, &mask_c);
            const double mq = ssim(pred_c, target_c, &mask_c);
            if (!std::isnan(mp)) {
                if (std::isinf(mp)) acc.mpsnr_inf = true; else acc.mpsnr += mp;
                acc.mssim += std::isnan(mq) ? 0.0 : mq;
                acc.n_masked += 1;
            }
        }
    }
    EvalReport report;
    for (const auto& [offset, acc] : by_offset) {
        if (acc.n == 0) {
            std::cerr << "warning: empty evaluation bucket at offset " << offset << "\n";
            continue;
        }
        EvalBucket b;
        b.name = bucket_name(offset);
        b.count = acc.n;
        b.psnr = acc.psnr_inf ? std::numeric_limits<double>::infinity() : acc.psnr / acc.n;
        b.ssim = acc.ssim / acc.n;
        if (acc.n_masked > 0) {
            b.masked_psnr = acc.mpsnr_inf ? std::numeric_limits<double>::infinity()
                                          : acc.mpsnr / acc.n_masked;
            b.masked_ssim = acc.mssim / acc.n_masked;
        } else {
            b.masked_psnr = std::numeric_limits<double>::quiet_NaN();
            b.masked_ssim = std::numeric_limits<double>::quiet_NaN();
        }
        report.buckets.push_back(std::move(b));
    }
    return report;
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["buckets"] = nlohmann::ordered_json::array();
    for (const auto& b : buckets) {
        nlohmann::ordered_json jb;
        jb["name"] = b.name;
        jb["psnr"] = metric_json(b.psnr);
        jb["ssim"] = metric_json(b.ssim);
        jb["masked_psnr"] = metric_json(b.masked_psnr);
        jb["masked_ssim"] = metric_json(b.masked_ssim);
        jb["count"] = b.count;
        j["buckets"].push_back(jb);
    }
    return j.dump(2) + "\n";
}

std::string EvalReport::to_table() const {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof(line), "%-10s %10s %10s %14s %14s %8s\n", "bucket", "PSNR",
                  "SSIM", "masked PSNR", "masked SSIM", "count");
    os << line;
    for (const auto& b : buckets) {
        std::snprintf(line, sizeof(line), "%-10s %10s %10s %14s %14s %8d\n", b.name.c_str(),
                      format_metric(b.psnr).c_str(), format_metric(b.ssim).c_str(),
                      format_metric(b.masked_psnr).c_str(), format_metric(b.masked_ssim).c_str(),
                      b.count);
        os << line;
    }
    return os.str();
}

} // namespace splatlift
