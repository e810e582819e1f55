#include "fpm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fpm {

namespace {

void check_shapes(const RealImage& x, const RealImage& y, const char* op) {
    if (x.height != y.height || x.width != y.width)
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
    if (x.height == 0 || x.width == 0)
        throw std::invalid_argument(std::string(op) + ": empty image");
}

// Inclusive-prefix summed-area table; sat(r, c) = sum over [0,r) x [0,c).
std::vector<double> summed_area(const RealImage& img, const RealImage* other) {
    int h = img.height, w = img.width;
    std::vector<double> sat(static_cast<size_t>(h + 1) * (w + 1), 0.0);
    auto at = [&](int r, int c) -> double& { return sat[static_cast<size_t>(r) * (w + 1) + c]; };
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double v = other ? img.at(r, c) * other->at(r, c) : img.at(r, c);
            at(r + 1, c + 1) = v + at(r, c + 1) + at(r + 1, c) - at(r, c);
        }
    return sat;
}

double window_sum(const std::vector<double>& sat, int stride, int r0, int c0, int win) {
    auto at = [&](int r, int c) { return sat[static_cast<size_t>(r) * stride + c]; };
    return at(r0 + win, c0 + win) - at(r0, c0 + win) - at(r0 + win, c0) + at(r0, c0);
}

}  // namespace

double psnr(const RealImage& x, const RealImage& y, double peak) {
    check_shapes(x, y, "psnr");
    if (peak <= 0.0) throw std::invalid_argument("psnr: peak must be positive");
    double mse = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        double d = x.data[i] - y.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(x.size());
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const RealImage& x, const RealImage& y, double peak) {
    check_shapes(x, y, "ssim");
    if (peak <= 0.0) throw std::invalid_argument("ssim: peak must be positive");
    int win = std::min({8, x.height, x.width});
    double n = static_cast<double>(win) * win;
    double c1 = (0.01 * peak) * (0.01 * peak);
    double c2 = (0.03 * peak) * (0.03 * peak);

    auto sx = summed_area(x, nullptr);
    auto sy = summed_area(y, nullptr);
    auto sxx = summed_area(x, &x);
    auto syy = summed_area(y, &y);
    auto sxy = summed_area(x, &y);

    int stride = x.width + 1;
    double acc = 0.0;
    long count = 0;
    for (int r = 0; r + win <= x.height; ++r) {
        for (int c = 0; c + win <= x.width; ++c) {
            double mx = window_sum(sx, stride, r, c, win) / n;
            double my = window_sum(sy, stride, r, c, win) / n;
            double vx = window_sum(sxx, stride, r, c, win) / n - mx * mx;
            double vy = window_sum(syy, stride, r, c, win) / n - my * my;
            double cov = window_sum(sxy, stride, r, c, win) / n - mx * my;
            double s = ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
                       ((mx * mx + my * my + c1) * (vx + vy + c2));
            acc += s;
            ++count;
        }
    }
    return acc / static_cast<double>(count);
}

MetricReport make_report(std::vector<MetricRow> rows) {
    if (rows.empty()) throw std::invalid_argument("make_report: no rows");
    MetricReport rep;
    rep.aggregate.name = "mean";
    for (const auto& r : rows) {
        rep.aggregate.psnr_db += r.psnr_db;
        rep.aggregate.ssim += r.ssim;
    }
    rep.aggregate.psnr_db /= static_cast<double>(rows.size());
    rep.aggregate.ssim /= static_cast<double>(rows.size());
    rep.rows = std::move(rows);
    return rep;
}

}  // namespace fpm
