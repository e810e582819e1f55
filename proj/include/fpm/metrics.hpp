#ifndef FPM_METRICS_HPP
#define FPM_METRICS_HPP

#include <string>
#include <vector>

#include "fpm/image.hpp"

namespace fpm {

/// Peak signal-to-noise ratio in dB: 10*log10(peak^2 / MSE), clamped to
/// 99 dB so identical or near-identical pairs report a finite ceiling.
/// The clamp keeps the value monotone decreasing in MSE.
double psnr(const RealImage& x, const RealImage& y, double peak = 1.0);

/// Single-scale structural similarity, uniform square sliding window of
/// side min(8, H, W) at stride 1, stabilizers k1 = 0.01 and k2 = 0.03
/// relative to peak. Windows use biased (moment) statistics.
double ssim(const RealImage& x, const RealImage& y, double peak = 1.0);

struct MetricRow {
    std::string name;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

/// Per-image rows plus their arithmetic mean.
struct MetricReport {
    std::vector<MetricRow> rows;
    MetricRow aggregate;
};

MetricReport make_report(std::vector<MetricRow> rows);

}  // namespace fpm

#endif
