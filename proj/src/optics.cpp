#include "fpm/optics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace fpm {

void OpticalConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("OpticalConfig: " + msg); };
    if (wavelength <= 0) fail("wavelength must be positive");
    if (na <= 0 || na >= 1) fail("na must lie in (0, 1)");
    if (magnification <= 0) fail("magnification must be positive");
    if (camera_pixel <= 0) fail("camera_pixel must be positive");
    if (upsample < 1) fail("upsample must be a positive integer");
    if (hr_size < 1 || hr_size % upsample != 0) fail("hr_size must be divisible by upsample");
    if (led_pitch <= 0) fail("led_pitch must be positive");
    if (led_distance <= 0) fail("led_distance must be positive");
    if (led_grid < 1 || led_grid % 2 == 0) fail("led_grid must be odd");
}

void IlluminationPattern::validate(const OpticalConfig& cfg) const {
    if (leds.empty()) throw std::invalid_argument("IlluminationPattern: empty pattern");
    int half = cfg.led_grid / 2;
    std::set<std::pair<int, int>> seen;
    for (const auto& led : leds) {
        if (std::abs(led.x) > half || std::abs(led.y) > half)
            throw std::invalid_argument("IlluminationPattern: LED index outside grid");
        if (!seen.insert({led.x, led.y}).second)
            throw std::invalid_argument("IlluminationPattern: duplicate LED index");
    }
}

WaveVector led_wavevector(const OpticalConfig& cfg, LedIndex led,
                          double patch_offset_x, double patch_offset_y) {
    int half = cfg.led_grid / 2;
    if (std::abs(led.x) > half || std::abs(led.y) > half)
        throw std::invalid_argument("led_wavevector: LED index outside grid");
    double dx = cfg.led_pitch * led.x - patch_offset_x;
    double dy = cfg.led_pitch * led.y - patch_offset_y;
    double r = std::sqrt(dx * dx + dy * dy + cfg.led_distance * cfg.led_distance);
    double sx = -dx / r;
    double sy = -dy / r;
    return {sx / cfg.wavelength, sy / cfg.wavelength};
}

PupilMask pupil_mask(const OpticalConfig& cfg) {
    cfg.validate();
    int m = cfg.lr_size();
    double dk = cfg.freq_step();
    double cutoff = cfg.na / cfg.wavelength;
    PupilMask p;
    p.size = m;
    p.mask = RealImage(m, m);
    int cy = m / 2, cx = m / 2;
    for (int r = 0; r < m; ++r) {
        for (int c = 0; c < m; ++c) {
            double ky = (r - cy) * dk;
            double kx = (c - cx) * dk;
            p.mask.at(r, c) = (std::sqrt(kx * kx + ky * ky) <= cutoff) ? 1.0 : 0.0;
        }
    }
    return p;
}

namespace {
// round half away from zero
int round_away(double v) { return static_cast<int>(std::round(v)); }
}  // namespace

PixelShift shift_pixels(const OpticalConfig& cfg, WaveVector k) {
    double dk = cfg.freq_step();
    int sx = round_away(k.kx / dk);
    int sy = round_away(k.ky / dk);
    // Reject shifts that push the whole pupil support outside the HR grid:
    // no spectral content of this illumination would be observable.
    double pupil_r = (cfg.na / cfg.wavelength) / dk;
    double half = cfg.hr_size / 2.0;
    if (sx - pupil_r > half || sx + pupil_r < -half || sy - pupil_r > half || sy + pupil_r < -half)
        throw std::invalid_argument("shift_pixels: pupil support fully outside the HR spectrum");
    return {sx, sy};
}

bool is_brightfield(const OpticalConfig& cfg, WaveVector k) {
    double s = cfg.wavelength * std::sqrt(k.kx * k.kx + k.ky * k.ky);
    return s <= cfg.na;
}

std::vector<IlluminationPattern> ring_patterns(int led_grid, int count) {
    if (led_grid < 1 || led_grid % 2 == 0)
        throw std::invalid_argument("ring_patterns: led_grid must be odd");
    if (count < 1) throw std::invalid_argument("ring_patterns: count must be positive");

    int half = led_grid / 2;
    // Concentric square rings by Chebyshev radius, each ordered by angle so
    // round-robin splits spread members around the ring.
    std::vector<std::vector<LedIndex>> rings(half + 1);
    for (int y = -half; y <= half; ++y)
        for (int x = -half; x <= half; ++x)
            rings[std::max(std::abs(x), std::abs(y))].push_back({x, y});
    for (auto& ring : rings) {
        std::sort(ring.begin(), ring.end(), [](LedIndex a, LedIndex b) {
            return std::atan2(a.y, a.x) < std::atan2(b.y, b.x);
        });
    }

    // Fewer patterns than rings: merge consecutive rings so every LED still
    // appears exactly once.
    if (count <= static_cast<int>(rings.size())) {
        std::vector<IlluminationPattern> out(count);
        for (size_t r = 0; r < rings.size(); ++r) {
            auto& dst = out[r * count / rings.size()];
            dst.leds.insert(dst.leds.end(), rings[r].begin(), rings[r].end());
        }
        return out;
    }

    // Ring r has 8r members (the center has 1); allocate splits to the
    // requested pattern count proportionally, biggest rings split most.
    int groups_needed = count - static_cast<int>(rings.size());
    std::vector<int> splits(rings.size(), 1);
    while (groups_needed > 0) {
        size_t widest = 0;
        double worst = 0;
        for (size_t r = 0; r < rings.size(); ++r) {
            double load = static_cast<double>(rings[r].size()) / splits[r];
            if (load > worst) { worst = load; widest = r; }
        }
        ++splits[widest];
        --groups_needed;
    }

    // Splits beyond a ring's size produce empty groups and are skipped, so
    // the result can hold fewer than `count` patterns when count exceeds
    // the LED total; callers in this repo never ask for that.
    std::vector<IlluminationPattern> out;
    for (size_t r = 0; r < rings.size(); ++r) {
        int parts = splits[r];
        std::vector<IlluminationPattern> sub(parts);
        for (size_t i = 0; i < rings[r].size(); ++i)
            sub[i % parts].leds.push_back(rings[r][i]);
        for (auto& p : sub)
            if (!p.leds.empty()) out.push_back(std::move(p));
    }
    return out;
}

}  // namespace fpm
