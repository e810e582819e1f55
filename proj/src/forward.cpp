#include "fpm/forward.hpp"

#include <algorithm>
#include <cmath>

#include "fpm/rng.hpp"

namespace fpm {

RealImage simulate_single_led(const ComplexImage& obj, const OpticalConfig& cfg, WaveVector k) {
    cfg.validate();
    if (obj.height != cfg.hr_size || obj.width != cfg.hr_size)
        throw std::invalid_argument("simulate_single_led: object does not match hr_size");
    int m = cfg.lr_size();
    PupilMask pupil = pupil_mask(cfg);
    ComplexImage spectrum = fft_centered(obj);
    ComplexImage window = crop_centered(spectrum, m, shift_pixels(cfg, k));
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) window.at(r, c) *= pupil.mask.at(r, c);
    RealImage img = intensity(ifft_centered(window));
    double scale = static_cast<double>(m) / cfg.hr_size;
    scale *= scale;
    for (auto& v : img.data) v *= scale;
    return img;
}

namespace {

// Shared-spectrum variant so a multi-LED pattern pays for one object FFT.
RealImage single_led_from_spectrum(const ComplexImage& spectrum, const PupilMask& pupil,
                                   const OpticalConfig& cfg, WaveVector k) {
    int m = cfg.lr_size();
    ComplexImage window = crop_centered(spectrum, m, shift_pixels(cfg, k));
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) window.at(r, c) *= pupil.mask.at(r, c);
    RealImage img = intensity(ifft_centered(window));
    double scale = static_cast<double>(m) / cfg.hr_size;
    scale *= scale;
    for (auto& v : img.data) v *= scale;
    return img;
}

}  // namespace

RealImage simulate_pattern(const ComplexImage& obj, const OpticalConfig& cfg,
                           const IlluminationPattern& pat) {
    cfg.validate();
    pat.validate(cfg);
    if (obj.height != cfg.hr_size || obj.width != cfg.hr_size)
        throw std::invalid_argument("simulate_pattern: object does not match hr_size");
    ComplexImage spectrum = fft_centered(obj);
    PupilMask pupil = pupil_mask(cfg);
    int m = cfg.lr_size();
    RealImage sum(m, m);
    for (const auto& led : pat.leds) {
        RealImage one = single_led_from_spectrum(spectrum, pupil, cfg, led_wavevector(cfg, led));
        for (size_t i = 0; i < sum.size(); ++i) sum.data[i] += one.data[i];
    }
    return sum;
}

IntensityStack simulate_capture(const ComplexImage& obj, const OpticalConfig& cfg,
                                const std::vector<IlluminationPattern>& patterns,
                                const std::optional<NoiseSpec>& noise) {
    cfg.validate();
    IntensityStack stack;
    stack.cfg = cfg;
    stack.patterns = patterns;
    ComplexImage spectrum = fft_centered(obj);
    PupilMask pupil = pupil_mask(cfg);
    int m = cfg.lr_size();
    for (const auto& pat : patterns) {
        pat.validate(cfg);
        RealImage sum(m, m);
        for (const auto& led : pat.leds) {
            RealImage one = single_led_from_spectrum(spectrum, pupil, cfg, led_wavevector(cfg, led));
            for (size_t i = 0; i < sum.size(); ++i) sum.data[i] += one.data[i];
        }
        stack.images.push_back(std::move(sum));
    }

    if (noise && noise->enabled()) {
        Rng rng(noise->seed);
        double peak = 0.0;
        for (const auto& img : stack.images)
            for (double v : img.data) peak = std::max(peak, v);
        for (auto& img : stack.images) {
            if (noise->poisson_photons > 0.0 && peak > 0.0) {
                double per_unit = noise->poisson_photons / peak;
                for (auto& v : img.data) v = rng.poisson(v * per_unit) / per_unit;
            }
            if (noise->gaussian_sigma > 0.0)
                for (auto& v : img.data) v = std::max(0.0, v + noise->gaussian_sigma * rng.normal());
        }
    }
    return stack;
}

IntensityStack sequential_capture(const ComplexImage& obj, const OpticalConfig& cfg) {
    cfg.validate();
    std::vector<IlluminationPattern> singles;
    int half = cfg.led_grid / 2;
    for (int y = -half; y <= half; ++y)
        for (int x = -half; x <= half; ++x) singles.push_back({{LedIndex{x, y}}});
    return simulate_capture(obj, cfg, singles);
}

}  // namespace fpm
