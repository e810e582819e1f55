// Independent reference implementations used only by the tests. Everything
// here is written the slow, obvious way (direct DFT sums, per-pixel window
// math, central differences) so it shares no code path with the library.
#ifndef FPM_TESTS_ORACLES_HPP
#define FPM_TESTS_ORACLES_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "fpm/autodiff.hpp"
#include "fpm/image.hpp"
#include "fpm/optics.hpp"

namespace oracles {

// Direct centered 2D DFT with DC at (floor(H/2), floor(W/2)).
// sign = -1 forward (unnormalized), sign = +1 inverse (pass normalize).
inline fpm::ComplexImage dft2_centered(const fpm::ComplexImage& x, int sign, bool normalize) {
    const int h = x.height, w = x.width;
    const int cr = h / 2, cc = w / 2;
    const double tau = 6.283185307179586476925286766559;
    fpm::ComplexImage out(h, w);
    for (int u = 0; u < h; ++u) {
        for (int v = 0; v < w; ++v) {
            fpm::cplx acc{0.0, 0.0};
            for (int r = 0; r < h; ++r) {
                for (int c = 0; c < w; ++c) {
                    double ph = sign * tau *
                                (static_cast<double>(u - cr) * (r - cr) / h +
                                 static_cast<double>(v - cc) * (c - cc) / w);
                    acc += x.at(r, c) * fpm::cplx{std::cos(ph), std::sin(ph)};
                }
            }
            out.at(u, v) = acc;
        }
    }
    if (normalize) {
        double s = 1.0 / (static_cast<double>(h) * w);
        for (auto& z : out.data) z *= s;
    }
    return out;
}

inline int round_half_away(double v) {
    return v >= 0.0 ? static_cast<int>(std::floor(v + 0.5))
                    : static_cast<int>(std::ceil(v - 0.5));
}

// One-LED low-resolution intensity, recomputed from the geometry with its
// own rounding, window indexing, pupil test, and direct DFTs.
inline fpm::RealImage brute_single_led(const fpm::ComplexImage& obj,
                                       const fpm::OpticalConfig& cfg, fpm::LedIndex led) {
    const int n = cfg.hr_size;
    const int m = n / cfg.upsample;

    double dx = cfg.led_pitch * led.x;
    double dy = cfg.led_pitch * led.y;
    double rr = std::sqrt(dx * dx + dy * dy + cfg.led_distance * cfg.led_distance);
    double kx = (-dx / rr) / cfg.wavelength;
    double ky = (-dy / rr) / cfg.wavelength;

    double obj_px = cfg.camera_pixel / (cfg.magnification * cfg.upsample);
    double dk = 1.0 / (n * obj_px);
    int sx = round_half_away(kx / dk);
    int sy = round_half_away(ky / dk);

    fpm::ComplexImage spec = dft2_centered(obj, -1, false);
    int r0 = n / 2 + sy - m / 2;
    int c0 = n / 2 + sx - m / 2;
    double cutoff = cfg.na / cfg.wavelength;
    fpm::ComplexImage win(m, m);
    for (int r = 0; r < m; ++r) {
        for (int c = 0; c < m; ++c) {
            double fy = (r - m / 2) * dk;
            double fx = (c - m / 2) * dk;
            bool open = std::sqrt(fx * fx + fy * fy) <= cutoff;
            win.at(r, c) = open ? spec.at(r0 + r, c0 + c) : fpm::cplx{0.0, 0.0};
        }
    }
    fpm::ComplexImage field = dft2_centered(win, +1, true);
    double sc = (static_cast<double>(m) / n) * (static_cast<double>(m) / n);
    fpm::RealImage img(m, m);
    for (size_t i = 0; i < img.size(); ++i) img.data[i] = std::norm(field.data[i]) * sc;
    return img;
}

// Central-difference check of reverse-mode gradients. `build` must
// reconstruct the scalar loss from the current parameter values. Returns
// the worst mixed error max |g - fd| / (1 + |g| + |fd|).
inline double fd_max_error(std::vector<fpm::ad::Tensor>& params,
                           const std::function<fpm::ad::Tensor()>& build, double h = 1e-5) {
    for (auto& p : params) p.zero_grad();
    fpm::ad::Tensor loss = build();
    fpm::ad::backward(loss);
    std::vector<std::vector<double>> grads;
    grads.reserve(params.size());
    for (auto& p : params) grads.push_back(p.grad());

    double worst = 0.0;
    for (size_t i = 0; i < params.size(); ++i) {
        auto& vals = params[i].val();
        for (size_t j = 0; j < vals.size(); ++j) {
            double save = vals[j];
            vals[j] = save + h;
            double f1 = build().scalar();
            vals[j] = save - h;
            double f2 = build().scalar();
            vals[j] = save;
            double fd = (f1 - f2) / (2.0 * h);
            double g = grads[i][j];
            double err = std::abs(g - fd) / (1.0 + std::abs(g) + std::abs(fd));
            if (err > worst) worst = err;
        }
    }
    return worst;
}

}  // namespace oracles

#endif
