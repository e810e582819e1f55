#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "fpm/forward.hpp"
#include "fpm/rng.hpp"
#include "oracles.hpp"

using fpm::ComplexImage;
using fpm::IlluminationPattern;
using fpm::LedIndex;
using fpm::OpticalConfig;
using fpm::RealImage;
using fpm::cplx;

namespace {

// Geometry small enough for the O(N^4) direct-DFT oracle. The wide LED
// pitch produces pixel shifts of up to 4 px on the 16-px HR grid.
OpticalConfig tiny_config() {
    OpticalConfig cfg;
    cfg.hr_size = 16;
    cfg.led_pitch = 20e-3;
    cfg.led_grid = 5;
    return cfg;
}

ComplexImage random_object(int n, uint64_t seed) {
    fpm::Rng rng(seed);
    ComplexImage x(n, n);
    for (auto& z : x.data)
        z = std::polar(rng.uniform(0.5, 1.0), rng.uniform(-0.5, 0.5));
    return x;
}

double max_rel_diff(const RealImage& a, const RealImage& b) {
    double peak = 0.0;
    for (double v : b.data) peak = std::max(peak, std::abs(v));
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]) / std::max(peak, 1e-30));
    return m;
}

}  // namespace

TEST_CASE("single-LED image matches the direct-DFT pipeline oracle") {
    OpticalConfig cfg = tiny_config();
    ComplexImage obj = random_object(cfg.hr_size, 101);
    for (LedIndex led : {LedIndex{0, 0}, {1, 0}, {2, 1}, {2, 2}}) {
        RealImage got = fpm::simulate_single_led(obj, cfg, fpm::led_wavevector(cfg, led));
        RealImage want = oracles::brute_single_led(obj, cfg, led);
        CAPTURE(led.x);
        CAPTURE(led.y);
        CHECK(max_rel_diff(got, want) < 1e-9);
    }
}

TEST_CASE("constant object under axial light gives flat |c|^2 (N/M)^2 intensity") {
    OpticalConfig cfg;  // stock 128 / 64 geometry
    cplx c = std::polar(0.8, 1.0471975511965976);
    ComplexImage obj(cfg.hr_size, cfg.hr_size, c);
    RealImage img = fpm::simulate_single_led(obj, cfg, {0.0, 0.0});
    REQUIRE(img.height == 64);
    for (double v : img.data) CHECK(v == doctest::Approx(2.56).epsilon(1e-9));
}

TEST_CASE("constant object yields a dark image for dark-field illumination") {
    OpticalConfig cfg;
    ComplexImage obj(cfg.hr_size, cfg.hr_size, cplx{1.0, 0.0});
    fpm::WaveVector k = fpm::led_wavevector(cfg, {5, 5});
    CHECK_FALSE(fpm::is_brightfield(cfg, k));
    RealImage img = fpm::simulate_single_led(obj, cfg, k);
    for (double v : img.data) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("multiplexed pattern is the elementwise sum of its LED images") {
    OpticalConfig cfg;
    ComplexImage obj = random_object(cfg.hr_size, 202);
    IlluminationPattern pat{{{1, 0}, {0, 1}, {2, 2}}};
    RealImage got = fpm::simulate_pattern(obj, cfg, pat);
    RealImage want(cfg.lr_size(), cfg.lr_size());
    for (const auto& led : pat.leds) {
        RealImage one = fpm::simulate_single_led(obj, cfg, fpm::led_wavevector(cfg, led));
        for (size_t i = 0; i < want.size(); ++i) want.data[i] += one.data[i];
    }
    CHECK(max_rel_diff(got, want) < 1e-12);
}

TEST_CASE("capture preserves pattern order and geometry") {
    OpticalConfig cfg = tiny_config();
    ComplexImage obj = random_object(cfg.hr_size, 303);
    auto pats = fpm::ring_patterns(cfg.led_grid, 3);
    fpm::IntensityStack stack = fpm::simulate_capture(obj, cfg, pats);
    REQUIRE(stack.images.size() == 3);
    REQUIRE(stack.patterns.size() == 3);
    CHECK(stack.cfg.hr_size == cfg.hr_size);
    for (size_t i = 0; i < pats.size(); ++i) {
        CHECK(stack.images[i].height == cfg.lr_size());
        RealImage direct = fpm::simulate_pattern(obj, cfg, pats[i]);
        CHECK(max_rel_diff(stack.images[i], direct) < 1e-12);
    }
}

TEST_CASE("sequential capture runs the grid row-major, y then x") {
    OpticalConfig cfg = tiny_config();
    ComplexImage obj = random_object(cfg.hr_size, 404);
    fpm::IntensityStack stack = fpm::sequential_capture(obj, cfg);
    REQUIRE(stack.patterns.size() == 25);
    for (int y = -2; y <= 2; ++y)
        for (int x = -2; x <= 2; ++x) {
            size_t p = static_cast<size_t>((y + 2) * 5 + (x + 2));
            REQUIRE(stack.patterns[p].leds.size() == 1);
            CHECK(stack.patterns[p].leds[0] == LedIndex{x, y});
        }
}

TEST_CASE("noise stage is reproducible from the seed") {
    OpticalConfig cfg = tiny_config();
    ComplexImage obj = random_object(cfg.hr_size, 505);
    auto pats = fpm::ring_patterns(cfg.led_grid, 3);
    fpm::NoiseSpec noise{0.01, 1e5, 42};
    auto a = fpm::simulate_capture(obj, cfg, pats, noise);
    auto b = fpm::simulate_capture(obj, cfg, pats, noise);
    for (size_t i = 0; i < a.images.size(); ++i)
        for (size_t j = 0; j < a.images[i].size(); ++j)
            CHECK(a.images[i].data[j] == b.images[i].data[j]);

    fpm::NoiseSpec other{0.01, 1e5, 43};
    auto c = fpm::simulate_capture(obj, cfg, pats, other);
    bool differs = false;
    for (size_t i = 0; i < a.images.size() && !differs; ++i)
        for (size_t j = 0; j < a.images[i].size(); ++j)
            if (a.images[i].data[j] != c.images[i].data[j]) {
                differs = true;
                break;
            }
    CHECK(differs);
}

TEST_CASE("disabled noise spec leaves the capture untouched") {
    OpticalConfig cfg = tiny_config();
    ComplexImage obj = random_object(cfg.hr_size, 606);
    auto pats = fpm::ring_patterns(cfg.led_grid, 2);
    auto clean = fpm::simulate_capture(obj, cfg, pats);
    auto off = fpm::simulate_capture(obj, cfg, pats, fpm::NoiseSpec{0.0, 0.0, 7});
    for (size_t i = 0; i < clean.images.size(); ++i)
        for (size_t j = 0; j < clean.images[i].size(); ++j)
            CHECK(clean.images[i].data[j] == off.images[i].data[j]);
}

TEST_CASE("photon noise stays within the shot-noise envelope") {
    OpticalConfig cfg;
    ComplexImage obj(cfg.hr_size, cfg.hr_size, cplx{1.0, 0.0});
    std::vector<IlluminationPattern> pats{IlluminationPattern{{{0, 0}}}};
    auto clean = fpm::simulate_capture(obj, cfg, pats);
    auto noisy = fpm::simulate_capture(obj, cfg, pats, fpm::NoiseSpec{0.0, 1e6, 9});
    double peak = 0.0;
    for (double v : clean.images[0].data) peak = std::max(peak, v);
    double worst = 0.0;
    bool any_change = false;
    for (size_t j = 0; j < clean.images[0].size(); ++j) {
        double d = std::abs(noisy.images[0].data[j] - clean.images[0].data[j]);
        worst = std::max(worst, d / peak);
        if (d != 0.0) any_change = true;
    }
    CHECK(any_change);
    CHECK(worst < 0.02);
}

TEST_CASE("additive noise has the requested scale and never goes negative") {
    OpticalConfig cfg;
    ComplexImage obj(cfg.hr_size, cfg.hr_size, cplx{1.0, 0.0});
    std::vector<IlluminationPattern> pats{IlluminationPattern{{{0, 0}}}};
    auto clean = fpm::simulate_capture(obj, cfg, pats);
    auto noisy = fpm::simulate_capture(obj, cfg, pats, fpm::NoiseSpec{0.01, 0.0, 11});
    double acc = 0.0;
    for (size_t j = 0; j < clean.images[0].size(); ++j) {
        double d = noisy.images[0].data[j] - clean.images[0].data[j];
        acc += d * d;
    }
    double sd = std::sqrt(acc / clean.images[0].size());
    CHECK(sd > 0.008);
    CHECK(sd < 0.012);

    auto loud = fpm::simulate_capture(obj, cfg, pats, fpm::NoiseSpec{30.0, 0.0, 13});
    for (double v : loud.images[0].data) CHECK(v >= 0.0);
}

TEST_CASE("object size must match the configured HR grid") {
    OpticalConfig cfg = tiny_config();
    ComplexImage wrong(8, 8, cplx{1.0, 0.0});
    CHECK_THROWS_AS((void)fpm::simulate_single_led(wrong, cfg, {0.0, 0.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)fpm::simulate_pattern(wrong, cfg, IlluminationPattern{{{0, 0}}}),
                    std::invalid_argument);
}
