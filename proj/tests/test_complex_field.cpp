#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>

#include "fpm/fft.hpp"
#include "fpm/image.hpp"
#include "fpm/rng.hpp"
#include "oracles.hpp"

using fpm::ComplexImage;
using fpm::RealImage;
using fpm::cplx;

namespace {

ComplexImage random_field(int h, int w, uint64_t seed) {
    fpm::Rng rng(seed);
    ComplexImage x(h, w);
    for (auto& z : x.data) z = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    return x;
}

double max_abs_diff(const ComplexImage& a, const ComplexImage& b) {
    REQUIRE(a.height == b.height);
    REQUIRE(a.width == b.width);
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

double max_abs(const ComplexImage& a) {
    double m = 0.0;
    for (const auto& z : a.data) m = std::max(m, std::abs(z));
    return m;
}

cplx dot(const ComplexImage& a, const ComplexImage& b) {
    cplx s{0.0, 0.0};
    for (size_t i = 0; i < a.size(); ++i) s += std::conj(a.data[i]) * b.data[i];
    return s;
}

}  // namespace

TEST_CASE("direct DFT oracle reproduces the hand-computed 2x2 transform") {
    ComplexImage x(2, 2);
    cplx a{0.3, -1.1}, b{-0.7, 0.2}, c{1.9, 0.4}, d{-0.5, -0.6};
    x.at(0, 0) = a;
    x.at(0, 1) = b;
    x.at(1, 0) = c;
    x.at(1, 1) = d;
    ComplexImage X = oracles::dft2_centered(x, -1, false);
    CHECK(std::abs(X.at(1, 1) - (a + b + c + d)) < 1e-12);
    CHECK(std::abs(X.at(0, 0) - (a - b - c + d)) < 1e-12);
    CHECK(std::abs(X.at(0, 1) - (-a - b + c + d)) < 1e-12);
    CHECK(std::abs(X.at(1, 0) - (-a + b - c + d)) < 1e-12);
}

TEST_CASE("fft_centered matches the direct centered DFT") {
    for (auto [h, w] : {std::pair{8, 8}, {7, 7}, {6, 10}, {5, 8}}) {
        ComplexImage x = random_field(h, w, 11 + h * 100 + w);
        ComplexImage got = fpm::fft_centered(x);
        ComplexImage want = oracles::dft2_centered(x, -1, false);
        CAPTURE(h);
        CAPTURE(w);
        CHECK(max_abs_diff(got, want) < 1e-9 * std::max(1.0, max_abs(want)));
    }
}

TEST_CASE("ifft_centered matches the direct inverse and inverts the forward") {
    for (auto [h, w] : {std::pair{8, 8}, {7, 9}}) {
        ComplexImage x = random_field(h, w, 23 + h + w);
        ComplexImage got = fpm::ifft_centered(x);
        ComplexImage want = oracles::dft2_centered(x, +1, true);
        CHECK(max_abs_diff(got, want) < 1e-10);

        ComplexImage roundtrip = fpm::ifft_centered(fpm::fft_centered(x));
        CHECK(max_abs_diff(roundtrip, x) < 1e-12);
    }
}

TEST_CASE("DC lands at (floor(H/2), floor(W/2)) for even and odd sizes") {
    for (auto [h, w] : {std::pair{8, 8}, {7, 7}, {6, 9}}) {
        ComplexImage x(h, w, cplx{0.7, -0.3});
        ComplexImage X = fpm::fft_centered(x);
        cplx dc = x.at(0, 0) * static_cast<double>(h) * static_cast<double>(w);
        CHECK(std::abs(X.at(h / 2, w / 2) - dc) < 1e-9);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
                if (r != h / 2 || c != w / 2) CHECK(std::abs(X.at(r, c)) < 1e-9);
    }
}

TEST_CASE("centered delta transforms to a flat unit spectrum") {
    for (int n : {8, 7}) {
        ComplexImage x(n, n);
        x.at(n / 2, n / 2) = {1.0, 0.0};
        ComplexImage X = fpm::fft_centered(x);
        for (const auto& z : X.data) CHECK(std::abs(z - cplx{1.0, 0.0}) < 1e-12);
    }
}

TEST_CASE("Parseval holds under the unnormalized-forward convention") {
    ComplexImage x = random_field(12, 9, 37);
    ComplexImage X = fpm::fft_centered(x);
    double ex = 0.0, eX = 0.0;
    for (const auto& z : x.data) ex += std::norm(z);
    for (const auto& z : X.data) eX += std::norm(z);
    CHECK(ex == doctest::Approx(eX / (12.0 * 9.0)).epsilon(1e-12));
}

TEST_CASE("fft adjoint is HW times the inverse transform") {
    ComplexImage x = random_field(6, 8, 41);
    ComplexImage y = random_field(6, 8, 42);
    cplx lhs = dot(fpm::fft_centered(x), y);
    ComplexImage ihy = fpm::ifft_centered(y);
    for (auto& z : ihy.data) z *= 6.0 * 8.0;
    cplx rhs = dot(x, ihy);
    CHECK(std::abs(lhs - rhs) < 1e-9 * std::abs(lhs));
}

TEST_CASE("crop_centered uses hand-checked window indices") {
    ComplexImage x(6, 6);
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c) x.at(r, c) = {static_cast<double>(r * 10 + c), 0.0};

    ComplexImage mid = fpm::crop_centered(x, 4);
    CHECK(mid.at(0, 0).real() == 11.0);
    CHECK(mid.at(3, 3).real() == 44.0);

    // offset (x=1, y=-1): window center maps to (floor(H/2)-1, floor(W/2)+1)
    ComplexImage off = fpm::crop_centered(x, 4, {1, -1});
    CHECK(off.at(0, 0).real() == 2.0);
    CHECK(off.at(2, 2).real() == x.at(2, 4).real());

    ComplexImage odd(7, 7);
    for (int r = 0; r < 7; ++r)
        for (int c = 0; c < 7; ++c) odd.at(r, c) = {static_cast<double>(r * 10 + c), 0.0};
    ComplexImage mid3 = fpm::crop_centered(odd, 3);
    CHECK(mid3.at(1, 1).real() == 33.0);
    CHECK(mid3.at(0, 0).real() == 22.0);
}

TEST_CASE("crop_centered rejects out-of-bounds windows") {
    ComplexImage x(8, 8);
    CHECK_THROWS_AS((void)fpm::crop_centered(x, 10), std::invalid_argument);
    CHECK_THROWS_AS((void)fpm::crop_centered(x, 4, {10, 0}), std::invalid_argument);
    CHECK_THROWS_AS((void)fpm::crop_centered(x, 4, {0, -7}), std::invalid_argument);
    CHECK_THROWS_AS((void)fpm::embed_centered(x, 6), std::invalid_argument);
    CHECK_THROWS_AS((void)fpm::embed_centered(fpm::ComplexImage(2, 2), 8, {0, 5}),
                    std::invalid_argument);
}

TEST_CASE("embed_centered is the adjoint of crop_centered") {
    for (auto off : {fpm::PixelShift{0, 0}, {2, -1}, {-3, 3}}) {
        ComplexImage y = random_field(12, 12, 51 + off.x);
        ComplexImage x = random_field(5, 5, 52 + off.y);
        cplx lhs = dot(fpm::crop_centered(y, 5, off), x);
        cplx rhs = dot(y, fpm::embed_centered(x, 12, off));
        CHECK(std::abs(lhs - rhs) < 1e-12);
    }
}

TEST_CASE("crop then embed restores the window and zeroes the rest") {
    ComplexImage x = random_field(10, 10, 61);
    fpm::PixelShift off{1, 2};
    ComplexImage win = fpm::crop_centered(x, 4, off);
    ComplexImage back = fpm::embed_centered(win, 10, off);
    int r0 = 10 / 2 + off.y - 2, c0 = 10 / 2 + off.x - 2;
    for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 10; ++c) {
            bool inside = r >= r0 && r < r0 + 4 && c >= c0 && c < c0 + 4;
            if (inside)
                CHECK(back.at(r, c) == x.at(r, c));
            else
                CHECK(back.at(r, c) == cplx{0.0, 0.0});
        }
}

TEST_CASE("intensity and amplitude are |z|^2 and |z|") {
    ComplexImage x = random_field(4, 5, 71);
    RealImage ii = fpm::intensity(x);
    RealImage aa = fpm::amplitude(x);
    for (size_t i = 0; i < x.size(); ++i) {
        CHECK(ii.data[i] == doctest::Approx(std::norm(x.data[i])));
        CHECK(aa.data[i] == doctest::Approx(std::abs(x.data[i])));
    }
}

TEST_CASE("real-image crop and embed share the complex window geometry") {
    RealImage x(6, 6);
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c) x.at(r, c) = r * 10 + c;
    RealImage mid = fpm::crop_centered(x, 4);
    CHECK(mid.at(0, 0) == 11.0);
    RealImage back = fpm::embed_centered(mid, 6);
    CHECK(back.at(1, 1) == 11.0);
    CHECK(back.at(0, 0) == 0.0);
}
