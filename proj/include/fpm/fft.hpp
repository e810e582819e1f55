#ifndef FPM_FFT_HPP
#define FPM_FFT_HPP

#include "fpm/image.hpp"

namespace fpm {

/// Integer frequency-domain offset, x along columns, y along rows.
struct PixelShift {
    int x = 0;
    int y = 0;
};

// Centered transform convention used throughout the physics path:
//   - DC sits at pixel (floor(H/2), floor(W/2)) in both domains,
//   - forward transform is unnormalized,
//   - inverse carries the full 1/(H*W) factor,
// so ifft_centered(fft_centered(x)) == x.

ComplexImage fft_centered(const ComplexImage& x);
ComplexImage ifft_centered(const ComplexImage& x);

/// Extracts the m x m block whose center pixel floor(m/2) lands on
/// (floor(H/2) + offset.y, floor(W/2) + offset.x). The window must lie
/// fully inside x.
ComplexImage crop_centered(const ComplexImage& x, int m, PixelShift offset = {});

/// Adjoint of crop_centered: zero-pads x into an n x n canvas at the same
/// centered window, so <crop(y), x> == <y, embed(x)> for all y.
ComplexImage embed_centered(const ComplexImage& x, int n, PixelShift offset = {});

RealImage crop_centered(const RealImage& x, int m, PixelShift offset = {});
RealImage embed_centered(const RealImage& x, int n, PixelShift offset = {});

/// Per-pixel |z|^2 and |z|.
RealImage intensity(const ComplexImage& x);
RealImage amplitude(const ComplexImage& x);

}  // namespace fpm

#endif
