#ifndef FPM_IO_HPP
#define FPM_IO_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "fpm/forward.hpp"
#include "fpm/image.hpp"

namespace fpm {

/// Binary container formats, all little-endian regardless of host:
///   FPMC  complex image   magic "FPMC", u32 version, u32 h, u32 w,
///                         h*w complex values as (re, im) f64 pairs, row-major
///   FPMR  real image      magic "FPMR", u32 version, u32 h, u32 w, f64 row-major
///   FPMS  capture stack   magic "FPMS", u32 version, OpticalConfig fields
///                         (f64 wavelength, na, magnification, camera_pixel;
///                          u32 upsample, hr_size; f64 led_pitch, led_distance;
///                          u32 led_grid), u32 pattern count, per pattern
///                         (u32 led count, per LED i32 x, i32 y), u32 image
///                         count, u32 h, u32 w, then per image f64 row-major
///   FPMW  named tensors   magic "FPMW", u32 version, u32 tensor count, per
///                         tensor (u32 name length, name bytes, u32 rank,
///                         u32 dims[rank], f64 values)
/// Current version is 1 for all four. Readers reject unknown magic/version,
/// truncated payloads, and trailing bytes.

void write_complex_image(const std::string& path, const ComplexImage& img);
ComplexImage read_complex_image(const std::string& path);

void write_real_image(const std::string& path, const RealImage& img);
RealImage read_real_image(const std::string& path);

void write_stack(const std::string& path, const IntensityStack& stack);
IntensityStack read_stack(const std::string& path);

/// Flat named parameter block, the unit of model persistence.
struct NamedTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> values;  // product(shape) entries
};

void write_tensors(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(const std::string& path);

/// Linear [lo, hi] -> [0, 255] quantization with clamping; ties round half
/// away from zero. Throws when hi <= lo.
std::vector<uint8_t> quantize_gray(const RealImage& img, double lo, double hi);

/// 8-bit grayscale PNG of quantize_gray(img, lo, hi). Output bytes are a pure
/// function of the pixel values (no time or text chunks).
void write_png_gray(const std::string& path, const RealImage& img, double lo = 0.0,
                    double hi = 1.0);

}  // namespace fpm

#endif
