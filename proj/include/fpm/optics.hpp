#ifndef FPM_OPTICS_HPP
#define FPM_OPTICS_HPP

#include <vector>

#include "fpm/fft.hpp"
#include "fpm/image.hpp"

namespace fpm {

/// LED position on the array grid, in pitch units relative to the array
/// center. x runs along the image x axis (columns), y along rows.
struct LedIndex {
    int x = 0;
    int y = 0;
    bool operator==(const LedIndex&) const = default;
};

/// System geometry. All lengths in meters.
struct OpticalConfig {
    double wavelength = 470e-9;   // illumination wavelength
    double na = 0.1;              // objective numerical aperture
    double magnification = 4.0;   // objective magnification
    double camera_pixel = 2.4e-6; // sensor pixel size
    int upsample = 2;             // HR pixels per LR pixel per side
    int hr_size = 128;            // HR grid side N
    double led_pitch = 4e-3;      // LED spacing on the array
    double led_distance = 97e-3;  // array-to-sample distance
    int led_grid = 11;            // LEDs per side, odd

    /// Object-plane HR pixel size.
    double obj_pixel() const { return camera_pixel / magnification / upsample; }
    /// Frequency grid step shared by the HR and LR spectra.
    double freq_step() const { return 1.0 / (hr_size * obj_pixel()); }
    /// LR grid side M.
    int lr_size() const { return hr_size / upsample; }

    /// Throws std::invalid_argument when any invariant is violated.
    void validate() const;
};

/// Transverse spatial frequency of an illumination plane wave, cycles/m.
struct WaveVector {
    double kx = 0.0;
    double ky = 0.0;
};

/// Binary circular low-pass aperture on the centered LR frequency grid.
struct PupilMask {
    int size = 0;
    RealImage mask;
};

/// One multiplexed exposure: the set of LEDs fired simultaneously.
struct IlluminationPattern {
    std::vector<LedIndex> leds;

    /// No duplicates, all members inside the grid, non-empty.
    void validate(const OpticalConfig& cfg) const;
};

/// Illumination wavevector of one LED for a sample patch displaced by
/// patch_offset from the optical axis. Sign convention: the spectrum window
/// used by the forward model moves opposite to the LED offset, i.e.
/// sin(theta) = -d / sqrt(dx^2 + dy^2 + h^2) per axis.
WaveVector led_wavevector(const OpticalConfig& cfg, LedIndex led,
                          double patch_offset_x = 0.0, double patch_offset_y = 0.0);

/// Ideal binary pupil: 1 where the centered pixel frequency magnitude is
/// <= na / wavelength, else 0.
PupilMask pupil_mask(const OpticalConfig& cfg);

/// Nearest HR-grid pixel shift for a wavevector; ties round half away from
/// zero. Throws when the shifted pupil support has no overlap with the HR
/// spectrum at all.
PixelShift shift_pixels(const OpticalConfig& cfg, WaveVector k);

/// True when the illumination angle lies inside the objective's acceptance
/// cone (lambda * |k| <= na, boundary counts as bright).
bool is_brightfield(const OpticalConfig& cfg, WaveVector k);

/// Partitions the full led_grid x led_grid array into `count` patterns:
/// the central LED alone, then concentric square rings split round-robin.
/// This is the stock multiplexed layout shipped with the repo.
std::vector<IlluminationPattern> ring_patterns(int led_grid, int count);

}  // namespace fpm

#endif
