#ifndef FPM_FORWARD_HPP
#define FPM_FORWARD_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "fpm/optics.hpp"

namespace fpm {

/// Optional measurement-noise stage. Poisson is applied first (photon
/// budget scales the brightest pixel of the whole stack), Gaussian second.
struct NoiseSpec {
    double gaussian_sigma = 0.0;  // additive, in intensity units
    double poisson_photons = 0.0; // photons at the stack-wide peak; 0 = off
    uint64_t seed = 0;

    bool enabled() const { return gaussian_sigma > 0.0 || poisson_photons > 0.0; }
};

/// Set of low-resolution intensity captures, one per pattern, plus the
/// geometry they were produced under.
struct IntensityStack {
    std::vector<RealImage> images;
    std::vector<IlluminationPattern> patterns;
    OpticalConfig cfg;
};

/// Coherent image of one LED: crop the shifted pupil window from the HR
/// spectrum, low-pass by the pupil, return the LR intensity. The (M/N)^2
/// factor fixes the energy scale under the unnormalized-forward FFT
/// convention so that a unit-amplitude object yields near-unit intensities.
RealImage simulate_single_led(const ComplexImage& obj, const OpticalConfig& cfg, WaveVector k);

/// Multiplexed exposure: incoherent (elementwise) sum of the per-LED images.
RealImage simulate_pattern(const ComplexImage& obj, const OpticalConfig& cfg,
                           const IlluminationPattern& pat);

/// Full capture: one image per pattern, order preserved.
IntensityStack simulate_capture(const ComplexImage& obj, const OpticalConfig& cfg,
                                const std::vector<IlluminationPattern>& patterns,
                                const std::optional<NoiseSpec>& noise = std::nullopt);

/// Conventional one-LED-at-a-time capture over the whole array, row-major
/// grid order (y then x, ascending).
IntensityStack sequential_capture(const ComplexImage& obj, const OpticalConfig& cfg);

}  // namespace fpm

#endif
