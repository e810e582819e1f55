#ifndef FPM_RECON_HPP
#define FPM_RECON_HPP

#include <string>
#include <vector>

#include "fpm/autodiff.hpp"
#include "fpm/forward.hpp"

namespace fpm {

enum class LossDomain { Intensity, Amplitude };
enum class StageLabel { DL, PM, Fused };

/// Gradient-descent settings for the physics layer. The defaults suit
/// small problems; the shipped benchmark config pins its own values.
struct ReconConfig {
    int iterations = 300;
    double learning_rate = 1e-2;
    // When positive, the step size follows a geometric schedule from
    // learning_rate down to final_learning_rate across the run. Zero keeps
    // the step size constant. Annealing matters for spectrum-scale
    // parameters: adam's update magnitude stays near the step size, so a
    // constant large rate fits fast but then oscillates at that amplitude.
    double final_learning_rate = 0.0;
    LossDomain loss_domain = LossDomain::Intensity;
    int log_every = 0;  // 0 = no stderr progress lines

    void validate() const;
};

/// The trainable object: its centered HR spectrum as a [2, N, N] tensor.
/// origin names how the layer was seeded ("central", "prior", or a caller
/// relabel such as "dl") and flows into the result's provenance string.
struct FourierObjectLayer {
    ad::Tensor spectrum;
    std::string origin = "unspecified";

    int size() const { return spectrum.defined() ? spectrum.dim(1) : 0; }
};

struct ReconResult {
    ComplexImage estimate;
    std::vector<double> loss_trace;
    StageLabel stage_label = StageLabel::PM;
    std::string provenance;
};

/// Seeds the layer from the central-LED capture: sqrt of its intensity is
/// nearest-neighbor upsampled to the HR grid with zero phase, then
/// transformed. The indexed pattern must contain the central LED.
FourierObjectLayer init_from_central(const IntensityStack& stack, size_t central_index);

/// Seeds the layer from a full complex prior (e.g. another stage's output).
FourierObjectLayer init_from_prior(const ComplexImage& prior, const OpticalConfig& cfg);

/// Fits the layer to the measured stack: each iteration simulates every
/// pattern from the current spectrum through the differentiable graph,
/// takes the mean per-pattern L1 loss in rcfg.loss_domain, and applies one
/// adam step. Aborts on NaN loss or divergence past 10x the initial loss.
ReconResult reconstruct(FourierObjectLayer layer, const IntensityStack& stack,
                        const ReconConfig& rcfg);

/// Union of all shifted pupil supports on the HR frequency grid ({0,1}).
RealImage synthetic_aperture_mask(const OpticalConfig& cfg,
                                  const std::vector<IlluminationPattern>& patterns);

/// Low-pass both fields to the synthetic aperture union and compare their
/// amplitudes (peak 1.0). Global phase drops out of the comparison.
double in_band_psnr(const ComplexImage& estimate, const ComplexImage& truth,
                    const OpticalConfig& cfg, const std::vector<IlluminationPattern>& patterns);

}  // namespace fpm

#endif
