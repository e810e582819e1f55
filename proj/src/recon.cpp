#include "fpm/recon.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "fpm/metrics.hpp"

namespace fpm {

void ReconConfig::validate() const {
    if (iterations < 1) throw std::invalid_argument("ReconConfig: iterations must be >= 1");
    if (learning_rate <= 0.0) throw std::invalid_argument("ReconConfig: learning_rate must be positive");
    if (final_learning_rate < 0.0 || final_learning_rate > learning_rate)
        throw std::invalid_argument(
            "ReconConfig: final_learning_rate must lie in [0, learning_rate]");
}

namespace {

ad::Tensor spectrum_from_field(const ComplexImage& field) {
    ComplexImage spec = fft_centered(field);
    int n = spec.height;
    std::vector<double> planes(static_cast<size_t>(2) * n * n);
    size_t plane = static_cast<size_t>(n) * n;
    for (size_t i = 0; i < plane; ++i) {
        planes[i] = spec.data[i].real();
        planes[plane + i] = spec.data[i].imag();
    }
    return ad::Tensor::from_data({2, n, n}, std::move(planes), true);
}

ComplexImage field_from_spectrum(const ad::Tensor& spectrum) {
    int n = spectrum.dim(1);
    ComplexImage spec(n, n);
    size_t plane = static_cast<size_t>(n) * n;
    const auto& v = spectrum.val();
    for (size_t i = 0; i < plane; ++i) spec.data[i] = {v[i], v[plane + i]};
    return ifft_centered(spec);
}

const char* domain_name(LossDomain d) {
    return d == LossDomain::Intensity ? "intensity" : "amplitude";
}

}  // namespace

FourierObjectLayer init_from_central(const IntensityStack& stack, size_t central_index) {
    if (central_index >= stack.images.size())
        throw std::invalid_argument("init_from_central: pattern index out of range");
    const auto& pat = stack.patterns.at(central_index);
    bool has_center = false;
    for (const auto& led : pat.leds) has_center |= (led == LedIndex{0, 0});
    if (!has_center)
        throw std::invalid_argument("init_from_central: indexed pattern does not fire the central LED");

    const RealImage& img = stack.images[central_index];
    const OpticalConfig& cfg = stack.cfg;
    if (img.height != cfg.lr_size() || img.width != cfg.lr_size())
        throw std::invalid_argument("init_from_central: image does not match the configured LR size");

    int n = cfg.hr_size, u = cfg.upsample;
    ComplexImage field(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            double v = img.at(r / u, c / u);
            field.at(r, c) = {std::sqrt(std::max(v, 0.0)), 0.0};
        }
    return {spectrum_from_field(field), "central"};
}

FourierObjectLayer init_from_prior(const ComplexImage& prior, const OpticalConfig& cfg) {
    if (prior.height != cfg.hr_size || prior.width != cfg.hr_size)
        throw std::invalid_argument("init_from_prior: prior does not match hr_size");
    return {spectrum_from_field(prior), "prior"};
}

ReconResult reconstruct(FourierObjectLayer layer, const IntensityStack& stack,
                        const ReconConfig& rcfg) {
    rcfg.validate();
    stack.cfg.validate();
    if (stack.images.size() != stack.patterns.size())
        throw std::invalid_argument("reconstruct: image/pattern count mismatch");
    if (stack.images.empty()) throw std::invalid_argument("reconstruct: empty stack");
    const OpticalConfig& cfg = stack.cfg;
    if (layer.size() != cfg.hr_size)
        throw std::invalid_argument("reconstruct: layer size does not match hr_size");

    const int m = cfg.lr_size();
    const size_t lr_plane = static_cast<size_t>(m) * m;
    const double energy = (static_cast<double>(m) / cfg.hr_size) *
                          (static_cast<double>(m) / cfg.hr_size);

    // Constants of the graph: pupil on both planes, per-LED shifts,
    // measurements in the requested loss domain.
    PupilMask pupil = pupil_mask(cfg);
    std::vector<double> pupil_planes(2 * lr_plane);
    std::copy(pupil.mask.data.begin(), pupil.mask.data.end(), pupil_planes.begin());
    std::copy(pupil.mask.data.begin(), pupil.mask.data.end(), pupil_planes.begin() + lr_plane);
    ad::Tensor pupil_t = ad::Tensor::constant({2, m, m}, std::move(pupil_planes));

    std::vector<std::vector<PixelShift>> shifts(stack.patterns.size());
    for (size_t p = 0; p < stack.patterns.size(); ++p) {
        stack.patterns[p].validate(cfg);
        for (const auto& led : stack.patterns[p].leds)
            shifts[p].push_back(shift_pixels(cfg, led_wavevector(cfg, led)));
    }

    std::vector<ad::Tensor> measured;
    measured.reserve(stack.images.size());
    for (const auto& img : stack.images) {
        if (img.height != m || img.width != m)
            throw std::invalid_argument("reconstruct: measurement does not match the LR size");
        std::vector<double> v(img.data);
        if (rcfg.loss_domain == LossDomain::Amplitude)
            for (auto& x : v) x = std::sqrt(std::max(x, 0.0));
        measured.push_back(ad::Tensor::constant({1, m, m}, std::move(v)));
    }

    std::vector<ad::Tensor> params{layer.spectrum};
    ad::OptimState opt;
    opt.lr = rcfg.learning_rate;
    // Geometric interpolation from learning_rate to final_learning_rate.
    double lr_ratio = rcfg.final_learning_rate > 0.0 && rcfg.iterations > 1
                          ? std::pow(rcfg.final_learning_rate / rcfg.learning_rate,
                                     1.0 / (rcfg.iterations - 1))
                          : 1.0;

    // Scale of the measurements in loss-domain units. The divergence check
    // allows one data-scale unit on top of 10x the initial loss: near a
    // perfect init the L1 subgradient keeps unit magnitude, so adam bobs
    // around the optimum at learning-rate amplitude without being broken.
    double data_scale = 0.0;
    for (const auto& t : measured)
        for (double v : t.val()) data_scale += std::abs(v);
    data_scale /= static_cast<double>(measured.size()) * lr_plane;

    ReconResult result;
    result.loss_trace.reserve(rcfg.iterations);
    double initial = 0.0;

    for (int it = 0; it < rcfg.iterations; ++it) {
        ad::Tensor total;
        for (size_t p = 0; p < shifts.size(); ++p) {
            ad::Tensor sim;
            for (const PixelShift& s : shifts[p]) {
                ad::Tensor window = ad::crop_center(layer.spectrum, m, s);
                ad::Tensor filtered = ad::mul(window, pupil_t);
                ad::Tensor inten = ad::modsq(ad::ifft2c(filtered));
                sim = sim.defined() ? ad::add(sim, inten) : inten;
            }
            sim = ad::scale(sim, energy);
            if (rcfg.loss_domain == LossDomain::Amplitude) sim = ad::sqrt_t(sim);
            ad::Tensor term = ad::l1_loss(sim, measured[p]);
            total = total.defined() ? ad::add(total, term) : term;
        }
        total = ad::scale(total, 1.0 / static_cast<double>(shifts.size()));

        double loss = total.scalar();
        if (!std::isfinite(loss)) {
            std::ostringstream msg;
            msg << "reconstruct: loss became non-finite at iteration " << it;
            throw std::runtime_error(msg.str());
        }
        if (it == 0) initial = loss;
        if (loss > 10.0 * initial + data_scale) {
            std::ostringstream msg;
            msg << "reconstruct: diverged at iteration " << it << " (loss " << loss
                << " vs initial " << initial << ")";
            throw std::runtime_error(msg.str());
        }
        result.loss_trace.push_back(loss);
        if (rcfg.log_every > 0 && it % rcfg.log_every == 0)
            std::fprintf(stderr, "iter %d loss %.6g\n", it, loss);

        ad::backward(total);
        ad::adam_step(params, opt);
        opt.lr *= lr_ratio;
    }

    result.estimate = field_from_spectrum(layer.spectrum);
    std::ostringstream prov;
    prov << "init=" << layer.origin << ";iters=" << rcfg.iterations
         << ";lr=" << rcfg.learning_rate;
    if (rcfg.final_learning_rate > 0.0) prov << ";lr_final=" << rcfg.final_learning_rate;
    prov << ";domain=" << domain_name(rcfg.loss_domain);
    result.provenance = prov.str();
    return result;
}

RealImage synthetic_aperture_mask(const OpticalConfig& cfg,
                                  const std::vector<IlluminationPattern>& patterns) {
    cfg.validate();
    PupilMask pupil = pupil_mask(cfg);
    int n = cfg.hr_size;
    RealImage mask(n, n);
    for (const auto& pat : patterns) {
        for (const auto& led : pat.leds) {
            PixelShift s = shift_pixels(cfg, led_wavevector(cfg, led));
            RealImage disk = embed_centered(pupil.mask, n, s);
            for (size_t i = 0; i < mask.size(); ++i)
                mask.data[i] = std::max(mask.data[i], disk.data[i]);
        }
    }
    return mask;
}

namespace {

RealImage band_limited_amplitude(const ComplexImage& x, const RealImage& mask) {
    ComplexImage spec = fft_centered(x);
    for (size_t i = 0; i < spec.size(); ++i) spec.data[i] *= mask.data[i];
    return amplitude(ifft_centered(spec));
}

}  // namespace

double in_band_psnr(const ComplexImage& estimate, const ComplexImage& truth,
                    const OpticalConfig& cfg, const std::vector<IlluminationPattern>& patterns) {
    if (estimate.height != truth.height || estimate.width != truth.width)
        throw std::invalid_argument("in_band_psnr: shape mismatch");
    RealImage mask = synthetic_aperture_mask(cfg, patterns);
    RealImage a = band_limited_amplitude(estimate, mask);
    RealImage b = band_limited_amplitude(truth, mask);
    return psnr(a, b, 1.0);
}

}  // namespace fpm
