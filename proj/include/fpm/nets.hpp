#ifndef FPM_NETS_HPP
#define FPM_NETS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "fpm/autodiff.hpp"
#include "fpm/dataset.hpp"
#include "fpm/forward.hpp"
#include "fpm/image.hpp"

namespace fpm {

// Learned reconstruction operates on polar planes: a complex field rides
// through the networks as a [2,H,W] tensor of amplitude and phase.

/// [2,H,W] constant tensor of |z| (plane 0) and arg(z) (plane 1).
ad::Tensor polar_planes(const ComplexImage& img);

/// amp * exp(i*phase) from a [2,H,W] planes tensor.
ComplexImage field_from_planes(const ad::Tensor& planes);

/// Layer plan for the end-to-end reconstruction network. The LR captures
/// merge along the channel axis, a 1x1 head feeds pixel-shuffle stages that
/// reach HR scale, and a gated-skip encoder/decoder ladder produces two
/// channels decoded as amplitude = softplus(ch0), phase = pi*tanh(ch1).
struct E2ENetSpec {
    int in_images = 10;       // stack depth consumed per forward pass
    int base_channels = 8;    // ladder width at HR scale, doubles per level
    int depth = 2;            // encoder levels below HR scale
    int upsample_stages = 1;  // each stage doubles the spatial side
    int out_channels = 2;     // amplitude plane + phase plane, fixed

    void validate() const;
};

/// Combiner for a learned estimate and a physics estimate. The concatenated
/// polar planes [dl.amp, dl.phase, pm.amp, pm.phase] pass through a conv
/// stack whose final layer emits a 2-channel correction added onto the
/// physics estimate's planes; the residual path is part of the contract.
struct FusionNetSpec {
    int in_channels = 4;
    int base_channels = 8;
    int layers = 3;        // total convs, the last one emits the correction
    bool residual = true;  // fixed; validate() rejects false

    void validate() const;
};

/// Named leaf tensors in a fixed construction order. Tensors hold shared
/// state: copying a net aliases its parameters, so take snapshots through
/// save_params/load ops rather than by copying.
struct E2ENet {
    E2ENetSpec spec;
    std::vector<std::string> names;
    std::vector<ad::Tensor> params;
};

struct FusionNet {
    FusionNetSpec spec;
    std::vector<std::string> names;
    std::vector<ad::Tensor> params;
};

/// Seeded uniform weight init with zero biases; one seed pins the whole net.
E2ENet make_e2e(const E2ENetSpec& spec, uint64_t seed);

/// Same init policy, except the final conv starts at exactly zero so an
/// untrained net passes the physics estimate through unchanged.
FusionNet make_fusion(const FusionNetSpec& spec, uint64_t seed);

/// Differentiable forward pass: [2, HR, HR] amplitude/phase planes.
/// Throws on stack depth mismatch or spatial sizes the ladder cannot tile.
ad::Tensor forward_e2e_planes(const E2ENet& net, const IntensityStack& stack);

/// Decoded complex field of forward_e2e_planes.
ComplexImage forward_e2e(const E2ENet& net, const IntensityStack& stack);

/// Differentiable fusion pass on precomputed [2,H,W] polar planes:
/// pm_planes plus the learned correction.
ad::Tensor forward_fusion_planes(const FusionNet& net, const ad::Tensor& dl_planes,
                                 const ad::Tensor& pm_planes);

/// Complex-domain fusion. The correction rotates and rescales pm_est itself
/// (out = pm*e^{i*dphase} + damp*e^{i*(arg pm + dphase)}), so a zero
/// correction returns pm_est bit for bit: there is no polar round trip.
ComplexImage forward_fusion(const FusionNet& net, const ComplexImage& dl_est,
                            const ComplexImage& pm_est);

struct TrainConfig {
    int epochs = 50;  // per phase when curriculum is on
    double learning_rate = 1e-3;
    uint64_t seed = 0;       // drives the per-epoch sample order
    bool curriculum = false;  // Simple subset first, then Complex

    void validate() const;
};

struct TrainHistory {
    std::vector<double> epoch_loss;  // mean per-sample L1, one entry per epoch
    int phase_boundary = -1;  // index of the first Complex-phase entry; -1 when unused
};

/// Adam on mean-absolute-error between output planes and target planes, one
/// sample per step. Deterministic for a fixed net and config: reruns produce
/// bitwise-identical loss histories. Throws on an empty dataset or a
/// non-finite loss. Curriculum mode trains cfg.epochs epochs on the Simple
/// subset, then cfg.epochs more on the Complex subset.
TrainHistory train_e2e(E2ENet& net, const std::vector<DatasetSample>& data,
                       const TrainConfig& cfg);

/// One fusion training triple: both stage estimates plus the ground truth.
struct FusionSample {
    ComplexImage dl;
    ComplexImage pm;
    ComplexImage target;
};

/// Same loop as train_e2e over fusion triples. Single-phase only: fusion
/// samples carry no complexity label, so curriculum mode is rejected.
TrainHistory train_fusion(FusionNet& net, const std::vector<FusionSample>& data,
                          const TrainConfig& cfg);

// Parameter files hold one spec tensor ("e2e.spec" / "fusion.spec") plus
// every layer tensor by name. Loaders rebuild the net from the stored spec
// and fail with the offending tensor's name on anything missing, extra, or
// reshaped.
void save_params(const E2ENet& net, const std::string& path);
void save_params(const FusionNet& net, const std::string& path);
E2ENet load_e2e(const std::string& path);
FusionNet load_fusion(const std::string& path);

}  // namespace fpm

#endif
