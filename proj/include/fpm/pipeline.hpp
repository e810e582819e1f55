#ifndef FPM_PIPELINE_HPP
#define FPM_PIPELINE_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fpm/dataset.hpp"
#include "fpm/forward.hpp"
#include "fpm/metrics.hpp"
#include "fpm/nets.hpp"
#include "fpm/recon.hpp"

namespace fpm {

struct StageTimings {
    double dl_seconds = 0.0;
    double pm_seconds = 0.0;
    double fused_seconds = 0.0;
};

/// One three-stage reconstruction: the learned estimate, the physics fit it
/// seeded, and their fusion. rcfg is the snapshot the PM stage ran with.
struct HybridRun {
    IntensityStack inputs;
    ReconResult dl;
    ReconResult pm;
    ReconResult fused;
    ReconConfig rcfg;
    StageTimings timings;
};

/// Stage 1 forward_e2e, stage 2 reconstruct seeded by init_from_prior on
/// the stage-1 estimate (layer origin relabeled "dl"), stage 3
/// forward_fusion(stage 1, stage 2). Pure composition of the module calls:
/// no hidden state, so replaying those calls reproduces every output field
/// bitwise. A stage failure rethrows with a [DL]/[PM]/[FUSED] tag.
HybridRun run_hybrid(const IntensityStack& stack, const E2ENet& e2e, const FusionNet& fusion,
                     const ReconConfig& rcfg);

/// One table row: a reconstruction method with its per-tile metrics.
struct AblationCase {
    std::string name;
    MetricReport report;
};

/// Fixed five-row study: dl, pm, fused(dl+dl), fused(pm+pm), fused(dl+pm),
/// in that order.
struct AblationResult {
    std::vector<AblationCase> cases;
};

/// Runs one hybrid per tile plus the swapped fusion inputs, and scores every
/// method against the tile's stored target (amplitude PSNR/SSIM, peak 1).
/// Tiles evaluate in parallel under the FPM_THREADS budget.
AblationResult run_ablation(const std::vector<DatasetSample>& tiles, const E2ENet& e2e,
                            const FusionNet& fusion, const ReconConfig& rcfg);

/// Writes stage amplitude PNGs, the PM loss trace CSV, a plain-text summary,
/// and (when truth is given) a metrics CSV into out_dir. Returns the paths
/// written. Pure function of its inputs: rewriting is byte-identical.
std::vector<std::string> emit_report(const HybridRun& run, const std::string& out_dir,
                                     const ComplexImage* truth = nullptr);

/// Writes the five-row table CSV and a plain-text summary.
std::vector<std::string> emit_report(const AblationResult& ablation, const std::string& out_dir);

/// FPM_THREADS when set (must parse to an integer >= 1), else the hardware
/// thread count, else 1.
int thread_budget();

/// fn(0..n-1) on up to thread_budget() workers; order-free, rethrows the
/// first worker exception.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

/// Everything one experiment manifest pins. A JSON file fills any subset of
/// the fields; the CLI layers flag overrides on top.
struct PipelineConfig {
    OpticalConfig optics;
    int pattern_count = 10;
    ReconConfig recon;
    E2ENetSpec e2e;
    uint64_t e2e_init_seed = 11;
    TrainConfig e2e_train;
    FusionNetSpec fusion;
    uint64_t fusion_init_seed = 12;
    TrainConfig fusion_train;
    int dataset_count = 24;
    uint64_t dataset_seed = 5;
};

/// Strict JSON loader: unknown keys and wrong value types are errors naming
/// the offending key. Absent keys keep the defaults above.
PipelineConfig load_pipeline_config(const std::string& path);

}  // namespace fpm

#endif
