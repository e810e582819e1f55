// fpm: command-line front end for the simulation, training, reconstruction,
// and reporting pipeline. Every subcommand reads its defaults from an
// optional JSON manifest (--config); explicit flags override file values.
// All outputs are byte-deterministic for fixed seeds; wall-clock diagnostics
// go to stderr only.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fpm/dataset.hpp"
#include "fpm/fft.hpp"
#include "fpm/forward.hpp"
#include "fpm/io.hpp"
#include "fpm/nets.hpp"
#include "fpm/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

fpm::PipelineConfig config_or_default(const std::string& path) {
    if (path.empty()) return fpm::PipelineConfig{};
    return fpm::load_pipeline_config(path);
}

std::string fmt(double v) {
    char b[64];
    std::snprintf(b, sizeof b, "%.12g", v);
    return b;
}

void note_written(const std::string& path) { std::cout << "wrote " << path << "\n"; }

/// "builtin:usaf" renders the procedural phantom at the configured HR size;
/// anything else is an FPMC path.
fpm::ComplexImage load_object(const std::string& spec, int hr_size) {
    if (spec == "builtin:usaf") {
        fpm::RealImage amp = fpm::usaf_phantom(hr_size).amplitude;
        fpm::ComplexImage obj(amp.height, amp.width);
        for (size_t i = 0; i < amp.size(); ++i) obj.data[i] = {amp.data[i], 0.0};
        return obj;
    }
    return fpm::read_complex_image(spec);
}

/// Accepts FPMR directly or FPMC via its amplitude; dispatches on magic.
fpm::RealImage load_gray(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    char magic[4] = {};
    f.read(magic, 4);
    std::string m(magic, 4);
    if (m == "FPMR") return fpm::read_real_image(path);
    if (m == "FPMC") return fpm::amplitude(fpm::read_complex_image(path));
    throw std::runtime_error(path + ": unsupported image format (want FPMR or FPMC)");
}

fpm::BBox parse_bbox(const std::string& text) {
    fpm::BBox b;
    char extra = 0;
    if (std::sscanf(text.c_str(), "%d,%d,%d,%d%c", &b.x, &b.y, &b.w, &b.h, &extra) != 4)
        throw std::runtime_error("bad --roi '" + text + "' (want x,y,w,h)");
    return b;
}

std::vector<fpm::DatasetSample> take_split(const fpm::Dataset& ds, fpm::Split which) {
    std::vector<fpm::DatasetSample> out;
    for (size_t i = 0; i < ds.samples.size(); ++i)
        if (ds.split[i] == which) out.push_back(ds.samples[i]);
    return out;
}

void write_history(const std::string& path, const fpm::TrainHistory& hist) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "epoch,loss,phase\n";
    for (size_t i = 0; i < hist.epoch_loss.size(); ++i) {
        int phase = hist.phase_boundary >= 0 && i >= static_cast<size_t>(hist.phase_boundary)
                        ? 1
                        : 0;
        char b[64];
        std::snprintf(b, sizeof b, "%.17g", hist.epoch_loss[i]);
        f << i << "," << b << "," << phase << "\n";
    }
    if (!f.flush()) throw std::runtime_error("write failed for " + path);
}

/// Stage-2 data generation shared by train-fusion: one DL-seeded physics
/// reconstruction per training sample, tiles in parallel.
std::vector<fpm::FusionSample> build_fusion_samples(const std::vector<fpm::DatasetSample>& samples,
                                                    const fpm::E2ENet& e2e,
                                                    const fpm::ReconConfig& rcfg) {
    std::vector<fpm::FusionSample> out(samples.size());
    fpm::parallel_for(samples.size(), [&](size_t i) {
        fpm::ComplexImage dl = fpm::forward_e2e(e2e, samples[i].stack);
        fpm::FourierObjectLayer layer = fpm::init_from_prior(dl, samples[i].stack.cfg);
        layer.origin = "dl";
        fpm::ReconResult pm = fpm::reconstruct(std::move(layer), samples[i].stack, rcfg);
        out[i] = fpm::FusionSample{std::move(dl), std::move(pm.estimate), samples[i].target};
    });
    return out;
}

struct CommonArgs {
    std::string config;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multiplexed-illumination Fourier ptychography toolkit"};
    app.require_subcommand(1);

    // simulate ------------------------------------------------------------
    auto* sim = app.add_subcommand("simulate", "Render a capture stack from an object");
    CommonArgs sim_args;
    std::string sim_object = "builtin:usaf";
    std::string sim_out, sim_truth;
    double sim_sigma = 0.0, sim_photons = 0.0;
    uint64_t sim_noise_seed = 0;
    sim->add_option("--config", sim_args.config, "JSON manifest");
    sim->add_option("--object", sim_object, "FPMC path or builtin:usaf");
    sim->add_option("--out", sim_out, "output stack (FPMS)")->required();
    sim->add_option("--truth", sim_truth, "also write the HR object (FPMC)");
    sim->add_option("--gaussian-sigma", sim_sigma, "additive noise sigma, intensity units");
    sim->add_option("--photons", sim_photons, "Poisson photon budget at stack peak, 0 = off");
    sim->add_option("--noise-seed", sim_noise_seed, "noise stream seed");
    sim->callback([&] {
        fpm::PipelineConfig cfg = config_or_default(sim_args.config);
        fpm::ComplexImage obj = load_object(sim_object, cfg.optics.hr_size);
        auto patterns = fpm::ring_patterns(cfg.optics.led_grid, cfg.pattern_count);
        std::optional<fpm::NoiseSpec> noise;
        if (sim_sigma > 0.0 || sim_photons > 0.0)
            noise = fpm::NoiseSpec{sim_sigma, sim_photons, sim_noise_seed};
        fpm::IntensityStack stack = fpm::simulate_capture(obj, cfg.optics, patterns, noise);
        fpm::write_stack(sim_out, stack);
        note_written(sim_out);
        if (!sim_truth.empty()) {
            fpm::write_complex_image(sim_truth, obj);
            note_written(sim_truth);
        }
    });

    // augment ---------------------------------------------------------------
    auto* aug = app.add_subcommand("augment", "Preview augmented composites of a source image");
    std::string aug_image, aug_out_dir;
    std::vector<std::string> aug_rois;
    int aug_count = 8;
    uint64_t aug_seed = 0;
    aug->add_option("--image", aug_image, "source image (FPMR or FPMC)")->required();
    aug->add_option("--roi", aug_rois, "ROI as x,y,w,h (repeatable)");
    aug->add_option("--count", aug_count, "number of composites")->check(CLI::PositiveNumber);
    aug->add_option("--seed", aug_seed, "augmentation seed");
    aug->add_option("--out-dir", aug_out_dir, "output directory")->required();
    aug->callback([&] {
        fpm::SourceImage source;
        source.gt = load_gray(aug_image);
        for (const auto& r : aug_rois) source.rois.push_back(parse_bbox(r));
        fs::create_directories(aug_out_dir);
        std::string manifest = "name,roi_count\n";
        for (int i = 0; i < aug_count; ++i) {
            fpm::Rng rng = fpm::Rng(aug_seed).fork(static_cast<uint64_t>(i));
            fpm::AugmentedScene scene = fpm::augment_scene(source, rng);
            char name[32];
            std::snprintf(name, sizeof name, "scene_%04d", i);
            fs::path base = fs::path(aug_out_dir) / name;
            fpm::write_real_image(base.string() + ".fpmr", scene.scene);
            double hi = 0.0;
            for (double v : scene.scene.data) hi = std::max(hi, v);
            fpm::write_png_gray(base.string() + ".png", scene.scene, 0.0,
                                hi > 0.0 ? hi : 1.0);
            note_written(base.string() + ".fpmr");
            manifest += std::string(name) + "," + std::to_string(scene.roi_count) + "\n";
        }
        fs::path mpath = fs::path(aug_out_dir) / "manifest.csv";
        std::ofstream mf(mpath, std::ios::binary | std::ios::trunc);
        if (!mf) throw std::runtime_error("cannot write " + mpath.string());
        mf << manifest;
        note_written(mpath.string());
    });

    // make-dataset ----------------------------------------------------------
    auto* mkds = app.add_subcommand("make-dataset", "Generate a simulated train/val/test dataset");
    CommonArgs mkds_args;
    std::string mkds_out_dir, mkds_source;
    std::vector<std::string> mkds_rois;
    int mkds_count = -1;
    int64_t mkds_seed = -1;
    mkds->add_option("--config", mkds_args.config, "JSON manifest");
    mkds->add_option("--out-dir", mkds_out_dir, "dataset directory")->required();
    mkds->add_option("--source", mkds_source, "source image (FPMR/FPMC); default builtin phantom");
    mkds->add_option("--roi", mkds_rois, "source ROI as x,y,w,h (repeatable)");
    mkds->add_option("--count", mkds_count, "sample count (overrides config)");
    mkds->add_option("--seed", mkds_seed, "dataset seed (overrides config)");
    mkds->callback([&] {
        fpm::PipelineConfig cfg = config_or_default(mkds_args.config);
        if (mkds_count >= 0) cfg.dataset_count = mkds_count;
        if (mkds_seed >= 0) cfg.dataset_seed = static_cast<uint64_t>(mkds_seed);
        fpm::SourceImage source;
        if (mkds_source.empty()) {
            fpm::Phantom ph = fpm::usaf_phantom(cfg.optics.hr_size);
            source.gt = std::move(ph.amplitude);
            source.rois = std::move(ph.rois);
        } else {
            source.gt = load_gray(mkds_source);
            for (const auto& r : mkds_rois) source.rois.push_back(parse_bbox(r));
        }
        auto patterns = fpm::ring_patterns(cfg.optics.led_grid, cfg.pattern_count);
        fpm::Dataset ds =
            fpm::generate_dataset({source}, cfg.optics, patterns, cfg.dataset_count,
                                  cfg.dataset_seed);
        fpm::save_dataset(mkds_out_dir, ds);
        note_written(mkds_out_dir);
    });

    // train-e2e -------------------------------------------------------------
    auto* te = app.add_subcommand("train-e2e", "Train the end-to-end reconstruction network");
    CommonArgs te_args;
    std::string te_dataset, te_out, te_history;
    int te_epochs = -1;
    double te_lr = -1.0;
    int64_t te_seed = -1;
    bool te_curriculum = false;
    te->add_option("--config", te_args.config, "JSON manifest");
    te->add_option("--dataset", te_dataset, "dataset directory")->required();
    te->add_option("--epochs", te_epochs, "epochs (per phase when curriculum)");
    te->add_option("--lr", te_lr, "Adam learning rate");
    te->add_option("--seed", te_seed, "shuffle seed");
    auto* te_cur = te->add_flag("--curriculum", te_curriculum, "simple-then-complex schedule");
    te->add_option("--out", te_out, "output weights (FPMW)")->required();
    te->add_option("--history", te_history, "per-epoch loss CSV");
    te->callback([&] {
        fpm::PipelineConfig cfg = config_or_default(te_args.config);
        if (te_epochs > 0) cfg.e2e_train.epochs = te_epochs;
        if (te_lr > 0.0) cfg.e2e_train.learning_rate = te_lr;
        if (te_seed >= 0) cfg.e2e_train.seed = static_cast<uint64_t>(te_seed);
        if (te_cur->count() > 0) cfg.e2e_train.curriculum = te_curriculum;
        fpm::Dataset ds = fpm::load_dataset(te_dataset);
        auto train = take_split(ds, fpm::Split::Train);
        if (train.empty()) throw std::runtime_error("train-e2e: dataset has no train samples");
        fpm::E2ENet net = fpm::make_e2e(cfg.e2e, cfg.e2e_init_seed);
        fpm::TrainHistory hist = fpm::train_e2e(net, train, cfg.e2e_train);
        fpm::save_params(net, te_out);
        note_written(te_out);
        if (!te_history.empty()) {
            write_history(te_history, hist);
            note_written(te_history);
        }
        std::cout << "final epoch loss " << fmt(hist.epoch_loss.back()) << "\n";
    });

    // train-fusion ----------------------------------------------------------
    auto* tf = app.add_subcommand("train-fusion", "Train the fusion network on DL/PM pairs");
    CommonArgs tf_args;
    std::string tf_dataset, tf_e2e, tf_out, tf_history;
    int tf_epochs = -1;
    double tf_lr = -1.0;
    int64_t tf_seed = -1;
    tf->add_option("--config", tf_args.config, "JSON manifest");
    tf->add_option("--dataset", tf_dataset, "dataset directory")->required();
    tf->add_option("--e2e", tf_e2e, "trained end-to-end weights (FPMW)")->required();
    tf->add_option("--epochs", tf_epochs, "epochs");
    tf->add_option("--lr", tf_lr, "Adam learning rate");
    tf->add_option("--seed", tf_seed, "shuffle seed");
    tf->add_option("--out", tf_out, "output weights (FPMW)")->required();
    tf->add_option("--history", tf_history, "per-epoch loss CSV");
    tf->callback([&] {
        fpm::PipelineConfig cfg = config_or_default(tf_args.config);
        if (tf_epochs > 0) cfg.fusion_train.epochs = tf_epochs;
        if (tf_lr > 0.0) cfg.fusion_train.learning_rate = tf_lr;
        if (tf_seed >= 0) cfg.fusion_train.seed = static_cast<uint64_t>(tf_seed);
        fpm::Dataset ds = fpm::load_dataset(tf_dataset);
        auto train = take_split(ds, fpm::Split::Train);
        if (train.empty()) throw std::runtime_error("train-fusion: dataset has no train samples");
        fpm::E2ENet e2e = fpm::load_e2e(tf_e2e);
        auto pairs = build_fusion_samples(train, e2e, cfg.recon);
        fpm::FusionNet net = fpm::make_fusion(cfg.fusion, cfg.fusion_init_seed);
        fpm::TrainHistory hist = fpm::train_fusion(net, pairs, cfg.fusion_train);
        fpm::save_params(net, tf_out);
        note_written(tf_out);
        if (!tf_history.empty()) {
            write_history(tf_history, hist);
            note_written(tf_history);
        }
        std::cout << "final epoch loss " << fmt(hist.epoch_loss.back()) << "\n";
    });

    // reconstruct -----------------------------------------------------------
    auto* rec = app.add_subcommand("reconstruct", "Physics-based iterative reconstruction");
    CommonArgs rec_args;
    std::string rec_stack, rec_init = "central", rec_out, rec_trace, rec_domain;
    int rec_iters = -1, rec_central_index = 0;
    double rec_lr = -1.0, rec_final_lr = -1.0;
    rec->add_option("--config", rec_args.config, "JSON manifest");
    rec->add_option("--stack", rec_stack, "capture stack (FPMS)")->required();
    rec->add_option("--init", rec_init, "central or prior:<FPMC path>");
    rec->add_option("--central-index", rec_central_index, "pattern index firing the center LED");
    rec->add_option("--iters", rec_iters, "iteration count");
    rec->add_option("--lr", rec_lr, "Adam learning rate");
    rec->add_option("--final-lr", rec_final_lr, "geometric decay endpoint, 0 disables");
    rec->add_option("--domain", rec_domain, "loss domain: intensity or amplitude");
    rec->add_option("--out", rec_out, "estimate output (FPMC)")->required();
    rec->add_option("--trace", rec_trace, "loss trace CSV");
    rec->callback([&] {
        fpm::PipelineConfig cfg = config_or_default(rec_args.config);
        if (rec_iters > 0) cfg.recon.iterations = rec_iters;
        if (rec_lr > 0.0) cfg.recon.learning_rate = rec_lr;
        if (rec_final_lr >= 0.0) cfg.recon.final_learning_rate = rec_final_lr;
        if (!rec_domain.empty()) {
            if (rec_domain == "intensity")
                cfg.recon.loss_domain = fpm::LossDomain::Intensity;
            else if (rec_domain == "amplitude")
                cfg.recon.loss_domain = fpm::LossDomain::Amplitude;
            else
                throw std::runtime_error("--domain must be intensity or amplitude");
        }
        fpm::IntensityStack stack = fpm::read_stack(rec_stack);
        fpm::FourierObjectLayer layer;
        if (rec_init == "central") {
            layer = fpm::init_from_central(stack, rec_central_index);
        } else if (rec_init.rfind("prior:", 0) == 0) {
            fpm::ComplexImage prior = fpm::read_complex_image(rec_init.substr(6));
            layer = fpm::init_from_prior(prior, stack.cfg);
        } else {
            throw std::runtime_error("--init must be central or prior:<path>");
        }
        fpm::ReconResult res = fpm::reconstruct(std::move(layer), stack, cfg.recon);
        fpm::write_complex_image(rec_out, res.estimate);
        note_written(rec_out);
        if (!rec_trace.empty()) {
            std::ofstream f(rec_trace, std::ios::binary | std::ios::trunc);
            if (!f) throw std::runtime_error("cannot write " + rec_trace);
            f << "iteration,loss\n";
            for (size_t i = 0; i < res.loss_trace.size(); ++i) {
                char b[64];
                std::snprintf(b, sizeof b, "%.17g", res.loss_trace[i]);
                f << i << "," << b << "\n";
            }
            note_written(rec_trace);
        }
        std::cout << "provenance " << res.provenance << "\n";
        std::cout << "final loss " << fmt(res.loss_trace.back()) << "\n";
    });

    // hybrid ------------------------------------------------------------
    auto* hyb = app.add_subcommand("hybrid", "Three-stage hybrid reconstruction with report");
    CommonArgs hyb_args;
    std::string hyb_stack, hyb_e2e, hyb_fusion, hyb_out_dir, hyb_truth;
    hyb->add_option("--config", hyb_args.config, "JSON manifest");
    hyb->add_option("--stack", hyb_stack, "capture stack (FPMS)")->required();
    hyb->add_option("--e2e", hyb_e2e, "end-to-end weights (FPMW)")->required();
    hyb->add_option("--fusion", hyb_fusion, "fusion weights (FPMW)")->required();
    hyb->add_option("--out-dir", hyb_out_dir, "report directory")->required();
    hyb->add_option("--truth", hyb_truth, "ground truth (FPMC) for metrics");
    hyb->callback([&] {
        fpm::PipelineConfig cfg = config_or_default(hyb_args.config);
        fpm::IntensityStack stack = fpm::read_stack(hyb_stack);
        fpm::E2ENet e2e = fpm::load_e2e(hyb_e2e);
        fpm::FusionNet fusion = fpm::load_fusion(hyb_fusion);
        fpm::HybridRun run = fpm::run_hybrid(stack, e2e, fusion, cfg.recon);
        std::optional<fpm::ComplexImage> truth;
        if (!hyb_truth.empty()) truth = fpm::read_complex_image(hyb_truth);
        auto paths = fpm::emit_report(run, hyb_out_dir, truth ? &*truth : nullptr);
        for (const auto& p : paths) note_written(p);
        std::cerr << "timings: dl " << run.timings.dl_seconds << " s, pm "
                  << run.timings.pm_seconds << " s, fused " << run.timings.fused_seconds
                  << " s\n";
    });

    // ablate ------------------------------------------------------------
    auto* abl = app.add_subcommand("ablate", "Five-way ablation over the dataset's test tiles");
    CommonArgs abl_args;
    std::string abl_dataset, abl_e2e, abl_fusion, abl_out_dir;
    abl->add_option("--config", abl_args.config, "JSON manifest");
    abl->add_option("--dataset", abl_dataset, "dataset directory")->required();
    abl->add_option("--e2e", abl_e2e, "end-to-end weights (FPMW)")->required();
    abl->add_option("--fusion", abl_fusion, "fusion weights (FPMW)")->required();
    abl->add_option("--out-dir", abl_out_dir, "report directory")->required();
    abl->callback([&] {
        fpm::PipelineConfig cfg = config_or_default(abl_args.config);
        fpm::Dataset ds = fpm::load_dataset(abl_dataset);
        auto tiles = take_split(ds, fpm::Split::Test);
        if (tiles.empty()) throw std::runtime_error("ablate: dataset has no test samples");
        fpm::E2ENet e2e = fpm::load_e2e(abl_e2e);
        fpm::FusionNet fusion = fpm::load_fusion(abl_fusion);
        fpm::AblationResult res = fpm::run_ablation(tiles, e2e, fusion, cfg.recon);
        auto paths = fpm::emit_report(res, abl_out_dir);
        for (const auto& p : paths) note_written(p);
        for (const auto& c : res.cases)
            std::cout << c.name << " psnr_db=" << fmt(c.report.aggregate.psnr_db)
                      << " ssim=" << fmt(c.report.aggregate.ssim) << "\n";
    });

    // metrics ---------------------------------------------------------------
    auto* met = app.add_subcommand("metrics", "PSNR/SSIM of a test image against a reference");
    std::string met_ref, met_test, met_csv;
    met->add_option("--ref", met_ref, "reference image (FPMR or FPMC)")->required();
    met->add_option("--test", met_test, "test image (FPMR or FPMC)")->required();
    met->add_option("--csv", met_csv, "output CSV")->required();
    met->callback([&] {
        fpm::RealImage ref = load_gray(met_ref);
        fpm::RealImage test = load_gray(met_test);
        fpm::MetricRow row{fs::path(met_test).stem().string(), fpm::psnr(test, ref),
                           fpm::ssim(test, ref)};
        std::ofstream f(met_csv, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + met_csv);
        f << "name,psnr_db,ssim\n"
          << row.name << "," << fmt(row.psnr_db) << "," << fmt(row.ssim) << "\n";
        note_written(met_csv);
        std::cout << row.name << " psnr_db=" << fmt(row.psnr_db) << " ssim=" << fmt(row.ssim)
                  << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "fpm: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
