#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fpm/fft.hpp"
#include "fpm/forward.hpp"
#include "fpm/pipeline.hpp"

namespace fs = std::filesystem;
using fpm::ComplexImage;
using fpm::IntensityStack;
using fpm::OpticalConfig;
using fpm::RealImage;

namespace {

// Same widened-pitch geometry as the recon suite: neighbor LEDs land about
// one pixel apart on the 32-px spectrum.
OpticalConfig small_config() {
    OpticalConfig cfg;
    cfg.hr_size = 32;
    cfg.led_pitch = 8e-3;
    cfg.led_grid = 5;
    return cfg;
}

ComplexImage textured_object(int n, double amp_scale = 1.0) {
    ComplexImage obj(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            double amp =
                amp_scale *
                (0.7 + 0.2 * std::sin(2.0 * M_PI * r / 7.0) * std::cos(2.0 * M_PI * c / 5.0));
            double ph = 0.4 * std::sin(2.0 * M_PI * (r + c) / 9.0);
            obj.at(r, c) = std::polar(amp, ph);
        }
    return obj;
}

IntensityStack small_stack(double amp_scale = 1.0) {
    OpticalConfig cfg = small_config();
    auto pats = fpm::ring_patterns(cfg.led_grid, 4);
    return fpm::simulate_capture(textured_object(cfg.hr_size, amp_scale), cfg, pats);
}

fpm::E2ENet small_e2e() {
    fpm::E2ENetSpec spec;
    spec.in_images = 4;
    spec.base_channels = 4;
    spec.depth = 2;
    spec.upsample_stages = 1;
    return fpm::make_e2e(spec, 7);
}

fpm::FusionNet small_fusion() {
    fpm::FusionNetSpec spec;
    spec.base_channels = 4;
    spec.layers = 3;
    return fpm::make_fusion(spec, 8);
}

fpm::ReconConfig quick_recon(int iterations) {
    fpm::ReconConfig rcfg;
    rcfg.iterations = iterations;
    rcfg.learning_rate = 5.0;
    return rcfg;
}

bool bitwise_equal(const ComplexImage& a, const ComplexImage& b) {
    if (a.height != b.height || a.width != b.width) return false;
    return std::memcmp(a.data.data(), b.data.data(),
                       a.data.size() * sizeof(a.data[0])) == 0;
}

template <typename F>
std::string thrown_message(F&& f) {
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

bool starts_with(const std::string& s, const std::string& prefix) {
    return s.rfind(prefix, 0) == 0;
}

std::vector<fpm::DatasetSample> two_tiles() {
    std::vector<fpm::DatasetSample> tiles(2);
    tiles[0].target = textured_object(32, 1.0);
    tiles[0].stack = small_stack(1.0);
    tiles[1].target = textured_object(32, 0.8);
    tiles[1].stack = small_stack(0.8);
    return tiles;
}

fs::path scratch_dir(const std::string& leaf) {
    fs::path dir = fs::temp_directory_path() / "fpm_pipeline_scratch" / leaf;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(bool(f));
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) out.push_back(line);
    return out;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

struct EnvGuard {
    explicit EnvGuard(const char* name) : name_(name) { unsetenv(name); }
    ~EnvGuard() { unsetenv(name_); }
    void set(const char* value) { setenv(name_, value, 1); }
    const char* name_;
};

fs::path write_config(const std::string& leaf, const std::string& body) {
    fs::path p = scratch_dir("configs") / leaf;
    std::ofstream f(p, std::ios::binary);
    f << body;
    return p;
}

}  // namespace

TEST_CASE("run_hybrid is the bitwise composition of its three stages") {
    IntensityStack stack = small_stack();
    fpm::E2ENet e2e = small_e2e();
    fpm::FusionNet fusion = small_fusion();
    fpm::ReconConfig rcfg = quick_recon(5);

    fpm::HybridRun run = fpm::run_hybrid(stack, e2e, fusion, rcfg);

    ComplexImage dl = fpm::forward_e2e(e2e, stack);
    fpm::FourierObjectLayer layer = fpm::init_from_prior(dl, stack.cfg);
    layer.origin = "dl";
    fpm::ReconResult pm = fpm::reconstruct(layer, stack, rcfg);
    ComplexImage fused = fpm::forward_fusion(fusion, dl, pm.estimate);

    CHECK(bitwise_equal(run.dl.estimate, dl));
    CHECK(bitwise_equal(run.pm.estimate, pm.estimate));
    CHECK(bitwise_equal(run.fused.estimate, fused));
    REQUIRE(run.pm.loss_trace.size() == pm.loss_trace.size());
    for (size_t i = 0; i < pm.loss_trace.size(); ++i)
        CHECK(run.pm.loss_trace[i] == pm.loss_trace[i]);

    CHECK(run.dl.stage_label == fpm::StageLabel::DL);
    CHECK(run.pm.stage_label == fpm::StageLabel::PM);
    CHECK(run.fused.stage_label == fpm::StageLabel::Fused);
    CHECK(run.dl.provenance == "e2e");
    CHECK(starts_with(run.pm.provenance, "init=dl;"));
    CHECK(run.pm.provenance == pm.provenance);
    CHECK(run.fused.provenance == "fusion(dl,pm)");

    CHECK(run.timings.dl_seconds >= 0.0);
    CHECK(run.timings.pm_seconds > 0.0);
    CHECK(run.timings.fused_seconds >= 0.0);
    CHECK(run.inputs.images.size() == stack.images.size());
    CHECK(run.rcfg.iterations == rcfg.iterations);
}

TEST_CASE("hybrid stage failures carry the stage tag") {
    IntensityStack stack = small_stack();
    fpm::FusionNet fusion = small_fusion();

    fpm::E2ENetSpec bad_spec;
    bad_spec.in_images = 3;  // stack has 4 patterns
    bad_spec.base_channels = 4;
    bad_spec.depth = 2;
    bad_spec.upsample_stages = 1;
    fpm::E2ENet wrong_depth_net = fpm::make_e2e(bad_spec, 7);
    std::string dl_msg = thrown_message(
        [&] { fpm::run_hybrid(stack, wrong_depth_net, fusion, quick_recon(2)); });
    CHECK(starts_with(dl_msg, "[DL] "));
    CHECK(dl_msg.find("in_images") != std::string::npos);

    fpm::E2ENet e2e = small_e2e();
    fpm::ReconConfig bad_rcfg;
    bad_rcfg.iterations = 0;
    std::string pm_msg =
        thrown_message([&] { fpm::run_hybrid(stack, e2e, fusion, bad_rcfg); });
    CHECK(starts_with(pm_msg, "[PM] "));
    CHECK(pm_msg.find("iterations") != std::string::npos);

    fpm::FusionNet gutted = fusion;
    gutted.params.clear();
    gutted.names.clear();
    std::string fused_msg =
        thrown_message([&] { fpm::run_hybrid(stack, e2e, gutted, quick_recon(2)); });
    CHECK(starts_with(fused_msg, "[FUSED] "));
}

TEST_CASE("run_ablation reports five cases in fixed order, one row per tile") {
    auto tiles = two_tiles();
    fpm::E2ENet e2e = small_e2e();
    fpm::FusionNet fusion = small_fusion();
    fpm::ReconConfig rcfg = quick_recon(3);

    fpm::AblationResult res = fpm::run_ablation(tiles, e2e, fusion, rcfg);
    REQUIRE(res.cases.size() == 5);
    const char* expected[] = {"dl", "pm", "fused(dl+dl)", "fused(pm+pm)", "fused(dl+pm)"};
    for (size_t i = 0; i < 5; ++i) {
        CHECK(res.cases[i].name == expected[i]);
        REQUIRE(res.cases[i].report.rows.size() == tiles.size());
        CHECK(res.cases[i].report.rows[0].name == "tile_0000");
        CHECK(res.cases[i].report.rows[1].name == "tile_0001");
        for (const auto& row : res.cases[i].report.rows) {
            CHECK(std::isfinite(row.psnr_db));
            CHECK(row.psnr_db >= 0.0);
            CHECK(row.psnr_db <= 99.0);
            CHECK(row.ssim >= -1.0);
            CHECK(row.ssim <= 1.0);
        }
        double mean_psnr = 0.0;
        for (const auto& row : res.cases[i].report.rows) mean_psnr += row.psnr_db;
        mean_psnr /= static_cast<double>(res.cases[i].report.rows.size());
        CHECK(res.cases[i].report.aggregate.psnr_db == doctest::Approx(mean_psnr).epsilon(1e-12));
    }

    // Zero-initialized fusion returns pm unchanged, so the (dl,pm) fused row
    // must score exactly like pm; same for (dl,dl) against dl.
    CHECK(res.cases[4].report.aggregate.psnr_db == res.cases[1].report.aggregate.psnr_db);
    CHECK(res.cases[4].report.aggregate.ssim == res.cases[1].report.aggregate.ssim);
    CHECK(res.cases[2].report.aggregate.psnr_db == res.cases[0].report.aggregate.psnr_db);

    fpm::AblationResult again = fpm::run_ablation(tiles, e2e, fusion, rcfg);
    for (size_t i = 0; i < 5; ++i) {
        CHECK(again.cases[i].report.aggregate.psnr_db == res.cases[i].report.aggregate.psnr_db);
        CHECK(again.cases[i].report.aggregate.ssim == res.cases[i].report.aggregate.ssim);
    }
}

TEST_CASE("ablation results do not depend on the thread budget") {
    auto tiles = two_tiles();
    fpm::E2ENet e2e = small_e2e();
    fpm::FusionNet fusion = small_fusion();
    fpm::ReconConfig rcfg = quick_recon(2);

    EnvGuard guard("FPM_THREADS");
    guard.set("1");
    fpm::AblationResult serial = fpm::run_ablation(tiles, e2e, fusion, rcfg);
    guard.set("3");
    fpm::AblationResult threaded = fpm::run_ablation(tiles, e2e, fusion, rcfg);
    REQUIRE(serial.cases.size() == threaded.cases.size());
    for (size_t i = 0; i < serial.cases.size(); ++i) {
        REQUIRE(serial.cases[i].report.rows.size() == threaded.cases[i].report.rows.size());
        for (size_t r = 0; r < serial.cases[i].report.rows.size(); ++r) {
            CHECK(serial.cases[i].report.rows[r].psnr_db ==
                  threaded.cases[i].report.rows[r].psnr_db);
            CHECK(serial.cases[i].report.rows[r].ssim == threaded.cases[i].report.rows[r].ssim);
        }
    }
}

TEST_CASE("emit_report writes the hybrid file set and is byte-stable") {
    IntensityStack stack = small_stack();
    fpm::E2ENet e2e = small_e2e();
    fpm::FusionNet fusion = small_fusion();
    fpm::HybridRun run = fpm::run_hybrid(stack, e2e, fusion, quick_recon(4));
    ComplexImage truth = textured_object(32);

    fs::path dir = scratch_dir("hybrid_report");
    auto paths = fpm::emit_report(run, dir.string(), &truth);
    REQUIRE(paths.size() == 6);
    CHECK(fs::path(paths[0]).filename() == "dl_amplitude.png");
    CHECK(fs::path(paths[1]).filename() == "pm_amplitude.png");
    CHECK(fs::path(paths[2]).filename() == "fused_amplitude.png");
    CHECK(fs::path(paths[3]).filename() == "loss_trace.csv");
    CHECK(fs::path(paths[4]).filename() == "metrics.csv");
    CHECK(fs::path(paths[5]).filename() == "summary.txt");
    for (const auto& p : paths) {
        CAPTURE(p);
        REQUIRE(fs::exists(p));
        CHECK(fs::file_size(p) > 0);
    }

    auto trace_lines = lines_of(slurp(paths[3]));
    REQUIRE(trace_lines.size() == 1 + run.pm.loss_trace.size());
    CHECK(trace_lines[0] == "iteration,loss");
    CHECK(starts_with(trace_lines[1], "0,"));

    auto metric_lines = lines_of(slurp(paths[4]));
    REQUIRE(metric_lines.size() == 4);
    CHECK(metric_lines[0] == "name,psnr_db,ssim");
    const char* stage_names[] = {"dl", "pm", "fused"};
    std::string summary = slurp(paths[5]);
    for (int i = 0; i < 3; ++i) {
        auto cells = split_csv(metric_lines[1 + i]);
        REQUIRE(cells.size() == 3);
        CHECK(cells[0] == stage_names[i]);
        // The summary must quote the exact same formatted values as the CSV.
        std::string quoted = cells[0] + ": psnr_db=" + cells[1] + " ssim=" + cells[2];
        CAPTURE(quoted);
        CHECK(summary.find(quoted) != std::string::npos);
    }

    std::vector<std::string> before;
    for (const auto& p : paths) before.push_back(slurp(p));
    auto paths2 = fpm::emit_report(run, dir.string(), &truth);
    REQUIRE(paths2 == paths);
    for (size_t i = 0; i < paths.size(); ++i) CHECK(slurp(paths[i]) == before[i]);

    fs::path dir2 = scratch_dir("hybrid_report_no_truth");
    auto paths3 = fpm::emit_report(run, dir2.string());
    REQUIRE(paths3.size() == 5);
    for (const auto& p : paths3) CHECK(fs::path(p).filename() != "metrics.csv");
}

TEST_CASE("emit_report writes the ablation table in case order") {
    auto tiles = two_tiles();
    fpm::AblationResult res =
        fpm::run_ablation(tiles, small_e2e(), small_fusion(), quick_recon(2));

    fs::path dir = scratch_dir("ablation_report");
    auto paths = fpm::emit_report(res, dir.string());
    REQUIRE(paths.size() == 2);
    CHECK(fs::path(paths[0]).filename() == "ablation.csv");
    CHECK(fs::path(paths[1]).filename() == "summary.txt");

    auto csv_lines = lines_of(slurp(paths[0]));
    REQUIRE(csv_lines.size() == 6);
    CHECK(csv_lines[0] == "name,psnr_db,ssim");
    const char* expected[] = {"dl", "pm", "fused(dl+dl)", "fused(pm+pm)", "fused(dl+pm)"};
    std::string summary = slurp(paths[1]);
    CHECK(summary.find("over 2 tiles") != std::string::npos);
    for (int i = 0; i < 5; ++i) {
        auto cells = split_csv(csv_lines[1 + i]);
        REQUIRE(cells.size() == 3);
        CHECK(cells[0] == expected[i]);
        std::string quoted = cells[0] + ": psnr_db=" + cells[1] + " ssim=" + cells[2];
        CHECK(summary.find(quoted) != std::string::npos);
    }

    std::string before = slurp(paths[0]);
    fpm::emit_report(res, dir.string());
    CHECK(slurp(paths[0]) == before);
}

TEST_CASE("parallel_for covers every index exactly once and rethrows") {
    EnvGuard guard("FPM_THREADS");

    for (const char* budget : {"1", "3"}) {
        guard.set(budget);
        std::vector<int> hits(100, 0);
        fpm::parallel_for(hits.size(), [&](size_t i) { hits[i] += 1; });
        for (int h : hits) CHECK(h == 1);
    }

    bool called = false;
    fpm::parallel_for(0, [&](size_t) { called = true; });
    CHECK_FALSE(called);

    guard.set("4");
    std::string msg = thrown_message([&] {
        fpm::parallel_for(32, [](size_t i) {
            if (i == 5) throw std::runtime_error("boom at five");
        });
    });
    CHECK(msg.find("boom at five") != std::string::npos);
}

TEST_CASE("thread_budget parses FPM_THREADS strictly") {
    EnvGuard guard("FPM_THREADS");
    CHECK(fpm::thread_budget() >= 1);

    guard.set("7");
    CHECK(fpm::thread_budget() == 7);
    guard.set("1");
    CHECK(fpm::thread_budget() == 1);

    for (const char* bad : {"0", "-2", "abc", "3x", "", "2000"}) {
        guard.set(bad);
        CAPTURE(bad);
        CHECK_THROWS_AS(fpm::thread_budget(), std::runtime_error);
    }
}

TEST_CASE("load_pipeline_config keeps defaults for absent keys") {
    fs::path p = write_config("empty.json", "{}");
    fpm::PipelineConfig cfg = fpm::load_pipeline_config(p.string());
    CHECK(cfg.optics.hr_size == 128);
    CHECK(cfg.optics.led_grid == 11);
    CHECK(cfg.pattern_count == 10);
    CHECK(cfg.recon.iterations == 300);
    CHECK(cfg.recon.loss_domain == fpm::LossDomain::Intensity);
    CHECK(cfg.e2e.in_images == 10);
    CHECK(cfg.e2e_init_seed == 11);
    CHECK(cfg.fusion.layers == 3);
    CHECK(cfg.fusion_init_seed == 12);
    CHECK(cfg.e2e_train.epochs == 50);
    CHECK(cfg.dataset_count == 24);
    CHECK(cfg.dataset_seed == 5);
}

TEST_CASE("load_pipeline_config applies every block") {
    const char* body = R"({
        "optics": {"wavelength": 5.2e-7, "na": 0.12, "magnification": 8.0,
                   "camera_pixel": 3.2e-6, "upsample": 2, "hr_size": 64,
                   "led_pitch": 5e-3, "led_distance": 9e-2, "led_grid": 7},
        "patterns": {"count": 6},
        "recon": {"iterations": 25, "learning_rate": 0.5,
                  "final_learning_rate": 0.1, "loss_domain": "amplitude",
                  "log_every": 5},
        "e2e": {"in_images": 6, "base_channels": 8, "depth": 3,
                "upsample_stages": 2, "init_seed": 21},
        "train_e2e": {"epochs": 4, "learning_rate": 0.002, "seed": 3,
                      "curriculum": true},
        "fusion": {"base_channels": 16, "layers": 4, "init_seed": 22},
        "train_fusion": {"epochs": 2, "learning_rate": 0.001, "seed": 4},
        "dataset": {"count": 10, "seed": 77}
    })";
    fpm::PipelineConfig cfg = fpm::load_pipeline_config(write_config("full.json", body).string());
    CHECK(cfg.optics.wavelength == doctest::Approx(5.2e-7));
    CHECK(cfg.optics.na == doctest::Approx(0.12));
    CHECK(cfg.optics.magnification == doctest::Approx(8.0));
    CHECK(cfg.optics.camera_pixel == doctest::Approx(3.2e-6));
    CHECK(cfg.optics.upsample == 2);
    CHECK(cfg.optics.hr_size == 64);
    CHECK(cfg.optics.led_pitch == doctest::Approx(5e-3));
    CHECK(cfg.optics.led_distance == doctest::Approx(9e-2));
    CHECK(cfg.optics.led_grid == 7);
    CHECK(cfg.pattern_count == 6);
    CHECK(cfg.recon.iterations == 25);
    CHECK(cfg.recon.learning_rate == doctest::Approx(0.5));
    CHECK(cfg.recon.final_learning_rate == doctest::Approx(0.1));
    CHECK(cfg.recon.loss_domain == fpm::LossDomain::Amplitude);
    CHECK(cfg.recon.log_every == 5);
    CHECK(cfg.e2e.in_images == 6);
    CHECK(cfg.e2e.base_channels == 8);
    CHECK(cfg.e2e.depth == 3);
    CHECK(cfg.e2e.upsample_stages == 2);
    CHECK(cfg.e2e_init_seed == 21);
    CHECK(cfg.e2e_train.epochs == 4);
    CHECK(cfg.e2e_train.learning_rate == doctest::Approx(0.002));
    CHECK(cfg.e2e_train.seed == 3);
    CHECK(cfg.e2e_train.curriculum);
    CHECK(cfg.fusion.base_channels == 16);
    CHECK(cfg.fusion.layers == 4);
    CHECK(cfg.fusion_init_seed == 22);
    CHECK(cfg.fusion_train.epochs == 2);
    CHECK(cfg.fusion_train.learning_rate == doctest::Approx(0.001));
    CHECK(cfg.fusion_train.seed == 4);
    CHECK_FALSE(cfg.fusion_train.curriculum);
    CHECK(cfg.dataset_count == 10);
    CHECK(cfg.dataset_seed == 77);
}

TEST_CASE("load_pipeline_config rejects unknown keys and bad types by name") {
    auto load_err = [](const std::string& leaf, const std::string& body) {
        fs::path p = write_config(leaf, body);
        return thrown_message([&] { fpm::load_pipeline_config(p.string()); });
    };

    CHECK(load_err("unk_top.json", R"({"turbo": {}})").find("config.turbo") !=
          std::string::npos);
    CHECK(load_err("unk_nested.json", R"({"optics": {"tilt": 1}})").find("optics.tilt") !=
          std::string::npos);
    CHECK(load_err("frac_iters.json", R"({"recon": {"iterations": 12.5}})")
              .find("must be an integer") != std::string::npos);
    CHECK(load_err("bad_bool.json", R"({"train_e2e": {"curriculum": 1}})")
              .find("must be a boolean") != std::string::npos);
    CHECK(load_err("bad_domain.json", R"({"recon": {"loss_domain": "power"}})")
              .find("intensity") != std::string::npos);
    CHECK(load_err("bad_num.json", R"({"optics": {"wavelength": "blue"}})")
              .find("must be a number") != std::string::npos);
    CHECK(load_err("neg_seed.json", R"({"e2e": {"init_seed": -4}})")
              .find("non-negative") != std::string::npos);
    CHECK(load_err("bad_semantic.json", R"({"optics": {"hr_size": 0}})") != "");
    CHECK(load_err("top_array.json", "[]").find("top level") != std::string::npos);
    CHECK(load_err("not_json.json", "{oops").find("config:") != std::string::npos);

    std::string missing =
        thrown_message([&] { fpm::load_pipeline_config("/nonexistent/p.json"); });
    CHECK(missing.find("cannot open") != std::string::npos);
}
