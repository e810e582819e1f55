#include "fpm/pipeline.hpp"

#include <array>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <utility>

#include "json.hpp"

#include "fpm/fft.hpp"
#include "fpm/io.hpp"

namespace fpm {

namespace {

namespace fs = std::filesystem;
using clock_t_ = std::chrono::steady_clock;

double seconds_between(clock_t_::time_point a, clock_t_::time_point b) {
    return std::chrono::duration<double>(b - a).count();
}

template <typename F>
auto staged(const char* tag, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("[") + tag + "] " + e.what());
    }
}

// Reports quote doubles through these two forms only, so a summary line and
// its CSV twin are always byte-equal.
std::string fmt(double v) {
    char b[64];
    std::snprintf(b, sizeof b, "%.12g", v);
    return b;
}

std::string fmt_exact(double v) {
    char b[64];
    std::snprintf(b, sizeof b, "%.17g", v);
    return b;
}

void write_text(const fs::path& p, const std::string& body) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("emit_report: cannot write " + p.string());
    f << body;
    f.flush();
    if (!f) throw std::runtime_error("emit_report: write failed for " + p.string());
}

std::string stage_png(const fs::path& dir, const std::string& stem, const ComplexImage& est) {
    RealImage a = amplitude(est);
    double hi = 0.0;
    for (double v : a.data) hi = std::max(hi, v);
    if (hi <= 0.0) hi = 1.0;
    fs::path p = dir / (stem + "_amplitude.png");
    write_png_gray(p.string(), a, 0.0, hi);
    return p.string();
}

}  // namespace

HybridRun run_hybrid(const IntensityStack& stack, const E2ENet& e2e, const FusionNet& fusion,
                     const ReconConfig& rcfg) {
    HybridRun run;
    run.inputs = stack;
    run.rcfg = rcfg;

    auto t0 = clock_t_::now();
    run.dl = staged("DL", [&] {
        ReconResult r;
        r.estimate = forward_e2e(e2e, stack);
        r.stage_label = StageLabel::DL;
        r.provenance = "e2e";
        return r;
    });
    auto t1 = clock_t_::now();
    run.timings.dl_seconds = seconds_between(t0, t1);

    run.pm = staged("PM", [&] {
        FourierObjectLayer layer = init_from_prior(run.dl.estimate, stack.cfg);
        layer.origin = "dl";
        return reconstruct(std::move(layer), stack, rcfg);
    });
    auto t2 = clock_t_::now();
    run.timings.pm_seconds = seconds_between(t1, t2);

    run.fused = staged("FUSED", [&] {
        ReconResult r;
        r.estimate = forward_fusion(fusion, run.dl.estimate, run.pm.estimate);
        r.stage_label = StageLabel::Fused;
        r.provenance = "fusion(dl,pm)";
        return r;
    });
    run.timings.fused_seconds = seconds_between(t2, clock_t_::now());
    return run;
}

AblationResult run_ablation(const std::vector<DatasetSample>& tiles, const E2ENet& e2e,
                            const FusionNet& fusion, const ReconConfig& rcfg) {
    if (tiles.empty()) throw std::invalid_argument("run_ablation: empty test set");
    // Names stay comma-free so the ablation CSV needs no quoting.
    constexpr std::array<const char*, 5> kMethods = {"dl", "pm", "fused(dl+dl)", "fused(pm+pm)",
                                                     "fused(dl+pm)"};
    std::vector<std::array<MetricRow, 5>> per_tile(tiles.size());
    parallel_for(tiles.size(), [&](size_t i) {
        const DatasetSample& s = tiles[i];
        HybridRun run = run_hybrid(s.stack, e2e, fusion, rcfg);
        ComplexImage dldl = forward_fusion(fusion, run.dl.estimate, run.dl.estimate);
        ComplexImage pmpm = forward_fusion(fusion, run.pm.estimate, run.pm.estimate);
        RealImage truth = amplitude(s.target);
        char name[32];
        std::snprintf(name, sizeof name, "tile_%04zu", i);
        auto score = [&](const ComplexImage& est) {
            RealImage a = amplitude(est);
            return MetricRow{name, psnr(a, truth), ssim(a, truth)};
        };
        per_tile[i] = {score(run.dl.estimate), score(run.pm.estimate), score(dldl), score(pmpm),
                       score(run.fused.estimate)};
    });

    AblationResult out;
    for (size_t m = 0; m < kMethods.size(); ++m) {
        std::vector<MetricRow> rows;
        rows.reserve(tiles.size());
        for (const auto& t : per_tile) rows.push_back(t[m]);
        out.cases.push_back(AblationCase{kMethods[m], make_report(std::move(rows))});
    }
    return out;
}

std::vector<std::string> emit_report(const HybridRun& run, const std::string& out_dir,
                                     const ComplexImage* truth) {
    fs::path dir(out_dir);
    fs::create_directories(dir);
    std::vector<std::string> written;

    written.push_back(stage_png(dir, "dl", run.dl.estimate));
    written.push_back(stage_png(dir, "pm", run.pm.estimate));
    written.push_back(stage_png(dir, "fused", run.fused.estimate));

    std::string trace = "iteration,loss\n";
    for (size_t i = 0; i < run.pm.loss_trace.size(); ++i)
        trace += std::to_string(i) + "," + fmt_exact(run.pm.loss_trace[i]) + "\n";
    fs::path trace_path = dir / "loss_trace.csv";
    write_text(trace_path, trace);
    written.push_back(trace_path.string());

    const std::array<std::pair<const char*, const ReconResult*>, 3> stages = {
        std::pair{"dl", &run.dl}, std::pair{"pm", &run.pm}, std::pair{"fused", &run.fused}};

    // Metric strings are formatted once and reused verbatim in the summary.
    std::vector<std::array<std::string, 3>> metric_rows;
    if (truth) {
        RealImage t = amplitude(*truth);
        std::string csv = "name,psnr_db,ssim\n";
        for (const auto& [name, rr] : stages) {
            RealImage a = amplitude(rr->estimate);
            std::array<std::string, 3> row = {name, fmt(psnr(a, t)), fmt(ssim(a, t))};
            csv += row[0] + "," + row[1] + "," + row[2] + "\n";
            metric_rows.push_back(std::move(row));
        }
        fs::path metrics_path = dir / "metrics.csv";
        write_text(metrics_path, csv);
        written.push_back(metrics_path.string());
    }

    // Wall-clock timings stay on the in-memory HybridRun: report files must
    // be byte-identical across reruns of the same inputs.
    std::ostringstream sum;
    sum << "hybrid reconstruction\n";
    for (const auto& [name, rr] : stages)
        sum << name << ": " << rr->estimate.height << "x" << rr->estimate.width << " ["
            << rr->provenance << "]\n";
    if (!run.pm.loss_trace.empty())
        sum << "pm iterations: " << run.pm.loss_trace.size()
            << ", initial loss: " << fmt_exact(run.pm.loss_trace.front())
            << ", final loss: " << fmt_exact(run.pm.loss_trace.back()) << "\n";
    for (const auto& row : metric_rows)
        sum << row[0] << ": psnr_db=" << row[1] << " ssim=" << row[2] << "\n";
    fs::path sum_path = dir / "summary.txt";
    write_text(sum_path, sum.str());
    written.push_back(sum_path.string());
    return written;
}

std::vector<std::string> emit_report(const AblationResult& ablation, const std::string& out_dir) {
    fs::path dir(out_dir);
    fs::create_directories(dir);
    std::vector<std::string> written;

    std::string csv = "name,psnr_db,ssim\n";
    std::ostringstream sum;
    size_t tiles = ablation.cases.empty() ? 0 : ablation.cases.front().report.rows.size();
    sum << "ablation study over " << tiles << " tiles\n";
    for (const auto& c : ablation.cases) {
        std::string p = fmt(c.report.aggregate.psnr_db);
        std::string s = fmt(c.report.aggregate.ssim);
        csv += c.name + "," + p + "," + s + "\n";
        sum << c.name << ": psnr_db=" << p << " ssim=" << s << "\n";
    }
    fs::path csv_path = dir / "ablation.csv";
    write_text(csv_path, csv);
    written.push_back(csv_path.string());
    fs::path sum_path = dir / "summary.txt";
    write_text(sum_path, sum.str());
    written.push_back(sum_path.string());
    return written;
}

int thread_budget() {
    if (const char* env = std::getenv("FPM_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1 || v > 1024)
            throw std::runtime_error("FPM_THREADS must be an integer in [1, 1024]");
        return static_cast<int>(v);
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
    if (n == 0) return;
    size_t budget = std::min(static_cast<size_t>(thread_budget()), n);
    if (budget <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    auto worker = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= n) return;
            {
                std::lock_guard<std::mutex> lk(err_mu);
                if (err) return;
            }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!err) err = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(budget);
    for (size_t t = 0; t < budget; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

namespace {

using nlohmann::json;

void expect_keys(const json& obj, const std::string& where,
                 std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw std::runtime_error("config: unknown key '" + where + "." + key + "'");
    }
}

const json* field(const json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

void read_num(const json& obj, const std::string& where, const char* key, double& out) {
    if (const json* v = field(obj, key)) {
        if (!v->is_number())
            throw std::runtime_error("config: '" + where + "." + key + "' must be a number");
        out = v->get<double>();
    }
}

void read_int(const json& obj, const std::string& where, const char* key, int& out) {
    if (const json* v = field(obj, key)) {
        if (!v->is_number_integer())
            throw std::runtime_error("config: '" + where + "." + key + "' must be an integer");
        out = v->get<int>();
    }
}

void read_seed(const json& obj, const std::string& where, const char* key, uint64_t& out) {
    if (const json* v = field(obj, key)) {
        if (!v->is_number_integer() || (v->is_number_integer() && v->get<int64_t>() < 0))
            throw std::runtime_error("config: '" + where + "." + key +
                                     "' must be a non-negative integer");
        out = v->get<uint64_t>();
    }
}

void read_bool(const json& obj, const std::string& where, const char* key, bool& out) {
    if (const json* v = field(obj, key)) {
        if (!v->is_boolean())
            throw std::runtime_error("config: '" + where + "." + key + "' must be a boolean");
        out = v->get<bool>();
    }
}

void read_domain(const json& obj, const std::string& where, const char* key, LossDomain& out) {
    if (const json* v = field(obj, key)) {
        if (!v->is_string())
            throw std::runtime_error("config: '" + where + "." + key + "' must be a string");
        std::string s = v->get<std::string>();
        if (s == "intensity")
            out = LossDomain::Intensity;
        else if (s == "amplitude")
            out = LossDomain::Amplitude;
        else
            throw std::runtime_error("config: '" + where + "." + key +
                                     "' must be \"intensity\" or \"amplitude\"");
    }
}

void read_train(const json& obj, const std::string& where, TrainConfig& out) {
    expect_keys(obj, where, {"epochs", "learning_rate", "seed", "curriculum"});
    read_int(obj, where, "epochs", out.epochs);
    read_num(obj, where, "learning_rate", out.learning_rate);
    read_seed(obj, where, "seed", out.seed);
    read_bool(obj, where, "curriculum", out.curriculum);
}

}  // namespace

PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const std::exception& e) {
        throw std::runtime_error("config: " + path + ": " + e.what());
    }
    if (!j.is_object()) throw std::runtime_error("config: top level must be an object");
    expect_keys(j, "config",
                {"optics", "patterns", "recon", "e2e", "train_e2e", "fusion", "train_fusion",
                 "dataset"});

    PipelineConfig cfg;
    if (const json* o = field(j, "optics")) {
        expect_keys(*o, "optics",
                    {"wavelength", "na", "magnification", "camera_pixel", "upsample", "hr_size",
                     "led_pitch", "led_distance", "led_grid"});
        read_num(*o, "optics", "wavelength", cfg.optics.wavelength);
        read_num(*o, "optics", "na", cfg.optics.na);
        read_num(*o, "optics", "magnification", cfg.optics.magnification);
        read_num(*o, "optics", "camera_pixel", cfg.optics.camera_pixel);
        read_int(*o, "optics", "upsample", cfg.optics.upsample);
        read_int(*o, "optics", "hr_size", cfg.optics.hr_size);
        read_num(*o, "optics", "led_pitch", cfg.optics.led_pitch);
        read_num(*o, "optics", "led_distance", cfg.optics.led_distance);
        read_int(*o, "optics", "led_grid", cfg.optics.led_grid);
    }
    if (const json* o = field(j, "patterns")) {
        expect_keys(*o, "patterns", {"count"});
        read_int(*o, "patterns", "count", cfg.pattern_count);
    }
    if (const json* o = field(j, "recon")) {
        expect_keys(*o, "recon",
                    {"iterations", "learning_rate", "final_learning_rate", "loss_domain",
                     "log_every"});
        read_int(*o, "recon", "iterations", cfg.recon.iterations);
        read_num(*o, "recon", "learning_rate", cfg.recon.learning_rate);
        read_num(*o, "recon", "final_learning_rate", cfg.recon.final_learning_rate);
        read_domain(*o, "recon", "loss_domain", cfg.recon.loss_domain);
        read_int(*o, "recon", "log_every", cfg.recon.log_every);
    }
    if (const json* o = field(j, "e2e")) {
        expect_keys(*o, "e2e",
                    {"in_images", "base_channels", "depth", "upsample_stages", "init_seed"});
        read_int(*o, "e2e", "in_images", cfg.e2e.in_images);
        read_int(*o, "e2e", "base_channels", cfg.e2e.base_channels);
        read_int(*o, "e2e", "depth", cfg.e2e.depth);
        read_int(*o, "e2e", "upsample_stages", cfg.e2e.upsample_stages);
        read_seed(*o, "e2e", "init_seed", cfg.e2e_init_seed);
    }
    if (const json* o = field(j, "train_e2e")) read_train(*o, "train_e2e", cfg.e2e_train);
    if (const json* o = field(j, "fusion")) {
        expect_keys(*o, "fusion", {"base_channels", "layers", "init_seed"});
        read_int(*o, "fusion", "base_channels", cfg.fusion.base_channels);
        read_int(*o, "fusion", "layers", cfg.fusion.layers);
        read_seed(*o, "fusion", "init_seed", cfg.fusion_init_seed);
    }
    if (const json* o = field(j, "train_fusion")) read_train(*o, "train_fusion", cfg.fusion_train);
    if (const json* o = field(j, "dataset")) {
        expect_keys(*o, "dataset", {"count", "seed"});
        read_int(*o, "dataset", "count", cfg.dataset_count);
        read_seed(*o, "dataset", "seed", cfg.dataset_seed);
    }

    cfg.optics.validate();
    cfg.recon.validate();
    cfg.e2e.validate();
    cfg.fusion.validate();
    cfg.e2e_train.validate();
    cfg.fusion_train.validate();
    if (cfg.pattern_count < 1) throw std::runtime_error("config: patterns.count must be >= 1");
    if (cfg.dataset_count < 0) throw std::runtime_error("config: dataset.count must be >= 0");
    return cfg;
}

}  // namespace fpm
