#include "fpm/nets.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fpm/io.hpp"
#include "fpm/rng.hpp"

namespace fpm {

namespace {

constexpr double kLeakySlope = 0.1;

int ladder_channels(const E2ENetSpec& spec, int level) {
    return spec.base_channels << level;
}

/// Appends "<stem>.w"/"<stem>.b" conv parameters in a fixed draw order so a
/// seed pins every weight. Biases start at zero; zero = true also zeroes the
/// kernel without consuming random draws.
struct ParamBuilder {
    Rng rng;
    std::vector<std::string>& names;
    std::vector<ad::Tensor>& params;

    void conv(const std::string& stem, int co, int ci, int k, bool zero = false) {
        std::vector<double> w(static_cast<size_t>(co) * ci * k * k, 0.0);
        if (!zero) {
            double bound = std::sqrt(1.0 / (static_cast<double>(ci) * k * k));
            for (auto& v : w) v = rng.uniform(-bound, bound);
        }
        names.push_back(stem + ".w");
        params.push_back(ad::Tensor::from_data({co, ci, k, k}, std::move(w), true));
        names.push_back(stem + ".b");
        params.push_back(ad::Tensor::zeros({co}, true));
    }
};

const ad::Tensor& named(const std::vector<std::string>& names,
                        const std::vector<ad::Tensor>& params, const std::string& want) {
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == want) return params[i];
    throw std::logic_error("net parameter missing: " + want);
}

ad::Tensor conv_layer(const std::vector<std::string>& names,
                      const std::vector<ad::Tensor>& params, const std::string& stem,
                      const ad::Tensor& x) {
    return ad::conv2d(x, named(names, params, stem + ".w"), named(names, params, stem + ".b"));
}

}  // namespace

void E2ENetSpec::validate() const {
    if (in_images < 1 || in_images > 4096)
        throw std::invalid_argument("E2ENetSpec: in_images out of range");
    if (base_channels < 1 || base_channels > 4096)
        throw std::invalid_argument("E2ENetSpec: base_channels out of range");
    if (depth < 1 || depth > 8) throw std::invalid_argument("E2ENetSpec: depth out of range");
    if (upsample_stages < 0 || upsample_stages > 8)
        throw std::invalid_argument("E2ENetSpec: upsample_stages out of range");
    if (out_channels != 2) throw std::invalid_argument("E2ENetSpec: out_channels is fixed at 2");
}

void FusionNetSpec::validate() const {
    if (in_channels != 4) throw std::invalid_argument("FusionNetSpec: in_channels is fixed at 4");
    if (base_channels < 1 || base_channels > 4096)
        throw std::invalid_argument("FusionNetSpec: base_channels out of range");
    if (layers < 2 || layers > 64) throw std::invalid_argument("FusionNetSpec: layers out of range");
    if (!residual) throw std::invalid_argument("FusionNetSpec: the residual path is fixed");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw std::invalid_argument("TrainConfig: learning_rate must be positive and finite");
}

ad::Tensor polar_planes(const ComplexImage& img) {
    if (img.height <= 0 || img.width <= 0)
        throw std::invalid_argument("polar_planes: empty image");
    size_t n = img.data.size();
    std::vector<double> v(2 * n);
    for (size_t i = 0; i < n; ++i) {
        v[i] = std::abs(img.data[i]);
        v[n + i] = std::arg(img.data[i]);
    }
    return ad::Tensor::constant({2, img.height, img.width}, std::move(v));
}

ComplexImage field_from_planes(const ad::Tensor& planes) {
    if (!planes.defined() || planes.rank() != 3 || planes.dim(0) != 2)
        throw std::invalid_argument("field_from_planes: planes must be [2,H,W]");
    int h = planes.dim(1), w = planes.dim(2);
    const auto& v = planes.val();
    size_t n = static_cast<size_t>(h) * w;
    ComplexImage out(h, w);
    for (size_t i = 0; i < n; ++i) {
        double amp = v[i], ph = v[n + i];
        out.data[i] = cplx{amp * std::cos(ph), amp * std::sin(ph)};
    }
    return out;
}

E2ENet make_e2e(const E2ENetSpec& spec, uint64_t seed) {
    spec.validate();
    E2ENet net{spec, {}, {}};
    ParamBuilder b{Rng(seed), net.names, net.params};
    b.conv("head", spec.base_channels << (2 * spec.upsample_stages), spec.in_images, 1);
    for (int i = 0; i < spec.depth; ++i) {
        int c = ladder_channels(spec, i);
        b.conv("enc" + std::to_string(i), c, c, 3);
        b.conv("down" + std::to_string(i), ladder_channels(spec, i + 1), 4 * c, 3);
    }
    int cb = ladder_channels(spec, spec.depth);
    b.conv("mid", cb, cb, 3);
    for (int i = spec.depth - 1; i >= 0; --i) {
        int c = ladder_channels(spec, i);
        b.conv("up" + std::to_string(i), 4 * c, ladder_channels(spec, i + 1), 1);
        b.conv("gate" + std::to_string(i), c, c, 1);
        b.conv("dec" + std::to_string(i), c, 2 * c, 3);
    }
    b.conv("out", spec.out_channels, ladder_channels(spec, 0), 1);
    return net;
}

FusionNet make_fusion(const FusionNetSpec& spec, uint64_t seed) {
    spec.validate();
    FusionNet net{spec, {}, {}};
    ParamBuilder b{Rng(seed), net.names, net.params};
    for (int l = 0; l + 1 < spec.layers; ++l)
        b.conv("f" + std::to_string(l), spec.base_channels,
               l == 0 ? spec.in_channels : spec.base_channels, 3);
    b.conv("f" + std::to_string(spec.layers - 1), 2, spec.base_channels, 3, /*zero=*/true);
    return net;
}

ad::Tensor forward_e2e_planes(const E2ENet& net, const IntensityStack& stack) {
    const E2ENetSpec& spec = net.spec;
    spec.validate();
    if (stack.images.size() != static_cast<size_t>(spec.in_images))
        throw std::invalid_argument("forward_e2e: stack depth " +
                                    std::to_string(stack.images.size()) +
                                    " does not match spec in_images " +
                                    std::to_string(spec.in_images));
    int h = stack.images[0].height, w = stack.images[0].width;
    if (h <= 0 || w <= 0) throw std::invalid_argument("forward_e2e: empty stack image");
    for (const auto& img : stack.images)
        if (img.height != h || img.width != w)
            throw std::invalid_argument("forward_e2e: mixed image sizes in stack");
    int tile = 1 << spec.depth;
    int hr_h = h << spec.upsample_stages, hr_w = w << spec.upsample_stages;
    if (hr_h % tile != 0 || hr_w % tile != 0)
        throw std::invalid_argument("forward_e2e: HR size " + std::to_string(hr_h) + "x" +
                                    std::to_string(hr_w) + " is not divisible by 2^depth");

    std::vector<double> buf;
    buf.reserve(stack.images.size() * static_cast<size_t>(h) * w);
    for (const auto& img : stack.images) buf.insert(buf.end(), img.data.begin(), img.data.end());
    ad::Tensor x = ad::Tensor::constant({spec.in_images, h, w}, std::move(buf));

    x = conv_layer(net.names, net.params, "head", x);
    for (int s = 0; s < spec.upsample_stages; ++s) x = ad::pixel_shuffle(x, 2);

    std::vector<ad::Tensor> skips;
    skips.reserve(static_cast<size_t>(spec.depth));
    for (int i = 0; i < spec.depth; ++i) {
        ad::Tensor s =
            ad::leaky_relu(conv_layer(net.names, net.params, "enc" + std::to_string(i), x),
                           kLeakySlope);
        skips.push_back(s);
        x = ad::leaky_relu(conv_layer(net.names, net.params, "down" + std::to_string(i),
                                      ad::pixel_unshuffle(s, 2)),
                           kLeakySlope);
    }
    x = ad::leaky_relu(conv_layer(net.names, net.params, "mid", x), kLeakySlope);
    for (int i = spec.depth - 1; i >= 0; --i) {
        ad::Tensor u =
            ad::pixel_shuffle(conv_layer(net.names, net.params, "up" + std::to_string(i), x), 2);
        ad::Tensor gate =
            ad::sigmoid(conv_layer(net.names, net.params, "gate" + std::to_string(i), u));
        ad::Tensor merged = ad::concat({ad::mul(gate, skips[static_cast<size_t>(i)]), u}, 0);
        x = ad::leaky_relu(
            conv_layer(net.names, net.params, "dec" + std::to_string(i), merged), kLeakySlope);
    }
    ad::Tensor o = conv_layer(net.names, net.params, "out", x);
    ad::Tensor amp = ad::softplus(ad::narrow(o, 0, 0, 1));
    ad::Tensor phase = ad::scale(ad::tanh_t(ad::narrow(o, 0, 1, 1)), std::numbers::pi);
    return ad::concat({amp, phase}, 0);
}

ComplexImage forward_e2e(const E2ENet& net, const IntensityStack& stack) {
    return field_from_planes(forward_e2e_planes(net, stack));
}

namespace {

ad::Tensor fusion_correction(const FusionNet& net, const ad::Tensor& in4) {
    ad::Tensor x = in4;
    for (int l = 0; l + 1 < net.spec.layers; ++l)
        x = ad::leaky_relu(conv_layer(net.names, net.params, "f" + std::to_string(l), x),
                           kLeakySlope);
    return conv_layer(net.names, net.params, "f" + std::to_string(net.spec.layers - 1), x);
}

void check_planes(const ad::Tensor& t, const char* what) {
    if (!t.defined() || t.rank() != 3 || t.dim(0) != 2)
        throw std::invalid_argument(std::string("forward_fusion: ") + what + " must be [2,H,W]");
}

}  // namespace

ad::Tensor forward_fusion_planes(const FusionNet& net, const ad::Tensor& dl_planes,
                                 const ad::Tensor& pm_planes) {
    net.spec.validate();
    check_planes(dl_planes, "dl_planes");
    check_planes(pm_planes, "pm_planes");
    if (dl_planes.dim(1) != pm_planes.dim(1) || dl_planes.dim(2) != pm_planes.dim(2))
        throw std::invalid_argument("forward_fusion: estimate sizes differ");
    ad::Tensor corr = fusion_correction(net, ad::concat({dl_planes, pm_planes}, 0));
    return ad::add(pm_planes, corr);
}

ComplexImage forward_fusion(const FusionNet& net, const ComplexImage& dl_est,
                            const ComplexImage& pm_est) {
    net.spec.validate();
    if (dl_est.height != pm_est.height || dl_est.width != pm_est.width)
        throw std::invalid_argument("forward_fusion: estimate sizes differ");
    ad::Tensor corr =
        fusion_correction(net, ad::concat({polar_planes(dl_est), polar_planes(pm_est)}, 0));
    const auto& cv = corr.val();
    size_t n = pm_est.data.size();
    ComplexImage out(pm_est.height, pm_est.width);
    for (size_t i = 0; i < n; ++i) {
        double da = cv[i], dp = cv[n + i];
        cplx z = pm_est.data[i];
        // (|z|+da)*e^{i(arg z+dp)} expanded off z itself, so da = dp = 0
        // reproduces z without a polar round trip.
        double cs = std::cos(dp), sn = std::sin(dp);
        double ph = std::arg(z) + dp;
        out.data[i] = cplx{z.real() * cs - z.imag() * sn + da * std::cos(ph),
                           z.real() * sn + z.imag() * cs + da * std::sin(ph)};
    }
    return out;
}

namespace {

/// Shared SGD core: one Adam step per sample, seeded Fisher-Yates order per
/// epoch, mean per-sample loss recorded per epoch. Phases run back to back
/// on their own index lists (curriculum = two phases).
TrainHistory run_sgd(std::vector<ad::Tensor>& params,
                     const std::vector<std::vector<size_t>>& phases, const TrainConfig& cfg,
                     const std::function<ad::Tensor(size_t)>& sample_loss) {
    TrainHistory hist;
    ad::OptimState opt;
    opt.lr = cfg.learning_rate;
    Rng order(cfg.seed);
    for (size_t p = 0; p < phases.size(); ++p) {
        if (p == 1) hist.phase_boundary = static_cast<int>(hist.epoch_loss.size());
        std::vector<size_t> ids = phases[p];
        for (int e = 0; e < cfg.epochs; ++e) {
            for (size_t i = ids.size(); i > 1; --i)
                std::swap(ids[i - 1], ids[order.below(i)]);
            double sum = 0.0;
            for (size_t id : ids) {
                ad::Tensor loss = sample_loss(id);
                double v = loss.scalar();
                if (!std::isfinite(v))
                    throw std::runtime_error("train: non-finite loss at epoch " +
                                             std::to_string(hist.epoch_loss.size()));
                sum += v;
                ad::backward(loss);
                ad::adam_step(params, opt);
            }
            hist.epoch_loss.push_back(sum / static_cast<double>(ids.size()));
        }
    }
    return hist;
}

}  // namespace

TrainHistory train_e2e(E2ENet& net, const std::vector<DatasetSample>& data,
                       const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw std::invalid_argument("train_e2e: empty dataset");
    std::vector<ad::Tensor> targets;
    targets.reserve(data.size());
    for (const auto& s : data) targets.push_back(polar_planes(s.target));

    std::vector<std::vector<size_t>> phases;
    if (cfg.curriculum) {
        std::vector<size_t> simple, complex_;
        for (size_t i = 0; i < data.size(); ++i)
            (data[i].label == Complexity::Simple ? simple : complex_).push_back(i);
        if (simple.empty() || complex_.empty())
            throw std::invalid_argument(
                "train_e2e: curriculum needs both Simple and Complex samples");
        phases = {std::move(simple), std::move(complex_)};
    } else {
        std::vector<size_t> all(data.size());
        for (size_t i = 0; i < all.size(); ++i) all[i] = i;
        phases = {std::move(all)};
    }
    return run_sgd(net.params, phases, cfg, [&](size_t id) {
        return ad::l1_loss(forward_e2e_planes(net, data[id].stack), targets[id]);
    });
}

TrainHistory train_fusion(FusionNet& net, const std::vector<FusionSample>& data,
                          const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.curriculum)
        throw std::invalid_argument("train_fusion: fusion samples carry no complexity label");
    if (data.empty()) throw std::invalid_argument("train_fusion: empty dataset");
    std::vector<ad::Tensor> dl, pm, target;
    dl.reserve(data.size());
    pm.reserve(data.size());
    target.reserve(data.size());
    for (const auto& s : data) {
        dl.push_back(polar_planes(s.dl));
        pm.push_back(polar_planes(s.pm));
        target.push_back(polar_planes(s.target));
    }
    std::vector<size_t> all(data.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = i;
    return run_sgd(net.params, {std::move(all)}, cfg, [&](size_t id) {
        return ad::l1_loss(forward_fusion_planes(net, dl[id], pm[id]), target[id]);
    });
}

namespace {

void append_params(std::vector<NamedTensor>& ts, const std::vector<std::string>& names,
                   const std::vector<ad::Tensor>& params) {
    for (size_t i = 0; i < names.size(); ++i)
        ts.push_back(NamedTensor{names[i], params[i].shape(), params[i].val()});
}

int spec_field(const std::string& op, double v, const char* what) {
    double r = std::floor(v);
    if (r != v || v < -1e9 || v > 1e9)
        throw std::runtime_error(op + ": non-integer spec field " + what);
    return static_cast<int>(r);
}

const NamedTensor* find_tensor(const std::vector<NamedTensor>& ts, const std::string& name) {
    for (const auto& t : ts)
        if (t.name == name) return &t;
    return nullptr;
}

/// Copies file tensors onto freshly built parameters by name; anything
/// missing, reshaped, duplicated, or left over is an error naming the tensor.
void fill_params(const std::string& op, std::vector<NamedTensor>& ts, const std::string& spec_name,
                 const std::vector<std::string>& names, std::vector<ad::Tensor>& params) {
    std::vector<bool> used(ts.size(), false);
    for (size_t j = 0; j < ts.size(); ++j)
        if (ts[j].name == spec_name) {
            used[j] = true;
            break;
        }
    for (size_t i = 0; i < names.size(); ++i) {
        size_t hit = ts.size();
        for (size_t j = 0; j < ts.size(); ++j)
            if (!used[j] && ts[j].name == names[i]) {
                hit = j;
                break;
            }
        if (hit == ts.size())
            throw std::runtime_error(op + ": missing tensor '" + names[i] + "'");
        if (ts[hit].shape != params[i].shape())
            throw std::runtime_error(op + ": shape mismatch for tensor '" + names[i] + "'");
        params[i].val() = std::move(ts[hit].values);
        used[hit] = true;
    }
    for (size_t j = 0; j < ts.size(); ++j)
        if (!used[j])
            throw std::runtime_error(op + ": unexpected tensor '" + ts[j].name + "'");
}

}  // namespace

void save_params(const E2ENet& net, const std::string& path) {
    std::vector<NamedTensor> ts;
    ts.reserve(net.names.size() + 1);
    ts.push_back(NamedTensor{"e2e.spec",
                             {5},
                             {static_cast<double>(net.spec.in_images),
                              static_cast<double>(net.spec.base_channels),
                              static_cast<double>(net.spec.depth),
                              static_cast<double>(net.spec.upsample_stages),
                              static_cast<double>(net.spec.out_channels)}});
    append_params(ts, net.names, net.params);
    write_tensors(path, ts);
}

void save_params(const FusionNet& net, const std::string& path) {
    std::vector<NamedTensor> ts;
    ts.reserve(net.names.size() + 1);
    ts.push_back(NamedTensor{"fusion.spec",
                             {4},
                             {static_cast<double>(net.spec.in_channels),
                              static_cast<double>(net.spec.base_channels),
                              static_cast<double>(net.spec.layers),
                              net.spec.residual ? 1.0 : 0.0}});
    append_params(ts, net.names, net.params);
    write_tensors(path, ts);
}

E2ENet load_e2e(const std::string& path) {
    auto ts = read_tensors(path);
    const NamedTensor* sp = find_tensor(ts, "e2e.spec");
    if (!sp) throw std::runtime_error("load_e2e: no 'e2e.spec' tensor in " + path);
    if (sp->values.size() != 5) throw std::runtime_error("load_e2e: malformed 'e2e.spec'");
    E2ENetSpec spec;
    spec.in_images = spec_field("load_e2e", sp->values[0], "in_images");
    spec.base_channels = spec_field("load_e2e", sp->values[1], "base_channels");
    spec.depth = spec_field("load_e2e", sp->values[2], "depth");
    spec.upsample_stages = spec_field("load_e2e", sp->values[3], "upsample_stages");
    spec.out_channels = spec_field("load_e2e", sp->values[4], "out_channels");
    spec.validate();
    E2ENet net = make_e2e(spec, 0);
    fill_params("load_e2e", ts, "e2e.spec", net.names, net.params);
    return net;
}

FusionNet load_fusion(const std::string& path) {
    auto ts = read_tensors(path);
    const NamedTensor* sp = find_tensor(ts, "fusion.spec");
    if (!sp) throw std::runtime_error("load_fusion: no 'fusion.spec' tensor in " + path);
    if (sp->values.size() != 4) throw std::runtime_error("load_fusion: malformed 'fusion.spec'");
    FusionNetSpec spec;
    spec.in_channels = spec_field("load_fusion", sp->values[0], "in_channels");
    spec.base_channels = spec_field("load_fusion", sp->values[1], "base_channels");
    spec.layers = spec_field("load_fusion", sp->values[2], "layers");
    spec.residual = spec_field("load_fusion", sp->values[3], "residual") != 0;
    spec.validate();
    FusionNet net = make_fusion(spec, 0);
    fill_params("load_fusion", ts, "fusion.spec", net.names, net.params);
    return net;
}

}  // namespace fpm
