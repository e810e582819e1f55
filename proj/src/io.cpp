#include "fpm/io.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace fpm {

namespace {

constexpr uint32_t kFormatVersion = 1;
constexpr uint32_t kMaxSide = 1 << 20;  // dimension sanity bound

void put_u32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_i32(std::string& out, int32_t v) { put_u32(out, static_cast<uint32_t>(v)); }

void put_f64(std::string& out, double v) {
    uint64_t bits = std::bit_cast<uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

/// Bounds-checked little-endian cursor over an in-memory file image.
class Reader {
  public:
    Reader(std::string bytes, std::string path)
        : bytes_(std::move(bytes)), path_(std::move(path)) {}

    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    int32_t i32() { return static_cast<int32_t>(u32()); }

    double f64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return std::bit_cast<double>(v);
    }

    std::string raw(size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    void expect_magic(const char* magic) {
        if (raw(4) != magic) fail(std::string("not a ") + magic + " file");
    }

    void expect_version() {
        uint32_t v = u32();
        if (v != kFormatVersion) fail("unsupported format version " + std::to_string(v));
    }

    uint32_t dim(const char* what) {
        uint32_t v = u32();
        if (v == 0 || v > kMaxSide) fail(std::string("implausible ") + what);
        return v;
    }

    void expect_end() {
        if (pos_ != bytes_.size()) fail("trailing bytes after payload");
    }

    [[noreturn]] void fail(const std::string& why) {
        throw std::runtime_error(path_ + ": " + why);
    }

  private:
    void need(size_t n) {
        if (bytes_.size() - pos_ < n) fail("truncated file");
    }

    std::string bytes_;
    std::string path_;
    size_t pos_ = 0;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    if (!in.good() && !in.eof()) throw std::runtime_error(path + ": read failed");
    return std::move(buf).str();
}

void spill(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error(path + ": write failed");
}

void put_config(std::string& out, const OpticalConfig& cfg) {
    put_f64(out, cfg.wavelength);
    put_f64(out, cfg.na);
    put_f64(out, cfg.magnification);
    put_f64(out, cfg.camera_pixel);
    put_u32(out, static_cast<uint32_t>(cfg.upsample));
    put_u32(out, static_cast<uint32_t>(cfg.hr_size));
    put_f64(out, cfg.led_pitch);
    put_f64(out, cfg.led_distance);
    put_u32(out, static_cast<uint32_t>(cfg.led_grid));
}

OpticalConfig get_config(Reader& r) {
    OpticalConfig cfg;
    cfg.wavelength = r.f64();
    cfg.na = r.f64();
    cfg.magnification = r.f64();
    cfg.camera_pixel = r.f64();
    cfg.upsample = static_cast<int>(r.u32());
    cfg.hr_size = static_cast<int>(r.u32());
    cfg.led_pitch = r.f64();
    cfg.led_distance = r.f64();
    cfg.led_grid = static_cast<int>(r.u32());
    return cfg;
}

}  // namespace

void write_complex_image(const std::string& path, const ComplexImage& img) {
    std::string out;
    out.reserve(16 + img.size() * 16);
    out += "FPMC";
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<uint32_t>(img.height));
    put_u32(out, static_cast<uint32_t>(img.width));
    for (const cplx& z : img.data) {
        put_f64(out, z.real());
        put_f64(out, z.imag());
    }
    spill(path, out);
}

ComplexImage read_complex_image(const std::string& path) {
    Reader r(slurp(path), path);
    r.expect_magic("FPMC");
    r.expect_version();
    uint32_t h = r.dim("height"), w = r.dim("width");
    ComplexImage img(static_cast<int>(h), static_cast<int>(w));
    for (cplx& z : img.data) {
        double re = r.f64();
        double im = r.f64();
        z = {re, im};
    }
    r.expect_end();
    return img;
}

void write_real_image(const std::string& path, const RealImage& img) {
    std::string out;
    out.reserve(16 + img.size() * 8);
    out += "FPMR";
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<uint32_t>(img.height));
    put_u32(out, static_cast<uint32_t>(img.width));
    for (double v : img.data) put_f64(out, v);
    spill(path, out);
}

RealImage read_real_image(const std::string& path) {
    Reader r(slurp(path), path);
    r.expect_magic("FPMR");
    r.expect_version();
    uint32_t h = r.dim("height"), w = r.dim("width");
    RealImage img(static_cast<int>(h), static_cast<int>(w));
    for (double& v : img.data) v = r.f64();
    r.expect_end();
    return img;
}

void write_stack(const std::string& path, const IntensityStack& stack) {
    if (stack.images.size() != stack.patterns.size())
        throw std::invalid_argument(path + ": stack image/pattern counts differ");
    if (stack.images.empty()) throw std::invalid_argument(path + ": empty stack");
    int h = stack.images.front().height;
    int w = stack.images.front().width;
    for (const RealImage& img : stack.images)
        if (img.height != h || img.width != w)
            throw std::invalid_argument(path + ": stack images have mixed dimensions");

    std::string out;
    out.reserve(128 + stack.images.size() * (static_cast<size_t>(h) * w * 8 + 64));
    out += "FPMS";
    put_u32(out, kFormatVersion);
    put_config(out, stack.cfg);
    put_u32(out, static_cast<uint32_t>(stack.patterns.size()));
    for (const IlluminationPattern& pat : stack.patterns) {
        put_u32(out, static_cast<uint32_t>(pat.leds.size()));
        for (const LedIndex& led : pat.leds) {
            put_i32(out, led.x);
            put_i32(out, led.y);
        }
    }
    put_u32(out, static_cast<uint32_t>(stack.images.size()));
    put_u32(out, static_cast<uint32_t>(h));
    put_u32(out, static_cast<uint32_t>(w));
    for (const RealImage& img : stack.images)
        for (double v : img.data) put_f64(out, v);
    spill(path, out);
}

IntensityStack read_stack(const std::string& path) {
    Reader r(slurp(path), path);
    r.expect_magic("FPMS");
    r.expect_version();
    IntensityStack stack;
    stack.cfg = get_config(r);

    uint32_t pattern_count = r.u32();
    if (pattern_count == 0 || pattern_count > kMaxSide) r.fail("implausible pattern count");
    stack.patterns.resize(pattern_count);
    for (IlluminationPattern& pat : stack.patterns) {
        uint32_t leds = r.u32();
        if (leds == 0 || leds > kMaxSide) r.fail("implausible LED count");
        pat.leds.resize(leds);
        for (LedIndex& led : pat.leds) {
            led.x = r.i32();
            led.y = r.i32();
        }
    }

    uint32_t image_count = r.u32();
    if (image_count != pattern_count) r.fail("image count does not match pattern count");
    uint32_t h = r.dim("height"), w = r.dim("width");
    stack.images.assign(image_count, RealImage(static_cast<int>(h), static_cast<int>(w)));
    for (RealImage& img : stack.images)
        for (double& v : img.data) v = r.f64();
    r.expect_end();
    return stack;
}

void write_tensors(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::string out;
    out += "FPMW";
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<uint32_t>(tensors.size()));
    for (const NamedTensor& t : tensors) {
        size_t count = 1;
        for (int d : t.shape) {
            if (d <= 0) throw std::invalid_argument(path + ": tensor '" + t.name +
                                                    "' has a non-positive dimension");
            count *= static_cast<size_t>(d);
        }
        if (count != t.values.size())
            throw std::invalid_argument(path + ": tensor '" + t.name +
                                        "' shape does not match value count");
        put_u32(out, static_cast<uint32_t>(t.name.size()));
        out += t.name;
        put_u32(out, static_cast<uint32_t>(t.shape.size()));
        for (int d : t.shape) put_u32(out, static_cast<uint32_t>(d));
        for (double v : t.values) put_f64(out, v);
    }
    spill(path, out);
}

std::vector<NamedTensor> read_tensors(const std::string& path) {
    Reader r(slurp(path), path);
    r.expect_magic("FPMW");
    r.expect_version();
    uint32_t count = r.u32();
    if (count > kMaxSide) r.fail("implausible tensor count");
    std::vector<NamedTensor> tensors(count);
    for (NamedTensor& t : tensors) {
        uint32_t name_len = r.u32();
        if (name_len > 4096) r.fail("implausible tensor name length");
        t.name = r.raw(name_len);
        uint32_t rank = r.u32();
        if (rank > 8) r.fail("implausible tensor rank");
        t.shape.resize(rank);
        size_t total = 1;
        for (int& d : t.shape) {
            d = static_cast<int>(r.dim("tensor dimension"));
            total *= static_cast<size_t>(d);
        }
        if (total > (static_cast<size_t>(1) << 28)) r.fail("implausible tensor size");
        t.values.resize(total);
        for (double& v : t.values) v = r.f64();
    }
    r.expect_end();
    return tensors;
}

std::vector<uint8_t> quantize_gray(const RealImage& img, double lo, double hi) {
    if (!(hi > lo)) throw std::invalid_argument("quantize_gray: need hi > lo");
    std::vector<uint8_t> out(img.size());
    double scale = 255.0 / (hi - lo);
    for (size_t i = 0; i < img.size(); ++i) {
        double v = (img.data[i] - lo) * scale;
        v = std::round(v);
        out[i] = static_cast<uint8_t>(v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v));
    }
    return out;
}

void write_png_gray(const std::string& path, const RealImage& img, double lo, double hi) {
    std::vector<uint8_t> pixels = quantize_gray(img, lo, hi);

    std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.c_str(), "wb"),
                                                       &std::fclose);
    if (!fp) throw std::runtime_error(path + ": cannot open for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error(path + ": png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error(path + ": png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error(path + ": png encode failed");
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < img.height; ++r)
        png_write_row(png, pixels.data() + static_cast<size_t>(r) * img.width);
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
}

}  // namespace fpm
