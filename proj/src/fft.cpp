#include "fpm/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>

namespace fpm {

namespace {

// FFTW plan cache. Plans are created once per (H, W, sign) with
// FFTW_ESTIMATE | FFTW_UNALIGNED so they can execute on any buffer, and
// execution itself is thread-safe.
class PlanCache {
public:
    static PlanCache& instance() {
        static PlanCache cache;
        return cache;
    }

    fftw_plan get(int h, int w, int sign) {
        std::lock_guard<std::mutex> lock(mu_);
        auto key = std::make_tuple(h, w, sign);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        std::vector<cplx> dummy(static_cast<size_t>(h) * w);
        fftw_plan p = fftw_plan_dft_2d(
            h, w, reinterpret_cast<fftw_complex*>(dummy.data()),
            reinterpret_cast<fftw_complex*>(dummy.data()), sign,
            FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_.emplace(key, p);
        return p;
    }

private:
    PlanCache() = default;
    std::mutex mu_;
    std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

// Circular shift so that input index `c` moves to index 0 (ifftshift when
// c = floor(n/2)) or index 0 moves to `c` (fftshift). Both are realized by
// one gather with the right per-axis offsets.
ComplexImage circshift(const ComplexImage& x, int dy, int dx) {
    ComplexImage out(x.height, x.width);
    for (int r = 0; r < x.height; ++r) {
        int sr = (r + dy) % x.height;
        for (int c = 0; c < x.width; ++c) {
            int sc = (c + dx) % x.width;
            out.at(r, c) = x.at(sr, sc);
        }
    }
    return out;
}

ComplexImage raw_fft(const ComplexImage& x, int sign) {
    ComplexImage out(x.height, x.width);
    fftw_plan p = PlanCache::instance().get(x.height, x.width, sign);
    // const_cast is safe: FFTW does not write the input of an out-of-place
    // c2c transform.
    fftw_execute_dft(p,
                     reinterpret_cast<fftw_complex*>(const_cast<cplx*>(x.data.data())),
                     reinterpret_cast<fftw_complex*>(out.data.data()));
    return out;
}

}  // namespace

ComplexImage fft_centered(const ComplexImage& x) {
    int cy = x.height / 2, cx = x.width / 2;
    // fftshift(FFT(ifftshift(x))): equals the direct centered DFT
    // sum_r x[r] exp(-2*pi*i*(u-c)(r-c)/n) for even and odd sizes alike.
    ComplexImage t = circshift(x, cy, cx);
    t = raw_fft(t, FFTW_FORWARD);
    return circshift(t, x.height - cy, x.width - cx);
}

ComplexImage ifft_centered(const ComplexImage& x) {
    int cy = x.height / 2, cx = x.width / 2;
    ComplexImage t = circshift(x, cy, cx);
    t = raw_fft(t, FFTW_BACKWARD);
    double norm = 1.0 / (static_cast<double>(x.height) * x.width);
    for (auto& v : t.data) v *= norm;
    return circshift(t, x.height - cy, x.width - cx);
}

namespace {

template <typename Img>
Img crop_impl(const Img& x, int m, PixelShift offset) {
    if (m <= 0) throw std::invalid_argument("crop_centered: non-positive size");
    int r0 = x.height / 2 + offset.y - m / 2;
    int c0 = x.width / 2 + offset.x - m / 2;
    if (r0 < 0 || c0 < 0 || r0 + m > x.height || c0 + m > x.width)
        throw std::invalid_argument("crop_centered: window out of bounds");
    Img out(m, m);
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) out.at(r, c) = x.at(r0 + r, c0 + c);
    return out;
}

template <typename Img>
Img embed_impl(const Img& x, int n, PixelShift offset) {
    if (x.height != x.width) throw std::invalid_argument("embed_centered: input must be square");
    int m = x.height;
    int r0 = n / 2 + offset.y - m / 2;
    int c0 = n / 2 + offset.x - m / 2;
    if (r0 < 0 || c0 < 0 || r0 + m > n || c0 + m > n)
        throw std::invalid_argument("embed_centered: window out of bounds");
    Img out(n, n);
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) out.at(r0 + r, c0 + c) = x.at(r, c);
    return out;
}

}  // namespace

ComplexImage crop_centered(const ComplexImage& x, int m, PixelShift offset) {
    return crop_impl(x, m, offset);
}
ComplexImage embed_centered(const ComplexImage& x, int n, PixelShift offset) {
    return embed_impl(x, n, offset);
}
RealImage crop_centered(const RealImage& x, int m, PixelShift offset) {
    return crop_impl(x, m, offset);
}
RealImage embed_centered(const RealImage& x, int n, PixelShift offset) {
    return embed_impl(x, n, offset);
}

RealImage intensity(const ComplexImage& x) {
    RealImage out(x.height, x.width);
    for (size_t i = 0; i < x.size(); ++i) out.data[i] = std::norm(x.data[i]);
    return out;
}

RealImage amplitude(const ComplexImage& x) {
    RealImage out(x.height, x.width);
    for (size_t i = 0; i < x.size(); ++i) out.data[i] = std::abs(x.data[i]);
    return out;
}

}  // namespace fpm
