#ifndef FPM_IMAGE_HPP
#define FPM_IMAGE_HPP

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace fpm {

using cplx = std::complex<double>;

/// 2D real-valued image, row-major. Intensity images are non-negative by
/// convention; nothing here enforces it beyond the named factory checks.
struct RealImage {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    RealImage() = default;
    RealImage(int h, int w, double fill = 0.0)
        : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {
        if (h <= 0 || w <= 0) throw std::invalid_argument("RealImage: non-positive dimensions");
    }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * width + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * width + c]; }
    size_t size() const { return data.size(); }
};

/// 2D complex field, row-major. Carrier of optical state: the sample
/// transmission in the spatial domain or any spectrum in the frequency domain.
struct ComplexImage {
    int height = 0;
    int width = 0;
    std::vector<cplx> data;

    ComplexImage() = default;
    ComplexImage(int h, int w, cplx fill = cplx{0.0, 0.0})
        : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {
        if (h <= 0 || w <= 0) throw std::invalid_argument("ComplexImage: non-positive dimensions");
    }

    cplx& at(int r, int c) { return data[static_cast<size_t>(r) * width + c]; }
    cplx at(int r, int c) const { return data[static_cast<size_t>(r) * width + c]; }
    size_t size() const { return data.size(); }
};

/// Axis-aligned rectangle, (x, y) = top-left corner in pixel coordinates.
struct BBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;
};

}  // namespace fpm

#endif
