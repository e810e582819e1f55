#ifndef FPM_AUTODIFF_HPP
#define FPM_AUTODIFF_HPP

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "fpm/fft.hpp"
#include "fpm/image.hpp"

namespace fpm::ad {

/// One recorded operation: its output value, gradient accumulator, and
/// edges to the inputs it was computed from. The graph of these nodes is
/// the tape; backward() walks it in reverse topological order, visiting
/// each node exactly once.
struct TapeNode {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<TapeNode>> parents;
    std::function<void(TapeNode&)> backprop;

    size_t numel() const {
        size_t n = 1;
        for (int d : shape) n *= static_cast<size_t>(d);
        return n;
    }
    void ensure_grad() {
        if (grad.size() != numel()) grad.assign(numel(), 0.0);
    }
};

/// Differentiable multidimensional array. Cheap to copy (shared node).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TapeNode> n) : node_(std::move(n)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                            bool requires_grad = false);
    /// Leaf with requires_grad = false.
    static Tensor constant(std::vector<int> shape, std::vector<double> data);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    size_t numel() const { return node_->numel(); }
    std::vector<double>& val() { return node_->value; }
    const std::vector<double>& val() const { return node_->value; }
    std::vector<double>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    bool requires_grad() const { return node_->requires_grad; }
    double scalar() const { return node_->value.at(0); }
    void zero_grad() { node_->grad.assign(node_->numel(), 0.0); }

    std::shared_ptr<TapeNode> node() const { return node_; }

private:
    std::shared_ptr<TapeNode> node_;
};

/// Reverse-mode sweep from a scalar root: seeds d(root)/d(root) = 1 and
/// accumulates gradients into every tensor on the tape that requires grad.
void backward(const Tensor& root);

// ---- elementwise / structural primitives ---------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor sigmoid(const Tensor& x);
Tensor tanh_t(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor sqrt_t(const Tensor& x);
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor narrow(const Tensor& x, int axis, int start, int len);

/// Mean absolute difference over all elements; subgradient 0 at ties.
Tensor l1_loss(const Tensor& x, const Tensor& y);

// ---- convolutional primitives ---------------------------------------------

enum class Padding { Same, Valid };

/// Cross-correlation of [C_in,H,W] with [C_out,C_in,kh,kw] (odd kernels),
/// optional [C_out] bias. Output side (H + 2p - kh)/stride + 1.
Tensor conv2d(const Tensor& x, const Tensor& w, const std::optional<Tensor>& bias,
              int stride = 1, Padding pad = Padding::Same);

/// Depth-to-space: [C*r^2, H, W] -> [C, rH, rW].
Tensor pixel_shuffle(const Tensor& x, int r);
/// Space-to-depth inverse of pixel_shuffle.
Tensor pixel_unshuffle(const Tensor& x, int r);

// ---- physics primitives ----------------------------------------------------
// Complex fields ride as [2,H,W] tensors: plane 0 real, plane 1 imaginary.

/// Pairs two [1,H,W] (or [H,W]-shaped [1,H,W]) planes into a [2,H,W] field.
Tensor complex_from_parts(const Tensor& re, const Tensor& im);

/// Pointwise complex product of two [2,H,W] fields (built from real ops).
Tensor complex_mul(const Tensor& a, const Tensor& b);

/// Centered transforms on [2,H,W]; gradients are the scaled adjoints.
Tensor fft2c(const Tensor& x);
Tensor ifft2c(const Tensor& x);

/// |z|^2 as [1,H,W]; backward injects 2*z*g into the parent planes.
Tensor modsq(const Tensor& z);

/// Centered window ops on [C,H,W] (same geometry as crop/embed_centered).
Tensor crop_center(const Tensor& x, int m, PixelShift offset = {});
Tensor embed_center(const Tensor& x, int n, PixelShift offset = {});

// ---- optimizer --------------------------------------------------------------

/// Adaptive-moment state across a parameter list. Moments are allocated on
/// first use and shape-checked thereafter.
struct OptimState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

/// One bias-corrected update from the accumulated gradients; zeroes the
/// gradients afterwards. Deterministic given inputs.
void adam_step(std::vector<Tensor>& params, OptimState& state);

}  // namespace fpm::ad

#endif
