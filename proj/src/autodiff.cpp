#include "fpm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace fpm::ad {

namespace {

std::shared_ptr<TapeNode> make_node(std::vector<int> shape,
                                    std::vector<std::shared_ptr<TapeNode>> parents) {
    auto n = std::make_shared<TapeNode>();
    n->shape = std::move(shape);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    n->value.resize(n->numel());
    return n;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

size_t numel_of(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    auto n = std::make_shared<TapeNode>();
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    n->value.assign(n->numel(), 0.0);
    return Tensor(n);
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    if (numel_of(shape) != data.size())
        throw std::invalid_argument("Tensor::from_data: element count mismatch");
    auto n = std::make_shared<TapeNode>();
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    n->value = std::move(data);
    return Tensor(n);
}

Tensor Tensor::constant(std::vector<int> shape, std::vector<double> data) {
    return from_data(std::move(shape), std::move(data), false);
}

void backward(const Tensor& root) {
    if (!root.defined()) throw std::invalid_argument("backward: undefined tensor");
    auto r = root.node();
    if (r->numel() != 1) throw std::invalid_argument("backward: root must be scalar");
    if (!r->requires_grad) return;

    // Iterative post-order DFS over grad-requiring nodes; the reversed
    // finish order is a valid reverse-topological schedule.
    std::vector<TapeNode*> order;
    std::unordered_set<TapeNode*> visited;
    std::vector<std::pair<TapeNode*, size_t>> stack{{r.get(), 0}};
    visited.insert(r.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TapeNode* p = node->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (TapeNode* n : order) n->ensure_grad();
    r->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop(**it);
}

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    auto n = make_node(a.shape(), {a.node(), b.node()});
    const auto& av = a.val();
    const auto& bv = b.val();
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] + bv[i];
    n->backprop = [](TapeNode& self) {
        for (int k = 0; k < 2; ++k) {
            auto& p = self.parents[k];
            if (!p->requires_grad) continue;
            p->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        }
    };
    return Tensor(n);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    auto n = make_node(a.shape(), {a.node(), b.node()});
    const auto& av = a.val();
    const auto& bv = b.val();
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] - bv[i];
    n->backprop = [](TapeNode& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
        }
    };
    return Tensor(n);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    auto n = make_node(a.shape(), {a.node(), b.node()});
    const auto& av = a.val();
    const auto& bv = b.val();
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] * bv[i];
    n->backprop = [](TapeNode& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                pa->grad[i] += self.grad[i] * pb->value[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                pb->grad[i] += self.grad[i] * pa->value[i];
        }
    };
    return Tensor(n);
}

Tensor scale(const Tensor& a, double s) {
    auto n = make_node(a.shape(), {a.node()});
    const auto& av = a.val();
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] * s;
    n->backprop = [s](TapeNode& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * s;
    };
    return Tensor(n);
}

Tensor leaky_relu(const Tensor& x, double slope) {
    auto n = make_node(x.shape(), {x.node()});
    const auto& xv = x.val();
    for (size_t i = 0; i < n->value.size(); ++i)
        n->value[i] = xv[i] >= 0.0 ? xv[i] : slope * xv[i];
    n->backprop = [slope](TapeNode& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            p->grad[i] += self.grad[i] * (p->value[i] >= 0.0 ? 1.0 : slope);
    };
    return Tensor(n);
}

Tensor sigmoid(const Tensor& x) {
    auto n = make_node(x.shape(), {x.node()});
    const auto& xv = x.val();
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = 1.0 / (1.0 + std::exp(-xv[i]));
    n->backprop = [](TapeNode& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            double y = self.value[i];
            p->grad[i] += self.grad[i] * y * (1.0 - y);
        }
    };
    return Tensor(n);
}

Tensor tanh_t(const Tensor& x) {
    auto n = make_node(x.shape(), {x.node()});
    const auto& xv = x.val();
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = std::tanh(xv[i]);
    n->backprop = [](TapeNode& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            double y = self.value[i];
            p->grad[i] += self.grad[i] * (1.0 - y * y);
        }
    };
    return Tensor(n);
}

Tensor softplus(const Tensor& x) {
    auto n = make_node(x.shape(), {x.node()});
    const auto& xv = x.val();
    for (size_t i = 0; i < n->value.size(); ++i) {
        double v = xv[i];
        n->value[i] = v > 30.0 ? v : (v < -30.0 ? std::exp(v) : std::log1p(std::exp(v)));
    }
    n->backprop = [](TapeNode& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            p->grad[i] += self.grad[i] / (1.0 + std::exp(-p->value[i]));
    };
    return Tensor(n);
}

Tensor sqrt_t(const Tensor& x) {
    auto n = make_node(x.shape(), {x.node()});
    const auto& xv = x.val();
    for (size_t i = 0; i < n->value.size(); ++i) {
        if (xv[i] < 0.0) throw std::domain_error("sqrt_t: negative input");
        n->value[i] = std::sqrt(xv[i]);
    }
    n->backprop = [](TapeNode& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        // subgradient 0 at the origin
        for (size_t i = 0; i < self.grad.size(); ++i)
            if (self.value[i] > 0.0) p->grad[i] += self.grad[i] * 0.5 / self.value[i];
    };
    return Tensor(n);
}

// ---- structural -------------------------------------------------------------

namespace {

struct AxisSplit {
    size_t outer;
    size_t inner;
};

AxisSplit split_at(const std::vector<int>& shape, int axis) {
    size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<size_t>(shape[i]);
    for (size_t i = axis + 1; i < shape.size(); ++i) inner *= static_cast<size_t>(shape[i]);
    return {outer, inner};
}

}  // namespace

Tensor concat(const std::vector<Tensor>& xs, int axis) {
    if (xs.empty()) throw std::invalid_argument("concat: empty input list");
    const auto& s0 = xs[0].shape();
    if (axis < 0 || axis >= static_cast<int>(s0.size()))
        throw std::invalid_argument("concat: bad axis");
    int total = 0;
    for (const auto& x : xs) {
        if (x.rank() != static_cast<int>(s0.size()))
            throw std::invalid_argument("concat: rank mismatch");
        for (size_t i = 0; i < s0.size(); ++i)
            if (static_cast<int>(i) != axis && x.shape()[i] != s0[i])
                throw std::invalid_argument("concat: shape mismatch off the concat axis");
        total += x.dim(axis);
    }
    std::vector<int> out_shape = s0;
    out_shape[axis] = total;
    std::vector<std::shared_ptr<TapeNode>> parents;
    for (const auto& x : xs) parents.push_back(x.node());
    auto n = make_node(out_shape, std::move(parents));

    auto [outer, inner] = split_at(out_shape, axis);
    size_t out_axis = static_cast<size_t>(total);
    size_t off = 0;
    for (const auto& x : xs) {
        size_t ax = static_cast<size_t>(x.dim(axis));
        const auto& xv = x.val();
        for (size_t o = 0; o < outer; ++o)
            for (size_t a = 0; a < ax; ++a)
                std::copy_n(&xv[(o * ax + a) * inner], inner,
                            &n->value[(o * out_axis + off + a) * inner]);
        off += ax;
    }
    n->backprop = [axis](TapeNode& self) {
        auto [outer, inner] = split_at(self.shape, axis);
        size_t out_axis = static_cast<size_t>(self.shape[axis]);
        size_t off = 0;
        for (auto& p : self.parents) {
            size_t ax = static_cast<size_t>(p->shape[axis]);
            if (p->requires_grad) {
                p->ensure_grad();
                for (size_t o = 0; o < outer; ++o)
                    for (size_t a = 0; a < ax; ++a) {
                        const double* src = &self.grad[(o * out_axis + off + a) * inner];
                        double* dst = &p->grad[(o * ax + a) * inner];
                        for (size_t i = 0; i < inner; ++i) dst[i] += src[i];
                    }
            }
            off += ax;
        }
    };
    return Tensor(n);
}

Tensor narrow(const Tensor& x, int axis, int start, int len) {
    const auto& s = x.shape();
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw std::invalid_argument("narrow: bad axis");
    if (start < 0 || len <= 0 || start + len > s[axis])
        throw std::invalid_argument("narrow: range out of bounds");
    std::vector<int> out_shape = s;
    out_shape[axis] = len;
    auto n = make_node(out_shape, {x.node()});
    auto [outer, inner] = split_at(s, axis);
    size_t in_axis = static_cast<size_t>(s[axis]);
    const auto& xv = x.val();
    for (size_t o = 0; o < outer; ++o)
        for (int a = 0; a < len; ++a)
            std::copy_n(&xv[(o * in_axis + start + a) * inner], inner,
                        &n->value[(o * len + a) * inner]);
    n->backprop = [axis, start, len](TapeNode& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        auto [outer, inner] = split_at(p->shape, axis);
        size_t in_axis = static_cast<size_t>(p->shape[axis]);
        for (size_t o = 0; o < outer; ++o)
            for (int a = 0; a < len; ++a) {
                const double* src = &self.grad[(o * len + a) * inner];
                double* dst = &p->grad[(o * in_axis + start + a) * inner];
                for (size_t i = 0; i < inner; ++i) dst[i] += src[i];
            }
    };
    return Tensor(n);
}

Tensor l1_loss(const Tensor& x, const Tensor& y) {
    check_same_shape(x, y, "l1_loss");
    auto n = make_node({1}, {x.node(), y.node()});
    const auto& xv = x.val();
    const auto& yv = y.val();
    double acc = 0.0;
    for (size_t i = 0; i < xv.size(); ++i) acc += std::abs(xv[i] - yv[i]);
    n->value[0] = acc / static_cast<double>(xv.size());
    n->backprop = [](TapeNode& self) {
        auto& px = self.parents[0];
        auto& py = self.parents[1];
        if (px->requires_grad) px->ensure_grad();
        if (py->requires_grad) py->ensure_grad();
        double g = self.grad[0] / static_cast<double>(px->value.size());
        for (size_t i = 0; i < px->value.size(); ++i) {
            double d = px->value[i] - py->value[i];
            double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            if (px->requires_grad) px->grad[i] += g * s;
            if (py->requires_grad) py->grad[i] -= g * s;
        }
    };
    return Tensor(n);
}

// ---- convolution ------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& w, const std::optional<Tensor>& bias,
              int stride, Padding pad) {
    if (x.rank() != 3 || w.rank() != 4) throw std::invalid_argument("conv2d: needs [C,H,W] input and [Co,Ci,kh,kw] kernel");
    int ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
    int co = w.dim(0), wci = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    if (wci != ci) throw std::invalid_argument("conv2d: channel mismatch");
    if (kh % 2 == 0 || kw % 2 == 0) throw std::invalid_argument("conv2d: kernel sides must be odd");
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be positive");
    if (bias && (bias->rank() != 1 || bias->dim(0) != co))
        throw std::invalid_argument("conv2d: bias must be [C_out]");
    int py = pad == Padding::Same ? (kh - 1) / 2 : 0;
    int px = pad == Padding::Same ? (kw - 1) / 2 : 0;
    int oh = (h + 2 * py - kh) / stride + 1;
    int ow = (wd + 2 * px - kw) / stride + 1;
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: output would be empty");

    std::vector<std::shared_ptr<TapeNode>> parents{x.node(), w.node()};
    if (bias) parents.push_back(bias->node());
    auto n = make_node({co, oh, ow}, std::move(parents));

    const double* xv = x.val().data();
    const double* wv = w.val().data();
    double* out = n->value.data();
    if (bias) {
        const auto& bv = bias->val();
        for (int c = 0; c < co; ++c)
            std::fill_n(out + static_cast<size_t>(c) * oh * ow, static_cast<size_t>(oh) * ow, bv[c]);
    }
    auto xat = [&](int c, int r, int cc) {
        return xv[(static_cast<size_t>(c) * h + r) * wd + cc];
    };
    for (int c = 0; c < co; ++c) {
        for (int ic = 0; ic < ci; ++ic) {
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    double wgt = wv[((static_cast<size_t>(c) * ci + ic) * kh + ky) * kw + kx];
                    if (wgt == 0.0) continue;
                    for (int oy = 0; oy < oh; ++oy) {
                        int iy = oy * stride + ky - py;
                        if (iy < 0 || iy >= h) continue;
                        double* orow = out + (static_cast<size_t>(c) * oh + oy) * ow;
                        for (int ox = 0; ox < ow; ++ox) {
                            int ix = ox * stride + kx - px;
                            if (ix < 0 || ix >= wd) continue;
                            orow[ox] += wgt * xat(ic, iy, ix);
                        }
                    }
                }
            }
        }
    }

    bool has_bias = bias.has_value();
    n->backprop = [ci, h, wd, co, kh, kw, stride, py, px, oh, ow, has_bias](TapeNode& self) {
        auto& xp = self.parents[0];
        auto& wp = self.parents[1];
        const double* g = self.grad.data();
        const double* xv = xp->value.data();
        const double* wv = wp->value.data();
        if (has_bias) {
            auto& bp = self.parents[2];
            if (bp->requires_grad) {
                bp->ensure_grad();
                for (int c = 0; c < co; ++c) {
                    double acc = 0.0;
                    const double* gc = g + static_cast<size_t>(c) * oh * ow;
                    for (int i = 0; i < oh * ow; ++i) acc += gc[i];
                    bp->grad[c] += acc;
                }
            }
        }
        if (wp->requires_grad) wp->ensure_grad();
        if (xp->requires_grad) xp->ensure_grad();
        double* gx = xp->requires_grad ? xp->grad.data() : nullptr;
        double* gw = wp->requires_grad ? wp->grad.data() : nullptr;
        if (!gx && !gw) return;
        for (int c = 0; c < co; ++c) {
            for (int ic = 0; ic < ci; ++ic) {
                for (int ky = 0; ky < kh; ++ky) {
                    for (int kx = 0; kx < kw; ++kx) {
                        size_t widx = ((static_cast<size_t>(c) * ci + ic) * kh + ky) * kw + kx;
                        double wgt = wv[widx];
                        double wacc = 0.0;
                        for (int oy = 0; oy < oh; ++oy) {
                            int iy = oy * stride + ky - py;
                            if (iy < 0 || iy >= h) continue;
                            const double* grow = g + (static_cast<size_t>(c) * oh + oy) * ow;
                            const double* xrow = xv + (static_cast<size_t>(ic) * h + iy) * wd;
                            double* gxrow = gx ? gx + (static_cast<size_t>(ic) * h + iy) * wd : nullptr;
                            for (int ox = 0; ox < ow; ++ox) {
                                int ix = ox * stride + kx - px;
                                if (ix < 0 || ix >= wd) continue;
                                if (gw) wacc += grow[ox] * xrow[ix];
                                if (gxrow) gxrow[ix] += grow[ox] * wgt;
                            }
                        }
                        if (gw) gw[widx] += wacc;
                    }
                }
            }
        }
    };
    return Tensor(n);
}

Tensor pixel_shuffle(const Tensor& x, int r) {
    if (x.rank() != 3) throw std::invalid_argument("pixel_shuffle: needs [C,H,W]");
    if (r < 1) throw std::invalid_argument("pixel_shuffle: factor must be positive");
    int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (cin % (r * r) != 0)
        throw std::invalid_argument("pixel_shuffle: channels not divisible by r^2");
    int cout = cin / (r * r);
    auto n = make_node({cout, h * r, w * r}, {x.node()});
    const auto& xv = x.val();
    auto src_index = [=](int c, int y, int xx) {
        int dy = y % r, dx = xx % r;
        int ic = (c * r + dy) * r + dx;
        return (static_cast<size_t>(ic) * h + y / r) * w + xx / r;
    };
    for (int c = 0; c < cout; ++c)
        for (int y = 0; y < h * r; ++y)
            for (int xx = 0; xx < w * r; ++xx)
                n->value[(static_cast<size_t>(c) * h * r + y) * (w * r) + xx] = xv[src_index(c, y, xx)];
    n->backprop = [r, h, w, cout](TapeNode& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (int c = 0; c < cout; ++c)
            for (int y = 0; y < h * r; ++y)
                for (int xx = 0; xx < w * r; ++xx) {
                    int ic = (c * r + y % r) * r + xx % r;
                    p->grad[(static_cast<size_t>(ic) * h + y / r) * w + xx / r] +=
                        self.grad[(static_cast<size_t>(c) * h * r + y) * (w * r) + xx];
                }
    };
    return Tensor(n);
}

Tensor pixel_unshuffle(const Tensor& x, int r) {
    if (x.rank() != 3) throw std::invalid_argument("pixel_unshuffle: needs [C,H,W]");
    int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h % r != 0 || w % r != 0)
        throw std::invalid_argument("pixel_unshuffle: spatial dims not divisible by r");
    int cout = cin * r * r, oh = h / r, ow = w / r;
    auto n = make_node({cout, oh, ow}, {x.node()});
    const auto& xv = x.val();
    for (int c = 0; c < cin; ++c)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                int oc = (c * r + y % r) * r + xx % r;
                n->value[(static_cast<size_t>(oc) * oh + y / r) * ow + xx / r] =
                    xv[(static_cast<size_t>(c) * h + y) * w + xx];
            }
    n->backprop = [r, h, w, cin](TapeNode& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        int oh = h / r, ow = w / r;
        for (int c = 0; c < cin; ++c)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) {
                    int oc = (c * r + y % r) * r + xx % r;
                    p->grad[(static_cast<size_t>(c) * h + y) * w + xx] +=
                        self.grad[(static_cast<size_t>(oc) * oh + y / r) * ow + xx / r];
                }
    };
    return Tensor(n);
}

// ---- physics primitives ------------------------------------------------------

namespace {

void check_complex(const Tensor& x, const char* op) {
    if (x.rank() != 3 || x.dim(0) != 2)
        throw std::invalid_argument(std::string(op) + ": expects a [2,H,W] field");
}

ComplexImage planes_to_image(const std::vector<double>& v, int h, int w) {
    ComplexImage img(h, w);
    size_t plane = static_cast<size_t>(h) * w;
    for (size_t i = 0; i < plane; ++i) img.data[i] = {v[i], v[plane + i]};
    return img;
}

void image_to_planes(const ComplexImage& img, std::vector<double>& v) {
    size_t plane = img.size();
    for (size_t i = 0; i < plane; ++i) {
        v[i] = img.data[i].real();
        v[plane + i] = img.data[i].imag();
    }
}

}  // namespace

Tensor complex_from_parts(const Tensor& re, const Tensor& im) {
    if (re.rank() != 3 || re.dim(0) != 1 || im.rank() != 3 || im.dim(0) != 1)
        throw std::invalid_argument("complex_from_parts: expects [1,H,W] planes");
    return concat({re, im}, 0);
}

Tensor complex_mul(const Tensor& a, const Tensor& b) {
    check_complex(a, "complex_mul");
    check_complex(b, "complex_mul");
    Tensor ar = narrow(a, 0, 0, 1), ai = narrow(a, 0, 1, 1);
    Tensor br = narrow(b, 0, 0, 1), bi = narrow(b, 0, 1, 1);
    Tensor re = sub(mul(ar, br), mul(ai, bi));
    Tensor im = add(mul(ar, bi), mul(ai, br));
    return concat({re, im}, 0);
}

namespace {

Tensor fft_like(const Tensor& x, bool inverse) {
    check_complex(x, inverse ? "ifft2c" : "fft2c");
    int h = x.dim(1), w = x.dim(2);
    auto n = make_node(x.shape(), {x.node()});
    ComplexImage img = planes_to_image(x.val(), h, w);
    img = inverse ? ifft_centered(img) : fft_centered(img);
    image_to_planes(img, n->value);
    n->backprop = [h, w, inverse](TapeNode& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        // Adjoint of the unnormalized forward transform is HW * inverse;
        // adjoint of the normalized inverse is forward / HW.
        ComplexImage g = planes_to_image(self.grad, h, w);
        double s;
        if (inverse) {
            g = fft_centered(g);
            s = 1.0 / (static_cast<double>(h) * w);
        } else {
            g = ifft_centered(g);
            s = static_cast<double>(h) * w;
        }
        size_t plane = g.size();
        for (size_t i = 0; i < plane; ++i) {
            p->grad[i] += s * g.data[i].real();
            p->grad[plane + i] += s * g.data[i].imag();
        }
    };
    return Tensor(n);
}

}  // namespace

Tensor fft2c(const Tensor& x) { return fft_like(x, false); }
Tensor ifft2c(const Tensor& x) { return fft_like(x, true); }

Tensor modsq(const Tensor& z) {
    check_complex(z, "modsq");
    int h = z.dim(1), w = z.dim(2);
    auto n = make_node({1, h, w}, {z.node()});
    const auto& zv = z.val();
    size_t plane = static_cast<size_t>(h) * w;
    for (size_t i = 0; i < plane; ++i)
        n->value[i] = zv[i] * zv[i] + zv[plane + i] * zv[plane + i];
    n->backprop = [plane](TapeNode& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (size_t i = 0; i < plane; ++i) {
            p->grad[i] += 2.0 * p->value[i] * self.grad[i];
            p->grad[plane + i] += 2.0 * p->value[plane + i] * self.grad[i];
        }
    };
    return Tensor(n);
}

namespace {

struct Window {
    int r0, c0, m;
};

Window window_of(int h, int w, int m, PixelShift off) {
    Window win{h / 2 + off.y - m / 2, w / 2 + off.x - m / 2, m};
    if (win.r0 < 0 || win.c0 < 0 || win.r0 + m > h || win.c0 + m > w)
        throw std::invalid_argument("centered window out of bounds");
    return win;
}

}  // namespace

Tensor crop_center(const Tensor& x, int m, PixelShift offset) {
    if (x.rank() != 3) throw std::invalid_argument("crop_center: needs [C,H,W]");
    int ch = x.dim(0), h = x.dim(1), w = x.dim(2);
    Window win = window_of(h, w, m, offset);
    auto n = make_node({ch, m, m}, {x.node()});
    const auto& xv = x.val();
    for (int c = 0; c < ch; ++c)
        for (int r = 0; r < m; ++r)
            std::copy_n(&xv[(static_cast<size_t>(c) * h + win.r0 + r) * w + win.c0], m,
                        &n->value[(static_cast<size_t>(c) * m + r) * m]);
    n->backprop = [ch, h, w, win](TapeNode& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (int c = 0; c < ch; ++c)
            for (int r = 0; r < win.m; ++r) {
                const double* src = &self.grad[(static_cast<size_t>(c) * win.m + r) * win.m];
                double* dst = &p->grad[(static_cast<size_t>(c) * h + win.r0 + r) * w + win.c0];
                for (int i = 0; i < win.m; ++i) dst[i] += src[i];
            }
    };
    return Tensor(n);
}

Tensor embed_center(const Tensor& x, int nside, PixelShift offset) {
    if (x.rank() != 3) throw std::invalid_argument("embed_center: needs [C,m,m]");
    int ch = x.dim(0), m = x.dim(1);
    if (x.dim(2) != m) throw std::invalid_argument("embed_center: input must be square");
    Window win = window_of(nside, nside, m, offset);
    auto n = make_node({ch, nside, nside}, {x.node()});
    const auto& xv = x.val();
    for (int c = 0; c < ch; ++c)
        for (int r = 0; r < m; ++r)
            std::copy_n(&xv[(static_cast<size_t>(c) * m + r) * m], m,
                        &n->value[(static_cast<size_t>(c) * nside + win.r0 + r) * nside + win.c0]);
    n->backprop = [ch, nside, m, win](TapeNode& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (int c = 0; c < ch; ++c)
            for (int r = 0; r < m; ++r) {
                const double* src =
                    &self.grad[(static_cast<size_t>(c) * nside + win.r0 + r) * nside + win.c0];
                double* dst = &p->grad[(static_cast<size_t>(c) * m + r) * m];
                for (int i = 0; i < m; ++i) dst[i] += src[i];
            }
    };
    return Tensor(n);
}

// ---- optimizer ----------------------------------------------------------------

void adam_step(std::vector<Tensor>& params, OptimState& state) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].numel(), 0.0);
            state.v[i].assign(params[i].numel(), 0.0);
        }
    }
    if (state.m.size() != params.size())
        throw std::invalid_argument("adam_step: parameter count changed");
    ++state.step;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i].val();
        auto& g = params[i].grad();
        if (state.m[i].size() != p.size())
            throw std::invalid_argument("adam_step: moment/parameter shape mismatch");
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (size_t j = 0; j < p.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            double mh = m[j] / bc1;
            double vh = v[j] / bc2;
            p[j] -= state.lr * mh / (std::sqrt(vh) + state.eps);
        }
        params[i].zero_grad();
    }
}

}  // namespace fpm::ad
