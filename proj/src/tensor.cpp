#include "kgcot/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "kgcot/error.hpp"

namespace kgcot {

namespace {

thread_local bool g_grad_enabled = true;

std::int64_t shape_product(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

void require_2d(const Tensor& t, const char* what) {
    if (t.ndim() != 2) {
        throw ShapeError(std::string(what) + ": expected 2-d tensor, got " +
                         shape_str(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

using NodePtr = std::shared_ptr<detail::TensorNode>;

Tensor make_tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    auto node = std::make_shared<detail::TensorNode>();
    if (shape_product(shape) != static_cast<std::int64_t>(data.size())) {
        throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    }
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(node);
}

// Result of an op: records parents and the backward step only while grad
// mode is on and some parent wants gradients.
Tensor make_op(std::vector<int> shape, std::vector<double> data,
               std::vector<Tensor> parents,
               std::function<void(detail::TensorNode&)> backward) {
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) needs = needs || p.requires_grad();
    }
    Tensor out = make_tensor(std::move(shape), std::move(data), needs);
    if (needs) {
        auto node = out.node();
        node->parents.reserve(parents.size());
        for (auto& p : parents) node->parents.push_back(p.node());
        node->backward = std::move(backward);
    }
    return out;
}

}  // namespace

namespace detail {
void TensorNode::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}
}  // namespace detail

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---- Tensor ----------------------------------------------------------

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    std::vector<double> data(shape_product(shape), 0.0);
    return make_tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::constant(std::vector<int> shape, double value) {
    std::vector<double> data(shape_product(shape), value);
    return make_tensor(std::move(shape), std::move(data), false);
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    return make_tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::uniform(std::vector<int> shape, double lo, double hi,
                       std::mt19937_64& rng, bool requires_grad) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> data(shape_product(shape));
    for (auto& v : data) v = dist(rng);
    return make_tensor(std::move(shape), std::move(data), requires_grad);
}

const std::vector<int>& Tensor::shape() const { return node_->shape; }
int Tensor::ndim() const { return static_cast<int>(node_->shape.size()); }

int Tensor::rows() const {
    require_2d(*this, "rows()");
    return node_->shape[0];
}

int Tensor::cols() const {
    require_2d(*this, "cols()");
    return node_->shape[1];
}

std::int64_t Tensor::size() const { return static_cast<std::int64_t>(node_->data.size()); }

const std::vector<double>& Tensor::data() const { return node_->data; }
std::vector<double>& Tensor::data_mut() { return node_->data; }

double Tensor::at(int r, int c) const {
    require_2d(*this, "at()");
    return node_->data[static_cast<size_t>(r) * node_->shape[1] + c];
}

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item(): tensor has " + std::to_string(size()) + " entries");
    return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

const std::vector<double>& Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

std::vector<double>& Tensor::grad_mut() {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    node_->ensure_grad();
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() const {
    if (size() != 1) {
        throw ShapeError("backward(): output must be scalar, got " + shape_str(shape()));
    }
    // Iterative post-order DFS; recursion would overflow on long tapes.
    std::vector<detail::TensorNode*> order;
    std::unordered_set<detail::TensorNode*> seen;
    std::vector<std::pair<detail::TensorNode*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::TensorNode* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (auto* n : order) {
        n->ensure_grad();
        std::fill(n->grad.begin(), n->grad.end(), 0.0);
    }
    node_->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward) (*it)->backward(**it);
    }
}

Tensor Tensor::detach() const { return make_tensor(node_->shape, node_->data, false); }

Tensor Tensor::clone() const { return make_tensor(node_->shape, node_->data, node_->requires_grad); }

// ---- helpers for backward bodies --------------------------------------

namespace {

// Parent grad buffer, allocated on demand.
std::vector<double>& pgrad(detail::TensorNode& out, size_t i) {
    out.parents[i]->ensure_grad();
    return out.parents[i]->grad;
}

bool pneeds(const detail::TensorNode& out, size_t i) {
    return out.parents[i]->requires_grad;
}

}  // namespace

// ---- linear algebra ----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const int r = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], c = b.shape()[1];
    if (k != k2) {
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
    }
    std::vector<double> out(static_cast<size_t>(r) * c, 0.0);
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (int i = 0; i < r; ++i) {
        for (int p = 0; p < k; ++p) {
            const double av = ad[static_cast<size_t>(i) * k + p];
            if (av == 0.0) continue;
            const size_t boff = static_cast<size_t>(p) * c;
            const size_t ooff = static_cast<size_t>(i) * c;
            for (int j = 0; j < c; ++j) out[ooff + j] += av * bd[boff + j];
        }
    }
    return make_op(
        {r, c}, std::move(out), {a, b},
        [r, k, c](detail::TensorNode& o) {
            const auto& g = o.grad;
            const auto& ad = o.parents[0]->data;
            const auto& bd = o.parents[1]->data;
            if (pneeds(o, 0)) {
                auto& ga = pgrad(o, 0);  // dA = dC * B^T
                for (int i = 0; i < r; ++i)
                    for (int p = 0; p < k; ++p) {
                        double s = 0.0;
                        for (int j = 0; j < c; ++j)
                            s += g[static_cast<size_t>(i) * c + j] * bd[static_cast<size_t>(p) * c + j];
                        ga[static_cast<size_t>(i) * k + p] += s;
                    }
            }
            if (pneeds(o, 1)) {
                auto& gb = pgrad(o, 1);  // dB = A^T * dC
                for (int p = 0; p < k; ++p)
                    for (int i = 0; i < r; ++i) {
                        const double av = ad[static_cast<size_t>(i) * k + p];
                        if (av == 0.0) continue;
                        for (int j = 0; j < c; ++j)
                            gb[static_cast<size_t>(p) * c + j] += av * g[static_cast<size_t>(i) * c + j];
                    }
            }
        });
}

Tensor transpose(const Tensor& a) {
    require_2d(a, "transpose");
    const int r = a.shape()[0], c = a.shape()[1];
    std::vector<double> out(static_cast<size_t>(r) * c);
    const auto& ad = a.data();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out[static_cast<size_t>(j) * r + i] = ad[static_cast<size_t>(i) * c + j];
    return make_op({c, r}, std::move(out), {a}, [r, c](detail::TensorNode& o) {
        if (!pneeds(o, 0)) return;
        auto& ga = pgrad(o, 0);
        for (int j = 0; j < c; ++j)
            for (int i = 0; i < r; ++i)
                ga[static_cast<size_t>(i) * c + j] += o.grad[static_cast<size_t>(j) * r + i];
    });
}

// ---- elementwise -------------------------------------------------------

namespace {

template <class Fwd, class Bwd>
Tensor elementwise_binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
    require_same_shape(a, b, name);
    const auto& ad = a.data();
    const auto& bd = b.data();
    std::vector<double> out(ad.size());
    for (size_t i = 0; i < ad.size(); ++i) out[i] = fwd(ad[i], bd[i]);
    return make_op(a.shape(), std::move(out), {a, b}, [bwd](detail::TensorNode& o) {
        const auto& ad = o.parents[0]->data;
        const auto& bd = o.parents[1]->data;
        const bool na = pneeds(o, 0), nb = pneeds(o, 1);
        if (!na && !nb) return;
        if (na) o.parents[0]->ensure_grad();
        if (nb) o.parents[1]->ensure_grad();
        for (size_t i = 0; i < o.grad.size(); ++i) {
            auto [da, db] = bwd(ad[i], bd[i], o.data[i]);
            if (na) o.parents[0]->grad[i] += o.grad[i] * da;
            if (nb) o.parents[1]->grad[i] += o.grad[i] * db;
        }
    });
}

template <class Fwd, class Bwd>
Tensor elementwise_unary(const Tensor& a, Fwd fwd, Bwd bwd) {
    const auto& ad = a.data();
    std::vector<double> out(ad.size());
    for (size_t i = 0; i < ad.size(); ++i) out[i] = fwd(ad[i]);
    return make_op(a.shape(), std::move(out), {a}, [bwd](detail::TensorNode& o) {
        if (!pneeds(o, 0)) return;
        auto& ga = pgrad(o, 0);
        const auto& ad = o.parents[0]->data;
        for (size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] * bwd(ad[i], o.data[i]);
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return elementwise_binary(a, b, "add",
                              [](double x, double y) { return x + y; },
                              [](double, double, double) { return std::pair{1.0, 1.0}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return elementwise_binary(a, b, "sub",
                              [](double x, double y) { return x - y; },
                              [](double, double, double) { return std::pair{1.0, -1.0}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return elementwise_binary(a, b, "mul",
                              [](double x, double y) { return x * y; },
                              [](double x, double y, double) { return std::pair{y, x}; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return elementwise_binary(a, b, "div",
                              [](double x, double y) { return x / y; },
                              [](double x, double y, double) {
                                  return std::pair{1.0 / y, -x / (y * y)};
                              });
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
    require_2d(a, "add_rowvec");
    require_2d(v, "add_rowvec");
    const int r = a.shape()[0], c = a.shape()[1];
    if (v.shape()[0] != 1 || v.shape()[1] != c) {
        throw ShapeError("add_rowvec: " + shape_str(a.shape()) + " + " + shape_str(v.shape()));
    }
    std::vector<double> out(a.data());
    const auto& vd = v.data();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out[static_cast<size_t>(i) * c + j] += vd[j];
    return make_op({r, c}, std::move(out), {a, v}, [r, c](detail::TensorNode& o) {
        if (pneeds(o, 0)) {
            auto& ga = pgrad(o, 0);
            for (size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
        }
        if (pneeds(o, 1)) {
            auto& gv = pgrad(o, 1);
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) gv[j] += o.grad[static_cast<size_t>(i) * c + j];
        }
    });
}

Tensor mul_colvec(const Tensor& a, const Tensor& v) {
    require_2d(a, "mul_colvec");
    require_2d(v, "mul_colvec");
    const int r = a.shape()[0], c = a.shape()[1];
    if (v.shape()[0] != r || v.shape()[1] != 1) {
        throw ShapeError("mul_colvec: " + shape_str(a.shape()) + " * " + shape_str(v.shape()));
    }
    std::vector<double> out(a.data());
    const auto& vd = v.data();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out[static_cast<size_t>(i) * c + j] *= vd[i];
    return make_op({r, c}, std::move(out), {a, v}, [r, c](detail::TensorNode& o) {
        const auto& ad = o.parents[0]->data;
        const auto& vd = o.parents[1]->data;
        if (pneeds(o, 0)) {
            auto& ga = pgrad(o, 0);
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j)
                    ga[static_cast<size_t>(i) * c + j] += o.grad[static_cast<size_t>(i) * c + j] * vd[i];
        }
        if (pneeds(o, 1)) {
            auto& gv = pgrad(o, 1);
            for (int i = 0; i < r; ++i) {
                double s = 0.0;
                for (int j = 0; j < c; ++j)
                    s += o.grad[static_cast<size_t>(i) * c + j] * ad[static_cast<size_t>(i) * c + j];
                gv[i] += s;
            }
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    return elementwise_unary(a, [s](double x) { return x * s; },
                             [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
    return elementwise_unary(a, [s](double x) { return x + s; },
                             [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& a) {
    return elementwise_unary(a, [](double x) { return std::exp(x); },
                             [](double, double y) { return y; });
}

Tensor relu(const Tensor& a) {
    return elementwise_unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                             [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
    return elementwise_unary(a, [slope](double x) { return x > 0.0 ? x : slope * x; },
                             [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor sigmoid(const Tensor& a) {
    // Split by sign so neither branch exponentiates a large positive value.
    return elementwise_unary(a,
                             [](double x) {
                                 if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                                 const double e = std::exp(x);
                                 return e / (1.0 + e);
                             },
                             [](double, double y) { return y * (1.0 - y); });
}

// ---- softmax family ------------------------------------------------------

Tensor softmax_rows(const Tensor& a) {
    require_2d(a, "softmax_rows");
    const int r = a.shape()[0], c = a.shape()[1];
    if (c == 0) throw ShapeError("softmax_rows: zero-width rows " + shape_str(a.shape()));
    const auto& ad = a.data();
    std::vector<double> out(ad.size());
    for (int i = 0; i < r; ++i) {
        const size_t off = static_cast<size_t>(i) * c;
        double m = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < c; ++j) m = std::max(m, ad[off + j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) {
            out[off + j] = std::exp(ad[off + j] - m);
            z += out[off + j];
        }
        for (int j = 0; j < c; ++j) out[off + j] /= z;
    }
    return make_op({r, c}, std::move(out), {a}, [r, c](detail::TensorNode& o) {
        if (!pneeds(o, 0)) return;
        auto& ga = pgrad(o, 0);
        for (int i = 0; i < r; ++i) {
            const size_t off = static_cast<size_t>(i) * c;
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += o.grad[off + j] * o.data[off + j];
            for (int j = 0; j < c; ++j) ga[off + j] += o.data[off + j] * (o.grad[off + j] - dot);
        }
    });
}

Tensor log_softmax_rows(const Tensor& a) {
    require_2d(a, "log_softmax_rows");
    const int r = a.shape()[0], c = a.shape()[1];
    if (c == 0) throw ShapeError("log_softmax_rows: zero-width rows " + shape_str(a.shape()));
    const auto& ad = a.data();
    std::vector<double> out(ad.size());
    for (int i = 0; i < r; ++i) {
        const size_t off = static_cast<size_t>(i) * c;
        double m = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < c; ++j) m = std::max(m, ad[off + j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(ad[off + j] - m);
        const double lz = m + std::log(z);
        for (int j = 0; j < c; ++j) out[off + j] = ad[off + j] - lz;
    }
    return make_op({r, c}, std::move(out), {a}, [r, c](detail::TensorNode& o) {
        if (!pneeds(o, 0)) return;
        auto& ga = pgrad(o, 0);
        for (int i = 0; i < r; ++i) {
            const size_t off = static_cast<size_t>(i) * c;
            double gsum = 0.0;
            for (int j = 0; j < c; ++j) gsum += o.grad[off + j];
            for (int j = 0; j < c; ++j)
                ga[off + j] += o.grad[off + j] - std::exp(o.data[off + j]) * gsum;
        }
    });
}

// ---- reductions -----------------------------------------------------------

Tensor sum_all(const Tensor& a) {
    double s = std::accumulate(a.data().begin(), a.data().end(), 0.0);
    return make_op({1, 1}, {s}, {a}, [](detail::TensorNode& o) {
        if (!pneeds(o, 0)) return;
        auto& ga = pgrad(o, 0);
        for (auto& g : ga) g += o.grad[0];
    });
}

Tensor mean_all(const Tensor& a) {
    if (a.size() == 0) throw ShapeError("mean_all: empty tensor");
    const double inv = 1.0 / static_cast<double>(a.size());
    double s = std::accumulate(a.data().begin(), a.data().end(), 0.0) * inv;
    return make_op({1, 1}, {s}, {a}, [inv](detail::TensorNode& o) {
        if (!pneeds(o, 0)) return;
        auto& ga = pgrad(o, 0);
        for (auto& g : ga) g += o.grad[0] * inv;
    });
}

Tensor mean_rows(const Tensor& a) {
    require_2d(a, "mean_rows");
    const int r = a.shape()[0], c = a.shape()[1];
    if (r == 0) throw ShapeError("mean_rows: zero rows " + shape_str(a.shape()));
    std::vector<double> out(c, 0.0);
    const auto& ad = a.data();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out[j] += ad[static_cast<size_t>(i) * c + j];
    const double inv = 1.0 / r;
    for (auto& v : out) v *= inv;
    return make_op({1, c}, std::move(out), {a}, [r, c, inv](detail::TensorNode& o) {
        if (!pneeds(o, 0)) return;
        auto& ga = pgrad(o, 0);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) ga[static_cast<size_t>(i) * c + j] += o.grad[j] * inv;
    });
}

// ---- slicing / concatenation ----------------------------------------------

Tensor rows(const Tensor& a, int r0, int r1) {
    require_2d(a, "rows");
    const int r = a.shape()[0], c = a.shape()[1];
    if (r0 < 0 || r1 < r0 || r1 > r) {
        throw ShapeError("rows: range [" + std::to_string(r0) + "," + std::to_string(r1) +
                         ") out of " + shape_str(a.shape()));
    }
    std::vector<double> out(a.data().begin() + static_cast<size_t>(r0) * c,
                            a.data().begin() + static_cast<size_t>(r1) * c);
    return make_op({r1 - r0, c}, std::move(out), {a}, [r0, c](detail::TensorNode& o) {
        if (!pneeds(o, 0)) return;
        auto& ga = pgrad(o, 0);
        for (size_t i = 0; i < o.grad.size(); ++i) ga[static_cast<size_t>(r0) * c + i] += o.grad[i];
    });
}

Tensor cols(const Tensor& a, int c0, int c1) {
    require_2d(a, "cols");
    const int r = a.shape()[0], c = a.shape()[1];
    if (c0 < 0 || c1 < c0 || c1 > c) {
        throw ShapeError("cols: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") out of " + shape_str(a.shape()));
    }
    const int w = c1 - c0;
    std::vector<double> out(static_cast<size_t>(r) * w);
    const auto& ad = a.data();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < w; ++j)
            out[static_cast<size_t>(i) * w + j] = ad[static_cast<size_t>(i) * c + c0 + j];
    return make_op({r, w}, std::move(out), {a}, [r, c, c0, w](detail::TensorNode& o) {
        if (!pneeds(o, 0)) return;
        auto& ga = pgrad(o, 0);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < w; ++j)
                ga[static_cast<size_t>(i) * c + c0 + j] += o.grad[static_cast<size_t>(i) * w + j];
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    const int c = parts[0].cols();
    int r = 0;
    for (const auto& p : parts) {
        if (p.cols() != c) {
            throw ShapeError("concat_rows: column mismatch " + shape_str(parts[0].shape()) +
                             " vs " + shape_str(p.shape()));
        }
        r += p.rows();
    }
    std::vector<double> out;
    out.reserve(static_cast<size_t>(r) * c);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    std::vector<Tensor> parents(parts.begin(), parts.end());
    return make_op({r, c}, std::move(out), std::move(parents), [](detail::TensorNode& o) {
        size_t off = 0;
        for (size_t pi = 0; pi < o.parents.size(); ++pi) {
            const size_t n = o.parents[pi]->data.size();
            if (pneeds(o, pi)) {
                auto& g = pgrad(o, pi);
                for (size_t i = 0; i < n; ++i) g[i] += o.grad[off + i];
            }
            off += n;
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    const int r = parts[0].rows();
    int c = 0;
    for (const auto& p : parts) {
        if (p.rows() != r) {
            throw ShapeError("concat_cols: row mismatch " + shape_str(parts[0].shape()) +
                             " vs " + shape_str(p.shape()));
        }
        c += p.cols();
    }
    std::vector<double> out(static_cast<size_t>(r) * c);
    int coff = 0;
    for (const auto& p : parts) {
        const int w = p.cols();
        const auto& pd = p.data();
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < w; ++j)
                out[static_cast<size_t>(i) * c + coff + j] = pd[static_cast<size_t>(i) * w + j];
        coff += w;
    }
    std::vector<Tensor> parents(parts.begin(), parts.end());
    return make_op({r, c}, std::move(out), std::move(parents), [r, c](detail::TensorNode& o) {
        int coff = 0;
        for (size_t pi = 0; pi < o.parents.size(); ++pi) {
            const int w = o.parents[pi]->shape[1];
            if (pneeds(o, pi)) {
                auto& g = pgrad(o, pi);
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < w; ++j)
                        g[static_cast<size_t>(i) * w + j] += o.grad[static_cast<size_t>(i) * c + coff + j];
            }
            coff += w;
        }
    });
}

// ---- indexed ops -----------------------------------------------------------

Tensor gather_rows(const Tensor& a, const std::vector<int>& idx) {
    require_2d(a, "gather_rows");
    const int r = a.shape()[0], c = a.shape()[1];
    std::vector<double> out(idx.size() * static_cast<size_t>(c));
    const auto& ad = a.data();
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= r) {
            throw ShapeError("gather_rows: index " + std::to_string(idx[i]) + " out of " +
                             shape_str(a.shape()));
        }
        std::copy_n(ad.begin() + static_cast<size_t>(idx[i]) * c, c,
                    out.begin() + static_cast<size_t>(i) * c);
    }
    return make_op({static_cast<int>(idx.size()), c}, std::move(out), {a},
                   [idx, c](detail::TensorNode& o) {
                       if (!pneeds(o, 0)) return;
                       auto& ga = pgrad(o, 0);
                       for (size_t i = 0; i < idx.size(); ++i)
                           for (int j = 0; j < c; ++j)
                               ga[static_cast<size_t>(idx[i]) * c + j] += o.grad[i * c + j];
                   });
}

Tensor scatter_sum_rows(const Tensor& a, const std::vector<int>& dst, int out_rows) {
    require_2d(a, "scatter_sum_rows");
    const int r = a.shape()[0], c = a.shape()[1];
    if (static_cast<size_t>(r) != dst.size()) {
        throw ShapeError("scatter_sum_rows: " + std::to_string(dst.size()) +
                         " indices for " + shape_str(a.shape()));
    }
    std::vector<double> out(static_cast<size_t>(out_rows) * c, 0.0);
    const auto& ad = a.data();
    for (int i = 0; i < r; ++i) {
        if (dst[i] < 0 || dst[i] >= out_rows) {
            throw ShapeError("scatter_sum_rows: index " + std::to_string(dst[i]) +
                             " out of [0," + std::to_string(out_rows) + ")");
        }
        for (int j = 0; j < c; ++j)
            out[static_cast<size_t>(dst[i]) * c + j] += ad[static_cast<size_t>(i) * c + j];
    }
    return make_op({out_rows, c}, std::move(out), {a}, [dst, c](detail::TensorNode& o) {
        if (!pneeds(o, 0)) return;
        auto& ga = pgrad(o, 0);
        for (size_t i = 0; i < dst.size(); ++i)
            for (int j = 0; j < c; ++j)
                ga[i * c + j] += o.grad[static_cast<size_t>(dst[i]) * c + j];
    });
}

Tensor segment_softmax(const Tensor& logits, const std::vector<int>& segment, int num_segments) {
    require_2d(logits, "segment_softmax");
    const int e = logits.shape()[0];
    if (logits.shape()[1] != 1) {
        throw ShapeError("segment_softmax: expected [E x 1], got " + shape_str(logits.shape()));
    }
    if (static_cast<size_t>(e) != segment.size()) {
        throw ShapeError("segment_softmax: " + std::to_string(segment.size()) +
                         " segment ids for " + shape_str(logits.shape()));
    }
    const auto& ld = logits.data();
    std::vector<double> mx(num_segments, -std::numeric_limits<double>::infinity());
    for (int i = 0; i < e; ++i) {
        if (segment[i] < 0 || segment[i] >= num_segments) {
            throw ShapeError("segment_softmax: segment id " + std::to_string(segment[i]) +
                             " out of [0," + std::to_string(num_segments) + ")");
        }
        mx[segment[i]] = std::max(mx[segment[i]], ld[i]);
    }
    std::vector<double> z(num_segments, 0.0);
    std::vector<double> out(e);
    for (int i = 0; i < e; ++i) {
        out[i] = std::exp(ld[i] - mx[segment[i]]);
        z[segment[i]] += out[i];
    }
    for (int i = 0; i < e; ++i) out[i] /= z[segment[i]];
    return make_op({e, 1}, std::move(out), {logits},
                   [segment, num_segments](detail::TensorNode& o) {
                       if (!pneeds(o, 0)) return;
                       auto& ga = pgrad(o, 0);
                       std::vector<double> dot(num_segments, 0.0);
                       for (size_t i = 0; i < o.data.size(); ++i)
                           dot[segment[i]] += o.grad[i] * o.data[i];
                       for (size_t i = 0; i < o.data.size(); ++i)
                           ga[i] += o.data[i] * (o.grad[i] - dot[segment[i]]);
                   });
}

// ---- layer norm --------------------------------------------------------------

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    require_2d(x, "layer_norm_rows");
    const int r = x.shape()[0], c = x.shape()[1];
    if (gain.shape() != std::vector<int>{1, c} || bias.shape() != std::vector<int>{1, c}) {
        throw ShapeError("layer_norm_rows: gain " + shape_str(gain.shape()) + " bias " +
                         shape_str(bias.shape()) + " for " + shape_str(x.shape()));
    }
    const auto& xd = x.data();
    const auto& gd = gain.data();
    const auto& bd = bias.data();
    std::vector<double> out(xd.size());
    std::vector<double> xhat(xd.size());
    std::vector<double> inv_sigma(r);
    for (int i = 0; i < r; ++i) {
        const size_t off = static_cast<size_t>(i) * c;
        double mu = 0.0;
        for (int j = 0; j < c; ++j) mu += xd[off + j];
        mu /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) {
            const double d = xd[off + j] - mu;
            var += d * d;
        }
        var /= c;
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_sigma[i] = inv;
        for (int j = 0; j < c; ++j) {
            xhat[off + j] = (xd[off + j] - mu) * inv;
            out[off + j] = xhat[off + j] * gd[j] + bd[j];
        }
    }
    return make_op({r, c}, std::move(out), {x, gain, bias},
                   [r, c, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](detail::TensorNode& o) {
                       const auto& gd = o.parents[1]->data;
                       if (pneeds(o, 0)) {
                           auto& gx = pgrad(o, 0);
                           for (int i = 0; i < r; ++i) {
                               const size_t off = static_cast<size_t>(i) * c;
                               double m1 = 0.0, m2 = 0.0;
                               for (int j = 0; j < c; ++j) {
                                   const double dxh = o.grad[off + j] * gd[j];
                                   m1 += dxh;
                                   m2 += dxh * xhat[off + j];
                               }
                               m1 /= c;
                               m2 /= c;
                               for (int j = 0; j < c; ++j) {
                                   const double dxh = o.grad[off + j] * gd[j];
                                   gx[off + j] += inv_sigma[i] * (dxh - m1 - xhat[off + j] * m2);
                               }
                           }
                       }
                       if (pneeds(o, 1)) {
                           auto& gg = pgrad(o, 1);
                           for (int i = 0; i < r; ++i)
                               for (int j = 0; j < c; ++j)
                                   gg[j] += o.grad[static_cast<size_t>(i) * c + j] * xhat[static_cast<size_t>(i) * c + j];
                       }
                       if (pneeds(o, 2)) {
                           auto& gb = pgrad(o, 2);
                           for (int i = 0; i < r; ++i)
                               for (int j = 0; j < c; ++j) gb[j] += o.grad[static_cast<size_t>(i) * c + j];
                       }
                   });
}

// ---- losses -------------------------------------------------------------------

Tensor nll_mean(const Tensor& log_probs, const std::vector<int>& targets) {
    require_2d(log_probs, "nll_mean");
    const int t = log_probs.shape()[0], v = log_probs.shape()[1];
    if (targets.empty() || static_cast<size_t>(t) != targets.size()) {
        throw ShapeError("nll_mean: " + std::to_string(targets.size()) + " targets for " +
                         shape_str(log_probs.shape()));
    }
    double loss = 0.0;
    for (int i = 0; i < t; ++i) {
        if (targets[i] < 0 || targets[i] >= v) {
            throw ShapeError("nll_mean: target " + std::to_string(targets[i]) + " out of [0," +
                             std::to_string(v) + ")");
        }
        loss -= log_probs.data()[static_cast<size_t>(i) * v + targets[i]];
    }
    loss /= t;
    return make_op({1, 1}, {loss}, {log_probs}, [targets, v](detail::TensorNode& o) {
        if (!pneeds(o, 0)) return;
        auto& ga = pgrad(o, 0);
        const double g = o.grad[0] / static_cast<double>(targets.size());
        for (size_t i = 0; i < targets.size(); ++i)
            ga[i * static_cast<size_t>(v) + targets[i]] -= g;
    });
}

// ---- gradient checker -----------------------------------------------------------

double grad_check(const std::function<Tensor()>& loss_fn, const std::vector<Tensor>& params,
                  double eps, int coords_per_param, std::uint64_t probe_seed) {
    if (eps < 1e-7 || eps > 1e-3) {
        throw NumericError("grad_check: eps " + std::to_string(eps) + " outside [1e-7, 1e-3]");
    }
    Tensor loss = loss_fn();
    if (!std::isfinite(loss.item())) throw NumericError("grad_check: non-finite loss");
    // Parameters outside the loss graph keep grads from earlier passes;
    // their analytic gradient here is zero.
    for (auto p : params) p.zero_grad();
    loss.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) analytic.push_back(p.grad());

    std::mt19937_64 rng(probe_seed ^ 0x9e3779b97f4a7c15ULL);
    double max_err = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi];
        const std::int64_t n = p.size();
        std::vector<std::int64_t> coords;
        if (coords_per_param <= 0 || n <= coords_per_param) {
            coords.resize(n);
            std::iota(coords.begin(), coords.end(), 0);
        } else {
            std::uniform_int_distribution<std::int64_t> dist(0, n - 1);
            for (int k = 0; k < coords_per_param; ++k) coords.push_back(dist(rng));
        }
        for (std::int64_t ci : coords) {
            auto& d = p.data_mut();
            const double saved = d[ci];
            d[ci] = saved + eps;
            double up;
            {
                NoGradGuard ng;
                up = loss_fn().item();
            }
            d[ci] = saved - eps;
            double down;
            {
                NoGradGuard ng;
                down = loss_fn().item();
            }
            d[ci] = saved;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw NumericError("grad_check: non-finite loss during probing");
            }
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic[pi][ci];
            const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::mt19937_64 named_rng(std::uint64_t seed, const std::string& name) {
    std::uint64_t h = fnv1a(name);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    return std::mt19937_64(seq);
}

}  // namespace kgcot
