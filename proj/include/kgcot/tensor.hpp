#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace kgcot {

class Tensor;

namespace detail {

struct TensorNode {
    std::vector<int> shape;
    std::vector<double> data;     // row-major
    bool requires_grad = false;
    std::vector<double> grad;     // same length as data once touched
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Accumulates into the parents' grads, reading this node's grad.
    std::function<void(TensorNode&)> backward;

    void ensure_grad();
};

}  // namespace detail

// Dense 64-bit float tensor with reverse-mode differentiation. Operations
// record a per-forward-pass tape (the DAG hanging off each result); calling
// backward() on a scalar walks it once and the tape is freed with the
// intermediate tensors. Value handles are cheap to copy and may move between
// threads; a given backward pass runs on one thread.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor constant(std::vector<int> shape, double value);
    static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                            bool requires_grad = false);
    static Tensor uniform(std::vector<int> shape, double lo, double hi,
                          std::mt19937_64& rng, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const;
    int ndim() const;
    int rows() const;  // shape[0] of a 2-d tensor
    int cols() const;  // shape[1] of a 2-d tensor
    std::int64_t size() const;

    const std::vector<double>& data() const;
    std::vector<double>& data_mut();  // leaf mutation (optimizer steps, grad checks)
    double at(int r, int c) const;
    double item() const;  // 1x1 tensor

    bool requires_grad() const;
    const std::vector<double>& grad() const;
    std::vector<double>& grad_mut();
    void zero_grad();

    // Scalar-only. Zeroes grads across the reachable graph, seeds d(out)=1,
    // then runs recorded backward steps in reverse topological order.
    void backward() const;

    // New leaf with copied data, gradient history dropped.
    Tensor detach() const;
    // Deep copy preserving requires_grad, no history.
    Tensor clone() const;

    std::shared_ptr<detail::TensorNode> node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::TensorNode> node_;
};

std::string shape_str(const std::vector<int>& shape);

// Scoped guard that disables tape recording (inference paths).
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};
bool grad_enabled();

// ---- operations ------------------------------------------------------
// All 2-d unless noted; shape mismatches throw ShapeError naming both shapes.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// Broadcast of a row vector [1 x c] over every row, and a column [r x 1]
// over every column. The only broadcasting forms provided.
Tensor add_rowvec(const Tensor& a, const Tensor& v);
Tensor mul_colvec(const Tensor& a, const Tensor& v);

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor exp(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor sigmoid(const Tensor& a);

Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);

Tensor sum_all(const Tensor& a);      // -> 1x1
Tensor mean_all(const Tensor& a);     // -> 1x1
Tensor mean_rows(const Tensor& a);    // r x c -> 1 x c

Tensor rows(const Tensor& a, int r0, int r1);  // half-open
Tensor cols(const Tensor& a, int c0, int c1);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);

Tensor gather_rows(const Tensor& a, const std::vector<int>& idx);
Tensor scatter_sum_rows(const Tensor& a, const std::vector<int>& dst, int out_rows);

// Softmax over groups of rows of an [E x 1] tensor sharing a segment id.
Tensor segment_softmax(const Tensor& logits, const std::vector<int>& segment,
                       int num_segments);

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps = 1e-5);

// Mean negative log-likelihood of integer targets under [T x V] log-probs.
Tensor nll_mean(const Tensor& log_probs, const std::vector<int>& targets);

// Max over parameter entries of |analytic - central difference| / max(1, |analytic|).
// `loss_fn` must rebuild its forward pass from the given leaves on every call.
// When coords_per_param > 0 a deterministic sample of entries per tensor is
// probed instead of every entry.
double grad_check(const std::function<Tensor()>& loss_fn,
                  const std::vector<Tensor>& params, double eps,
                  int coords_per_param = -1, std::uint64_t probe_seed = 0);

// Deterministic sub-stream seeding: one rng per named parameter so that the
// same tensor gets the same init regardless of what else a model contains.
std::uint64_t fnv1a(const std::string& s);
std::mt19937_64 named_rng(std::uint64_t seed, const std::string& name);

}  // namespace kgcot
