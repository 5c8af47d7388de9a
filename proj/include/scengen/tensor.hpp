#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace scengen {

using Shape = std::vector<int>;

int shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Tape;

// Dense row-major f64 tensor. Copies share storage; mutating data through
// data() is only safe for tensors that are not tracked on a tape.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const Shape& shape() const { return shape_; }
    int size() const { return static_cast<int>(data_ ? data_->size() : 0); }
    bool empty() const { return !data_; }

    double* data() { return data_->data(); }
    const double* data() const { return data_->data(); }
    std::vector<double>& vec() { return *data_; }
    const std::vector<double>& vec() const { return *data_; }

    double value() const;  // scalar tensors only
    double at(int i) const { return (*data_)[i]; }

    bool requires_grad() const { return requires_grad_; }
    bool tracked() const { return node_ >= 0; }
    int node() const { return node_; }
    Tape* tape() const { return tape_; }

    // A storage-sharing view detached from any tape.
    Tensor detached() const;
    // A deep copy detached from any tape.
    Tensor clone() const;

    bool all_finite() const;

    // View of the same storage under a different shape (no copy).
    Tensor viewed(Shape shape) const;

private:
    friend class Tape;
    std::shared_ptr<std::vector<double>> data_;
    Shape shape_;
    Tape* tape_ = nullptr;
    int node_ = -1;
    bool requires_grad_ = false;
};

enum class Op : std::uint8_t {
    Leaf,
    Matmul,
    Add,
    AddBias,
    Mul,
    MulScalarT,
    Scale,
    AddConst,
    Take,
    ScatterAdd,
    Concat,
    ReduceSum,
    Relu,
    LeakyRelu,
    MinConst,
    Abs,
    Sqrt,
    Reciprocal,
    Reshape,
};

using IndexMap = std::shared_ptr<const std::vector<int>>;

// Spec-level primitive names accepted by apply_primitive.
enum class PrimKind {
    Matmul,
    Add,
    ElementwiseMul,
    Concat,
    Conv1d,
    Conv1dTranspose,
    Relu,
    LeakyRelu,
    LinearAffine,
    ReduceMean,
    ReduceSum,
    L1Norm,
    L2Norm,
    MinWithConstant,
    BatchnormTrain,
    BatchnormInfer,
};

struct PrimAttrs {
    double c = 0.0;       // slope / constant
    int in_ch = 0, out_ch = 0, kernel = 1, stride = 1;
    double eps = 1e-5;
    double momentum = 0.9;
};

// Running batch-norm statistics (values, never tracked).
struct BnStats {
    Tensor mean;
    Tensor var;
    bool initialized = false;
};

// Append-only computation tape. Nodes are created in topological order; the
// backward pass emits further nodes, so gradients are differentiable again
// (needed for the gradient-penalty loss).
class Tape {
public:
    Tape();

    // Leaf registration.
    Tensor watch(const Tensor& value, bool requires_grad = true);
    Tensor constant(const Tensor& value) { return watch(value, false); }
    Tensor constant(Shape shape, std::vector<double> values) {
        return watch(Tensor(std::move(shape), std::move(values)), false);
    }

    // Core primitives.
    Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor add_bias(const Tensor& a, const Tensor& bias);  // [r,c] + [c]
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor mul_scalar_t(const Tensor& a, const Tensor& s);  // s is a 1-element tensor
    Tensor scale(const Tensor& a, double c);
    Tensor add_const(const Tensor& a, double c);
    Tensor take(const Tensor& a, IndexMap idx, Shape out_shape);
    Tensor scatter_add(const Tensor& a, IndexMap idx, Shape out_shape);
    Tensor concat(const Tensor& a, const Tensor& b, int axis);
    Tensor reduce_sum(const Tensor& a);
    Tensor reduce_mean(const Tensor& a);
    Tensor relu(const Tensor& a);
    Tensor leaky_relu(const Tensor& a, double slope);
    Tensor min_const(const Tensor& a, double c);
    Tensor abs(const Tensor& a);
    Tensor sqrt(const Tensor& a);
    Tensor reciprocal(const Tensor& a);
    Tensor reshape(const Tensor& a, Shape shape);

    // Composites used throughout the networks.
    Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }
    Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // x[B,in] w[out,in] b[out]
    Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int in_ch, int out_ch,
                  int kernel, int stride);
    Tensor conv1d_transpose(const Tensor& x, const Tensor& w, const Tensor& b, int in_ch,
                            int out_ch, int kernel, int stride);
    Tensor batchnorm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, int channels,
                           BnStats* running, double momentum = 0.9, double eps = 1e-5);
    Tensor batchnorm_infer(const Tensor& x, const Tensor& gamma, const Tensor& beta, int channels,
                           const BnStats& running, double eps = 1e-5);
    Tensor l1_norm(const Tensor& a) { return reduce_sum(abs(a)); }
    Tensor l2_norm(const Tensor& a) { return sqrt(reduce_sum(mul(a, a))); }
    Tensor mean_abs(const Tensor& a) { return reduce_mean(abs(a)); }
    // Row-wise L2 norms of a [r,c] matrix -> [r,1].
    Tensor row_l2(const Tensor& a);
    // Broadcast a per-channel vector across a [batch, channels*length] layout.
    Tensor channel_broadcast(const Tensor& v, int batch, int channels, int length);
    // Per-channel mean over batch and length.
    Tensor channel_mean(const Tensor& x, int batch, int channels, int length);
    static IndexMap cached_rows_transpose(int batch, int channels, int length);

    // Spec-level dispatch.
    Tensor apply_primitive(PrimKind kind, const std::vector<Tensor>& inputs,
                           const PrimAttrs& attrs = {});

    // Reverse pass from a scalar loss. May be called repeatedly; each call
    // computes a fresh gradient map over everything reachable from `loss`.
    void backward(const Tensor& loss);
    // Gradient of the last backward() for a tracked tensor; zeros if the
    // tensor was not reached.
    Tensor grad(const Tensor& x) const;

    std::size_t node_count() const { return nodes_.size(); }
    void reset();

private:
    struct Node {
        Op op = Op::Leaf;
        std::array<int, 2> in{-1, -1};
        int nin = 0;
        Tensor out;
        bool requires_grad = false;
        double c0 = 0.0;
        bool ta = false, tb = false;
        IndexMap idx;
        Tensor saved;  // activation mask or similar backward-rule constant
        int split = 0; // concat: size of the first input along the axis
    };

    Tensor record(Op op, const Tensor& a, const Tensor& b, Tensor out, double c0 = 0.0,
                  bool ta = false, bool tb = false, IndexMap idx = nullptr, Tensor saved = {},
                  int split = 0);
    void check_finite(const Tensor& t, const char* op) const;
    void accumulate(std::vector<Tensor>& grads, int node, const Tensor& g);
    // Uninitialized tensor backed by the tape's buffer pool.
    Tensor fresh(Shape shape);
    Tensor fresh_zero(Shape shape);

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    std::vector<std::shared_ptr<std::vector<double>>> pool_;
    std::size_t pool_cursor_ = 0;
};

// Cached index maps for gather/scatter-based layout changes.
IndexMap im2col_indices(int batch, int in_ch, int in_len, int kernel, int stride, int out_len);
IndexMap conv_output_indices(int batch, int out_ch, int out_len);
IndexMap col2im_transpose_indices(int batch, int in_ch, int in_len, int out_ch, int kernel,
                                  int stride, int out_len);
IndexMap transpose_indices(int rows, int cols);
IndexMap channel_mean_indices(int batch, int channels, int length);

}  // namespace scengen
