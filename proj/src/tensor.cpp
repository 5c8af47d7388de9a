#include "scengen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <tuple>

namespace scengen {

int shape_numel(const Shape& s) {
    int n = 1;
    for (int e : s) {
        if (e <= 0) throw ShapeError("non-positive shape extent in " + shape_str(s));
        n *= e;
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : data_(std::make_shared<std::vector<double>>(shape_numel(shape), fill)),
      shape_(std::move(shape)) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : data_(std::make_shared<std::vector<double>>(std::move(values))), shape_(std::move(shape)) {
    if (static_cast<int>(data_->size()) != shape_numel(shape_))
        throw ShapeError("tensor data length " + std::to_string(data_->size()) +
                         " does not match shape " + shape_str(shape_));
}

double Tensor::value() const {
    if (size() != 1) throw ShapeError("value() on non-scalar tensor " + shape_str(shape_));
    return (*data_)[0];
}

Tensor Tensor::detached() const {
    Tensor t;
    t.data_ = data_;
    t.shape_ = shape_;
    return t;
}

Tensor Tensor::viewed(Shape shape) const {
    if (shape_numel(shape) != size())
        throw ShapeError("view: cannot view " + shape_str(shape_) + " as " + shape_str(shape));
    Tensor t;
    t.data_ = data_;
    t.shape_ = std::move(shape);
    return t;
}

Tensor Tensor::clone() const {
    Tensor t;
    t.data_ = std::make_shared<std::vector<double>>(*data_);
    t.shape_ = shape_;
    return t;
}

bool Tensor::all_finite() const {
    if (!data_) return true;
    for (double v : *data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Tape::Tape() { nodes_.reserve(256); }

void Tape::reset() {
    nodes_.clear();
    grads_.clear();
    pool_cursor_ = 0;  // freed buffers become reusable
}

Tensor Tape::fresh(Shape shape) {
    const int n = shape_numel(shape);
    // Buffers can only free up on reset(), so a cursor suffices: entries
    // behind it are known-live, entries ahead are candidates.
    while (pool_cursor_ < pool_.size()) {
        auto& slot = pool_[pool_cursor_];
        if (slot.use_count() == 1) {
            ++pool_cursor_;
            slot->resize(static_cast<std::size_t>(n));
            Tensor t;
            t.data_ = slot;
            t.shape_ = std::move(shape);
            return t;
        }
        ++pool_cursor_;
    }
    auto buf = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n));
    pool_.push_back(buf);
    pool_cursor_ = pool_.size();
    Tensor t;
    t.data_ = std::move(buf);
    t.shape_ = std::move(shape);
    return t;
}

Tensor Tape::fresh_zero(Shape shape) {
    Tensor t = fresh(std::move(shape));
    std::fill(t.data(), t.data() + t.size(), 0.0);
    return t;
}

void Tape::check_finite(const Tensor& t, const char* op) const {
    if (!t.all_finite())
        throw NumericError(std::string("non-finite output from ") + op);
}

Tensor Tape::record(Op op, const Tensor& a, const Tensor& b, Tensor out, double c0, bool ta,
                    bool tb, IndexMap idx, Tensor saved, int split) {
    Node n;
    n.op = op;
    n.in[0] = a.node();
    n.nin = 1;
    n.requires_grad = a.requires_grad();
    if (!b.empty()) {
        n.in[1] = b.node();
        n.nin = 2;
        n.requires_grad = n.requires_grad || b.requires_grad();
    }
    n.c0 = c0;
    n.ta = ta;
    n.tb = tb;
    n.idx = std::move(idx);
    n.saved = std::move(saved);
    n.split = split;
    out.tape_ = this;
    out.node_ = static_cast<int>(nodes_.size());
    out.requires_grad_ = n.requires_grad;
    n.out = out;
    nodes_.push_back(std::move(n));
    return out;
}

Tensor Tape::watch(const Tensor& value, bool requires_grad) {
    if (value.empty()) throw ShapeError("watch() on empty tensor");
    Tensor out = value.detached();
    Node n;
    n.op = Op::Leaf;
    n.requires_grad = requires_grad;
    out.tape_ = this;
    out.node_ = static_cast<int>(nodes_.size());
    out.requires_grad_ = requires_grad;
    n.out = out;
    nodes_.push_back(std::move(n));
    return out;
}

namespace {

// Two output rows by a 24-wide column panel, accumulated in registers across
// the whole k loop; B column panels stay cache-resident and C is written
// once. Width-one products (row sums, scalar heads) collapse to dots.
void gemm_nn(const double* a, const double* b, double* c, int m, int n, int k) {
    if (n == 1) {
        for (int i = 0; i < m; ++i) {
            const double* ai = a + static_cast<std::size_t>(i) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += ai[p] * b[p];
            c[i] = acc;
        }
        return;
    }
    constexpr int JB = 24;
    int jb = 0;
    for (; jb + JB <= n; jb += JB) {
        int i = 0;
        for (; i + 2 <= m; i += 2) {
            const double* a0 = a + static_cast<std::size_t>(i) * k;
            const double* a1 = a0 + k;
            double acc0[JB] = {}, acc1[JB] = {};
            const double* bp = b + jb;
            for (int p = 0; p < k; ++p, bp += n) {
                const double v0 = a0[p], v1 = a1[p];
                for (int j = 0; j < JB; ++j) {
                    acc0[j] += v0 * bp[j];
                    acc1[j] += v1 * bp[j];
                }
            }
            double* c0 = c + static_cast<std::size_t>(i) * n + jb;
            double* c1 = c0 + n;
            for (int j = 0; j < JB; ++j) {
                c0[j] = acc0[j];
                c1[j] = acc1[j];
            }
        }
        for (; i < m; ++i) {
            const double* ai = a + static_cast<std::size_t>(i) * k;
            double acc[JB] = {};
            const double* bp = b + jb;
            for (int p = 0; p < k; ++p, bp += n) {
                const double av = ai[p];
                for (int j = 0; j < JB; ++j) acc[j] += av * bp[j];
            }
            double* ci = c + static_cast<std::size_t>(i) * n + jb;
            for (int j = 0; j < JB; ++j) ci[j] = acc[j];
        }
    }
    if (jb < n) {
        const int rem = n - jb;
        for (int i = 0; i < m; ++i) {
            const double* ai = a + static_cast<std::size_t>(i) * k;
            double acc[JB] = {};
            const double* bp = b + jb;
            for (int p = 0; p < k; ++p, bp += n) {
                const double av = ai[p];
                for (int j = 0; j < rem; ++j) acc[j] += av * bp[j];
            }
            double* ci = c + static_cast<std::size_t>(i) * n + jb;
            for (int j = 0; j < rem; ++j) ci[j] = acc[j];
        }
    }
}

thread_local std::vector<double> gemm_scratch;

// All layouts funnel into the NN kernel; transposing an operand into scratch
// costs O(mk + kn), noise next to the O(mkn) multiply.
void gemm(const double* a, const double* b, double* c, int m, int n, int k, bool ta, bool tb) {
    const double* ae = a;
    const double* be = b;
    std::size_t need = 0;
    if (ta) need += static_cast<std::size_t>(m) * k;
    if (tb) need += static_cast<std::size_t>(k) * n;
    if (need > gemm_scratch.size()) gemm_scratch.resize(need);
    double* scratch = gemm_scratch.data();
    if (ta) {  // a is [k, m]
        for (int p = 0; p < k; ++p)
            for (int i = 0; i < m; ++i)
                scratch[static_cast<std::size_t>(i) * k + p] =
                    a[static_cast<std::size_t>(p) * m + i];
        ae = scratch;
        scratch += static_cast<std::size_t>(m) * k;
    }
    if (tb) {  // b is [n, k]
        for (int j = 0; j < n; ++j)
            for (int p = 0; p < k; ++p)
                scratch[static_cast<std::size_t>(p) * n + j] =
                    b[static_cast<std::size_t>(j) * k + p];
        be = scratch;
    }
    gemm_nn(ae, be, c, m, n, k);
}

}  // namespace

Tensor Tape::matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    if (a.shape().size() != 2 || b.shape().size() != 2)
        throw ShapeError("matmul: expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const int m = trans_a ? a.shape()[1] : a.shape()[0];
    const int ka = trans_a ? a.shape()[0] : a.shape()[1];
    const int kb = trans_b ? b.shape()[1] : b.shape()[0];
    const int n = trans_b ? b.shape()[0] : b.shape()[1];
    if (ka != kb)
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                         (trans_a ? "^T" : "") + " x " + shape_str(b.shape()) +
                         (trans_b ? "^T" : ""));
    Tensor out = fresh({m, n});
    gemm(a.data(), b.data(), out.data(), m, n, ka, trans_a, trans_b);
    check_finite(out, "matmul");
    return record(Op::Matmul, a, b, std::move(out), 0.0, trans_a, trans_b);
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tensor out = fresh(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    const int n = a.size();
    for (int i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    check_finite(out, "add");
    return record(Op::Add, a, b, std::move(out));
}

Tensor Tape::add_bias(const Tensor& a, const Tensor& bias) {
    if (a.shape().size() != 2 || bias.shape().size() != 1 || bias.shape()[0] != a.shape()[1])
        throw ShapeError("add-bias: " + shape_str(a.shape()) + " + " + shape_str(bias.shape()));
    Tensor out = fresh(a.shape());
    const int r = a.shape()[0], c = a.shape()[1];
    const double* pa = a.data();
    const double* pb = bias.data();
    double* po = out.data();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) po[static_cast<std::size_t>(i) * c + j] =
            pa[static_cast<std::size_t>(i) * c + j] + pb[j];
    check_finite(out, "add-bias");
    return record(Op::AddBias, a, bias, std::move(out));
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("elementwise-mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tensor out = fresh(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    const int n = a.size();
    for (int i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    check_finite(out, "elementwise-mul");
    return record(Op::Mul, a, b, std::move(out));
}

Tensor Tape::mul_scalar_t(const Tensor& a, const Tensor& s) {
    if (s.size() != 1) throw ShapeError("mul-scalar: scale operand must be a 1-element tensor");
    Tensor out = fresh(a.shape());
    const double sv = s.at(0);
    const double* pa = a.data();
    double* po = out.data();
    const int n = a.size();
    for (int i = 0; i < n; ++i) po[i] = pa[i] * sv;
    check_finite(out, "mul-scalar");
    return record(Op::MulScalarT, a, s, std::move(out));
}

Tensor Tape::scale(const Tensor& a, double c) {
    Tensor out = fresh(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    const int n = a.size();
    for (int i = 0; i < n; ++i) po[i] = pa[i] * c;
    check_finite(out, "scale");
    return record(Op::Scale, a, {}, std::move(out), c);
}

Tensor Tape::add_const(const Tensor& a, double c) {
    Tensor out = fresh(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    const int n = a.size();
    for (int i = 0; i < n; ++i) po[i] = pa[i] + c;
    check_finite(out, "add-const");
    return record(Op::AddConst, a, {}, std::move(out), c);
}

Tensor Tape::take(const Tensor& a, IndexMap idx, Shape out_shape) {
    Tensor out = fresh(std::move(out_shape));
    if (static_cast<int>(idx->size()) != out.size())
        throw ShapeError("take: index map length does not match output size");
    const double* pa = a.data();
    double* po = out.data();
    const int n = out.size();
    const int* pi = idx->data();
    for (int i = 0; i < n; ++i) po[i] = pa[pi[i]];
    return record(Op::Take, a, {}, std::move(out), 0.0, false, false, std::move(idx));
}

Tensor Tape::scatter_add(const Tensor& a, IndexMap idx, Shape out_shape) {
    Tensor out = fresh_zero(std::move(out_shape));
    if (static_cast<int>(idx->size()) != a.size())
        throw ShapeError("scatter-add: index map length does not match input size");
    const double* pa = a.data();
    double* po = out.data();
    const int n = a.size();
    const int* pi = idx->data();
    for (int i = 0; i < n; ++i) po[pi[i]] += pa[i];
    return record(Op::ScatterAdd, a, {}, std::move(out), 0.0, false, false, std::move(idx));
}

Tensor Tape::concat(const Tensor& a, const Tensor& b, int axis) {
    if (axis != 1 || a.shape().size() != 2 || b.shape().size() != 2 ||
        a.shape()[0] != b.shape()[0])
        throw ShapeError("concat: expects two rank-2 tensors with equal rows, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const int r = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
    Tensor out = fresh({r, ca + cb});
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (int i = 0; i < r; ++i) {
        std::memcpy(po + static_cast<std::size_t>(i) * (ca + cb),
                    pa + static_cast<std::size_t>(i) * ca, sizeof(double) * ca);
        std::memcpy(po + static_cast<std::size_t>(i) * (ca + cb) + ca,
                    pb + static_cast<std::size_t>(i) * cb, sizeof(double) * cb);
    }
    return record(Op::Concat, a, b, std::move(out), 0.0, false, false, nullptr, {}, ca);
}

Tensor Tape::reduce_sum(const Tensor& a) {
    double acc = 0.0;
    const double* pa = a.data();
    const int n = a.size();
    for (int i = 0; i < n; ++i) acc += pa[i];
    Tensor out = Tensor::scalar(acc);
    check_finite(out, "reduce-sum");
    return record(Op::ReduceSum, a, {}, std::move(out));
}

Tensor Tape::reduce_mean(const Tensor& a) {
    return scale(reduce_sum(a), 1.0 / a.size());
}

Tensor Tape::relu(const Tensor& a) {
    Tensor out = fresh(a.shape());
    Tensor mask = fresh(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    double* pm = mask.data();
    const int n = a.size();
    for (int i = 0; i < n; ++i) {
        const bool pos = pa[i] > 0.0;
        po[i] = pos ? pa[i] : 0.0;
        pm[i] = pos ? 1.0 : 0.0;
    }
    return record(Op::Relu, a, {}, std::move(out), 0.0, false, false, nullptr, std::move(mask));
}

Tensor Tape::leaky_relu(const Tensor& a, double slope) {
    Tensor out = fresh(a.shape());
    Tensor mask = fresh(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    double* pm = mask.data();
    const int n = a.size();
    for (int i = 0; i < n; ++i) {
        const bool pos = pa[i] > 0.0;
        po[i] = pos ? pa[i] : slope * pa[i];
        pm[i] = pos ? 1.0 : slope;
    }
    return record(Op::LeakyRelu, a, {}, std::move(out), slope, false, false, nullptr,
                  std::move(mask));
}

Tensor Tape::min_const(const Tensor& a, double c) {
    Tensor out = fresh(a.shape());
    Tensor mask = fresh(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    double* pm = mask.data();
    const int n = a.size();
    for (int i = 0; i < n; ++i) {
        const bool below = pa[i] <= c;
        po[i] = below ? pa[i] : c;
        pm[i] = below ? 1.0 : 0.0;
    }
    return record(Op::MinConst, a, {}, std::move(out), c, false, false, nullptr, std::move(mask));
}

Tensor Tape::abs(const Tensor& a) {
    Tensor out = fresh(a.shape());
    Tensor mask = fresh(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    double* pm = mask.data();
    const int n = a.size();
    for (int i = 0; i < n; ++i) {
        po[i] = std::fabs(pa[i]);
        pm[i] = pa[i] > 0.0 ? 1.0 : (pa[i] < 0.0 ? -1.0 : 0.0);
    }
    return record(Op::Abs, a, {}, std::move(out), 0.0, false, false, nullptr, std::move(mask));
}

Tensor Tape::sqrt(const Tensor& a) {
    Tensor out = fresh(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    const int n = a.size();
    for (int i = 0; i < n; ++i) po[i] = std::sqrt(pa[i]);
    check_finite(out, "sqrt");
    return record(Op::Sqrt, a, {}, std::move(out));
}

Tensor Tape::reciprocal(const Tensor& a) {
    Tensor out = fresh(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    const int n = a.size();
    for (int i = 0; i < n; ++i) po[i] = 1.0 / pa[i];
    check_finite(out, "reciprocal");
    return record(Op::Reciprocal, a, {}, std::move(out));
}

Tensor Tape::reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.size())
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
    // node outputs are never mutated, so views are safe and free
    Tensor out = a.viewed(std::move(shape));
    return record(Op::Reshape, a, {}, std::move(out));
}

// ---- index map caches ----------------------------------------------------

namespace {

struct IdxKey {
    int tag, a, b, c, d, e, f;
    bool operator<(const IdxKey& o) const {
        return std::tie(tag, a, b, c, d, e, f) < std::tie(o.tag, o.a, o.b, o.c, o.d, o.e, o.f);
    }
};

std::map<IdxKey, IndexMap>& idx_cache() {
    static std::map<IdxKey, IndexMap> cache;
    return cache;
}

std::mutex& idx_mutex() {
    static std::mutex m;
    return m;
}

IndexMap cached(const IdxKey& key, const std::function<std::vector<int>()>& build) {
    std::lock_guard<std::mutex> lock(idx_mutex());
    auto& cache = idx_cache();
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto idx = std::make_shared<const std::vector<int>>(build());
    cache.emplace(key, idx);
    return idx;
}

}  // namespace

IndexMap im2col_indices(int batch, int in_ch, int in_len, int kernel, int stride, int out_len) {
    return cached({1, batch, in_ch, in_len, kernel, stride, out_len}, [&] {
        std::vector<int> idx(static_cast<std::size_t>(batch) * out_len * in_ch * kernel);
        std::size_t p = 0;
        for (int b = 0; b < batch; ++b)
            for (int ol = 0; ol < out_len; ++ol)
                for (int ic = 0; ic < in_ch; ++ic)
                    for (int kk = 0; kk < kernel; ++kk)
                        idx[p++] = (b * in_ch + ic) * in_len + ol * stride + kk;
        return idx;
    });
}

// [batch*out_len, out_ch] -> [batch, out_ch, out_len]
IndexMap conv_output_indices(int batch, int out_ch, int out_len) {
    return cached({2, batch, out_ch, out_len, 0, 0, 0}, [&] {
        std::vector<int> idx(static_cast<std::size_t>(batch) * out_ch * out_len);
        std::size_t p = 0;
        for (int b = 0; b < batch; ++b)
            for (int oc = 0; oc < out_ch; ++oc)
                for (int ol = 0; ol < out_len; ++ol) idx[p++] = (b * out_len + ol) * out_ch + oc;
        return idx;
    });
}

// Scatter map for transposed conv: element (b, il, oc, kk) of the
// [batch*in_len, out_ch*kernel] matmul result lands at output position
// (b, oc, il*stride + kk).
IndexMap col2im_transpose_indices(int batch, int in_ch, int in_len, int out_ch, int kernel,
                                  int stride, int out_len) {
    (void)in_ch;
    return cached({3, batch, in_len, out_ch, kernel, stride, out_len}, [&] {
        std::vector<int> idx(static_cast<std::size_t>(batch) * in_len * out_ch * kernel);
        std::size_t p = 0;
        for (int b = 0; b < batch; ++b)
            for (int il = 0; il < in_len; ++il)
                for (int oc = 0; oc < out_ch; ++oc)
                    for (int kk = 0; kk < kernel; ++kk)
                        idx[p++] = (b * out_ch + oc) * out_len + il * stride + kk;
        return idx;
    });
}

// [rows, cols] -> [cols, rows]
IndexMap transpose_indices(int rows, int cols) {
    return cached({4, rows, cols, 0, 0, 0, 0}, [&] {
        std::vector<int> idx(static_cast<std::size_t>(rows) * cols);
        std::size_t p = 0;
        for (int j = 0; j < cols; ++j)
            for (int i = 0; i < rows; ++i) idx[p++] = i * cols + j;
        return idx;
    });
}

// Broadcast a [channels] vector to [batch, channels*length].
IndexMap channel_mean_indices(int batch, int channels, int length) {
    return cached({5, batch, channels, length, 0, 0, 0}, [&] {
        std::vector<int> idx(static_cast<std::size_t>(batch) * channels * length);
        std::size_t p = 0;
        for (int b = 0; b < batch; ++b)
            for (int c = 0; c < channels; ++c)
                for (int l = 0; l < length; ++l) idx[p++] = c;
        return idx;
    });
}

// ---- composites ------------------------------------------------------------

Tensor Tape::linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.shape().size() != 2 || w.shape().size() != 2 || x.shape()[1] != w.shape()[1])
        throw ShapeError("linear-affine: input " + shape_str(x.shape()) + " vs weight " +
                         shape_str(w.shape()));
    Tensor y = matmul(x, w, false, true);
    if (b.empty()) return y;
    return add_bias(y, b);
}

Tensor Tape::conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int in_ch, int out_ch,
                    int kernel, int stride) {
    if (x.shape().size() != 2 || x.shape()[1] % in_ch != 0)
        throw ShapeError("conv1d: input " + shape_str(x.shape()) + " not divisible into " +
                         std::to_string(in_ch) + " channels");
    const int batch = x.shape()[0];
    const int in_len = x.shape()[1] / in_ch;
    if (in_len < kernel)
        throw ShapeError("conv1d: input length " + std::to_string(in_len) + " shorter than kernel " +
                         std::to_string(kernel));
    const int out_len = (in_len - kernel) / stride + 1;
    if (w.shape() != Shape{out_ch, in_ch * kernel})
        throw ShapeError("conv1d: weight " + shape_str(w.shape()) + ", expected [" +
                         std::to_string(out_ch) + "," + std::to_string(in_ch * kernel) + "]");
    Tensor cols = take(x, im2col_indices(batch, in_ch, in_len, kernel, stride, out_len),
                       {batch * out_len, in_ch * kernel});
    Tensor y = matmul(cols, w, false, true);  // [batch*out_len, out_ch]
    if (!b.empty()) y = add_bias(y, b);
    return take(y, conv_output_indices(batch, out_ch, out_len), {batch, out_ch * out_len});
}

Tensor Tape::conv1d_transpose(const Tensor& x, const Tensor& w, const Tensor& b, int in_ch,
                              int out_ch, int kernel, int stride) {
    if (x.shape().size() != 2 || x.shape()[1] % in_ch != 0)
        throw ShapeError("conv1d_transpose: input " + shape_str(x.shape()) +
                         " not divisible into " + std::to_string(in_ch) + " channels");
    const int batch = x.shape()[0];
    const int in_len = x.shape()[1] / in_ch;
    const int out_len = (in_len - 1) * stride + kernel;
    if (w.shape() != Shape{in_ch, out_ch * kernel})
        throw ShapeError("conv1d_transpose: weight " + shape_str(w.shape()) + ", expected [" +
                         std::to_string(in_ch) + "," + std::to_string(out_ch * kernel) + "]");
    // [batch, in_ch, in_len] -> [batch*in_len, in_ch]
    Tensor xt = take(x, cached_rows_transpose(batch, in_ch, in_len), {batch * in_len, in_ch});
    Tensor m = matmul(xt, w);  // [batch*in_len, out_ch*kernel]
    Tensor y = scatter_add(m, col2im_transpose_indices(batch, in_ch, in_len, out_ch, kernel,
                                                       stride, out_len),
                           {batch, out_ch * out_len});
    if (b.empty()) return y;
    Tensor bb = take(b, channel_mean_indices(batch, out_ch, out_len), {batch, out_ch * out_len});
    return add(y, bb);
}

IndexMap Tape::cached_rows_transpose(int batch, int channels, int length) {
    // (b, l, c) <- (b, c, l)
    return cached({6, batch, channels, length, 0, 0, 0}, [&] {
        std::vector<int> idx(static_cast<std::size_t>(batch) * channels * length);
        std::size_t p = 0;
        for (int b = 0; b < batch; ++b)
            for (int l = 0; l < length; ++l)
                for (int c = 0; c < channels; ++c) idx[p++] = (b * channels + c) * length + l;
        return idx;
    });
}

Tensor Tape::channel_broadcast(const Tensor& v, int batch, int channels, int length) {
    return take(v, channel_mean_indices(batch, channels, length), {batch, channels * length});
}

Tensor Tape::channel_mean(const Tensor& x, int batch, int channels, int length) {
    // mean over batch and length for each channel, via two small matmuls
    Tensor rows = reshape(x, {batch * channels, length});
    Tensor ones_l = constant({length, 1}, std::vector<double>(length, 1.0));
    Tensor per_bc = reshape(matmul(rows, ones_l), {batch, channels});
    Tensor ones_b = constant({1, batch}, std::vector<double>(batch, 1.0));
    Tensor per_c = reshape(matmul(ones_b, per_bc), {channels});
    return scale(per_c, 1.0 / (static_cast<double>(batch) * length));
}

Tensor Tape::batchnorm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                             int channels, BnStats* running, double momentum, double eps) {
    if (x.shape().size() != 2 || x.shape()[1] % channels != 0)
        throw ShapeError("batchnorm-train: input " + shape_str(x.shape()) +
                         " not divisible into " + std::to_string(channels) + " channels");
    const int batch = x.shape()[0];
    const int length = x.shape()[1] / channels;
    if (batch * length < 2)
        throw ShapeError("batchnorm-train: needs at least 2 values per channel");
    Tensor mu = channel_mean(x, batch, channels, length);
    Tensor xc = sub(x, channel_broadcast(mu, batch, channels, length));
    Tensor var = channel_mean(mul(xc, xc), batch, channels, length);
    Tensor rstd = reciprocal(sqrt(add_const(var, eps)));
    Tensor xn = mul(xc, channel_broadcast(rstd, batch, channels, length));
    Tensor y = add(mul(xn, channel_broadcast(gamma, batch, channels, length)),
                   channel_broadcast(beta, batch, channels, length));
    if (running) {
        if (!running->initialized) {
            running->mean = mu.clone();
            running->var = var.clone();
            running->initialized = true;
        } else {
            for (int c = 0; c < channels; ++c) {
                running->mean.data()[c] =
                    momentum * running->mean.data()[c] + (1.0 - momentum) * mu.at(c);
                running->var.data()[c] =
                    momentum * running->var.data()[c] + (1.0 - momentum) * var.at(c);
            }
        }
    }
    return y;
}

Tensor Tape::batchnorm_infer(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                             int channels, const BnStats& running, double eps) {
    if (!running.initialized)
        throw NumericError("batchnorm-infer: running statistics were never populated");
    if (x.shape().size() != 2 || x.shape()[1] % channels != 0)
        throw ShapeError("batchnorm-infer: input " + shape_str(x.shape()) +
                         " not divisible into " + std::to_string(channels) + " channels");
    const int batch = x.shape()[0];
    const int length = x.shape()[1] / channels;
    Tensor mu = constant(running.mean);
    Tensor var = constant(running.var);
    Tensor rstd = reciprocal(sqrt(add_const(var, eps)));
    Tensor xc = sub(x, channel_broadcast(mu, batch, channels, length));
    Tensor xn = mul(xc, channel_broadcast(rstd, batch, channels, length));
    return add(mul(xn, channel_broadcast(gamma, batch, channels, length)),
               channel_broadcast(beta, batch, channels, length));
}

Tensor Tape::row_l2(const Tensor& a) {
    if (a.shape().size() != 2) throw ShapeError("l2-norm: expects rank-2 input");
    const int c = a.shape()[1];
    Tensor ones_c = constant({c, 1}, std::vector<double>(c, 1.0));
    return sqrt(matmul(mul(a, a), ones_c));
}

Tensor Tape::apply_primitive(PrimKind kind, const std::vector<Tensor>& inputs,
                             const PrimAttrs& attrs) {
    auto need = [&](std::size_t n, const char* name) {
        if (inputs.size() != n)
            throw ShapeError(std::string(name) + ": expected " + std::to_string(n) + " inputs");
    };
    switch (kind) {
        case PrimKind::Matmul:
            need(2, "matmul");
            return matmul(inputs[0], inputs[1]);
        case PrimKind::Add:
            need(2, "add");
            return add(inputs[0], inputs[1]);
        case PrimKind::ElementwiseMul:
            need(2, "elementwise-mul");
            return mul(inputs[0], inputs[1]);
        case PrimKind::Concat:
            need(2, "concat");
            return concat(inputs[0], inputs[1], 1);
        case PrimKind::Conv1d:
            need(3, "conv1d");
            return conv1d(inputs[0], inputs[1], inputs[2], attrs.in_ch, attrs.out_ch, attrs.kernel,
                          attrs.stride);
        case PrimKind::Conv1dTranspose:
            need(3, "conv1d_transpose");
            return conv1d_transpose(inputs[0], inputs[1], inputs[2], attrs.in_ch, attrs.out_ch,
                                    attrs.kernel, attrs.stride);
        case PrimKind::Relu:
            need(1, "relu");
            return relu(inputs[0]);
        case PrimKind::LeakyRelu:
            need(1, "leaky_relu");
            return leaky_relu(inputs[0], attrs.c);
        case PrimKind::LinearAffine:
            need(3, "linear-affine");
            return linear(inputs[0], inputs[1], inputs[2]);
        case PrimKind::ReduceMean:
            need(1, "reduce-mean");
            return reduce_mean(inputs[0]);
        case PrimKind::ReduceSum:
            need(1, "reduce-sum");
            return reduce_sum(inputs[0]);
        case PrimKind::L1Norm:
            need(1, "l1-norm");
            return l1_norm(inputs[0]);
        case PrimKind::L2Norm:
            need(1, "l2-norm");
            return l2_norm(inputs[0]);
        case PrimKind::MinWithConstant:
            need(1, "min-with-constant");
            return min_const(inputs[0], attrs.c);
        case PrimKind::BatchnormTrain:
            need(3, "batchnorm-train");
            return batchnorm_train(inputs[0], inputs[1], inputs[2], attrs.in_ch, nullptr,
                                   attrs.momentum, attrs.eps);
        case PrimKind::BatchnormInfer: {
            need(5, "batchnorm-infer");
            BnStats stats;
            stats.mean = inputs[3];
            stats.var = inputs[4];
            stats.initialized = true;
            return batchnorm_infer(inputs[0], inputs[1], inputs[2], attrs.in_ch, stats, attrs.eps);
        }
    }
    throw ShapeError("unknown primitive kind");
}

// ---- backward --------------------------------------------------------------

void Tape::accumulate(std::vector<Tensor>& grads, int node, const Tensor& g) {
    if (node < 0 || node >= static_cast<int>(grads.size())) return;
    if (grads[node].empty())
        grads[node] = g;
    else
        grads[node] = add(grads[node], g);
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1) throw ShapeError("backward: loss must be scalar");
    if (nodes_.empty()) throw ShapeError("backward: tape is empty");
    grads_.clear();
    if (!loss.tracked() || loss.tape() != this || !loss.requires_grad()) {
        return;  // nothing reachable requires gradients
    }
    const int root = loss.node();
    grads_.assign(root + 1, Tensor{});
    grads_[root] = Tensor::scalar(1.0);

    for (int id = root; id >= 0; --id) {
        if (grads_[id].empty()) continue;
        Node& n = nodes_[id];
        if (!n.requires_grad) continue;
        const Tensor g = grads_[id];
        auto in_rg = [&](int slot) {
            return n.in[slot] >= 0 && nodes_[n.in[slot]].requires_grad;
        };
        auto in_t = [&](int slot) -> const Tensor& { return nodes_[n.in[slot]].out; };

        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::Matmul: {
                const Tensor& a = in_t(0);
                const Tensor& b = in_t(1);
                if (in_rg(0)) {
                    Tensor da = n.ta ? matmul(b, g, n.tb, true) : matmul(g, b, false, !n.tb);
                    accumulate(grads_, n.in[0], da);
                }
                if (in_rg(1)) {
                    Tensor db = n.tb ? matmul(g, a, true, n.ta) : matmul(a, g, !n.ta, false);
                    accumulate(grads_, n.in[1], db);
                }
                break;
            }
            case Op::Add:
                if (in_rg(0)) accumulate(grads_, n.in[0], g);
                if (in_rg(1)) accumulate(grads_, n.in[1], g);
                break;
            case Op::AddBias: {
                if (in_rg(0)) accumulate(grads_, n.in[0], g);
                if (in_rg(1)) {
                    const int r = g.shape()[0], c = g.shape()[1];
                    Tensor ones_r = constant({1, r}, std::vector<double>(r, 1.0));
                    accumulate(grads_, n.in[1], reshape(matmul(ones_r, g), {c}));
                }
                break;
            }
            case Op::Mul: {
                if (in_rg(0)) accumulate(grads_, n.in[0], mul(g, in_t(1)));
                if (in_rg(1)) accumulate(grads_, n.in[1], mul(g, in_t(0)));
                break;
            }
            case Op::MulScalarT: {
                if (in_rg(0)) accumulate(grads_, n.in[0], mul_scalar_t(g, in_t(1)));
                if (in_rg(1)) accumulate(grads_, n.in[1], reduce_sum(mul(g, in_t(0))));
                break;
            }
            case Op::Scale:
                if (in_rg(0)) accumulate(grads_, n.in[0], scale(g, n.c0));
                break;
            case Op::AddConst:
            case Op::Reshape:
                if (in_rg(0))
                    accumulate(grads_, n.in[0],
                               n.op == Op::Reshape ? reshape(g, in_t(0).shape()) : g);
                break;
            case Op::Take:
                if (in_rg(0)) accumulate(grads_, n.in[0], scatter_add(g, n.idx, in_t(0).shape()));
                break;
            case Op::ScatterAdd:
                if (in_rg(0)) accumulate(grads_, n.in[0], take(g, n.idx, in_t(0).shape()));
                break;
            case Op::Concat: {
                const int r = n.out.shape()[0];
                const int ca = n.split;
                const int cb = n.out.shape()[1] - ca;
                if (in_rg(0)) {
                    auto idx = cached({7, r, ca, cb, 0, 0, 0}, [&] {
                        std::vector<int> v(static_cast<std::size_t>(r) * ca);
                        std::size_t p = 0;
                        for (int i = 0; i < r; ++i)
                            for (int j = 0; j < ca; ++j) v[p++] = i * (ca + cb) + j;
                        return v;
                    });
                    accumulate(grads_, n.in[0], take(g, idx, {r, ca}));
                }
                if (in_rg(1)) {
                    auto idx = cached({8, r, ca, cb, 0, 0, 0}, [&] {
                        std::vector<int> v(static_cast<std::size_t>(r) * cb);
                        std::size_t p = 0;
                        for (int i = 0; i < r; ++i)
                            for (int j = 0; j < cb; ++j) v[p++] = i * (ca + cb) + ca + j;
                        return v;
                    });
                    accumulate(grads_, n.in[1], take(g, idx, {r, cb}));
                }
                break;
            }
            case Op::ReduceSum: {
                if (in_rg(0)) {
                    const Shape& s = in_t(0).shape();
                    Tensor ones = constant(s, std::vector<double>(shape_numel(s), 1.0));
                    accumulate(grads_, n.in[0], mul_scalar_t(ones, g));
                }
                break;
            }
            case Op::Relu:
            case Op::LeakyRelu:
            case Op::MinConst:
            case Op::Abs:
                if (in_rg(0)) accumulate(grads_, n.in[0], mul(g, constant(n.saved)));
                break;
            case Op::Sqrt: {
                if (in_rg(0))
                    accumulate(grads_, n.in[0], mul(g, scale(reciprocal(n.out), 0.5)));
                break;
            }
            case Op::Reciprocal: {
                if (in_rg(0))
                    accumulate(grads_, n.in[0], mul(g, scale(mul(n.out, n.out), -1.0)));
                break;
            }
        }
    }
}

Tensor Tape::grad(const Tensor& x) const {
    if (!x.tracked() || x.tape() != this)
        throw ShapeError("grad: tensor is not tracked on this tape");
    if (x.node() < static_cast<int>(grads_.size()) && !grads_[x.node()].empty())
        return grads_[x.node()];
    return Tensor(x.shape(), 0.0);
}

}  // namespace scengen
