#include "cgps/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cgps {

std::string Shape::str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

namespace {

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
}

// C += A.B with A: r x k, B: k x c. i-k-j order so the inner loop is a
// contiguous axpy over C's row, which vectorizes without reassociation.
void gemm_acc(const double* __restrict a, const double* __restrict b, double* __restrict c,
              int r, int k, int cc) {
    for (int i = 0; i < r; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * cc;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + static_cast<std::size_t>(p) * cc;
            for (int j = 0; j < cc; ++j) crow[j] += av * brow[j];
        }
    }
}

// dA += G.B^T with G: r x c, B: k x c. B is transposed into scratch first so
// the inner loop is an axpy rather than a dot reduction.
void gemm_nt_acc(const double* __restrict g, const double* __restrict b, double* __restrict da,
                 int r, int c, int k) {
    thread_local std::vector<double> scratch;
    scratch.resize(static_cast<std::size_t>(c) * k);
    for (int p = 0; p < k; ++p)
        for (int j = 0; j < c; ++j)
            scratch[static_cast<std::size_t>(j) * k + p] = b[static_cast<std::size_t>(p) * c + j];
    gemm_acc(g, scratch.data(), da, r, c, k);
}

// dB += A^T.G with A: r x k, G: r x c.
void gemm_tn_acc(const double* __restrict a, const double* __restrict g, double* __restrict db,
                 int r, int k, int c) {
    for (int i = 0; i < r; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        const double* grow = g + static_cast<std::size_t>(i) * c;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            double* dbrow = db + static_cast<std::size_t>(p) * c;
            for (int j = 0; j < c; ++j) dbrow[j] += av * grow[j];
        }
    }
}

inline double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

// ---- Tensor handle ----------------------------------------------------------

const Shape& Tensor::shape() const { return tape_->node(id_).shape; }
const std::vector<double>& Tensor::value() const { return tape_->node(id_).value; }
const std::vector<double>& Tensor::grad() const { return tape_->node(id_).grad; }

double Tensor::scalar() const {
    const Node& n = tape_->node(id_);
    if (n.shape.size() != 1) throw ShapeError("scalar(): tensor is " + n.shape.str());
    return n.value[0];
}

// ---- Tape -------------------------------------------------------------------

std::vector<double> Tape::grab(std::size_t n, bool zero) {
    std::vector<double> v;
    auto it = pool_.find(n);
    if (it != pool_.end() && !it->second.empty()) {
        v = std::move(it->second.back());
        it->second.pop_back();
    }
    if (zero)
        v.assign(n, 0.0);
    else
        v.resize(n);
    return v;
}

Tensor Tape::emplace(Node&& n) {
    n.grad = grab(n.value.size(), true);
    nodes_.push_back(std::move(n));
    return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor Tape::leaf(Shape shape, const std::vector<double>& values) {
    if (static_cast<int>(values.size()) != shape.size())
        throw ShapeError("leaf: " + std::to_string(values.size()) + " values for shape " + shape.str());
    Node n;
    n.shape = shape;
    n.value = grab(values.size(), false);
    std::copy(values.begin(), values.end(), n.value.begin());
    return emplace(std::move(n));
}

Tensor Tape::zeros(Shape shape) { return full(shape, 0.0); }

Tensor Tape::full(Shape shape, double fill) {
    Node n;
    n.shape = shape;
    n.value = grab(shape.size(), false);
    std::fill(n.value.begin(), n.value.end(), fill);
    return emplace(std::move(n));
}

Tensor Tape::normal(Shape shape, Rng& rng) {
    Node n;
    n.shape = shape;
    n.value = grab(shape.size(), false);
    for (double& v : n.value) v = rng.normal();
    return emplace(std::move(n));
}

void Tape::reset() {
    for (Node& nd : nodes_) {
        if (!nd.value.empty()) pool_[nd.value.size()].push_back(std::move(nd.value));
        if (!nd.grad.empty()) pool_[nd.grad.size()].push_back(std::move(nd.grad));
        if (!nd.aux.empty()) pool_[nd.aux.size()].push_back(std::move(nd.aux));
    }
    nodes_.clear();
    backward_calls_ = 0;
}

bool Tape::depends_on(int id, int ancestor) const {
    if (id == ancestor) return true;
    std::vector<char> seen(id + 1, 0);
    std::vector<int> stack{id};
    while (!stack.empty()) {
        int cur = stack.back();
        stack.pop_back();
        if (cur == ancestor) return true;
        if (cur <= ancestor) continue;  // parents only point backwards
        for (int p : nodes_[cur].parents) {
            if (!seen[p]) {
                seen[p] = 1;
                stack.push_back(p);
            }
        }
    }
    return false;
}

void Tape::backward(const Tensor& loss) {
    if (loss.tape() != this) throw ShapeError("backward: tensor from another tape");
    Node& ln = nodes_[loss.id()];
    if (ln.shape.size() != 1) throw ShapeError("backward: loss must be scalar, got " + ln.shape.str());

    // Interior grads are per-call scratch; leaf grads persist so repeated
    // calls accumulate into parameters.
    if (backward_calls_ > 0) {
        for (Node& n : nodes_) {
            if (!n.parents.empty()) {
                std::fill(n.grad.begin(), n.grad.end(), 0.0);
                n.touched = false;
            }
        }
    }
    ++backward_calls_;

    ln.grad[0] += 1.0;
    ln.touched = true;
    for (int id = loss.id(); id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.parents.empty() || !n.touched) continue;
        backward_step(n);
    }
}

void Tape::backward_step(Node& n) {
    const double* g = n.grad.data();
    auto& P = nodes_;
    auto touch = [&](int id) { P[id].touched = true; };

    switch (n.kind) {
        case OpKind::kLeaf:
            break;
        case OpKind::kMatMul: {
            Node& a = P[n.parents[0]];
            Node& b = P[n.parents[1]];
            gemm_nt_acc(g, b.value.data(), a.grad.data(), a.shape.rows, b.shape.cols, a.shape.cols);
            gemm_tn_acc(a.value.data(), g, b.grad.data(), a.shape.rows, a.shape.cols, b.shape.cols);
            touch(n.parents[0]);
            touch(n.parents[1]);
            break;
        }
        case OpKind::kAdd: {
            Node& a = P[n.parents[0]];
            Node& b = P[n.parents[1]];
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                a.grad[i] += g[i];
                b.grad[i] += g[i];
            }
            touch(n.parents[0]);
            touch(n.parents[1]);
            break;
        }
        case OpKind::kMul: {
            Node& a = P[n.parents[0]];
            Node& b = P[n.parents[1]];
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                a.grad[i] += g[i] * b.value[i];
                b.grad[i] += g[i] * a.value[i];
            }
            touch(n.parents[0]);
            touch(n.parents[1]);
            break;
        }
        case OpKind::kScale: {
            Node& a = P[n.parents[0]];
            for (std::size_t i = 0; i < n.grad.size(); ++i) a.grad[i] += g[i] * n.da;
            touch(n.parents[0]);
            break;
        }
        case OpKind::kTanh: {
            Node& a = P[n.parents[0]];
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                a.grad[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
            touch(n.parents[0]);
            break;
        }
        case OpKind::kSigmoid: {
            Node& a = P[n.parents[0]];
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                a.grad[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
            touch(n.parents[0]);
            break;
        }
        case OpKind::kAddBias: {
            Node& x = P[n.parents[0]];
            Node& bias = P[n.parents[1]];
            const int rows = n.shape.rows, cols = n.shape.cols;
            for (int r = 0; r < rows; ++r) {
                const double* grow = g + static_cast<std::size_t>(r) * cols;
                double* xrow = x.grad.data() + static_cast<std::size_t>(r) * cols;
                for (int c = 0; c < cols; ++c) {
                    xrow[c] += grow[c];
                    bias.grad[c] += grow[c];
                }
            }
            touch(n.parents[0]);
            touch(n.parents[1]);
            break;
        }
        case OpKind::kSoftmaxRows: {
            // dx = y * (g - sum(g*y)) per row; masked entries stay zero.
            Node& x = P[n.parents[0]];
            const int rows = n.shape.rows, cols = n.shape.cols;
            for (int r = 0; r < rows; ++r) {
                const std::size_t off = static_cast<std::size_t>(r) * cols;
                const double* y = n.value.data() + off;
                const double* gr = g + off;
                double dot = 0.0;
                for (int c = 0; c < cols; ++c) dot += gr[c] * y[c];
                double* dx = x.grad.data() + off;
                for (int c = 0; c < cols; ++c) dx[c] += y[c] * (gr[c] - dot);
            }
            touch(n.parents[0]);
            break;
        }
        case OpKind::kCrossEntropyRows: {
            // d(logits) = (softmax - onehot) * upstream, per unpadded row.
            Node& x = P[n.parents[0]];
            const double gs = n.grad[0];
            const int rows = x.shape.rows, cols = x.shape.cols;
            for (int r = 0; r < rows; ++r) {
                const int t = n.idata[r];
                if (t < 0) continue;
                const std::size_t off = static_cast<std::size_t>(r) * cols;
                const double* prob = n.aux.data() + off;
                double* dx = x.grad.data() + off;
                for (int c = 0; c < cols; ++c) dx[c] += gs * prob[c];
                dx[t] -= gs;
            }
            touch(n.parents[0]);
            break;
        }
        case OpKind::kSumSquares: {
            Node& x = P[n.parents[0]];
            const double gs = n.grad[0];
            const int rows = x.shape.rows, cols = x.shape.cols;
            for (int r = 0; r < rows; ++r) {
                if (!n.idata.empty() && n.idata[r] == 0) continue;
                const std::size_t off = static_cast<std::size_t>(r) * cols;
                for (int c = 0; c < cols; ++c) x.grad[off + c] += gs * 2.0 * x.value[off + c];
            }
            touch(n.parents[0]);
            break;
        }
        case OpKind::kLstmGates: {
            Node& pre = P[n.parents[0]];
            Node& cprev = P[n.parents[1]];
            const int rows = cprev.shape.rows, k = cprev.shape.cols;
            // aux layout per row: i f g o (4k) then tanh(c') (k)
            for (int r = 0; r < rows; ++r) {
                const double* gate = n.aux.data() + static_cast<std::size_t>(r) * 5 * k;
                const double* th = gate + 4 * k;
                const double* gh = g + static_cast<std::size_t>(r) * 2 * k;
                const double* gc = gh + k;
                double* dpre = pre.grad.data() + static_cast<std::size_t>(r) * 4 * k;
                double* dcp = cprev.grad.data() + static_cast<std::size_t>(r) * k;
                const double* cp = cprev.value.data() + static_cast<std::size_t>(r) * k;
                for (int j = 0; j < k; ++j) {
                    const double gi = gate[j], gf = gate[k + j], gg = gate[2 * k + j], go = gate[3 * k + j];
                    const double dh = gh[j];
                    const double dct = gc[j] + dh * go * (1.0 - th[j] * th[j]);
                    dpre[j] += dct * gg * gi * (1.0 - gi);                 // input gate
                    dpre[k + j] += dct * cp[j] * gf * (1.0 - gf);          // forget gate
                    dpre[2 * k + j] += dct * gi * (1.0 - gg * gg);         // candidate
                    dpre[3 * k + j] += dh * th[j] * go * (1.0 - go);       // output gate
                    dcp[j] += dct * gf;
                }
            }
            touch(n.parents[0]);
            touch(n.parents[1]);
            break;
        }
        case OpKind::kSliceCols: {
            Node& x = P[n.parents[0]];
            const int rows = n.shape.rows, cols = n.shape.cols;
            for (int r = 0; r < rows; ++r) {
                double* dx = x.grad.data() + static_cast<std::size_t>(r) * x.shape.cols + n.ia;
                const double* gr = g + static_cast<std::size_t>(r) * cols;
                for (int c = 0; c < cols; ++c) dx[c] += gr[c];
            }
            touch(n.parents[0]);
            break;
        }
        case OpKind::kConcatCols: {
            Node& a = P[n.parents[0]];
            Node& b = P[n.parents[1]];
            const int rows = n.shape.rows, ca = a.shape.cols, cb = b.shape.cols;
            for (int r = 0; r < rows; ++r) {
                const double* gr = g + static_cast<std::size_t>(r) * (ca + cb);
                double* da = a.grad.data() + static_cast<std::size_t>(r) * ca;
                double* db = b.grad.data() + static_cast<std::size_t>(r) * cb;
                for (int c = 0; c < ca; ++c) da[c] += gr[c];
                for (int c = 0; c < cb; ++c) db[c] += gr[ca + c];
            }
            touch(n.parents[0]);
            touch(n.parents[1]);
            break;
        }
        case OpKind::kSelectRows: {
            Node& a = P[n.parents[0]];
            Node& b = P[n.parents[1]];
            const int rows = n.shape.rows, cols = n.shape.cols;
            for (int r = 0; r < rows; ++r) {
                const std::size_t off = static_cast<std::size_t>(r) * cols;
                double* dst = (n.idata[r] != 0 ? a.grad.data() : b.grad.data()) + off;
                for (int c = 0; c < cols; ++c) dst[c] += g[off + c];
            }
            touch(n.parents[0]);
            touch(n.parents[1]);
            break;
        }
        case OpKind::kEmbedRows: {
            Node& table = P[n.parents[0]];
            const int cols = n.shape.cols;
            for (int r = 0; r < n.shape.rows; ++r) {
                double* drow = table.grad.data() + static_cast<std::size_t>(n.idata[r]) * cols;
                const double* gr = g + static_cast<std::size_t>(r) * cols;
                for (int c = 0; c < cols; ++c) drow[c] += gr[c];
            }
            touch(n.parents[0]);
            break;
        }
        case OpKind::kAttnScores: {
            Node& h = P[n.parents[0]];
            const int rows = n.shape.rows, npos = n.shape.cols, dim = h.shape.cols;
            for (int i = 0; i < npos; ++i) {
                Node& e = P[n.parents[1 + i]];
                for (int b = 0; b < rows; ++b) {
                    const double gv = g[static_cast<std::size_t>(b) * npos + i];
                    if (gv == 0.0) continue;
                    const std::size_t off = static_cast<std::size_t>(b) * dim;
                    for (int d = 0; d < dim; ++d) {
                        h.grad[off + d] += gv * e.value[off + d];
                        e.grad[off + d] += gv * h.value[off + d];
                    }
                }
                touch(n.parents[1 + i]);
            }
            touch(n.parents[0]);
            break;
        }
        case OpKind::kAttnMix: {
            Node& w = P[n.parents[0]];
            const int rows = n.shape.rows, dim = n.shape.cols;
            const int npos = w.shape.cols;
            for (int i = 0; i < npos; ++i) {
                Node& e = P[n.parents[1 + i]];
                for (int b = 0; b < rows; ++b) {
                    const std::size_t off = static_cast<std::size_t>(b) * dim;
                    const double wv = w.value[static_cast<std::size_t>(b) * npos + i];
                    const double* gr = g + off;
                    double dw = 0.0;
                    for (int d = 0; d < dim; ++d) {
                        dw += gr[d] * e.value[off + d];
                        e.grad[off + d] += wv * gr[d];
                    }
                    w.grad[static_cast<std::size_t>(b) * npos + i] += dw;
                }
                touch(n.parents[1 + i]);
            }
            touch(n.parents[0]);
            break;
        }
    }
}

// ---- forward ops ------------------------------------------------------------

namespace {
Tape* tape_of(const Tensor& a, const Tensor& b) {
    if (a.tape() != b.tape()) throw ShapeError("operands live on different tapes");
    return a.tape();
}
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    Tape* t = tape_of(a, b);
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.cols != bs.rows) shape_fail("matmul", as, bs);
    Node n;
    n.kind = OpKind::kMatMul;
    n.shape = {as.rows, bs.cols};
    n.parents = {a.id(), b.id()};
    n.value = t->grab(n.shape.size(), true);
    gemm_acc(a.value().data(), b.value().data(), n.value.data(), as.rows, as.cols, bs.cols);
    return t->emplace(std::move(n));
}

Tensor add(const Tensor& a, const Tensor& b) {
    Tape* t = tape_of(a, b);
    if (!(a.shape() == b.shape())) shape_fail("add", a.shape(), b.shape());
    Node n;
    n.kind = OpKind::kAdd;
    n.shape = a.shape();
    n.parents = {a.id(), b.id()};
    n.value = t->grab(n.shape.size(), false);
    const auto& av = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = av[i] + bv[i];
    return t->emplace(std::move(n));
}

Tensor mul(const Tensor& a, const Tensor& b) {
    Tape* t = tape_of(a, b);
    if (!(a.shape() == b.shape())) shape_fail("mul", a.shape(), b.shape());
    Node n;
    n.kind = OpKind::kMul;
    n.shape = a.shape();
    n.parents = {a.id(), b.id()};
    n.value = t->grab(n.shape.size(), false);
    const auto& av = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = av[i] * bv[i];
    return t->emplace(std::move(n));
}

Tensor scale(const Tensor& a, double factor) {
    Node n;
    n.kind = OpKind::kScale;
    n.shape = a.shape();
    n.parents = {a.id()};
    n.da = factor;
    n.value = a.tape()->grab(n.shape.size(), false);
    const auto& av = a.value();
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = av[i] * factor;
    return a.tape()->emplace(std::move(n));
}

Tensor tanh(const Tensor& a) {
    Node n;
    n.kind = OpKind::kTanh;
    n.shape = a.shape();
    n.parents = {a.id()};
    n.value = a.tape()->grab(n.shape.size(), false);
    const auto& av = a.value();
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = std::tanh(av[i]);
    return a.tape()->emplace(std::move(n));
}

Tensor sigmoid(const Tensor& a) {
    Node n;
    n.kind = OpKind::kSigmoid;
    n.shape = a.shape();
    n.parents = {a.id()};
    n.value = a.tape()->grab(n.shape.size(), false);
    const auto& av = a.value();
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = sigmoid_scalar(av[i]);
    return a.tape()->emplace(std::move(n));
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    Tape* t = tape_of(x, bias);
    const Shape& xs = x.shape();
    const Shape& bs = bias.shape();
    if (bs.rows != 1 || bs.cols != xs.cols) shape_fail("add_bias", xs, bs);
    Node n;
    n.kind = OpKind::kAddBias;
    n.shape = xs;
    n.parents = {x.id(), bias.id()};
    n.value = t->grab(n.shape.size(), false);
    const auto& xv = x.value();
    const auto& bv = bias.value();
    for (int r = 0; r < xs.rows; ++r)
        for (int c = 0; c < xs.cols; ++c)
            n.value[static_cast<std::size_t>(r) * xs.cols + c] =
                xv[static_cast<std::size_t>(r) * xs.cols + c] + bv[c];
    return t->emplace(std::move(n));
}

Tensor softmax_rows(const Tensor& x, const std::vector<int>& mask) {
    const Shape& xs = x.shape();
    if (!mask.empty() && static_cast<int>(mask.size()) != xs.size())
        throw ShapeError("softmax_rows: mask size " + std::to_string(mask.size()) + " for shape " + xs.str());
    Node n;
    n.kind = OpKind::kSoftmaxRows;
    n.shape = xs;
    n.parents = {x.id()};
    n.idata = mask;
    n.value = x.tape()->grab(xs.size(), true);
    const auto& xv = x.value();
    for (int r = 0; r < xs.rows; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * xs.cols;
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < xs.cols; ++c)
            if (mask.empty() || mask[off + c]) mx = std::max(mx, xv[off + c]);
        if (mx == -std::numeric_limits<double>::infinity())
            throw ShapeError("softmax_rows: row " + std::to_string(r) + " fully masked");
        double z = 0.0;
        for (int c = 0; c < xs.cols; ++c) {
            if (mask.empty() || mask[off + c]) {
                n.value[off + c] = std::exp(xv[off + c] - mx);
                z += n.value[off + c];
            }
        }
        for (int c = 0; c < xs.cols; ++c) n.value[off + c] /= z;
    }
    return x.tape()->emplace(std::move(n));
}

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets) {
    const Shape& xs = logits.shape();
    if (static_cast<int>(targets.size()) != xs.rows)
        throw ShapeError("cross_entropy_rows: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(xs.rows) + " rows");
    Node n;
    n.kind = OpKind::kCrossEntropyRows;
    n.shape = {1, 1};
    n.parents = {logits.id()};
    n.idata = targets;
    n.aux = logits.tape()->grab(xs.size(), true);
    const auto& xv = logits.value();
    double total = 0.0;
    for (int r = 0; r < xs.rows; ++r) {
        const int tgt = targets[r];
        if (tgt < 0) continue;
        if (tgt >= xs.cols) throw ShapeError("cross_entropy_rows: target out of range");
        const std::size_t off = static_cast<std::size_t>(r) * xs.cols;
        double mx = xv[off];
        for (int c = 1; c < xs.cols; ++c) mx = std::max(mx, xv[off + c]);
        double z = 0.0;
        for (int c = 0; c < xs.cols; ++c) {
            n.aux[off + c] = std::exp(xv[off + c] - mx);
            z += n.aux[off + c];
        }
        for (int c = 0; c < xs.cols; ++c) n.aux[off + c] /= z;
        total += std::log(z) + mx - xv[off + tgt];
    }
    n.value = {total};
    return logits.tape()->emplace(std::move(n));
}

Tensor sum_squares(const Tensor& x, const std::vector<int>& row_mask) {
    const Shape& xs = x.shape();
    if (!row_mask.empty() && static_cast<int>(row_mask.size()) != xs.rows)
        throw ShapeError("sum_squares: row mask size mismatch");
    Node n;
    n.kind = OpKind::kSumSquares;
    n.shape = {1, 1};
    n.parents = {x.id()};
    n.idata = row_mask;
    const auto& xv = x.value();
    double total = 0.0;
    for (int r = 0; r < xs.rows; ++r) {
        if (!row_mask.empty() && row_mask[r] == 0) continue;
        const std::size_t off = static_cast<std::size_t>(r) * xs.cols;
        for (int c = 0; c < xs.cols; ++c) total += xv[off + c] * xv[off + c];
    }
    n.value = {total};
    return x.tape()->emplace(std::move(n));
}

Tensor lstm_gates(const Tensor& preact, const Tensor& c_prev) {
    Tape* t = tape_of(preact, c_prev);
    const Shape& ps = preact.shape();
    const Shape& cs = c_prev.shape();
    if (ps.rows != cs.rows || ps.cols != 4 * cs.cols) shape_fail("lstm_gates", ps, cs);
    const int rows = cs.rows, k = cs.cols;
    Node n;
    n.kind = OpKind::kLstmGates;
    n.shape = {rows, 2 * k};
    n.parents = {preact.id(), c_prev.id()};
    n.value = t->grab(n.shape.size(), false);
    n.aux = t->grab(static_cast<std::size_t>(rows) * 5 * k, false);
    const auto& pv = preact.value();
    const auto& cv = c_prev.value();
    for (int r = 0; r < rows; ++r) {
        const double* z = pv.data() + static_cast<std::size_t>(r) * 4 * k;
        const double* cp = cv.data() + static_cast<std::size_t>(r) * k;
        double* gate = n.aux.data() + static_cast<std::size_t>(r) * 5 * k;
        double* out = n.value.data() + static_cast<std::size_t>(r) * 2 * k;
        for (int j = 0; j < k; ++j) {
            const double gi = sigmoid_scalar(z[j]);
            const double gf = sigmoid_scalar(z[k + j]);
            const double gg = std::tanh(z[2 * k + j]);
            const double go = sigmoid_scalar(z[3 * k + j]);
            const double cn = gf * cp[j] + gi * gg;
            const double th = std::tanh(cn);
            gate[j] = gi;
            gate[k + j] = gf;
            gate[2 * k + j] = gg;
            gate[3 * k + j] = go;
            gate[4 * k + j] = th;
            out[j] = go * th;
            out[k + j] = cn;
        }
    }
    return t->emplace(std::move(n));
}

Tensor slice_cols(const Tensor& x, int col_begin, int col_end) {
    const Shape& xs = x.shape();
    if (col_begin < 0 || col_end > xs.cols || col_begin >= col_end)
        throw ShapeError("slice_cols: [" + std::to_string(col_begin) + "," + std::to_string(col_end) +
                         ") of " + xs.str());
    Node n;
    n.kind = OpKind::kSliceCols;
    n.shape = {xs.rows, col_end - col_begin};
    n.parents = {x.id()};
    n.ia = col_begin;
    n.ib = col_end;
    n.value = x.tape()->grab(n.shape.size(), false);
    const auto& xv = x.value();
    for (int r = 0; r < xs.rows; ++r)
        for (int c = 0; c < n.shape.cols; ++c)
            n.value[static_cast<std::size_t>(r) * n.shape.cols + c] =
                xv[static_cast<std::size_t>(r) * xs.cols + col_begin + c];
    return x.tape()->emplace(std::move(n));
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    Tape* t = tape_of(a, b);
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.rows != bs.rows) shape_fail("concat_cols", as, bs);
    Node n;
    n.kind = OpKind::kConcatCols;
    n.shape = {as.rows, as.cols + bs.cols};
    n.parents = {a.id(), b.id()};
    n.value = t->grab(n.shape.size(), false);
    const auto& av = a.value();
    const auto& bv = b.value();
    for (int r = 0; r < as.rows; ++r) {
        double* out = n.value.data() + static_cast<std::size_t>(r) * n.shape.cols;
        for (int c = 0; c < as.cols; ++c) out[c] = av[static_cast<std::size_t>(r) * as.cols + c];
        for (int c = 0; c < bs.cols; ++c) out[as.cols + c] = bv[static_cast<std::size_t>(r) * bs.cols + c];
    }
    return t->emplace(std::move(n));
}

Tensor select_rows(const std::vector<int>& keep, const Tensor& a, const Tensor& b) {
    Tape* t = tape_of(a, b);
    if (!(a.shape() == b.shape())) shape_fail("select_rows", a.shape(), b.shape());
    const Shape& s = a.shape();
    if (static_cast<int>(keep.size()) != s.rows) throw ShapeError("select_rows: keep size mismatch");
    Node n;
    n.kind = OpKind::kSelectRows;
    n.shape = s;
    n.parents = {a.id(), b.id()};
    n.idata = keep;
    n.value = t->grab(s.size(), false);
    const auto& av = a.value();
    const auto& bv = b.value();
    for (int r = 0; r < s.rows; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * s.cols;
        const double* src = (keep[r] != 0 ? av.data() : bv.data()) + off;
        std::copy(src, src + s.cols, n.value.data() + off);
    }
    return t->emplace(std::move(n));
}

Tensor embed_rows(const Tensor& table, const std::vector<int>& rows) {
    const Shape& ts = table.shape();
    Node n;
    n.kind = OpKind::kEmbedRows;
    n.shape = {static_cast<int>(rows.size()), ts.cols};
    n.parents = {table.id()};
    n.idata = rows;
    n.value = table.tape()->grab(n.shape.size(), false);
    const auto& tv = table.value();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] < 0 || rows[r] >= ts.rows)
            throw ShapeError("embed_rows: index " + std::to_string(rows[r]) + " out of " +
                             std::to_string(ts.rows) + " rows");
        std::copy(tv.data() + static_cast<std::size_t>(rows[r]) * ts.cols,
                  tv.data() + static_cast<std::size_t>(rows[r] + 1) * ts.cols,
                  n.value.data() + r * ts.cols);
    }
    return table.tape()->emplace(std::move(n));
}

Tensor attention_scores(const Tensor& h, const std::vector<Tensor>& items) {
    if (items.empty()) throw ShapeError("attention_scores: empty sequence");
    const Shape& hs = h.shape();
    Node n;
    n.kind = OpKind::kAttnScores;
    n.shape = {hs.rows, static_cast<int>(items.size())};
    n.parents.reserve(items.size() + 1);
    n.parents.push_back(h.id());
    for (const Tensor& e : items) {
        if (!(e.shape() == hs)) shape_fail("attention_scores", hs, e.shape());
        n.parents.push_back(e.id());
    }
    n.value = h.tape()->grab(n.shape.size(), false);
    const auto& hv = h.value();
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& ev = items[i].value();
        for (int b = 0; b < hs.rows; ++b) {
            const std::size_t off = static_cast<std::size_t>(b) * hs.cols;
            double acc = 0.0;
            for (int d = 0; d < hs.cols; ++d) acc += hv[off + d] * ev[off + d];
            n.value[static_cast<std::size_t>(b) * items.size() + i] = acc;
        }
    }
    return h.tape()->emplace(std::move(n));
}

Tensor attention_mix(const Tensor& weights, const std::vector<Tensor>& items) {
    if (items.empty()) throw ShapeError("attention_mix: empty sequence");
    const Shape& ws = weights.shape();
    if (ws.cols != static_cast<int>(items.size()))
        throw ShapeError("attention_mix: " + std::to_string(items.size()) + " items for weights " + ws.str());
    const Shape es = items[0].shape();
    Node n;
    n.kind = OpKind::kAttnMix;
    n.shape = {ws.rows, es.cols};
    n.parents.reserve(items.size() + 1);
    n.parents.push_back(weights.id());
    for (const Tensor& e : items) {
        if (!(e.shape() == es) || e.shape().rows != ws.rows) shape_fail("attention_mix", ws, e.shape());
        n.parents.push_back(e.id());
    }
    n.value = weights.tape()->grab(n.shape.size(), true);
    const auto& wv = weights.value();
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& ev = items[i].value();
        for (int b = 0; b < ws.rows; ++b) {
            const double w = wv[static_cast<std::size_t>(b) * items.size() + i];
            if (w == 0.0) continue;
            const std::size_t off = static_cast<std::size_t>(b) * es.cols;
            for (int d = 0; d < es.cols; ++d) n.value[off + d] += w * ev[off + d];
        }
    }
    return weights.tape()->emplace(std::move(n));
}

}  // namespace cgps
