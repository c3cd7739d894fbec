#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "cgps/errors.hpp"
#include "cgps/rng.hpp"

namespace cgps {

// All tensors are dense row-major float64 matrices; vectors are 1xN or Nx1,
// scalars are 1x1. Two dimensions cover everything the model needs;
// per-position sequences are handled as std::vector<Tensor>.
struct Shape {
    int rows = 0;
    int cols = 0;
    int size() const { return rows * cols; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

class Tape;

// Lightweight handle to a node on a tape. Copying a Tensor copies the
// handle, not the data.
class Tensor {
   public:
    Tensor() = default;

    const Shape& shape() const;
    const std::vector<double>& value() const;
    const std::vector<double>& grad() const;
    double scalar() const;  // requires shape 1x1

    int id() const { return id_; }
    Tape* tape() const { return tape_; }
    bool valid() const { return tape_ != nullptr; }

   private:
    friend class Tape;
    Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}
    Tape* tape_ = nullptr;
    int id_ = -1;
};

enum class OpKind {
    kLeaf,
    kMatMul,
    kAdd,
    kMul,
    kScale,
    kTanh,
    kSigmoid,
    kAddBias,
    kSoftmaxRows,
    kCrossEntropyRows,
    kSumSquares,
    kLstmGates,
    kSliceCols,
    kConcatCols,
    kSelectRows,
    kEmbedRows,
    kAttnScores,
    kAttnMix,
};

struct Node {
    OpKind kind = OpKind::kLeaf;
    Shape shape;
    std::vector<int> parents;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<double> aux;    // saved activations for fused backward rules
    std::vector<int> idata;     // indices / masks, op dependent
    int ia = 0, ib = 0;         // small integer params (e.g. slice bounds)
    double da = 0.0;            // scalar param (e.g. scale factor)
    bool touched = false;       // received a nonzero upstream gradient
};

// Ordered record of executed operations. Node parents always precede the
// node itself, so one reverse sweep visits every node exactly once.
class Tape {
   public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf nodes: inputs, parameters, constants.
    Tensor leaf(Shape shape, const std::vector<double>& values);
    Tensor zeros(Shape shape);
    Tensor full(Shape shape, double fill);
    // i.i.d. standard normal entries; a constant node, no gradient into rng.
    Tensor normal(Shape shape, Rng& rng);

    // Accumulates d(loss)/d(node) into every node's grad. loss must be 1x1.
    // Leaf gradients accumulate across repeated calls; interior gradients
    // are reset per call.
    void backward(const Tensor& loss);

    int size() const { return static_cast<int>(nodes_.size()); }
    void reset();

    const Node& node(int id) const { return nodes_[id]; }
    Node& node(int id) { return nodes_[id]; }

    // True if `ancestor` is reachable from `id` through parent edges.
    bool depends_on(int id, int ancestor) const;

   private:
    friend Tensor matmul(const Tensor&, const Tensor&);
    friend Tensor add(const Tensor&, const Tensor&);
    friend Tensor mul(const Tensor&, const Tensor&);
    friend Tensor scale(const Tensor&, double);
    friend Tensor tanh(const Tensor&);
    friend Tensor sigmoid(const Tensor&);
    friend Tensor add_bias(const Tensor&, const Tensor&);
    friend Tensor softmax_rows(const Tensor&, const std::vector<int>&);
    friend Tensor cross_entropy_rows(const Tensor&, const std::vector<int>&);
    friend Tensor sum_squares(const Tensor&, const std::vector<int>&);
    friend Tensor lstm_gates(const Tensor&, const Tensor&);
    friend Tensor slice_cols(const Tensor&, int, int);
    friend Tensor concat_cols(const Tensor&, const Tensor&);
    friend Tensor select_rows(const std::vector<int>&, const Tensor&, const Tensor&);
    friend Tensor embed_rows(const Tensor&, const std::vector<int>&);
    friend Tensor attention_scores(const Tensor&, const std::vector<Tensor>&);
    friend Tensor attention_mix(const Tensor&, const std::vector<Tensor>&);

    Tensor emplace(Node&& n);
    void backward_step(Node& n);
    // Recycled buffer of exactly n elements; zeroed on request. Graph shapes
    // repeat across steps, so exact-size freelists give full reuse.
    std::vector<double> grab(std::size_t n, bool zero);

    std::vector<Node> nodes_;
    std::unordered_map<std::size_t, std::vector<std::vector<double>>> pool_;
    int backward_calls_ = 0;
};

// ---- operations -----------------------------------------------------------

// Standard matrix product. Backward: dA += G.B^T, dB += A^T.G.
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise; operands must have identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// y[r][c] = x[r][c] + bias[0][c]; bias gradient sums over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);

// Row-wise softmax, stabilized by max subtraction. mask is row-major 0/1
// over the same shape (empty = everything unmasked); masked entries are
// exactly zero in the output. A fully masked row is a hard error.
Tensor softmax_rows(const Tensor& x, const std::vector<int>& mask = {});

// Sum over rows of -log softmax(logits_r)[target_r], computed from logits
// via log-sum-exp. target -1 marks a padded row that contributes nothing.
Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets);

// Sum of squared entries; optional 0/1 row mask. Backward is 2x.
Tensor sum_squares(const Tensor& x, const std::vector<int>& row_mask = {});

// Fused LSTM cell activation. preact is [i|f|g|o] pre-activations (B x 4k),
// c_prev is B x k. Returns [h'|c'] as B x 2k.
Tensor lstm_gates(const Tensor& preact, const Tensor& c_prev);

Tensor slice_cols(const Tensor& x, int col_begin, int col_end);
Tensor concat_cols(const Tensor& a, const Tensor& b);

// Per-row choice: row r of the result is a[r] where keep[r] != 0, else b[r].
Tensor select_rows(const std::vector<int>& keep, const Tensor& a, const Tensor& b);

// Gathers table rows by index; backward scatter-adds into the table.
Tensor embed_rows(const Tensor& table, const std::vector<int>& rows);

// scores[b][i] = dot(h[b], items[i][b]) for a per-position sequence of
// B x D tensors. The alignment used for attention maps.
Tensor attention_scores(const Tensor& h, const std::vector<Tensor>& items);

// out[b] = sum_i weights[b][i] * items[i][b]; the attention-weighted average.
Tensor attention_mix(const Tensor& weights, const std::vector<Tensor>& items);

}  // namespace cgps
