#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cgps/rng.hpp"
#include "cgps/tensor.hpp"

namespace cgps {

// One named trainable array. Values persist across steps; gradients are
// refilled from the tape after each backward pass.
struct Param {
    std::string name;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
};

class ParamSet {
   public:
    int add(const std::string& name, Shape shape) {
        items_.push_back({name, shape, std::vector<double>(shape.size(), 0.0),
                          std::vector<double>(shape.size(), 0.0)});
        return static_cast<int>(items_.size()) - 1;
    }
    Param& operator[](int i) { return items_[i]; }
    const Param& operator[](int i) const { return items_[i]; }
    Param* find(const std::string& name);
    const Param* find(const std::string& name) const;
    int count() const { return static_cast<int>(items_.size()); }
    std::size_t total_size() const;
    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

   private:
    std::vector<Param> items_;
};

// Puts every parameter on the tape as a leaf; returned tensors are parallel
// to the ParamSet order.
std::vector<Tensor> stage(Tape& tape, const ParamSet& params);

// Copies gradients from staged leaves back into Param::grad (overwrites).
void collect_grads(const std::vector<Tensor>& staged, ParamSet& params);

// ---- recurrent layers -------------------------------------------------------

// Weights of one LSTM cell, staged on a tape. Gate order is (input, forget,
// cell, output) along the 4k axis.
struct LstmTensors {
    Tensor wx;  // in x 4k
    Tensor wh;  // k x 4k
    Tensor b;   // 1 x 4k
};

// One cell update for a batch of rows: returns (h', c').
std::pair<Tensor, Tensor> lstm_step(const LstmTensors& cell, const Tensor& x, const Tensor& h,
                                    const Tensor& c);

struct EncoderOut {
    std::vector<Tensor> outputs;  // per position, B x 2m
    Tensor h0, c0;                // decoder init, B x 2m
};

// Bidirectional encoder over right-padded sequences. lengths give the real
// per-row lengths; padded positions carry state through unchanged, so the
// final forward/backward states equal the per-row last/first real states.
// outputs[i] = [forward h_i | backward h_i]; h0 = [forward h_n | backward h_1].
EncoderOut bilstm_encode(const LstmTensors& fwd, const LstmTensors& bwd,
                         const std::vector<Tensor>& inputs, const std::vector<int>& lengths);

// ---- initialization ---------------------------------------------------------

void glorot_init(Param& p, Rng& rng);                 // +-sqrt(6/(fan_in+fan_out))
void uniform_init(Param& p, Rng& rng, double bound);  // +-bound
void lstm_bias_init(Param& p);                        // zeros, forget-gate block = 1

// ---- optimizer --------------------------------------------------------------

struct AdamConfig {
    double lr0 = 0.01;
    double decay = 0.96;
    int decay_every = 100;
    double clip_norm = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction, global-norm clipping applied before the
// moment updates, and a staircase learning-rate schedule
// lr(t) = lr0 * decay^floor(t / decay_every).
class Adam {
   public:
    Adam(const ParamSet& params, AdamConfig cfg);

    // Consumes Param::grad, updates Param::value, advances the step count.
    // Non-finite gradients abort with the offending parameter named.
    void step(ParamSet& params);

    int steps_done() const { return t_; }
    double current_lr() const { return schedule(cfg_, t_); }
    const AdamConfig& config() const { return cfg_; }

    static double schedule(const AdamConfig& cfg, int t);
    // Scales all gradients so the global norm is at most max_norm;
    // returns the pre-clip norm.
    static double clip_global_norm(ParamSet& params, double max_norm);

   private:
    AdamConfig cfg_;
    int t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace cgps
