#include "cgps/nn.hpp"

#include <cmath>

#include "cgps/errors.hpp"

namespace cgps {

Param* ParamSet::find(const std::string& name) {
    for (Param& p : items_)
        if (p.name == name) return &p;
    return nullptr;
}

const Param* ParamSet::find(const std::string& name) const {
    for (const Param& p : items_)
        if (p.name == name) return &p;
    return nullptr;
}

std::size_t ParamSet::total_size() const {
    std::size_t n = 0;
    for (const Param& p : items_) n += p.value.size();
    return n;
}

std::vector<Tensor> stage(Tape& tape, const ParamSet& params) {
    std::vector<Tensor> out;
    out.reserve(params.count());
    for (const Param& p : params) out.push_back(tape.leaf(p.shape, p.value));
    return out;
}

void collect_grads(const std::vector<Tensor>& staged, ParamSet& params) {
    if (static_cast<int>(staged.size()) != params.count())
        throw ShapeError("collect_grads: staged tensor count mismatch");
    for (int i = 0; i < params.count(); ++i) params[i].grad = staged[i].grad();
}

// ---- recurrent layers -------------------------------------------------------

std::pair<Tensor, Tensor> lstm_step(const LstmTensors& cell, const Tensor& x, const Tensor& h,
                                    const Tensor& c) {
    const int k = c.shape().cols;
    Tensor preact = add_bias(add(matmul(x, cell.wx), matmul(h, cell.wh)), cell.b);
    Tensor hc = lstm_gates(preact, c);
    return {slice_cols(hc, 0, k), slice_cols(hc, k, 2 * k)};
}

EncoderOut bilstm_encode(const LstmTensors& fwd, const LstmTensors& bwd,
                         const std::vector<Tensor>& inputs, const std::vector<int>& lengths) {
    if (inputs.empty()) throw ShapeError("bilstm_encode: empty input sequence");
    Tape& tape = *inputs[0].tape();
    const int n = static_cast<int>(inputs.size());
    const int batch = inputs[0].shape().rows;
    const int m = fwd.wh.shape().rows;

    auto run_direction = [&](const LstmTensors& cell, bool reverse) {
        std::vector<Tensor> states(n);
        Tensor h = tape.zeros({batch, m});
        Tensor c = tape.zeros({batch, m});
        for (int step = 0; step < n; ++step) {
            const int pos = reverse ? n - 1 - step : step;
            std::vector<int> keep(batch);
            for (int b = 0; b < batch; ++b) keep[b] = pos < lengths[b] ? 1 : 0;
            auto [hn, cn] = lstm_step(cell, inputs[pos], h, c);
            h = select_rows(keep, hn, h);
            c = select_rows(keep, cn, c);
            states[pos] = h;
        }
        return std::pair<std::vector<Tensor>, std::pair<Tensor, Tensor>>{states, {h, c}};
    };

    auto [fwd_states, fwd_final] = run_direction(fwd, false);
    auto [bwd_states, bwd_final] = run_direction(bwd, true);

    EncoderOut out;
    out.outputs.reserve(n);
    for (int i = 0; i < n; ++i) out.outputs.push_back(concat_cols(fwd_states[i], bwd_states[i]));
    out.h0 = concat_cols(fwd_final.first, bwd_final.first);
    out.c0 = concat_cols(fwd_final.second, bwd_final.second);
    return out;
}

// ---- initialization ---------------------------------------------------------

void glorot_init(Param& p, Rng& rng) {
    const double bound = std::sqrt(6.0 / (p.shape.rows + p.shape.cols));
    for (double& v : p.value) v = rng.uniform(-bound, bound);
}

void uniform_init(Param& p, Rng& rng, double bound) {
    for (double& v : p.value) v = rng.uniform(-bound, bound);
}

void lstm_bias_init(Param& p) {
    const int k = p.shape.cols / 4;
    std::fill(p.value.begin(), p.value.end(), 0.0);
    for (int j = 0; j < k; ++j) p.value[k + j] = 1.0;  // forget-gate block
}

// ---- optimizer --------------------------------------------------------------

Adam::Adam(const ParamSet& params, AdamConfig cfg) : cfg_(cfg) {
    m_.reserve(params.count());
    v_.reserve(params.count());
    for (const Param& p : params) {
        m_.emplace_back(p.value.size(), 0.0);
        v_.emplace_back(p.value.size(), 0.0);
    }
}

double Adam::schedule(const AdamConfig& cfg, int t) {
    return cfg.lr0 * std::pow(cfg.decay, t / cfg.decay_every);
}

double Adam::clip_global_norm(ParamSet& params, double max_norm) {
    double sq = 0.0;
    for (const Param& p : params)
        for (double g : p.grad) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (Param& p : params)
            for (double& g : p.grad) g *= s;
    }
    return norm;
}

void Adam::step(ParamSet& params) {
    if (static_cast<int>(m_.size()) != params.count())
        throw ShapeError("Adam::step: parameter count changed");
    for (const Param& p : params)
        for (double g : p.grad)
            if (!std::isfinite(g))
                throw NumericError("non-finite gradient in '" + p.name + "' at step " +
                                   std::to_string(t_ + 1));

    clip_global_norm(params, cfg_.clip_norm);
    ++t_;
    const double lr = schedule(cfg_, t_);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (int i = 0; i < params.count(); ++i) {
        Param& p = params[i];
        std::vector<double>& m = m_[i];
        std::vector<double>& v = v_[i];
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double g = p.grad[j];
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p.value[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace cgps
