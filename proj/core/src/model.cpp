#include "cgps/model.hpp"

#include <algorithm>
#include <cmath>

#include "cgps/errors.hpp"

namespace cgps {

Ablation ablation_from_string(const std::string& s) {
    if (s.empty() || s == "none") return Ablation::kNone;
    if (s == "A" || s == "a") return Ablation::kA;
    if (s == "B" || s == "b") return Ablation::kB;
    if (s == "C" || s == "c") return Ablation::kC;
    if (s == "D" || s == "d") return Ablation::kD;
    if (s == "E" || s == "e") return Ablation::kE;
    throw DataError("unknown ablation mode '" + s + "'");
}

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::kNone: return "none";
        case Ablation::kA: return "A";
        case Ablation::kB: return "B";
        case Ablation::kC: return "C";
        case Ablation::kD: return "D";
        case Ablation::kE: return "E";
    }
    return "none";
}

// Decoder wiring, all modes: the cell consumes [carry; attentional state]
// where the attentional state is att = W_a.[h; context] from the previous
// step. The carry is the previous hidden state by default, so no
// output-symbol information flows back; ablation E and the baseline replace
// the carry with the previous output symbol's embedding.
Model build_model(const ModelConfig& config, int input_vocab, int output_vocab, Rng& rng) {
    if (config.state < 1 || config.k_p < 1 || config.k_f < 1)
        throw ShapeError("build_model: dimensions must be positive");
    if (config.lambda < 0.0 || config.alpha < 0.0)
        throw ShapeError("build_model: lambda and alpha must be nonnegative");
    if (config.max_decode_len < 1) throw ShapeError("build_model: max_decode_len must be >= 1");

    Model m;
    m.config = config;
    m.input_vocab = input_vocab;
    m.output_vocab = output_vocab;
    ParamSet& ps = m.params;

    const int st = config.state;
    const bool shared = config.baseline || config.ablation == Ablation::kA;

    int enc_in;   // encoder input width
    int head_in;  // prediction head input width
    if (config.baseline) {
        enc_in = config.k_p + config.k_f;
        head_in = 2 * st;
        m.emb_p = ps.add("emb", {input_vocab, enc_in});
        m.emb_f = m.emb_p;
    } else if (shared) {
        enc_in = config.k_p;
        head_in = config.k_p;
        m.emb_p = ps.add("emb", {input_vocab, config.k_p});
        m.emb_f = m.emb_p;
    } else {
        enc_in = config.k_f;
        head_in = config.k_p;
        m.emb_p = ps.add("emb_p", {input_vocab, config.k_p});
        m.emb_f = ps.add("emb_f", {input_vocab, config.k_f});
    }

    auto add_lstm = [&](const std::string& prefix, int in, int k) {
        LstmRef ref;
        ref.wx = ps.add(prefix + ".wx", {in, 4 * k});
        ref.wh = ps.add(prefix + ".wh", {k, 4 * k});
        ref.b = ps.add(prefix + ".b", {1, 4 * k});
        return ref;
    };

    m.enc_fwd = add_lstm("enc_fwd", enc_in, st);
    m.enc_bwd = add_lstm("enc_bwd", enc_in, st);

    const bool symbol_fed = config.baseline || config.ablation == Ablation::kE;
    const int carry_in = config.baseline ? enc_in : 2 * st;  // symbol embedding or h
    m.dec = add_lstm("dec", carry_in + 2 * st, 2 * st);

    m.head_w = ps.add("head.w", {head_in, output_vocab});
    m.head_b = ps.add("head.b", {1, output_vocab});

    // alignment keys: b_j,i = h_j . (W e_i), the memory side of the scorer
    m.attn_keys = ps.add("attn.keys", {2 * st, 2 * st});
    // attentional state projection att = W_a . [h; context]
    m.attn_w = ps.add("attn.w", {4 * st, 2 * st});

    if (symbol_fed) m.out_emb = ps.add("out_emb", {output_vocab, carry_in});

    for (Param& p : ps) {
        if (p.name == "emb" || p.name == "emb_p" || p.name == "emb_f" || p.name == "out_emb") {
            uniform_init(p, rng, 0.1);
        } else if (p.name.ends_with(".b")) {
            if (p.name.starts_with("enc") || p.name.starts_with("dec"))
                lstm_bias_init(p);
            else
                std::fill(p.value.begin(), p.value.end(), 0.0);
        } else {
            glorot_init(p, rng);
        }
    }
    return m;
}

Batch make_batch(const std::vector<std::vector<int>>& inputs,
                 const std::vector<std::vector<int>>& targets, int input_pad) {
    if (inputs.empty() || inputs.size() != targets.size())
        throw ShapeError("make_batch: inputs and targets must be non-empty and parallel");
    Batch b;
    b.size = static_cast<int>(inputs.size());
    for (const auto& s : inputs) b.in_len = std::max(b.in_len, static_cast<int>(s.size()));
    for (const auto& s : targets) b.out_len = std::max(b.out_len, static_cast<int>(s.size()));
    b.input.assign(static_cast<std::size_t>(b.size) * b.in_len, input_pad);
    b.target.assign(static_cast<std::size_t>(b.size) * b.out_len, -1);
    b.in_lens.resize(b.size);
    b.out_lens.resize(b.size);
    for (int r = 0; r < b.size; ++r) {
        b.in_lens[r] = static_cast<int>(inputs[r].size());
        b.out_lens[r] = static_cast<int>(targets[r].size());
        std::copy(inputs[r].begin(), inputs[r].end(),
                  b.input.begin() + static_cast<std::size_t>(r) * b.in_len);
        std::copy(targets[r].begin(), targets[r].end(),
                  b.target.begin() + static_cast<std::size_t>(r) * b.out_len);
    }
    return b;
}

namespace {

LstmTensors staged_lstm(const std::vector<Tensor>& staged, const LstmRef& ref) {
    return {staged[ref.wx], staged[ref.wh], staged[ref.b]};
}

// Leaf of alpha-scaled standard normal noise; a constant on the tape, so
// gradients pass through the addition unchanged.
Tensor scaled_noise(Tape& tape, Shape shape, Rng& rng, double alpha) {
    std::vector<double> v(shape.size());
    for (double& x : v) x = alpha * rng.normal();
    return tape.leaf(shape, v);
}

std::vector<int> position_indices(const Batch& b, int pos) {
    std::vector<int> idx(b.size);
    for (int r = 0; r < b.size; ++r) idx[r] = b.input[static_cast<std::size_t>(r) * b.in_len + pos];
    return idx;
}

std::vector<int> attention_mask(const Batch& b) {
    std::vector<int> mask(static_cast<std::size_t>(b.size) * b.in_len);
    for (int r = 0; r < b.size; ++r)
        for (int i = 0; i < b.in_len; ++i)
            mask[static_cast<std::size_t>(r) * b.in_len + i] = i < b.in_lens[r] ? 1 : 0;
    return mask;
}

// Embeds the batch input and applies noise / collects regularizer terms
// according to the ablation wiring.
struct Representations {
    std::vector<Tensor> p;  // per position, B x k_p (noised when training)
    std::vector<Tensor> f;  // per position, B x k_f (noised when training)
    Tensor reg;             // summed squared norms of pre-noise rows, or invalid
};

Representations embed_input(Tape& tape, const Model& model, const std::vector<Tensor>& staged,
                            const Batch& batch, Rng* noise_rng) {
    const ModelConfig& cfg = model.config;
    // the baseline has one plain embedding table: no noise, no penalty
    const bool shared = cfg.baseline || cfg.ablation == Ablation::kA;
    const bool reg_p =
        !cfg.baseline && cfg.ablation != Ablation::kB && cfg.ablation != Ablation::kD;
    const bool reg_f =
        !cfg.baseline && cfg.ablation != Ablation::kC && cfg.ablation != Ablation::kD;
    const double alpha = (noise_rng && !cfg.baseline) ? cfg.alpha : 0.0;

    Representations rep;
    Tensor reg_total;
    bool have_reg = false;
    auto add_reg = [&](const Tensor& t, const std::vector<int>& row_mask) {
        Tensor s = sum_squares(t, row_mask);
        reg_total = have_reg ? add(reg_total, s) : s;
        have_reg = true;
    };

    for (int pos = 0; pos < batch.in_len; ++pos) {
        const std::vector<int> idx = position_indices(batch, pos);
        std::vector<int> row_mask(batch.size);
        for (int r = 0; r < batch.size; ++r) row_mask[r] = pos < batch.in_lens[r] ? 1 : 0;

        if (shared) {
            Tensor e = embed_rows(staged[model.emb_p], idx);
            if (reg_p) add_reg(e, row_mask);
            Tensor noised =
                (alpha > 0.0) ? add(e, scaled_noise(tape, e.shape(), *noise_rng, alpha)) : e;
            rep.p.push_back(noised);
            rep.f.push_back(noised);
            continue;
        }

        Tensor p = embed_rows(staged[model.emb_p], idx);
        Tensor f = embed_rows(staged[model.emb_f], idx);
        if (reg_p) add_reg(p, row_mask);
        if (reg_f) add_reg(f, row_mask);
        const bool noise_p = alpha > 0.0 && reg_p;
        const bool noise_f = alpha > 0.0 && reg_f;
        rep.p.push_back(noise_p ? add(p, scaled_noise(tape, p.shape(), *noise_rng, alpha)) : p);
        rep.f.push_back(noise_f ? add(f, scaled_noise(tape, f.shape(), *noise_rng, alpha)) : f);
    }
    if (have_reg) rep.reg = reg_total;
    return rep;
}

// Per-step decoder machinery shared between training and decoding.
struct DecoderLoop {
    const Model& model;
    const std::vector<Tensor>& staged;
    Tape& tape;
    std::vector<Tensor> keys;    // projected encoder outputs
    std::vector<Tensor> values;  // raw encoder outputs
    std::vector<int> attn_mask;
    LstmTensors cell;
    int batch_size = 0;
    int carry_in = 0;

    Tensor h, c;  // decoder state
    Tensor att;   // attentional state from the previous advance
    Tensor a;     // current attention map
    Tensor context;

    DecoderLoop(Tape& t, const Model& m, const std::vector<Tensor>& s, const EncoderOut& enc,
                std::vector<int> mask, int batch)
        : model(m),
          staged(s),
          tape(t),
          values(enc.outputs),
          attn_mask(std::move(mask)),
          cell(staged_lstm(s, m.dec)),
          batch_size(batch) {
        keys.reserve(enc.outputs.size());
        for (const Tensor& e : enc.outputs) keys.push_back(matmul(e, s[m.attn_keys]));
        h = enc.h0;
        c = enc.c0;
        carry_in = m.params[m.dec.wx].shape.rows - 2 * m.config.state;
    }

    // carry is the previous h by default, or a symbol embedding (E / baseline)
    Tensor step_input(const Tensor& carry, bool first) {
        if (first) return tape.zeros({batch_size, carry_in + 2 * model.config.state});
        return concat_cols(carry, att);
    }

    void advance(const Tensor& x) {
        std::tie(h, c) = lstm_step(cell, x, h, c);
        // scores scaled by 1/sqrt(dim) to keep the softmax off saturation
        Tensor scores = scale(attention_scores(h, keys),
                              1.0 / std::sqrt(static_cast<double>(2 * model.config.state)));
        a = softmax_rows(scores, attn_mask);
        context = attention_mix(a, values);
        att = matmul(concat_cols(h, context), staged[model.attn_w]);
    }
};

}  // namespace

Tensor training_loss(Tape& tape, const Model& model, const std::vector<Tensor>& staged,
                     const Batch& batch, Rng* noise_rng, LossParts* parts, GraphProbe* probe) {
    const ModelConfig& cfg = model.config;
    const int batch_size = batch.size;
    const int steps = batch.out_len;

    Representations rep = embed_input(tape, model, staged, batch, noise_rng);
    const std::vector<Tensor>& enc_input = cfg.baseline ? rep.p : rep.f;

    EncoderOut enc = bilstm_encode(staged_lstm(staged, model.enc_fwd),
                                   staged_lstm(staged, model.enc_bwd), enc_input, batch.in_lens);
    DecoderLoop loop(tape, model, staged, enc, attention_mask(batch), batch_size);

    const bool symbol_fed = cfg.baseline || cfg.ablation == Ablation::kE;

    Tensor ce_total;
    bool have_ce = false;

    for (int j = 0; j < steps; ++j) {
        Tensor x;
        if (j == 0) {
            x = loop.step_input({}, true);
        } else if (symbol_fed) {
            // teacher forcing: previous reference symbol (EOS once exhausted)
            std::vector<int> prev(batch_size);
            for (int r = 0; r < batch_size; ++r) {
                const int t = batch.target[static_cast<std::size_t>(r) * steps + j - 1];
                prev[r] = t >= 0 ? t : model.output_vocab - 1;
            }
            x = loop.step_input(embed_rows(staged[model.out_emb], prev), false);
        } else {
            x = loop.step_input(loop.h, false);
        }
        if (probe) probe->decoder_input_ids.push_back(x.id());

        loop.advance(x);

        Tensor logits;
        if (cfg.baseline) {
            logits = add_bias(matmul(loop.att, staged[model.head_w]), staged[model.head_b]);
        } else {
            Tensor v = attention_mix(loop.a, rep.p);
            logits = add_bias(matmul(v, staged[model.head_w]), staged[model.head_b]);
        }
        if (probe) probe->logit_ids.push_back(logits.id());

        std::vector<int> targets(batch_size);
        for (int r = 0; r < batch_size; ++r)
            targets[r] = batch.target[static_cast<std::size_t>(r) * steps + j];
        Tensor ce = cross_entropy_rows(logits, targets);
        ce_total = have_ce ? add(ce_total, ce) : ce;
        have_ce = true;
    }

    Tensor loss = scale(ce_total, 1.0 / batch_size);
    if (parts) {
        parts->prediction = loss.scalar();
        parts->regularization = 0.0;
    }
    // penalty convention: squared norms summed per example, averaged over the batch
    if (rep.reg.valid() && cfg.lambda > 0.0) {
        Tensor reg_mean = scale(rep.reg, 1.0 / batch_size);
        if (parts) parts->regularization = reg_mean.scalar();
        loss = add(loss, scale(reg_mean, cfg.lambda));
    }
    if (parts) parts->total = loss.scalar();
    return loss;
}

std::vector<Prediction> greedy_decode(const Model& model,
                                      const std::vector<std::vector<int>>& inputs, int input_eos,
                                      int output_eos, bool keep_attention) {
    const ModelConfig& cfg = model.config;
    std::vector<Prediction> out(inputs.size());

    constexpr std::size_t kChunk = 128;
    for (std::size_t begin = 0; begin < inputs.size(); begin += kChunk) {
        const std::size_t end = std::min(begin + kChunk, inputs.size());
        std::vector<std::vector<int>> chunk(inputs.begin() + begin, inputs.begin() + end);
        std::vector<std::vector<int>> dummy_targets(chunk.size(), std::vector<int>{0});
        Batch batch = make_batch(chunk, dummy_targets, input_eos);
        const int batch_size = batch.size;

        Tape tape;
        std::vector<Tensor> staged = stage(tape, model.params);
        Representations rep = embed_input(tape, model, staged, batch, nullptr);
        const std::vector<Tensor>& enc_input = cfg.baseline ? rep.p : rep.f;
        EncoderOut enc =
            bilstm_encode(staged_lstm(staged, model.enc_fwd), staged_lstm(staged, model.enc_bwd),
                          enc_input, batch.in_lens);
        DecoderLoop loop(tape, model, staged, enc, attention_mask(batch), batch_size);

        const bool symbol_fed = cfg.baseline || cfg.ablation == Ablation::kE;
        std::vector<int> prev_sym(batch_size, output_eos);
        std::vector<char> done(batch_size, 0);

        for (int j = 0; j < cfg.max_decode_len; ++j) {
            Tensor x;
            if (j == 0)
                x = loop.step_input({}, true);
            else if (symbol_fed)
                x = loop.step_input(embed_rows(staged[model.out_emb], prev_sym), false);
            else
                x = loop.step_input(loop.h, false);

            loop.advance(x);

            Tensor logits;
            if (cfg.baseline) {
                logits = add_bias(matmul(loop.att, staged[model.head_w]), staged[model.head_b]);
            } else {
                Tensor v = attention_mix(loop.a, rep.p);
                logits = add_bias(matmul(v, staged[model.head_w]), staged[model.head_b]);
            }

            const std::vector<double>& lv = logits.value();
            const std::vector<double>& av = loop.a.value();
            bool all_done = true;
            for (int r = 0; r < batch_size; ++r) {
                if (done[r]) continue;
                const double* row = lv.data() + static_cast<std::size_t>(r) * model.output_vocab;
                int best = 0;
                for (int v2 = 1; v2 < model.output_vocab; ++v2)
                    if (row[v2] > row[best]) best = v2;
                Prediction& pred = out[begin + r];
                pred.symbols.push_back(best);
                if (keep_attention) {
                    pred.attention.in_len = batch.in_lens[r];
                    pred.attention.out_len += 1;
                    const double* arow = av.data() + static_cast<std::size_t>(r) * batch.in_len;
                    pred.attention.weights.insert(pred.attention.weights.end(), arow,
                                                  arow + batch.in_lens[r]);
                }
                prev_sym[r] = best;
                if (best == output_eos) {
                    done[r] = 1;
                    pred.ended = true;
                } else {
                    all_done = false;
                }
            }
            if (all_done) break;
        }
    }
    return out;
}

}  // namespace cgps
