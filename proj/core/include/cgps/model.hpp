#pragma once

#include <string>
#include <vector>

#include "cgps/nn.hpp"
#include "cgps/rng.hpp"
#include "cgps/tensor.hpp"

namespace cgps {

// Ablation wirings:
//   A - one shared embedding table feeds both the encoder and the
//       attention-weighted average
//   B - no noise and no L2 penalty on the primitive side
//   C - no noise and no L2 penalty on the function side
//   D - B and C combined
//   E - decoder input is the previous output symbol's embedding instead of
//       the attentional context
enum class Ablation { kNone, kA, kB, kC, kD, kE };

Ablation ablation_from_string(const std::string& s);  // "none" or "A".."E"
std::string to_string(Ablation a);

struct ModelConfig {
    int state = 16;  // encoder state per direction; the decoder runs at 2x
    int k_p = 8;     // primitive embedding width
    int k_f = 8;     // function embedding width
    double lambda = 0.01;  // L2 regularization weight
    double alpha = 1.0;    // noise weight during training; inference uses 0
    int max_decode_len = 64;
    Ablation ablation = Ablation::kNone;
    bool baseline = false;  // conventional attentional seq2seq instead
};

struct LstmRef {
    int wx = -1, wh = -1, b = -1;
};

// All trainable arrays plus the indices locating them in the ParamSet.
struct Model {
    ModelConfig config;
    int input_vocab = 0;   // U, includes EOS
    int output_vocab = 0;  // V, includes EOS
    ParamSet params;

    int emb_p = -1, emb_f = -1;  // emb_f aliases emb_p under ablation A
    LstmRef enc_fwd, enc_bwd, dec;
    int head_w = -1, head_b = -1;
    int attn_keys = -1;  // key projection for the alignment scores
    int attn_w = -1;     // attentional-state projection over [h; context]
    int out_emb = -1;    // ablation E and baseline
};

Model build_model(const ModelConfig& config, int input_vocab, int output_vocab, Rng& rng);

// Right-padded index batch. Input padding uses the input EOS index (masked
// out of attention); target padding uses -1 (excluded from the loss).
struct Batch {
    int size = 0;
    int in_len = 0;
    int out_len = 0;
    std::vector<int> input;
    std::vector<int> in_lens;
    std::vector<int> target;
    std::vector<int> out_lens;
};

Batch make_batch(const std::vector<std::vector<int>>& inputs,
                 const std::vector<std::vector<int>>& targets, int input_pad);

struct LossParts {
    double total = 0.0;
    double prediction = 0.0;
    double regularization = 0.0;  // pre-lambda
};

// Node ids recorded during graph construction, for structural assertions.
struct GraphProbe {
    std::vector<int> decoder_input_ids;
    std::vector<int> logit_ids;
};

// Builds the training graph unrolled to the padded reference length and
// returns the scalar loss: mean per-example summed cross entropy plus
// lambda times the mean per-example squared norm of the pre-noise
// representations. noise_rng may be null for a noise-free forward pass.
Tensor training_loss(Tape& tape, const Model& model, const std::vector<Tensor>& staged,
                     const Batch& batch, Rng* noise_rng, LossParts* parts = nullptr,
                     GraphProbe* probe = nullptr);

// Row-stochastic attention map of one decoded example; rows are output
// steps (EOS included), columns input positions (EOS included).
struct AttentionTrace {
    int out_len = 0;
    int in_len = 0;
    std::vector<double> weights;  // row-major out_len x in_len
};

struct Prediction {
    std::vector<int> symbols;  // includes the final EOS when one was emitted
    bool ended = false;        // false = hit max_decode_len without EOS
    AttentionTrace attention;
};

// Greedy noise-free decoding. Deterministic given parameters and inputs.
std::vector<Prediction> greedy_decode(const Model& model,
                                      const std::vector<std::vector<int>>& inputs, int input_eos,
                                      int output_eos, bool keep_attention = false);

}  // namespace cgps
