#pragma once

#include <cstdint>
#include <string>

#include "cgps/data.hpp"
#include "cgps/model.hpp"

namespace cgps {

// Everything needed to evaluate a trained model stand-alone.
struct LoadedModel {
    Model model;
    data::Vocab input_vocab;
    data::Vocab output_vocab;
    std::string preset;
    std::uint64_t seed = 0;
};

// JSON container: format tag, version, preset, seed, model config, both
// vocabularies, and one entry per named array (shape + row-major float64).
void save_checkpoint(const std::string& path, const Model& model, const data::Vocab& input_vocab,
                     const data::Vocab& output_vocab, const std::string& preset,
                     std::uint64_t seed);

LoadedModel load_checkpoint(const std::string& path);

}  // namespace cgps
