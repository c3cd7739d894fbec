#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cgps/errors.hpp"

namespace cgps::data {

// End-of-sentence token. Lives only in memory: serialized corpus files
// never contain it, loaders append it.
inline constexpr const char* kEos = "<eos>";

// One input/output pair. Both sides are EOS-terminated token sequences.
struct Example {
    std::vector<std::string> input;
    std::vector<std::string> output;
};

using Corpus = std::vector<Example>;

// Appends EOS to both sides.
Example make_example(std::vector<std::string> input, std::vector<std::string> output);

struct Vocab {
    std::vector<std::string> tokens;  // sorted unique tokens, EOS last
    std::unordered_map<std::string, int> index;
    int eos = -1;

    int size() const { return static_cast<int>(tokens.size()); }
    // Throws DataError naming the token when it is unknown.
    int at(const std::string& token) const;
    const std::string& token(int id) const { return tokens[id]; }
};

// Deterministic vocabularies over the training corpus (input side, output side).
std::pair<Vocab, Vocab> build_vocab(const Corpus& train);

std::vector<int> encode(const Vocab& v, const std::vector<std::string>& tokens);

// ---- SCAN command language ----------------------------------------------------

// Every distinct command of the SCAN grammar, in a fixed derivation order.
const std::vector<std::vector<std::string>>& scan_universe();

// Compositional rewrite of one command into its action sequence (no EOS).
// Throws DataError for commands outside the grammar.
std::vector<std::string> interpret(const std::vector<std::string>& command);

// True when `phrase` occurs as a contiguous token subsequence.
bool contains_phrase(const std::vector<std::string>& tokens,
                     const std::vector<std::string>& phrase);

// ---- splits --------------------------------------------------------------------

struct Split {
    Corpus train;
    Corpus test;
};

// Recipe that carves a command universe into train/test corpora.
// When `oversample` is non-empty, the universe item whose input equals it is
// kept out of the test side and repeated until it makes up
// `oversample_fraction` of the training multiset.
struct SplitSpec {
    std::string name;
    std::function<Corpus()> universe;
    std::function<bool(const Example&)> is_test;  // null = random split by seed
    std::vector<std::string> oversample;          // bare input tokens, pre-EOS
    double oversample_fraction = 0.0;
    int random_train_count = 0;  // used when is_test is null
    std::uint64_t seed = 0;
};

Split build_split(const SplitSpec& spec);

Split build_primitive_split(const std::string& primitive_phrase);  // "jump" | "turn left"
Split build_simple_split(std::uint64_t seed);
Split build_length_split();

enum class TemplateTask { kJumpAroundRight, kPrimRight, kPrimOppositeRight, kPrimAroundRight };
Split build_template_split(TemplateTask task);

// ---- SCAN-ADJ ------------------------------------------------------------------

// verb + three adjectives (color/size/material, any order) + noun, mapped to
// VERB NOUN SIZE COLOR MATERIAL regardless of adjective order.
const Corpus& scanadj_universe();
Split build_scanadj_split();

// ---- corpus files ----------------------------------------------------------------

// Line format: `IN: <words> OUT: <symbols>`. Round-trips exactly; malformed
// lines are reported with their line number.
Corpus read_corpus(const std::string& path);
void write_corpus(const std::string& path, const Corpus& corpus);

// ---- task registry (CLI surface) -------------------------------------------------

struct TaskInfo {
    std::string name;
    int expect_train = 0;
    int expect_test = 0;
};

const std::vector<TaskInfo>& task_table();
const TaskInfo& task_info(const std::string& name);       // throws DataError
Split build_task(const std::string& name, std::uint64_t seed);  // throws DataError

}  // namespace cgps::data
