#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cgps/data.hpp"
#include "cgps/model.hpp"

namespace cgps::harness {

struct OptimSettings {
    AdamConfig adam;
    int steps = 10000;
    int batch_size = 64;
    int log_every = 100;
};

// One named experiment configuration: data recipe + model + optimizer.
struct Preset {
    std::string name;
    std::string task;  // data task name; empty when the corpus is user supplied
    ModelConfig model;
    OptimSettings optim;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    bool needs_user_corpus = false;
};

const std::vector<Preset>& preset_table();
const Preset& find_preset(const std::string& name);  // throws DataError

// Corpora plus vocabularies and pre-encoded index sequences.
struct TaskData {
    data::Corpus train, test;
    data::Vocab input_vocab, output_vocab;
    std::vector<std::vector<int>> train_in, train_out;
};

TaskData prepare(data::Corpus train, data::Corpus test);

// Resolves a preset's corpora: generated from its task, or read from the
// given paths when the preset needs user-supplied data.
TaskData load_task_data(const Preset& preset, const std::string& corpus_train = "",
                        const std::string& corpus_test = "");

struct RunReport {
    std::string preset;
    std::uint64_t seed = 0;
    double accuracy = -1.0;
    std::vector<std::pair<int, double>> loss_curve;  // (step, loss) every log_every steps
    double wallclock_s = 0.0;
    std::string checkpoint_path;
    int truncated = 0;  // predictions that hit max length without EOS
    int steps = 0;
    bool aborted = false;
    std::string abort_reason;
};

// One full training run. When out_dir is non-empty, writes
// metrics.jsonl (one {step, loss, lr} object per logged step),
// checkpoint.json and report.json there. The reported accuracy is measured
// on the test corpus, or on the training corpus when there is no test side.
RunReport train_run(const Preset& preset, std::uint64_t seed, const TaskData& task,
                    const std::string& out_dir);

// A prediction counts only when the whole decoded sequence equals the
// reference, EOS included; over- or under-length output is wrong, as is
// running out of decode budget.
bool exact_match(const Prediction& prediction, const std::vector<int>& reference);

// Exact-match sequence accuracy of greedy decoding over a corpus.
double evaluate(const Model& model, const data::Vocab& input_vocab,
                const data::Vocab& output_vocab, const data::Corpus& corpus,
                int* truncated = nullptr);

struct Summary {
    std::string preset;
    std::vector<RunReport> runs;
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation (n-1) over completed seeds
};

Summary summarize(const std::string& preset, std::vector<RunReport> runs);

// Independent runs over the preset's seeds, at most `jobs` in parallel.
// Writes per-run artifacts under <out_root>/<preset>/<seed>/ and
// summary.json under <out_root>/<preset>/ when out_root is non-empty.
Summary run_experiment(const Preset& preset, const TaskData& task, const std::string& out_root,
                       int jobs = 1);

void write_report(const RunReport& report, const std::string& path);
void write_summary(const Summary& summary, const std::string& path);

}  // namespace cgps::harness
