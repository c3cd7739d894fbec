#include "cgps/harness.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "cgps/checkpoint.hpp"

namespace cgps::harness {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- presets ------------------------------------------------------------------

namespace {

Preset scan_preset(const std::string& name, const std::string& task) {
    Preset p;
    p.name = name;
    p.task = task;
    p.model.state = 16;
    p.model.k_p = 8;
    p.model.k_f = 8;
    p.model.lambda = 0.01;
    p.model.alpha = 1.0;
    p.optim.steps = 10000;
    p.optim.batch_size = 64;
    return p;
}

std::vector<Preset> make_presets() {
    std::vector<Preset> out;

    out.push_back(scan_preset("scan-jump", "jump"));
    out.push_back(scan_preset("scan-turnleft", "turnleft"));
    out.push_back(scan_preset("scan-simple", "simple"));
    out.push_back(scan_preset("scan-length", "length"));

    out.push_back(scan_preset("tmpl-jump-around-right", "jump-around-right"));
    out.push_back(scan_preset("tmpl-prim-right", "prim-right"));
    out.push_back(scan_preset("tmpl-prim-opposite-right", "prim-opposite-right"));

    Preset around = scan_preset("tmpl-prim-around-right", "prim-around-right");
    around.model.state = 8;
    around.model.k_p = 128;
    around.model.k_f = 128;
    around.model.lambda = 0.1;
    around.model.alpha = 0.1;
    out.push_back(around);

    Preset adj = scan_preset("scan-adj", "scan-adj");
    adj.model.state = 32;
    adj.model.lambda = 0.1;
    adj.model.alpha = 0.3;
    adj.optim.steps = 5000;
    out.push_back(adj);

    Preset adj_base = adj;
    adj_base.name = "scan-adj-baseline";
    adj_base.model.baseline = true;
    out.push_back(adj_base);

    Preset fewshot = scan_preset("fewshot", "");
    fewshot.model.k_p = 16;
    fewshot.model.k_f = 16;
    fewshot.model.lambda = 0.1;
    fewshot.needs_user_corpus = true;
    out.push_back(fewshot);

    Preset mt = scan_preset("mt", "");
    mt.model.state = 32;
    mt.model.k_p = 32;
    mt.model.k_f = 32;
    mt.model.lambda = 1.0;
    mt.model.alpha = 1.0;
    mt.needs_user_corpus = true;
    out.push_back(mt);

    for (const char* base : {"scan-jump", "scan-turnleft"}) {
        for (char mode = 'A'; mode <= 'E'; ++mode) {
            Preset p = scan_preset(std::string(base) + "-abl-" + mode,
                                   std::string(base) == "scan-jump" ? "jump" : "turnleft");
            p.model.ablation = ablation_from_string(std::string(1, mode));
            out.push_back(p);
        }
    }
    return out;
}

}  // namespace

const std::vector<Preset>& preset_table() {
    static const std::vector<Preset> table = make_presets();
    return table;
}

const Preset& find_preset(const std::string& name) {
    for (const Preset& p : preset_table())
        if (p.name == name) return p;
    throw DataError("unknown preset '" + name + "'");
}

// ---- data ---------------------------------------------------------------------

TaskData prepare(data::Corpus train, data::Corpus test) {
    TaskData t;
    t.train = std::move(train);
    t.test = std::move(test);
    std::tie(t.input_vocab, t.output_vocab) = data::build_vocab(t.train);
    t.train_in.reserve(t.train.size());
    t.train_out.reserve(t.train.size());
    for (const data::Example& ex : t.train) {
        t.train_in.push_back(data::encode(t.input_vocab, ex.input));
        t.train_out.push_back(data::encode(t.output_vocab, ex.output));
    }
    return t;
}

TaskData load_task_data(const Preset& preset, const std::string& corpus_train,
                        const std::string& corpus_test) {
    if (!corpus_train.empty()) {
        data::Corpus train = data::read_corpus(corpus_train);
        data::Corpus test = corpus_test.empty() ? data::Corpus{} : data::read_corpus(corpus_test);
        return prepare(std::move(train), std::move(test));
    }
    if (preset.needs_user_corpus)
        throw DataError("preset '" + preset.name +
                        "' needs a user-supplied corpus: pass --corpus-train (and optionally "
                        "--corpus-test) pointing at files of lines 'IN: <words> OUT: <symbols>'");
    data::Split split = data::build_task(preset.task, /*seed=*/0);
    return prepare(std::move(split.train), std::move(split.test));
}

// ---- training -----------------------------------------------------------------

RunReport train_run(const Preset& preset, std::uint64_t seed, const TaskData& task,
                    const std::string& out_dir) {
    RunReport report;
    report.preset = preset.name;
    report.seed = seed;
    const auto start = std::chrono::steady_clock::now();

    std::ofstream metrics;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        metrics.open(fs::path(out_dir) / "metrics.jsonl");
    }

    Rng root(seed);
    Rng init_rng = root.fork("init");
    Rng batch_rng = root.fork("batch");
    Rng noise_rng = root.fork("noise");

    Model model =
        build_model(preset.model, task.input_vocab.size(), task.output_vocab.size(), init_rng);
    Adam adam(model.params, preset.optim.adam);

    const int batch_size = preset.optim.batch_size;
    const std::size_t pool = task.train_in.size();
    if (pool == 0) throw DataError("train_run: empty training corpus");

    try {
        Tape tape;
        std::vector<std::vector<int>> inputs(batch_size), targets(batch_size);
        for (int step = 1; step <= preset.optim.steps; ++step) {
            for (int b = 0; b < batch_size; ++b) {
                const std::size_t pick = batch_rng.uniform_int(pool);
                inputs[b] = task.train_in[pick];
                targets[b] = task.train_out[pick];
            }
            Batch batch = make_batch(inputs, targets, task.input_vocab.eos);

            tape.reset();
            std::vector<Tensor> staged = stage(tape, model.params);
            LossParts parts;
            Tensor loss = training_loss(tape, model, staged, batch, &noise_rng, &parts);
            if (!std::isfinite(parts.total))
                throw NumericError("non-finite loss at step " + std::to_string(step));
            tape.backward(loss);
            collect_grads(staged, model.params);
            adam.step(model.params);

            if (step % preset.optim.log_every == 0) {
                report.loss_curve.emplace_back(step, parts.total);
                if (metrics.is_open()) {
                    metrics << json{{"step", step}, {"loss", parts.total}, {"lr", adam.current_lr()}}
                                   .dump()
                            << std::endl;
                }
            }
            report.steps = step;
        }

        const data::Corpus& eval_corpus = task.test.empty() ? task.train : task.test;
        report.accuracy =
            evaluate(model, task.input_vocab, task.output_vocab, eval_corpus, &report.truncated);

        if (!out_dir.empty()) {
            const std::string ckpt = (fs::path(out_dir) / "checkpoint.json").string();
            save_checkpoint(ckpt, model, task.input_vocab, task.output_vocab, preset.name, seed);
            report.checkpoint_path = ckpt;
        }
    } catch (const NumericError& e) {
        report.aborted = true;
        report.abort_reason = e.what();
    }

    report.wallclock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!out_dir.empty()) write_report(report, (fs::path(out_dir) / "report.json").string());
    return report;
}

// ---- evaluation -----------------------------------------------------------------

bool exact_match(const Prediction& prediction, const std::vector<int>& reference) {
    return prediction.ended && prediction.symbols == reference;
}

double evaluate(const Model& model, const data::Vocab& input_vocab,
                const data::Vocab& output_vocab, const data::Corpus& corpus, int* truncated) {
    if (corpus.empty()) throw DataError("evaluate: empty corpus");
    std::vector<std::vector<int>> inputs;
    std::vector<std::vector<int>> refs;
    inputs.reserve(corpus.size());
    refs.reserve(corpus.size());
    for (const data::Example& ex : corpus) {
        inputs.push_back(data::encode(input_vocab, ex.input));
        refs.push_back(data::encode(output_vocab, ex.output));
    }
    std::vector<Prediction> preds =
        greedy_decode(model, inputs, input_vocab.eos, output_vocab.eos);
    int correct = 0;
    int overrun = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (!preds[i].ended) ++overrun;
        if (exact_match(preds[i], refs[i])) ++correct;
    }
    if (truncated) *truncated = overrun;
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

// ---- experiments ------------------------------------------------------------------

Summary summarize(const std::string& preset, std::vector<RunReport> runs) {
    Summary s;
    s.preset = preset;
    s.runs = std::move(runs);
    std::vector<double> acc;
    for (const RunReport& r : s.runs)
        if (!r.aborted) acc.push_back(r.accuracy);
    if (!acc.empty()) {
        double sum = 0.0;
        for (double a : acc) sum += a;
        s.mean = sum / static_cast<double>(acc.size());
        if (acc.size() > 1) {
            double sq = 0.0;
            for (double a : acc) sq += (a - s.mean) * (a - s.mean);
            s.stddev = std::sqrt(sq / static_cast<double>(acc.size() - 1));
        }
    }
    return s;
}

Summary run_experiment(const Preset& preset, const TaskData& task, const std::string& out_root,
                       int jobs) {
    const std::vector<std::uint64_t>& seeds = preset.seeds;
    std::vector<RunReport> reports(seeds.size());

    std::size_t next = 0;
    std::mutex mu;
    auto worker = [&] {
        for (;;) {
            std::size_t i;
            {
                std::scoped_lock lock(mu);
                if (next >= seeds.size()) return;
                i = next++;
            }
            std::string dir;
            if (!out_root.empty())
                dir = (fs::path(out_root) / preset.name / std::to_string(seeds[i])).string();
            reports[i] = train_run(preset, seeds[i], task, dir);
        }
    };

    const int n_workers = std::max(1, std::min<int>(jobs, static_cast<int>(seeds.size())));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(n_workers);
        for (int i = 0; i < n_workers; ++i) threads.emplace_back(worker);
        for (std::thread& t : threads) t.join();
    }

    Summary s = summarize(preset.name, std::move(reports));
    if (!out_root.empty()) {
        fs::create_directories(fs::path(out_root) / preset.name);
        write_summary(s, (fs::path(out_root) / preset.name / "summary.json").string());
    }
    return s;
}

// ---- report files -------------------------------------------------------------------

namespace {
json report_to_json(const RunReport& r) {
    json j{{"preset", r.preset},
           {"seed", r.seed},
           {"accuracy", r.accuracy},
           {"steps", r.steps},
           {"wallclock_s", r.wallclock_s},
           {"truncated", r.truncated}};
    if (!r.checkpoint_path.empty()) j["checkpoint"] = r.checkpoint_path;
    if (r.aborted) {
        j["aborted"] = true;
        j["abort_reason"] = r.abort_reason;
    }
    return j;
}
}  // namespace

void write_report(const RunReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << report_to_json(report).dump(2) << '\n';
}

void write_summary(const Summary& summary, const std::string& path) {
    json runs = json::array();
    for (const RunReport& r : summary.runs) runs.push_back(report_to_json(r));
    // std is the sample standard deviation (n-1) over completed seeds
    json j{{"preset", summary.preset},
           {"mean", summary.mean},
           {"std", summary.stddev},
           {"std_kind", "sample"},
           {"runs", runs}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
}

}  // namespace cgps::harness
