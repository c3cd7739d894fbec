#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cgps/checkpoint.hpp"
#include "cgps/data.hpp"
#include "cgps/gradcheck.hpp"
#include "cgps/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cgps;

namespace {

// ---- config file ---------------------------------------------------------

// `key = value` lines, '#' comments. Overrides preset fields; command-line
// flags override the file in turn.
std::map<std::string, std::string> read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file '" + path + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError(path + ":" + std::to_string(line_no) + ": expected 'key = value'");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

void apply_config(harness::Preset& preset, const std::map<std::string, std::string>& kv) {
    for (const auto& [key, value] : kv) {
        try {
            if (key == "state")
                preset.model.state = std::stoi(value);
            else if (key == "k_p")
                preset.model.k_p = std::stoi(value);
            else if (key == "k_f")
                preset.model.k_f = std::stoi(value);
            else if (key == "lambda")
                preset.model.lambda = std::stod(value);
            else if (key == "alpha")
                preset.model.alpha = std::stod(value);
            else if (key == "max_decode_len")
                preset.model.max_decode_len = std::stoi(value);
            else if (key == "ablation")
                preset.model.ablation = ablation_from_string(value);
            else if (key == "steps")
                preset.optim.steps = std::stoi(value);
            else if (key == "batch")
                preset.optim.batch_size = std::stoi(value);
            else if (key == "log_every")
                preset.optim.log_every = std::stoi(value);
            else if (key == "lr0")
                preset.optim.adam.lr0 = std::stod(value);
            else if (key == "decay")
                preset.optim.adam.decay = std::stod(value);
            else if (key == "decay_every")
                preset.optim.adam.decay_every = std::stoi(value);
            else if (key == "clip_norm")
                preset.optim.adam.clip_norm = std::stod(value);
            else
                throw DataError("unknown config key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw DataError("config key '" + key + "' has a malformed value '" + value + "'");
        }
    }
}

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        seeds.push_back(std::stoull(item));
    }
    if (seeds.empty()) throw DataError("empty --seeds list");
    return seeds;
}

// ---- gen-data -------------------------------------------------------------

json length_histogram(const data::Corpus& corpus) {
    std::map<int, int> hist;
    for (const data::Example& ex : corpus) hist[static_cast<int>(ex.output.size()) - 1]++;
    json j = json::object();
    for (const auto& [len, count] : hist) j[std::to_string(len)] = count;
    return j;
}

int cmd_gen_data(const std::string& task, const std::string& out_dir, std::uint64_t seed) {
    const data::TaskInfo& info = data::task_info(task);
    data::Split split = data::build_task(task, seed);
    fs::create_directories(out_dir);
    const std::string train_path = (fs::path(out_dir) / (task + "_train.txt")).string();
    const std::string test_path = (fs::path(out_dir) / (task + "_test.txt")).string();
    data::write_corpus(train_path, split.train);
    data::write_corpus(test_path, split.test);

    auto [in_v, out_v] = data::build_vocab(split.train);
    json stats{{"task", task},
               {"train_count", split.train.size()},
               {"test_count", split.test.size()},
               {"expected_train", info.expect_train},
               {"expected_test", info.expect_test},
               {"input_vocab_size", in_v.size()},
               {"output_vocab_size", out_v.size()},
               {"train_output_lengths", length_histogram(split.train)},
               {"test_output_lengths", length_histogram(split.test)}};
    std::ofstream(fs::path(out_dir) / "stats.json") << stats.dump(2) << '\n';

    std::cout << "wrote " << train_path << " (" << split.train.size() << " lines), " << test_path
              << " (" << split.test.size() << " lines)\n";
    if (static_cast<int>(split.train.size()) != info.expect_train ||
        static_cast<int>(split.test.size()) != info.expect_test) {
        std::cerr << "count mismatch for task '" << task << "': got " << split.train.size() << "/"
                  << split.test.size() << ", expected " << info.expect_train << "/"
                  << info.expect_test << "\n";
        return kExitData;
    }
    return kExitOk;
}

// ---- train / eval / experiments --------------------------------------------

void print_report(const harness::RunReport& r) {
    if (r.aborted) {
        std::cout << r.preset << " seed " << r.seed << ": ABORTED (" << r.abort_reason << ")\n";
    } else {
        std::printf("%s seed %llu: accuracy %.4f (%d truncated), %d steps, %.1fs\n",
                    r.preset.c_str(), static_cast<unsigned long long>(r.seed), r.accuracy,
                    r.truncated, r.steps, r.wallclock_s);
    }
}

void print_summary(const harness::Summary& s) {
    for (const harness::RunReport& r : s.runs) print_report(r);
    std::printf("%s: mean %.4f +- %.4f (sample std over %zu seeds)\n", s.preset.c_str(), s.mean,
                s.stddev, s.runs.size());
}

int cmd_run_experiment(harness::Preset preset, const std::string& corpus_train,
                       const std::string& corpus_test, const std::string& out_dir, int jobs) {
    harness::TaskData task = harness::load_task_data(preset, corpus_train, corpus_test);
    harness::Summary s = harness::run_experiment(preset, task, out_dir, jobs);
    print_summary(s);
    for (const harness::RunReport& r : s.runs)
        if (r.aborted) return kExitNumeric;
    return kExitOk;
}

int cmd_ablate(const std::string& task, const std::string& mode, std::vector<std::uint64_t> seeds,
               const std::string& out_dir, int jobs) {
    if (task != "jump" && task != "turnleft")
        throw DataError("ablate: --task must be 'jump' or 'turnleft'");
    const std::string base = "scan-" + task;
    std::vector<std::string> modes;
    if (mode.empty())
        modes = {"none", "A", "B", "C", "D", "E"};
    else
        modes = {to_string(ablation_from_string(mode))};

    json table = json::object();
    int rc = kExitOk;
    for (const std::string& m : modes) {
        harness::Preset preset = harness::find_preset(m == "none" ? base : base + "-abl-" + m);
        if (!seeds.empty()) preset.seeds = seeds;
        harness::TaskData data = harness::load_task_data(preset);
        harness::Summary s = harness::run_experiment(preset, data, out_dir, jobs);
        print_summary(s);
        table[m] = {{"mean", s.mean}, {"std", s.stddev}};
        for (const harness::RunReport& r : s.runs)
            if (r.aborted) rc = kExitNumeric;
    }
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream(fs::path(out_dir) / ("ablation_" + task + ".json"))
            << json{{"task", task}, {"results", table}}.dump(2) << '\n';
    }
    return rc;
}

// ---- attention visualization -------------------------------------------------

int cmd_viz_attention(const std::string& checkpoint, const std::string& sentence,
                      const std::string& out_dir) {
    LoadedModel lm = load_checkpoint(checkpoint);
    std::vector<std::string> tokens;
    {
        std::stringstream ss(sentence);
        std::string w;
        while (ss >> w) tokens.push_back(w);
    }
    if (tokens.empty()) throw DataError("empty input sentence");
    tokens.push_back(data::kEos);
    const std::vector<int> encoded = data::encode(lm.input_vocab, tokens);

    auto preds = greedy_decode(lm.model, {encoded}, lm.input_vocab.eos, lm.output_vocab.eos,
                               /*keep_attention=*/true);
    const Prediction& pred = preds[0];
    const AttentionTrace& tr = pred.attention;

    fs::create_directories(out_dir);
    const std::string csv_path = (fs::path(out_dir) / "attention.csv").string();
    const std::string pgm_path = (fs::path(out_dir) / "attention.pgm").string();

    std::ofstream csv(csv_path);
    for (const std::string& tok : tokens) csv << ',' << tok;
    csv << '\n';
    csv << std::fixed << std::setprecision(6);
    for (int r = 0; r < tr.out_len; ++r) {
        csv << lm.output_vocab.token(pred.symbols[r]);
        for (int c = 0; c < tr.in_len; ++c) csv << ',' << tr.weights[r * tr.in_len + c];
        csv << '\n';
    }
    csv.close();

    std::ofstream pgm(pgm_path, std::ios::binary);
    pgm << "P5\n" << tr.in_len << ' ' << tr.out_len << "\n255\n";
    for (int i = 0; i < tr.out_len * tr.in_len; ++i) {
        const double v = std::clamp(tr.weights[i], 0.0, 1.0);
        pgm.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
    pgm.close();

    std::cout << "input:";
    for (const std::string& t : tokens) std::cout << ' ' << t;
    std::cout << "\noutput:";
    for (int s : pred.symbols) std::cout << ' ' << lm.output_vocab.token(s);
    if (!pred.ended) std::cout << " ... (no EOS within max length)";
    std::cout << "\nwrote " << csv_path << " and " << pgm_path << " (" << tr.out_len << "x"
              << tr.in_len << ")\n";
    return kExitOk;
}

// ---- gradcheck -----------------------------------------------------------------

int cmd_gradcheck(bool corrupt) {
    bool all_ok = true;
    for (const GradSuiteResult& r : run_grad_suites(corrupt)) {
        std::printf("%-20s max relative error %.3e (threshold %.0e) %s\n", r.name.c_str(),
                    r.max_rel_error, r.threshold, r.passed() ? "ok" : "FAIL");
        all_ok = all_ok && r.passed();
    }
    return all_ok ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"compositional sequence-to-sequence learner: dual word representations,"
                 " entropy regularization, attention-map decoding"};
    app.require_subcommand(1);

    std::string task, preset_name, out_dir = "runs", corpus_train, corpus_test, config_path;
    std::string checkpoint, sentence, mode, seeds_csv;
    std::uint64_t seed = 1;
    int jobs = 1;
    bool corrupt = false;

    auto* gen = app.add_subcommand("gen-data", "Generate a task corpus (train/test/stats)");
    gen->add_option("--task", task, "Task name, e.g. jump, turnleft, simple, length, scan-adj")
        ->required();
    gen->add_option("--out", out_dir, "Output directory")->capture_default_str();
    gen->add_option("--seed", seed, "Shuffle seed (simple split)")->capture_default_str();

    auto* train = app.add_subcommand("train", "Train one run of a preset");
    train->add_option("--preset", preset_name, "Preset name (see run-experiment --list)")
        ->required();
    train->add_option("--seed", seed, "Random seed")->capture_default_str();
    train->add_option("--out", out_dir, "Run output root")->capture_default_str();
    train->add_option("--corpus-train", corpus_train, "User-supplied training corpus");
    train->add_option("--corpus-test", corpus_test, "User-supplied test corpus");
    train->add_option("--config", config_path, "key = value file overriding preset fields");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus");
    eval->add_option("--checkpoint", checkpoint, "checkpoint.json path")->required();
    eval->add_option("--corpus-test", corpus_test, "Corpus to evaluate")->required();

    auto* runx = app.add_subcommand("run-experiment", "Train all seeds of a preset and summarize");
    runx->add_option("--preset", preset_name, "Preset name");
    runx->add_option("--seeds", seeds_csv, "Comma-separated seed list (default preset's)");
    runx->add_option("--jobs", jobs, "Parallel workers over seeds")->capture_default_str();
    runx->add_option("--out", out_dir, "Run output root")->capture_default_str();
    runx->add_option("--corpus-train", corpus_train, "User-supplied training corpus");
    runx->add_option("--corpus-test", corpus_test, "User-supplied test corpus");
    runx->add_option("--config", config_path, "key = value file overriding preset fields");
    bool list_presets = false;
    runx->add_flag("--list", list_presets, "List presets and exit");

    auto* abl = app.add_subcommand("ablate", "Run ablation modes on jump or turnleft");
    abl->add_option("--task", task, "jump or turnleft")->required();
    abl->add_option("--mode", mode, "Single mode A-E (default: all plus the full model)");
    abl->add_option("--seeds", seeds_csv, "Comma-separated seed list");
    abl->add_option("--jobs", jobs, "Parallel workers over seeds")->capture_default_str();
    abl->add_option("--out", out_dir, "Run output root")->capture_default_str();

    auto* viz = app.add_subcommand("viz-attention", "Export attention maps for one sentence");
    viz->add_option("--checkpoint", checkpoint, "checkpoint.json path")->required();
    viz->add_option("--input", sentence, "Input sentence, space separated")->required();
    viz->add_option("--out", out_dir, "Output directory")->capture_default_str();

    auto* gc = app.add_subcommand("gradcheck", "Run the gradient verification suites");
    gc->add_flag("--corrupt", corrupt, "Include the corrupted-backward fixture (must fail)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(task, out_dir, seed);

        if (train->parsed()) {
            harness::Preset preset = harness::find_preset(preset_name);
            if (!config_path.empty()) apply_config(preset, read_config_file(config_path));
            harness::TaskData data = harness::load_task_data(preset, corpus_train, corpus_test);
            const std::string dir =
                (fs::path(out_dir) / preset.name / std::to_string(seed)).string();
            harness::RunReport r = harness::train_run(preset, seed, data, dir);
            print_report(r);
            return r.aborted ? kExitNumeric : kExitOk;
        }

        if (eval->parsed()) {
            LoadedModel lm = load_checkpoint(checkpoint);
            data::Corpus corpus = data::read_corpus(corpus_test);
            int truncated = 0;
            const double acc =
                harness::evaluate(lm.model, lm.input_vocab, lm.output_vocab, corpus, &truncated);
            std::cout << json{{"checkpoint", checkpoint},
                              {"corpus", corpus_test},
                              {"examples", corpus.size()},
                              {"accuracy", acc},
                              {"truncated", truncated}}
                             .dump(2)
                      << '\n';
            return kExitOk;
        }

        if (runx->parsed()) {
            if (list_presets) {
                for (const harness::Preset& p : harness::preset_table()) {
                    std::string extras;
                    if (p.model.baseline) extras += " baseline";
                    if (p.model.ablation != Ablation::kNone)
                        extras += " ablation=" + to_string(p.model.ablation);
                    std::printf("%-26s task=%-20s m=%-3d k_p=%-3d k_f=%-3d lambda=%-5g alpha=%-4g "
                                "steps=%d%s\n",
                                p.name.c_str(), p.task.empty() ? "(user corpus)" : p.task.c_str(),
                                p.model.state, p.model.k_p, p.model.k_f, p.model.lambda,
                                p.model.alpha, p.optim.steps, extras.c_str());
                }
                return kExitOk;
            }
            if (preset_name.empty())
                throw DataError("run-experiment needs --preset (or --list)");
            harness::Preset preset = harness::find_preset(preset_name);
            if (!config_path.empty()) apply_config(preset, read_config_file(config_path));
            if (!seeds_csv.empty()) preset.seeds = parse_seeds(seeds_csv);
            return cmd_run_experiment(preset, corpus_train, corpus_test, out_dir, jobs);
        }

        if (abl->parsed()) {
            std::vector<std::uint64_t> seeds;
            if (!seeds_csv.empty()) seeds = parse_seeds(seeds_csv);
            return cmd_ablate(task, mode, seeds, out_dir, jobs);
        }

        if (viz->parsed()) return cmd_viz_attention(checkpoint, sentence, out_dir);
        if (gc->parsed()) return cmd_gradcheck(corrupt);
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const ShapeError& e) {
        std::cerr << "internal shape error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return kExitUsage;
}
