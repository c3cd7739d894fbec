#include "cgps/data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "cgps/rng.hpp"

namespace cgps::data {

namespace {

std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string w;
    while (is >> w) out.push_back(w);
    return out;
}

std::string join(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

}  // namespace

Example make_example(std::vector<std::string> input, std::vector<std::string> output) {
    input.push_back(kEos);
    output.push_back(kEos);
    return {std::move(input), std::move(output)};
}

int Vocab::at(const std::string& token) const {
    auto it = index.find(token);
    if (it == index.end()) throw DataError("unknown token '" + token + "'");
    return it->second;
}

std::pair<Vocab, Vocab> build_vocab(const Corpus& train) {
    if (train.empty()) throw DataError("build_vocab: empty corpus");
    auto build_side = [](const Corpus& corpus, bool input_side) {
        std::set<std::string> uniq;
        for (const Example& ex : corpus)
            for (const std::string& tok : (input_side ? ex.input : ex.output))
                if (tok != kEos) uniq.insert(tok);
        Vocab v;
        v.tokens.assign(uniq.begin(), uniq.end());
        v.tokens.push_back(kEos);
        for (int i = 0; i < v.size(); ++i) v.index[v.tokens[i]] = i;
        v.eos = v.size() - 1;
        return v;
    };
    return {build_side(train, true), build_side(train, false)};
}

std::vector<int> encode(const Vocab& v, const std::vector<std::string>& tokens) {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const std::string& t : tokens) out.push_back(v.at(t));
    return out;
}

// ---- SCAN command language ----------------------------------------------------

namespace {

const std::vector<std::string> kPrimitives = {"walk", "look", "run", "jump"};
const std::vector<std::string> kDirections = {"left", "right"};

// verb phrases (grammar nonterminal V), in derivation order
std::vector<std::vector<std::string>> verb_phrases() {
    std::vector<std::vector<std::string>> vs;
    for (const auto& u : kPrimitives)
        for (const auto& d : kDirections) vs.push_back({u, d});
    for (const auto& d : kDirections) vs.push_back({"turn", d});
    for (const auto& u : kPrimitives) vs.push_back({u});
    for (const auto& u : kPrimitives)
        for (const auto& d : kDirections) vs.push_back({u, "opposite", d});
    for (const auto& u : kPrimitives)
        for (const auto& d : kDirections) vs.push_back({u, "around", d});
    for (const auto& d : kDirections) vs.push_back({"turn", "opposite", d});
    for (const auto& d : kDirections) vs.push_back({"turn", "around", d});
    return vs;
}

std::vector<std::vector<std::string>> simple_phrases() {
    std::vector<std::vector<std::string>> ss;
    for (const auto& v : verb_phrases()) {
        ss.push_back(v);
        auto twice = v;
        twice.push_back("twice");
        ss.push_back(twice);
        auto thrice = v;
        thrice.push_back("thrice");
        ss.push_back(thrice);
    }
    return ss;
}

}  // namespace

const std::vector<std::vector<std::string>>& scan_universe() {
    static const std::vector<std::vector<std::string>> universe = [] {
        const auto ss = simple_phrases();
        std::vector<std::vector<std::string>> cs;
        cs.reserve(ss.size() + 2 * ss.size() * ss.size());
        for (const auto& s : ss) cs.push_back(s);
        for (const char* conj : {"and", "after"}) {
            for (const auto& a : ss) {
                for (const auto& b : ss) {
                    std::vector<std::string> c = a;
                    c.push_back(conj);
                    c.insert(c.end(), b.begin(), b.end());
                    cs.push_back(std::move(c));
                }
            }
        }
        // the grammar generates each command once; dedupe defensively anyway
        std::set<std::vector<std::string>> seen;
        std::vector<std::vector<std::string>> uniq;
        for (auto& c : cs)
            if (seen.insert(c).second) uniq.push_back(std::move(c));
        return uniq;
    }();
    return universe;
}

namespace {

// Parses one verb phrase starting at `pos`; returns its actions and advances pos.
std::vector<std::string> interpret_verb(const std::vector<std::string>& w, std::size_t& pos) {
    auto primitive_action = [](const std::string& u) -> std::string {
        if (u == "walk") return "WALK";
        if (u == "look") return "LOOK";
        if (u == "run") return "RUN";
        if (u == "jump") return "JUMP";
        return "";
    };
    auto turn_action = [](const std::string& d) -> std::string {
        return d == "left" ? "LTURN" : "RTURN";
    };
    auto is_dir = [](const std::string& t) { return t == "left" || t == "right"; };

    if (pos >= w.size()) throw DataError("interpret: truncated command");
    const std::string head = w[pos];

    if (head == "turn") {
        ++pos;
        if (pos < w.size() && w[pos] == "opposite") {
            ++pos;
            if (pos >= w.size() || !is_dir(w[pos])) throw DataError("interpret: expected direction");
            const std::string t = turn_action(w[pos++]);
            return {t, t};
        }
        if (pos < w.size() && w[pos] == "around") {
            ++pos;
            if (pos >= w.size() || !is_dir(w[pos])) throw DataError("interpret: expected direction");
            const std::string t = turn_action(w[pos++]);
            return {t, t, t, t};
        }
        if (pos >= w.size() || !is_dir(w[pos])) throw DataError("interpret: expected direction");
        return {turn_action(w[pos++])};
    }

    const std::string act = primitive_action(head);
    if (act.empty()) throw DataError("interpret: unknown word '" + head + "'");
    ++pos;
    if (pos < w.size() && w[pos] == "opposite") {
        ++pos;
        if (pos >= w.size() || !is_dir(w[pos])) throw DataError("interpret: expected direction");
        const std::string t = turn_action(w[pos++]);
        return {t, t, act};
    }
    if (pos < w.size() && w[pos] == "around") {
        ++pos;
        if (pos >= w.size() || !is_dir(w[pos])) throw DataError("interpret: expected direction");
        const std::string t = turn_action(w[pos++]);
        return {t, act, t, act, t, act, t, act};
    }
    if (pos < w.size() && is_dir(w[pos])) {
        const std::string t = turn_action(w[pos++]);
        return {t, act};
    }
    return {act};
}

std::vector<std::string> interpret_simple(const std::vector<std::string>& w, std::size_t& pos) {
    std::vector<std::string> actions = interpret_verb(w, pos);
    int repeat = 1;
    if (pos < w.size() && w[pos] == "twice") {
        repeat = 2;
        ++pos;
    } else if (pos < w.size() && w[pos] == "thrice") {
        repeat = 3;
        ++pos;
    }
    std::vector<std::string> out;
    out.reserve(actions.size() * repeat);
    for (int r = 0; r < repeat; ++r) out.insert(out.end(), actions.begin(), actions.end());
    return out;
}

}  // namespace

std::vector<std::string> interpret(const std::vector<std::string>& command) {
    std::size_t pos = 0;
    std::vector<std::string> first = interpret_simple(command, pos);
    if (pos == command.size()) return first;
    if (command[pos] != "and" && command[pos] != "after")
        throw DataError("interpret: unexpected token '" + command[pos] + "' in '" + join(command) + "'");
    const bool after = command[pos] == "after";
    ++pos;
    std::vector<std::string> second = interpret_simple(command, pos);
    if (pos != command.size())
        throw DataError("interpret: trailing tokens in '" + join(command) + "'");
    if (after) {
        second.insert(second.end(), first.begin(), first.end());
        return second;
    }
    first.insert(first.end(), second.begin(), second.end());
    return first;
}

bool contains_phrase(const std::vector<std::string>& tokens,
                     const std::vector<std::string>& phrase) {
    if (phrase.empty() || phrase.size() > tokens.size()) return false;
    for (std::size_t i = 0; i + phrase.size() <= tokens.size(); ++i) {
        if (std::equal(phrase.begin(), phrase.end(), tokens.begin() + i)) return true;
    }
    return false;
}

// ---- splits --------------------------------------------------------------------

namespace {

Corpus scan_corpus() {
    Corpus corpus;
    const auto& universe = scan_universe();
    corpus.reserve(universe.size());
    for (const auto& cmd : universe) corpus.push_back(make_example(cmd, interpret(cmd)));
    return corpus;
}

std::vector<std::string> with_eos(std::vector<std::string> tokens) {
    tokens.push_back(kEos);
    return tokens;
}

}  // namespace

Split build_split(const SplitSpec& spec) {
    Corpus universe = spec.universe();
    Split split;

    if (!spec.is_test) {
        // random partition of the universe
        std::vector<std::size_t> order(universe.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(spec.seed);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_int(i)]);
        for (std::size_t i = 0; i < order.size(); ++i) {
            (static_cast<int>(i) < spec.random_train_count ? split.train : split.test)
                .push_back(universe[order[i]]);
        }
        return split;
    }

    const std::vector<std::string> bare =
        spec.oversample.empty() ? std::vector<std::string>{} : with_eos(spec.oversample);
    Example bare_example;
    for (const Example& ex : universe) {
        if (!bare.empty() && ex.input == bare) {
            bare_example = ex;
            continue;
        }
        (spec.is_test(ex) ? split.test : split.train).push_back(ex);
    }
    if (!bare.empty()) {
        if (bare_example.input.empty())
            throw DataError("split '" + spec.name + "': oversample command not in universe");
        // repeat until the bare command is oversample_fraction of the train multiset:
        // copies / (rest + copies) = fraction
        const double rest = static_cast<double>(split.train.size());
        const long copies =
            std::lround(rest * spec.oversample_fraction / (1.0 - spec.oversample_fraction));
        for (long i = 0; i < copies; ++i) split.train.push_back(bare_example);
    }
    return split;
}

Split build_primitive_split(const std::string& primitive_phrase) {
    const std::vector<std::string> phrase = split_words(primitive_phrase);
    SplitSpec spec;
    spec.name = "primitive:" + primitive_phrase;
    spec.universe = scan_corpus;
    spec.is_test = [phrase](const Example& ex) { return contains_phrase(ex.input, phrase); };
    spec.oversample = phrase;
    spec.oversample_fraction = 0.1;
    return build_split(spec);
}

Split build_simple_split(std::uint64_t seed) {
    SplitSpec spec;
    spec.name = "simple";
    spec.universe = scan_corpus;
    spec.random_train_count = 16728;
    spec.seed = seed;
    return build_split(spec);
}

Split build_length_split() {
    SplitSpec spec;
    spec.name = "length";
    spec.universe = scan_corpus;
    // output length counts action tokens before EOS
    spec.is_test = [](const Example& ex) { return ex.output.size() - 1 > 22; };
    return build_split(spec);
}

Split build_template_split(TemplateTask task) {
    std::vector<std::vector<std::string>> held_out;
    std::string name;
    switch (task) {
        case TemplateTask::kJumpAroundRight:
            name = "jump-around-right";
            held_out = {{"jump", "around", "right"}};
            break;
        case TemplateTask::kPrimRight:
            name = "prim-right";
            for (const auto& u : kPrimitives) held_out.push_back({u, "right"});
            break;
        case TemplateTask::kPrimOppositeRight:
            name = "prim-opposite-right";
            for (const auto& u : kPrimitives) held_out.push_back({u, "opposite", "right"});
            break;
        case TemplateTask::kPrimAroundRight:
            name = "prim-around-right";
            for (const auto& u : kPrimitives) held_out.push_back({u, "around", "right"});
            break;
    }
    SplitSpec spec;
    spec.name = "template:" + name;
    // template universe: SCAN minus every command containing the phrase "turn right"
    spec.universe = [] {
        Corpus all = scan_corpus();
        Corpus kept;
        const std::vector<std::string> turn_right = {"turn", "right"};
        for (Example& ex : all)
            if (!contains_phrase(ex.input, turn_right)) kept.push_back(std::move(ex));
        return kept;
    };
    spec.is_test = [held_out](const Example& ex) {
        for (const auto& phrase : held_out)
            if (contains_phrase(ex.input, phrase)) return true;
        return false;
    };
    return build_split(spec);
}

// ---- SCAN-ADJ ------------------------------------------------------------------

namespace {

const std::vector<std::string> kAdjVerbs = {"push", "pull", "raise", "spin"};
const std::vector<std::string> kAdjSizes = {"small", "large"};
const std::vector<std::string> kAdjColors = {"yellow", "purple", "brown", "blue",
                                             "red",    "gray",   "green", "cyan"};
const std::vector<std::string> kAdjMaterials = {"metal", "plastic", "rubber"};
const std::vector<std::string> kAdjNouns = {"sphere", "cylinder", "cube"};

std::string upper(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace

const Corpus& scanadj_universe() {
    static const Corpus universe = [] {
        // adjective orderings over (color, size, material), grammar order
        const std::vector<std::array<int, 3>> orders = {
            {0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
        Corpus out;
        for (const auto& v : kAdjVerbs)
            for (const auto& order : orders)
                for (const auto& r : kAdjSizes)
                    for (const auto& c : kAdjColors)
                        for (const auto& m : kAdjMaterials)
                            for (const auto& n : kAdjNouns) {
                                const std::array<std::string, 3> slots = {c, r, m};
                                std::vector<std::string> input = {v};
                                for (int idx : order) input.push_back(slots[idx]);
                                input.push_back(n);
                                std::vector<std::string> output = {upper(v), upper(n), upper(r),
                                                                   upper(c), upper(m)};
                                out.push_back(make_example(std::move(input), std::move(output)));
                            }
        return out;
    }();
    return universe;
}

Split build_scanadj_split() {
    SplitSpec spec;
    spec.name = "scan-adj";
    spec.universe = [] { return scanadj_universe(); };
    spec.is_test = [](const Example& ex) {
        return std::find(ex.input.begin(), ex.input.end(), "rubber") != ex.input.end();
    };
    spec.oversample = {"push", "small", "yellow", "rubber", "sphere"};
    spec.oversample_fraction = 0.1;
    return build_split(spec);
}

// ---- corpus files ----------------------------------------------------------------

Corpus read_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file '" + path + "'");
    Corpus corpus;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fail = [&](const std::string& why) {
            throw DataError(path + ":" + std::to_string(line_no) + ": " + why);
        };
        if (line.rfind("IN: ", 0) != 0) fail("line must start with 'IN: '");
        const std::size_t out_pos = line.find(" OUT: ");
        if (out_pos == std::string::npos) fail("missing ' OUT: ' separator");
        std::vector<std::string> input = split_words(line.substr(4, out_pos - 4));
        std::vector<std::string> output = split_words(line.substr(out_pos + 6));
        if (input.empty()) fail("empty input sequence");
        if (output.empty()) fail("empty output sequence");
        corpus.push_back(make_example(std::move(input), std::move(output)));
    }
    return corpus;
}

void write_corpus(const std::string& path, const Corpus& corpus) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    for (const Example& ex : corpus) {
        if (ex.input.empty() || ex.input.back() != kEos || ex.output.empty() ||
            ex.output.back() != kEos)
            throw DataError("write_corpus: example is not EOS-terminated");
        out << "IN:";
        for (std::size_t i = 0; i + 1 < ex.input.size(); ++i) out << ' ' << ex.input[i];
        out << " OUT:";
        for (std::size_t i = 0; i + 1 < ex.output.size(); ++i) out << ' ' << ex.output[i];
        out << '\n';
    }
    if (!out) throw DataError("write failed for '" + path + "'");
}

// ---- task registry -----------------------------------------------------------------

const std::vector<TaskInfo>& task_table() {
    static const std::vector<TaskInfo> table = {
        {"jump", 14670, 7706},
        {"turnleft", 21890, 1208},
        {"simple", 16728, 4182},
        {"length", 16990, 3920},
        {"jump-around-right", 18528, 1173},
        {"prim-right", 15225, 4476},
        {"prim-opposite-right", 15225, 4476},
        {"prim-around-right", 15225, 4476},
        {"scan-adj", 2560, 1151},
    };
    return table;
}

const TaskInfo& task_info(const std::string& name) {
    for (const TaskInfo& t : task_table())
        if (t.name == name) return t;
    throw DataError("unknown task '" + name + "'");
}

Split build_task(const std::string& name, std::uint64_t seed) {
    if (name == "jump") return build_primitive_split("jump");
    if (name == "turnleft") return build_primitive_split("turn left");
    if (name == "simple") return build_simple_split(seed);
    if (name == "length") return build_length_split();
    if (name == "jump-around-right") return build_template_split(TemplateTask::kJumpAroundRight);
    if (name == "prim-right") return build_template_split(TemplateTask::kPrimRight);
    if (name == "prim-opposite-right")
        return build_template_split(TemplateTask::kPrimOppositeRight);
    if (name == "prim-around-right") return build_template_split(TemplateTask::kPrimAroundRight);
    if (name == "scan-adj") return build_scanadj_split();
    throw DataError("unknown task '" + name + "'");
}

}  // namespace cgps::data
