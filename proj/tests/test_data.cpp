#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "cgps/data.hpp"
#include "cgps/rng.hpp"

using namespace cgps;
using namespace cgps::data;

namespace {

std::vector<std::string> words(const std::string& s) {
    std::vector<std::string> out;
    std::string w;
    for (char c : s) {
        if (c == ' ') {
            if (!w.empty()) out.push_back(w);
            w.clear();
        } else {
            w += c;
        }
    }
    if (!w.empty()) out.push_back(w);
    return out;
}

void check_pair(const std::string& command, const std::string& actions) {
    CAPTURE(command);
    CHECK(interpret(words(command)) == words(actions));
}

std::set<std::vector<std::string>> input_set(const Corpus& c) {
    std::set<std::vector<std::string>> s;
    for (const Example& ex : c) s.insert(ex.input);
    return s;
}

}  // namespace

TEST_CASE("scan universe has exactly 20910 distinct commands") {
    const auto& u = scan_universe();
    CHECK(u.size() == 20910);
    std::set<std::vector<std::string>> uniq(u.begin(), u.end());
    CHECK(uniq.size() == u.size());
    CHECK(uniq.count({"jump"}) == 1);
    CHECK(uniq.count(words("jump twice after look")) == 1);
}

TEST_CASE("no scan command is longer than 9 words") {
    std::size_t longest = 0;
    for (const auto& cmd : scan_universe()) longest = std::max(longest, cmd.size());
    CHECK(longest == 9);
}

TEST_CASE("interpreter golden pairs") {
    // single-primitive training rows
    check_pair("jump", "JUMP");
    check_pair("run after run left", "LTURN RUN RUN");
    check_pair("look left twice and look opposite right",
               "LTURN LOOK LTURN LOOK RTURN RTURN LOOK");
    // held-out jump compositions
    check_pair("jump twice after look", "LOOK JUMP JUMP");
    check_pair("turn left after jump twice", "JUMP JUMP LTURN");
    check_pair("jump right twice after jump left twice",
               "LTURN JUMP LTURN JUMP RTURN JUMP RTURN JUMP");
    // turn-left rows
    check_pair("turn left", "LTURN");
    check_pair("run thrice and jump right", "RUN RUN RUN RTURN JUMP");
    check_pair("look left thrice after run left twice",
               "LTURN RUN LTURN RUN LTURN LOOK LTURN LOOK LTURN LOOK");
    check_pair("look twice and turn left twice", "LOOK LOOK LTURN LTURN");
    check_pair("turn left thrice and turn left", "LTURN LTURN LTURN LTURN");
    check_pair("turn left twice after look opposite right twice",
               "RTURN RTURN LOOK RTURN RTURN LOOK LTURN LTURN");
}

TEST_CASE("interpreter covers the remaining verb forms") {
    check_pair("walk", "WALK");
    check_pair("look", "LOOK");
    check_pair("run right", "RTURN RUN");
    check_pair("walk opposite left", "LTURN LTURN WALK");
    check_pair("walk around right", "RTURN WALK RTURN WALK RTURN WALK RTURN WALK");
    check_pair("turn opposite right", "RTURN RTURN");
    check_pair("turn around left", "LTURN LTURN LTURN LTURN");
}

TEST_CASE("interpreter rejects commands outside the grammar") {
    CHECK_THROWS_AS(interpret(words("jump sideways")), DataError);
    CHECK_THROWS_AS(interpret(words("turn")), DataError);
    CHECK_THROWS_AS(interpret(words("jump and")), DataError);
}

TEST_CASE("interpret is total over the universe") {
    for (const auto& cmd : scan_universe()) CHECK_NOTHROW(interpret(cmd));
}

TEST_CASE("jump split sizes and membership") {
    Split s = build_primitive_split("jump");
    CHECK(s.train.size() == 14670);
    CHECK(s.test.size() == 7706);

    const auto train_inputs = input_set(s.train);
    CHECK(train_inputs.count(words("run twice <eos>")) == 1);
    CHECK(train_inputs.count(words("jump <eos>")) == 1);

    // 13203 distinct non-jump commands plus 1467 copies of the bare command
    CHECK(train_inputs.size() == 13204);
    std::size_t bare = 0;
    for (const Example& ex : s.train)
        if (ex.input == words("jump <eos>")) ++bare;
    CHECK(bare == 1467);

    for (const Example& ex : s.test) {
        CHECK(contains_phrase(ex.input, {"jump"}));
        CHECK(ex.input != words("jump <eos>"));
    }
    for (const Example& ex : s.train)
        if (ex.input != words("jump <eos>")) CHECK(!contains_phrase(ex.input, {"jump"}));
}

TEST_CASE("turnleft split sizes") {
    Split s = build_primitive_split("turn left");
    CHECK(s.train.size() == 21890);
    CHECK(s.test.size() == 1208);
    for (const Example& ex : s.test) CHECK(contains_phrase(ex.input, {"turn", "left"}));
    // commands like "walk left" keep "left" in training
    const auto train_inputs = input_set(s.train);
    CHECK(train_inputs.count(words("walk left <eos>")) == 1);
    CHECK(train_inputs.count(words("turn opposite left <eos>")) == 1);
}

TEST_CASE("simple split is a seeded uniform partition") {
    Split a = build_simple_split(1);
    CHECK(a.train.size() == 16728);
    CHECK(a.test.size() == 4182);

    const auto train_inputs = input_set(a.train);
    for (const Example& ex : a.test) CHECK(train_inputs.count(ex.input) == 0);

    Split b = build_simple_split(2);
    CHECK(b.train.size() == a.train.size());
    CHECK(input_set(b.train) != train_inputs);

    Split a2 = build_simple_split(1);
    CHECK(input_set(a2.train) == train_inputs);
}

TEST_CASE("length split thresholds") {
    Split s = build_length_split();
    CHECK(s.train.size() == 16990);
    CHECK(s.test.size() == 3920);
    std::size_t max_train = 0, min_test = 1000;
    for (const Example& ex : s.train) max_train = std::max(max_train, ex.output.size() - 1);
    for (const Example& ex : s.test) min_test = std::min(min_test, ex.output.size() - 1);
    CHECK(max_train == 22);
    CHECK(min_test == 24);
}

TEST_CASE("template split sizes match the published counts") {
    Split jar = build_template_split(TemplateTask::kJumpAroundRight);
    CHECK(jar.train.size() == 18528);
    CHECK(jar.test.size() == 1173);
    CHECK(jar.train.size() + jar.test.size() == 19701);

    for (TemplateTask t : {TemplateTask::kPrimRight, TemplateTask::kPrimOppositeRight,
                           TemplateTask::kPrimAroundRight}) {
        Split s = build_template_split(t);
        CHECK(s.train.size() == 15225);
        CHECK(s.test.size() == 4476);
    }

    // no command containing "turn right" survives in the template universe
    for (const Example& ex : jar.train) CHECK(!contains_phrase(ex.input, {"turn", "right"}));
    for (const Example& ex : jar.test) CHECK(contains_phrase(ex.input, {"jump", "around", "right"}));
}

TEST_CASE("scan-adj universe") {
    const Corpus& u = scanadj_universe();
    CHECK(u.size() == 3456);

    auto find_output = [&](const std::string& input) -> std::vector<std::string> {
        const auto in = words(input + " <eos>");
        for (const Example& ex : u)
            if (ex.input == in) return ex.output;
        FAIL("input not found: ", input);
        return {};
    };
    CHECK(find_output("push blue metal small cube") == words("PUSH CUBE SMALL BLUE METAL <eos>"));
    CHECK(find_output("push small metal blue cube") == words("PUSH CUBE SMALL BLUE METAL <eos>"));
}

TEST_CASE("scan-adj output is invariant under adjective order") {
    // group by the unordered adjective multiset plus verb and noun
    std::map<std::vector<std::string>, std::set<std::vector<std::string>>> groups;
    for (const Example& ex : scanadj_universe()) {
        std::vector<std::string> key{ex.input.front()};
        std::vector<std::string> adjs(ex.input.begin() + 1, ex.input.end() - 2);
        std::sort(adjs.begin(), adjs.end());
        key.insert(key.end(), adjs.begin(), adjs.end());
        key.push_back(ex.input[ex.input.size() - 2]);
        groups[key].insert(ex.output);
    }
    CHECK(groups.size() == 3456 / 6);
    for (const auto& [key, outputs] : groups) CHECK(outputs.size() == 1);
}

TEST_CASE("scan-adj split") {
    Split s = build_scanadj_split();
    CHECK(s.train.size() == 2560);
    CHECK(s.test.size() == 1151);

    std::size_t rubber_copies = 0;
    for (const Example& ex : s.train) {
        const bool has_rubber =
            std::find(ex.input.begin(), ex.input.end(), "rubber") != ex.input.end();
        if (has_rubber) {
            ++rubber_copies;
            CHECK(ex.input == words("push small yellow rubber sphere <eos>"));
        }
    }
    CHECK(rubber_copies == 256);  // 2304 / 0.9 = 2560 total
    for (const Example& ex : s.test)
        CHECK(std::find(ex.input.begin(), ex.input.end(), "rubber") != ex.input.end());
}

TEST_CASE("corpus file round trip") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "cgps_data_test";
    fs::create_directories(dir);
    const std::string path = (dir / "roundtrip.txt").string();

    SUBCASE("single line format") {
        Corpus c{make_example({"jump"}, {"JUMP"})};
        write_corpus(path, c);
        std::ifstream in(path);
        std::string line;
        std::getline(in, line);
        CHECK(line == "IN: jump OUT: JUMP");
        Corpus back = read_corpus(path);
        REQUIRE(back.size() == 1);
        CHECK(back[0].input == c[0].input);
        CHECK(back[0].output == c[0].output);
    }

    SUBCASE("write then read is the identity on a generated corpus") {
        Split s = build_primitive_split("jump");
        Corpus head(s.train.begin(), s.train.begin() + 500);
        write_corpus(path, head);
        Corpus back = read_corpus(path);
        REQUIRE(back.size() == head.size());
        for (std::size_t i = 0; i < head.size(); ++i) {
            CHECK(back[i].input == head[i].input);
            CHECK(back[i].output == head[i].output);
        }
    }

    SUBCASE("malformed line is reported with its number") {
        std::ofstream out(path);
        out << "IN: jump OUT: JUMP\n";
        out << "IN: look JUMP LOOK\n";
        out.close();
        CHECK_THROWS_WITH_AS(read_corpus(path), doctest::Contains(":2:"), DataError);
    }

    SUBCASE("missing file is an error") {
        CHECK_THROWS_AS(read_corpus((dir / "nope.txt").string()), DataError);
    }
}

TEST_CASE("vocabulary construction") {
    Split s = build_primitive_split("jump");
    auto [in_v, out_v] = build_vocab(s.train);
    CHECK(in_v.size() == 14);  // 13 words + EOS
    CHECK(out_v.size() == 7);  // 6 actions + EOS
    CHECK(in_v.tokens.back() == kEos);
    CHECK(out_v.tokens.back() == kEos);
    CHECK(in_v.eos == 13);
    CHECK(out_v.eos == 6);
    CHECK(std::is_sorted(in_v.tokens.begin(), in_v.tokens.end() - 1));

    auto [in_v2, out_v2] = build_vocab(s.train);
    CHECK(in_v2.tokens == in_v.tokens);
    CHECK(out_v2.tokens == out_v.tokens);

    CHECK_THROWS_WITH_AS(in_v.at("daxy"), doctest::Contains("daxy"), DataError);
    CHECK(encode(out_v, {"JUMP", kEos}).size() == 2);
}

TEST_CASE("task registry") {
    CHECK(task_table().size() == 9);
    CHECK(task_info("jump").expect_train == 14670);
    CHECK(task_info("scan-adj").expect_test == 1151);
    CHECK_THROWS_AS(task_info("bogus"), DataError);
    CHECK_THROWS_AS(build_task("bogus", 0), DataError);

    for (const TaskInfo& t : task_table()) {
        CAPTURE(t.name);
        Split s = build_task(t.name, 0);
        CHECK(static_cast<int>(s.train.size()) == t.expect_train);
        CHECK(static_cast<int>(s.test.size()) == t.expect_test);
    }
}
