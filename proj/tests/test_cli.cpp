#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

std::string binary() {
    const char* bin = std::getenv("CGPS_BIN");
    REQUIRE(bin != nullptr);
    return bin;
}

std::string fixture(const std::string& name) {
    const char* dir = std::getenv("CGPS_TEST_DATA");
    REQUIRE(dir != nullptr);
    return (fs::path(dir) / name).string();
}

fs::path work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "cgps_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

CmdResult run(const std::string& args) {
    const fs::path log = work_dir() / "cmd.log";
    const std::string cmd = binary() + " " + args + " > " + log.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    CmdResult r;
    r.exit_code = WEXITSTATUS(raw);
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int count_lines(const fs::path& p) {
    std::ifstream in(p);
    int n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

}  // namespace

TEST_CASE("usage errors exit with the usage code") {
    CHECK(run("").exit_code == 2);
    CHECK(run("frobnicate").exit_code == 2);
    CHECK(run("train").exit_code == 2);  // missing --preset
}

TEST_CASE("gen-data writes corpora with the expected counts") {
    const fs::path out = work_dir() / "gen";
    CmdResult r = run("gen-data --task jump --out " + out.string());
    CHECK(r.exit_code == 0);
    CHECK(count_lines(out / "jump_train.txt") == 14670);
    CHECK(count_lines(out / "jump_test.txt") == 7706);
    CHECK(fs::exists(out / "stats.json"));
    const std::string stats = slurp(out / "stats.json");
    CHECK(stats.find("\"train_count\": 14670") != std::string::npos);
    CHECK(stats.find("\"test_count\": 7706") != std::string::npos);

    SUBCASE("regeneration is byte identical") {
        const std::string before = slurp(out / "jump_train.txt");
        CHECK(run("gen-data --task jump --out " + out.string()).exit_code == 0);
        CHECK(slurp(out / "jump_train.txt") == before);
    }
}

TEST_CASE("gen-data scan-adj counts") {
    const fs::path out = work_dir() / "gen_adj";
    CHECK(run("gen-data --task scan-adj --out " + out.string()).exit_code == 0);
    CHECK(count_lines(out / "scan-adj_train.txt") == 2560);
    CHECK(count_lines(out / "scan-adj_test.txt") == 1151);
}

TEST_CASE("gen-data rejects unknown tasks with the data exit code") {
    CmdResult r = run("gen-data --task bogus --out " + (work_dir() / "x").string());
    CHECK(r.exit_code == 3);
    CHECK(r.output.find("bogus") != std::string::npos);
}

TEST_CASE("gradcheck passes, and the corrupted fixture fails") {
    CmdResult ok = run("gradcheck");
    CHECK(ok.exit_code == 0);
    CHECK(ok.output.find("model-loss") != std::string::npos);
    CHECK(ok.output.find("FAIL") == std::string::npos);
    // one line per suite
    int suites = 0;
    std::stringstream ss(ok.output);
    std::string line;
    while (std::getline(ss, line))
        if (line.find("max relative error") != std::string::npos) ++suites;
    CHECK(suites == 7);

    CmdResult bad = run("gradcheck --corrupt");
    CHECK(bad.exit_code != 0);
    CHECK(bad.output.find("corrupted-fixture") != std::string::npos);
    CHECK(bad.output.find("FAIL") != std::string::npos);
}

TEST_CASE("train, eval and viz-attention round trip on the toy corpus") {
    const fs::path out = work_dir() / "runs";
    const fs::path cfg = work_dir() / "quick.cfg";
    std::ofstream(cfg) << "# quick fit\nsteps = 1500\nbatch = 16\nlog_every = 100\n";

    CmdResult r = run("train --preset fewshot --seed 1 --corpus-train " +
                      fixture("fewshot_train.txt") + " --config " + cfg.string() + " --out " +
                      out.string());
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("accuracy 1.0000") != std::string::npos);

    const fs::path run_dir = out / "fewshot" / "1";
    REQUIRE(fs::exists(run_dir / "checkpoint.json"));
    REQUIRE(fs::exists(run_dir / "metrics.jsonl"));
    REQUIRE(fs::exists(run_dir / "report.json"));
    CHECK(count_lines(run_dir / "metrics.jsonl") == 15);

    SUBCASE("retraining reproduces checkpoint and metrics byte for byte") {
        const std::string ckpt = slurp(run_dir / "checkpoint.json");
        const std::string metrics = slurp(run_dir / "metrics.jsonl");
        CHECK(run("train --preset fewshot --seed 1 --corpus-train " +
                  fixture("fewshot_train.txt") + " --config " + cfg.string() + " --out " +
                  out.string())
                  .exit_code == 0);
        CHECK(slurp(run_dir / "checkpoint.json") == ckpt);
        CHECK(slurp(run_dir / "metrics.jsonl") == metrics);
    }

    SUBCASE("eval reports perfect fit on the training corpus") {
        CmdResult e = run("eval --checkpoint " + (run_dir / "checkpoint.json").string() +
                          " --corpus-test " + fixture("fewshot_train.txt"));
        CHECK(e.exit_code == 0);
        CHECK(e.output.find("\"accuracy\": 1.0") != std::string::npos);
    }

    SUBCASE("eval rejects corpora with unknown tokens") {
        const fs::path alien = work_dir() / "alien.txt";
        std::ofstream(alien) << "IN: frob OUT: RED\n";
        CmdResult e = run("eval --checkpoint " + (run_dir / "checkpoint.json").string() +
                          " --corpus-test " + alien.string());
        CHECK(e.exit_code == 3);
        CHECK(e.output.find("frob") != std::string::npos);
    }

    SUBCASE("viz-attention exports a stochastic matrix and a graymap") {
        const fs::path viz = work_dir() / "viz";
        CmdResult v = run("viz-attention --checkpoint " + (run_dir / "checkpoint.json").string() +
                          " --input \"dax fep\" --out " + viz.string());
        CHECK(v.exit_code == 0);

        std::ifstream csv(viz / "attention.csv");
        REQUIRE(csv.good());
        std::string header;
        std::getline(csv, header);
        CHECK(header == ",dax,fep,<eos>");
        std::string line;
        int rows = 0;
        while (std::getline(csv, line)) {
            ++rows;
            std::stringstream ss(line);
            std::string cell;
            std::getline(ss, cell, ',');  // row label
            CHECK(!cell.empty());
            double sum = 0.0;
            while (std::getline(ss, cell, ',')) sum += std::stod(cell);
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        }
        // trained model maps "dax fep" to RED RED RED plus EOS
        CHECK(rows == 4);

        const std::string pgm = slurp(viz / "attention.pgm");
        const std::string header_bytes = "P5\n3 4\n255\n";
        CHECK(pgm.rfind(header_bytes, 0) == 0);
        CHECK(pgm.size() == header_bytes.size() + 12);  // header + one byte per cell
    }

    SUBCASE("unknown word in the sentence is a data error") {
        CmdResult v = run("viz-attention --checkpoint " + (run_dir / "checkpoint.json").string() +
                          " --input \"dax frob\" --out " + (work_dir() / "viz2").string());
        CHECK(v.exit_code == 3);
        CHECK(v.output.find("frob") != std::string::npos);
    }
}

TEST_CASE("run-experiment aggregates seeds into a summary") {
    const fs::path out = work_dir() / "exp";
    const fs::path cfg = work_dir() / "tiny.cfg";
    std::ofstream(cfg) << "steps = 200\nbatch = 8\nlog_every = 50\n";
    CmdResult r = run("run-experiment --preset fewshot --seeds 1,2 --jobs 2 --corpus-train " +
                      fixture("fewshot_train.txt") + " --config " + cfg.string() + " --out " +
                      out.string());
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("mean") != std::string::npos);
    CHECK(fs::exists(out / "fewshot" / "summary.json"));
    const std::string summary = slurp(out / "fewshot" / "summary.json");
    CHECK(summary.find("\"std_kind\": \"sample\"") != std::string::npos);
}

TEST_CASE("missing user corpus yields a clear format message") {
    CmdResult r = run("run-experiment --preset mt");
    CHECK(r.exit_code == 3);
    CHECK(r.output.find("IN: <words> OUT: <symbols>") != std::string::npos);
}
