#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "cps/cli.hpp"
#include "cps/io.hpp"

using namespace cps;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("cps-cli-" + std::to_string(::getpid()) + "-" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

}  // namespace

TEST_F(CliTest, UsageErrors) {
    EXPECT_EQ(cli({}).code, kExitUsage);
    EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
    EXPECT_EQ(cli({"synth", "--seed", "1", "--out", path("x"), "--bogus"}).code, kExitUsage);
    EXPECT_EQ(cli({"retrieve"}).code, kExitUsage);
    EXPECT_EQ(cli({"--help"}).code, kExitOk);
}

TEST_F(CliTest, IndexBuildReportsLineOfDuplicate) {
    write_file_atomic(path("dup.jsonl"), "{\"product_id\":\"a\",\"caption\":\"red dress\"}\n"
                                         "{\"product_id\":\"a\",\"caption\":\"blue dress\"}\n");
    auto r = cli({"index", "build", "--corpus", path("dup.jsonl"), "--out", path("idx")});
    EXPECT_EQ(r.code, kExitData);
    EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(path("idx") + "/manifest.json"));
}

TEST_F(CliTest, SynthIndexRetrieveEval) {
    ASSERT_EQ(cli({"synth", "--seed", "7", "--products", "150", "--dialogues", "12", "--out", path("fx")}).code, 0);
    const auto corpus = path("fx/corpus.jsonl");
    ASSERT_EQ(cli({"index", "build", "--corpus", corpus, "--out", path("idx")}).code, 0);
    for (const char* f : {"vocab.jsonl", "sids.jsonl", "index.fm", "manifest.json"}) {
        EXPECT_TRUE(fs::exists(path("idx") + "/" + f)) << f;
    }

    auto r = cli({"retrieve", "--corpus", corpus, "--index", path("idx"), "--query", "red silk dress", "--ttr",
                  "--top-k", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream lines(r.out);
    std::string line;
    std::getline(lines, line);
    EXPECT_EQ(line, "rank\tproduct_id\trm_raw\trm_ttr\tbest_sid");
    int rows = 0;
    while (std::getline(lines, line)) {
        ++rows;
        EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 4);
        EXPECT_EQ(line.substr(0, line.find('\t')), std::to_string(rows));
    }
    EXPECT_EQ(rows, 3);

    std::vector<std::string> eval = {"eval", "run", "--corpus", corpus, "--index", path("idx"), "--dataset",
                                     path("fx/dialogues.jsonl"), "--ttr", "--seed", "3", "--report"};
    auto a = eval;
    a.push_back(path("r1.json"));
    auto b = eval;
    b.push_back(path("r2.json"));
    b.push_back("--csv");
    b.push_back(path("r2.csv"));
    ASSERT_EQ(cli(a).code, 0);
    ASSERT_EQ(cli(b).code, 0);
    EXPECT_EQ(read_file(path("r1.json")), read_file(path("r2.json")));
    EXPECT_TRUE(fs::exists(path("r2.csv")));

    // --seed changes the candidate draws, and therefore the report.
    auto c = eval;
    c[c.size() - 2] = "4";
    c.push_back(path("r3.json"));
    ASSERT_EQ(cli(c).code, 0);
    EXPECT_NE(read_file(path("r1.json")), read_file(path("r3.json")));
}

TEST_F(CliTest, DataAndRemoteFailures) {
    ASSERT_EQ(cli({"synth", "--seed", "1", "--products", "100", "--dialogues", "2", "--out", path("fx")}).code, 0);
    const auto corpus = path("fx/corpus.jsonl");
    // Candidate sets larger than the corpus.
    auto r = cli({"eval", "run", "--corpus", corpus, "--dataset", path("fx/dialogues.jsonl"), "--report",
                  path("r.json"), "--candidates", "101"});
    EXPECT_EQ(r.code, kExitData);
    EXPECT_NE(r.err.find("TooFewProducts"), std::string::npos);
    EXPECT_FALSE(fs::exists(path("r.json")));

    EXPECT_EQ(cli({"retrieve", "--corpus", path("missing.jsonl"), "--query", "red"}).code, kExitData);

    // Strict remote judge that cannot be reached.
    write_file_atomic(path("strict.json"),
                      R"({"corpus": "fx/corpus.jsonl", "ttr": {"evaluator": "remote"}, "strict": true,
                          "remote": {"base_url": "http://127.0.0.1:1/v1", "retries": 0, "timeout_ms": 500}})");
    r = cli({"retrieve", "--config", path("strict.json"), "--query", "red dress", "--ttr"});
    EXPECT_EQ(r.code, kExitRemote) << r.err;
}
