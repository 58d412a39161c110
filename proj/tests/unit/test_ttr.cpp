#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "cps/error.hpp"
#include "cps/remote.hpp"
#include "cps/ttr.hpp"
#include "stub_llm_server.hpp"

using namespace cps;

namespace {

RerankBatch batch_of(std::vector<std::pair<std::string, std::vector<double>>> products, std::string query = "q") {
    RerankBatch batch;
    batch.query = std::move(query);
    SidId next = 0;
    for (auto& [id, scores] : products) {
        ProductCandidates pc{id, {}};
        for (double s : scores) pc.sids.push_back({next++, id, id + " text " + std::to_string(next), s});
        batch.products.push_back(std::move(pc));
    }
    return batch;
}

std::vector<std::string> order(const std::vector<RankedProduct>& ranked) {
    std::vector<std::string> out;
    for (const auto& r : ranked) out.push_back(r.product_id);
    return out;
}

/// Confidence read from the SID text so that every SID gets its own value.
class TableEvaluator final : public Evaluator {
public:
    explicit TableEvaluator(std::map<SidId, double> w) : w_(std::move(w)) {}
    EvaluatorVerdict evaluate(const SidCandidate& sid, std::string_view) const override { return {w_.at(sid.sid_id), {}}; }
    std::string describe() const override { return "table"; }

private:
    std::map<SidId, double> w_;
};

}  // namespace

TEST(MinMaxNormalize, Examples) {
    auto out = minmax_normalize(std::vector<double>{-4, -2, -1});
    EXPECT_DOUBLE_EQ(out[0], 0.0);
    EXPECT_NEAR(out[1], 2.0 / 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(out[2], 1.0);
    EXPECT_EQ(minmax_normalize(std::vector<double>{-2, -2}), (std::vector<double>{1.0, 1.0}));
    EXPECT_EQ(minmax_normalize(std::vector<double>{-5}), (std::vector<double>{1.0}));
    EXPECT_THROW(minmax_normalize(std::vector<double>{}), Error);
    EXPECT_THROW(minmax_normalize(std::vector<double>{-1, NAN}), Error);
}

TEST(LexicalEvaluator, F1) {
    EXPECT_NEAR(evaluate_lexical("red dress", "red evening dress").confidence, 0.8, 1e-12);
    EXPECT_DOUBLE_EQ(evaluate_lexical("Red dress!", "red dress").confidence, 1.0);
    EXPECT_EQ(evaluate_lexical("blue coat", "red dress").confidence, 0.0);
    EXPECT_EQ(evaluate_lexical("", "red dress").confidence, 0.0);
    // multisets: one shared "red" out of two in the sid
    EXPECT_NEAR(evaluate_lexical("red red", "red").confidence, 2 * 0.5 * 1.0 / 1.5, 1e-12);
}

TEST(Rerank, SingleSidProduct) {
    // sigma 0.5 needs a three-point batch: -2 sits halfway in [-3, -1].
    auto batch = batch_of({{"a", {-2.0}}, {"lo", {-3.0}}, {"hi", {-1.0}}});
    TableEvaluator w({{0, 0.8}, {1, 0.0}, {2, 0.0}});
    auto ranked = rerank(batch, w, {true, 2});
    ASSERT_EQ(ranked[0].product_id, "a");
    EXPECT_NEAR(ranked[0].rm_ttr, 0.40, 1e-12);
    EXPECT_EQ(ranked[0].rm_raw, -2.0);
}

TEST(Rerank, ProductTakesMaxOfItsSids) {
    auto batch = batch_of({{"a", {-3.0, -1.0}}, {"z", {-2.0}}});
    // sigma: a -> {0, 1}, z -> 0.5; weights 0.4 / 0.7 make RM_TTR {0, 0.7}
    TableEvaluator w({{0, 0.4}, {1, 0.7}, {2, 1.0}});
    auto ranked = rerank(batch, w, {true, 1});
    ASSERT_EQ(ranked.size(), 2u);
    EXPECT_EQ(ranked[0].product_id, "a");
    EXPECT_NEAR(ranked[0].rm_ttr, 0.7, 1e-12);
    EXPECT_EQ(ranked[0].best_sid.sid_id, 1u);
    EXPECT_EQ(ranked[0].rank, 1);
    EXPECT_NEAR(ranked[1].rm_ttr, 0.5, 1e-12);
}

TEST(Rerank, DisabledRanksByRawScoreWithoutEvaluator) {
    class Throwing final : public Evaluator {
        EvaluatorVerdict evaluate(const SidCandidate&, std::string_view) const override {
            throw Error(ErrorCode::EvaluatorUnavailable, "must not be called");
        }
        std::string describe() const override { return "throwing"; }
    } never;
    auto batch = batch_of({{"b", {-1.0}}, {"a", {-1.0}}, {"c", {-0.5, -9.0}}});
    auto ranked = rerank(batch, never, {false, 4});
    EXPECT_EQ(order(ranked), (std::vector<std::string>{"c", "a", "b"}));
    EXPECT_DOUBLE_EQ(ranked[0].rm_ttr, 1.0);
    EXPECT_THROW(rerank(batch, never, {true, 4}), Error);
}

TEST(Rerank, EmptyBatchRejected) {
    LexicalEvaluator lexical;
    try {
        rerank(RerankBatch{}, lexical, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyBatch);
    }
}

TEST(Rerank, OracleEvaluatorPromotesTarget) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> lp(-30.0, -0.1);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::pair<std::string, std::vector<double>>> products;
        for (int p = 0; p < 20; ++p) {
            std::vector<double> scores(1 + rng() % 3);
            for (auto& s : scores) s = lp(rng);
            products.emplace_back("p" + std::to_string(p), scores);
        }
        // Give the target one SID above the batch minimum so sigma > 0.01.
        products[7].second.push_back(-0.05);
        OracleEvaluator oracle({"p7"});
        auto ranked = rerank(batch_of(products), oracle, {true, 3});
        EXPECT_EQ(ranked[0].product_id, "p7");
    }
}

TEST(RerankProperties, RangeNeutralityAndDeterminism) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> lp(-20.0, 0.0);
    LexicalEvaluator lexical;
    ConstantEvaluator constant(1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::pair<std::string, std::vector<double>>> products;
        const int a = 1 + static_cast<int>(rng() % 25);
        for (int p = 0; p < a; ++p) {
            std::vector<double> scores(1 + rng() % 5);
            for (auto& s : scores) s = rng() % 4 == 0 ? -1.0 : lp(rng);  // force ties sometimes
            products.emplace_back("p" + std::to_string(rng() % 1000) + "_" + std::to_string(p), scores);
        }
        auto batch = batch_of(products, "p1 text 3 red");
        auto with_ttr = rerank(batch, constant, {true, 4});
        auto raw = rerank(batch, constant, {false, 4});
        EXPECT_EQ(order(with_ttr), order(raw));
        for (const auto& r : with_ttr) {
            EXPECT_GE(r.rm_ttr, 0.0);
            EXPECT_LE(r.rm_ttr, 1.0);
        }
        auto serial = rerank_serial(batch, lexical, {true, 1});
        for (int threads : {1, 2, 8}) {
            auto parallel = rerank(batch, lexical, {true, threads});
            ASSERT_EQ(order(parallel), order(serial));
            for (std::size_t i = 0; i < serial.size(); ++i) EXPECT_EQ(parallel[i].rm_ttr, serial[i].rm_ttr);
        }
        std::vector<int> ranks;
        for (const auto& r : serial) ranks.push_back(r.rank);
        for (int i = 0; i < a; ++i) EXPECT_EQ(ranks[i], i + 1);
    }
}

TEST(RemoteJudge, ParsesRetriesAndFallsBack) {
    EXPECT_EQ(RemoteJudge::parse_confidence(" 0.75 "), 0.75);
    EXPECT_EQ(RemoteJudge::parse_confidence("1"), 1.0);
    EXPECT_EQ(RemoteJudge::parse_confidence(".5"), 0.5);
    EXPECT_FALSE(RemoteJudge::parse_confidence("1.5"));
    EXPECT_FALSE(RemoteJudge::parse_confidence("maybe 0.4"));

    std::atomic<int> calls{0};
    cps::testing::StubLlmServer server([&](const nlohmann::json& req, httplib::Response& res) {
        auto prompt = cps::testing::StubLlmServer::prompt_of(req);
        EXPECT_NE(prompt.find("red dress"), std::string::npos);
        cps::testing::StubLlmServer::reply_text(res, calls++ == 0 ? "I think 0.9" : "0.9");
    });
    RemoteConfig config;
    config.base_url = server.base_url();
    config.backoff_ms = 1;
    auto client = std::make_shared<ChatClient>(config);
    RemoteJudge judge(client, true);
    SidCandidate sid{0, "p1", "red dress", -1.0};
    EXPECT_DOUBLE_EQ(judge.evaluate(sid, "red dress please").confidence, 0.9);
    EXPECT_EQ(calls.load(), 2);

    cps::testing::StubLlmServer garbled([](const nlohmann::json&, httplib::Response& res) {
        cps::testing::StubLlmServer::reply_text(res, "no idea");
    });
    config.base_url = garbled.base_url();
    auto garbled_client = std::make_shared<ChatClient>(config);
    EXPECT_DOUBLE_EQ(RemoteJudge(garbled_client, false).evaluate(sid, "q").confidence, RemoteJudge::kFallback);
    EXPECT_EQ(garbled.requests(), 3);
    try {
        RemoteJudge(garbled_client, true).evaluate(sid, "q");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EvaluatorUnavailable);
    }

    config.base_url = "http://127.0.0.1:1/v1";
    config.retries = 0;
    auto dead = std::make_shared<ChatClient>(config);
    EXPECT_DOUBLE_EQ(RemoteJudge(dead, false).evaluate(sid, "q").confidence, RemoteJudge::kFallback);
    EXPECT_THROW(RemoteJudge(dead, true).evaluate(sid, "q"), Error);
}
