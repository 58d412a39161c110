#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "chain_rule_oracle.hpp"
#include "cps/decoder.hpp"
#include "cps/error.hpp"
#include "fixtures.hpp"

using namespace cps;

namespace {

ScoredSid scored(SidId id, std::string product, double lp) {
    ScoredSid s;
    s.sid_id = id;
    s.product_id = std::move(product);
    s.logprob = lp;
    return s;
}

cps::testing::NaiveScanner scanner_for(const Corpus& corpus) {
    std::vector<cps::testing::NaiveScanner::Entry> entries;
    for (const auto& sid : corpus.sids()) entries.push_back({sid.sid_id, sid.token_ids});
    return cps::testing::NaiveScanner(std::move(entries));
}

class ToyDecoder : public ::testing::Test {
protected:
    void SetUp() override {
        toy_ = cps::testing::toy_corpus();
        index_ = FmIndex::build(toy_.corpus.sids(), toy_.vocab);
    }
    cps::testing::BoundCorpus toy_;
    FmIndex index_;
};

}  // namespace

TEST(SidLogprob, SumsSteps) {
    EXPECT_DOUBLE_EQ(sid_logprob(std::vector<double>{-0.5, -1.0, -0.25}), -1.75);
    EXPECT_EQ(sid_logprob(std::vector<double>{0.0}), 0.0);
    EXPECT_EQ(sid_logprob(std::vector<double>{}), 0.0);
    EXPECT_THROW(sid_logprob(std::vector<double>{-1.0, NAN}), Error);
    EXPECT_THROW(sid_logprob(std::vector<double>{-INFINITY}), Error);
}

TEST(GroupByProduct, SortsAndTruncates) {
    std::vector<ScoredSid> sids = {scored(1, "p1", -1), scored(2, "p1", -2), scored(3, "p2", -1.5)};
    auto groups = group_by_product(sids, 1);
    ASSERT_EQ(groups.size(), 2u);
    ASSERT_EQ(groups["p1"].size(), 1u);
    EXPECT_EQ(groups["p1"][0].sid_id, 1u);
    EXPECT_EQ(groups["p2"][0].sid_id, 3u);
    EXPECT_TRUE(group_by_product({}, 2).empty());

    std::vector<ScoredSid> tied = {scored(9, "p1", -1), scored(4, "p1", -1), scored(6, "p1", -1)};
    auto g = group_by_product(tied, 2)["p1"];
    ASSERT_EQ(g.size(), 2u);
    EXPECT_EQ(g[0].sid_id, 4u);
    EXPECT_EQ(g[1].sid_id, 6u);
}

TEST(DecodeConfig, Validation) {
    EXPECT_NO_THROW(DecodeConfig{}.validate());
    EXPECT_THROW((DecodeConfig{0, 1, 32}.validate()), Error);
    EXPECT_THROW((DecodeConfig{2, 3, 32}.validate()), Error);
    EXPECT_THROW((DecodeConfig{2, 1, 0}.validate()), Error);
}

TEST_F(ToyDecoder, UniformModelEmitsBothSidsWithTieBreak) {
    UniformModel uniform;
    auto out = generate_sids(uniform, index_, toy_.corpus, toy_.vocab, {"anything", std::nullopt}, {4, 2, 32});
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(toy_.vocab.decode(out[0].token_ids), "red dress");
    EXPECT_EQ(toy_.vocab.decode(out[1].token_ids), "red shoe");
    EXPECT_EQ(out[0].product_id, "p1");
    for (const auto& s : out) {
        EXPECT_NEAR(s.logprob, -std::log(2.0), 1e-12);
        ASSERT_EQ(s.step_logprobs.size(), 3u);
        EXPECT_EQ(s.step_logprobs[0], 0.0);  // "red" is the only start
        EXPECT_EQ(s.step_logprobs[2], 0.0);  // terminator is forced
    }
}

TEST_F(ToyDecoder, QueryAffinityPrefersMatchingSid) {
    auto model = BigramModel::train(toy_.corpus, toy_.vocab);
    auto out = generate_sids(model, index_, toy_.corpus, toy_.vocab, {"dress", std::nullopt}, {4, 2, 32});
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].product_id, "p1");
    EXPECT_GT(out[0].logprob, out[1].logprob);
}

TEST_F(ToyDecoder, CandidateScopeRestrictsOutput) {
    UniformModel uniform;
    auto out = generate_sids(uniform, index_, toy_.corpus, toy_.vocab,
                             {"red", std::vector<std::string>{"p2"}}, {4, 2, 32});
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].product_id, "p2");
    EXPECT_EQ(toy_.vocab.decode(out[0].token_ids), "red shoe");
    EXPECT_EQ(out[0].logprob, 0.0);
}

TEST_F(ToyDecoder, ScopeAndVocabErrors) {
    UniformModel uniform;
    auto code_of = [&](const RetrievalRequest& req) {
        try {
            generate_sids(uniform, index_, toy_.corpus, toy_.vocab, req, {});
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::IoError;
    };
    EXPECT_EQ(code_of({"red", std::vector<std::string>{}}), ErrorCode::EmptyScope);
    EXPECT_EQ(code_of({"red", std::vector<std::string>{"nope"}}), ErrorCode::ProductNotFound);

    std::vector<Product> other;
    other.push_back(cps::testing::caption_product("q", "blue coat"));
    auto foreign = cps::testing::bind(Corpus::from_products(other));
    try {
        generate_sids(uniform, index_, toy_.corpus, foreign.vocab, {"red", std::nullopt}, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::VocabMismatch);
    }
}

TEST_F(ToyDecoder, MaxLenDropsLongerSids) {
    UniformModel uniform;
    EXPECT_TRUE(generate_sids(uniform, index_, toy_.corpus, toy_.vocab, {"", std::nullopt}, {4, 2, 1}).empty());
    EXPECT_EQ(generate_sids(uniform, index_, toy_.corpus, toy_.vocab, {"", std::nullopt}, {4, 2, 2}).size(), 2u);
}

// Beam exactness, validity, score consistency, and monotone prefixes on
// random corpora small enough to enumerate.
TEST(DecoderProperties, WideBeamMatchesExhaustiveEnumeration) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 40; ++trial) {
        auto bound = cps::testing::random_corpus(rng, 30, 6);
        auto index = FmIndex::build(bound.corpus.sids(), bound.vocab);
        auto scanner = scanner_for(bound.corpus);
        auto model = BigramModel::train(bound.corpus, bound.vocab, {0.1, 1.5});
        const std::string query = bound.corpus.sids()[rng() % bound.corpus.sids().size()].text;
        const int width = 50;
        auto out = generate_sids(model, index, bound.corpus, bound.vocab, {query, std::nullopt}, {width, width, 32});
        auto expected = cps::testing::chain_rule_scores(scanner, model, bound.vocab.encode(query));

        // top_b = 50 exceeds SIDs per product (1), so nothing is truncated.
        ASSERT_EQ(out.size(), expected.size());
        std::set<SidId> seen;
        for (const auto& s : out) {
            EXPECT_TRUE(seen.insert(s.sid_id).second);
            const auto& rec = bound.corpus.sids()[s.sid_id];
            EXPECT_EQ(rec.token_ids, s.token_ids);
            EXPECT_EQ(rec.product_id, s.product_id);
            EXPECT_NEAR(s.logprob, expected.at(s.sid_id), 1e-9);
            double running = 0.0;
            for (double lp : s.step_logprobs) {
                EXPECT_LE(lp, 0.0);
                EXPECT_LE(running + lp, running);
                running += lp;
            }
            EXPECT_DOUBLE_EQ(running, s.logprob);
        }
        EXPECT_TRUE(std::is_sorted(out.begin(), out.end(), ranks_before));
    }
}

TEST(DecoderProperties, NarrowBeamOnlyEmitsCorpusSids) {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 40; ++trial) {
        auto bound = cps::testing::random_corpus(rng, 80, 10);
        auto index = FmIndex::build(bound.corpus.sids(), bound.vocab);
        auto model = BigramModel::train(bound.corpus, bound.vocab);
        DecodeConfig config{1 + static_cast<int>(rng() % 4), 1, 32};
        auto out = generate_sids(model, index, bound.corpus, bound.vocab, {"red dress", std::nullopt}, config);
        EXPECT_FALSE(out.empty());
        std::map<std::string, int> per_product;
        for (const auto& s : out) {
            EXPECT_EQ(bound.corpus.sids()[s.sid_id].token_ids, s.token_ids);
            EXPECT_LE(++per_product[s.product_id], config.top_b);
        }
    }
}
