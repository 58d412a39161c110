#include <gtest/gtest.h>

#include <random>
#include <set>

#include "cps/error.hpp"
#include "cps/fm_index.hpp"
#include "fixtures.hpp"
#include "naive_scanner.hpp"

using namespace cps;
using cps::testing::NaiveScanner;

namespace {

NaiveScanner scanner_for(const Corpus& corpus) {
    std::vector<NaiveScanner::Entry> entries;
    for (const auto& sid : corpus.sids()) entries.push_back({sid.sid_id, sid.token_ids});
    return NaiveScanner(std::move(entries));
}

Interval walk(const FmIndex& index, const TokenSeq& pattern) {
    auto interval = index.root_interval();
    for (TokenId t : pattern) interval = index.extend(interval, t);
    return interval;
}

template <typename F>
ErrorCode error_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorCode::IoError;
}

class ToyIndex : public ::testing::Test {
protected:
    void SetUp() override {
        toy_ = cps::testing::toy_corpus();
        index_ = FmIndex::build(toy_.corpus.sids(), toy_.vocab);
        red_ = toy_.vocab.id_of("red");
        dress_ = toy_.vocab.id_of("dress");
        shoe_ = toy_.vocab.id_of("shoe");
    }

    cps::testing::BoundCorpus toy_;
    FmIndex index_;
    TokenId red_{}, dress_{}, shoe_{};
};

}  // namespace

TEST_F(ToyIndex, BuildCountsTokensPlusSentinels) {
    EXPECT_EQ(index_.size(), 6u);
    EXPECT_EQ(index_.count(TokenSeq{red_}), 2u);
    auto c = index_.c_table();
    EXPECT_TRUE(std::is_sorted(c.begin(), c.end()));
}

TEST_F(ToyIndex, RootInterval) {
    auto root = index_.root_interval();
    EXPECT_EQ(root.lo, 0u);
    EXPECT_EQ(root.hi, 6u);
    EXPECT_EQ(root.depth, 0u);
}

TEST_F(ToyIndex, Extend) {
    auto red = index_.extend(index_.root_interval(), red_);
    EXPECT_EQ(red.size(), 2u);
    EXPECT_EQ(index_.extend(red, dress_).size(), 1u);
    EXPECT_EQ(index_.extend(red, red_).size(), 0u);
}

TEST_F(ToyIndex, Continuations) {
    auto root = index_.root_interval();
    auto at_root = index_.continuations(root);
    ASSERT_EQ(at_root.size(), 1u);
    EXPECT_EQ(at_root[0].first, red_);

    auto red = index_.extend(root, red_);
    auto after_red = index_.continuations(red);
    ASSERT_EQ(after_red.size(), 2u);
    EXPECT_EQ(after_red[0].first, dress_);
    EXPECT_EQ(after_red[1].first, shoe_);

    auto after_dress = index_.continuations(index_.extend(red, dress_));
    ASSERT_EQ(after_dress.size(), 1u);
    EXPECT_EQ(after_dress[0].first, kEndSid);
    EXPECT_TRUE(after_dress[0].second.complete);

    EXPECT_EQ(error_of([&] { index_.continuations(index_.extend(red, red_)); }), ErrorCode::EmptyInterval);
}

TEST_F(ToyIndex, Locate) {
    auto red = walk(index_, {red_});
    EXPECT_EQ(index_.locate(red), (std::vector<SidId>{0, 1}));
    EXPECT_EQ(index_.locate(walk(index_, {red_, dress_})), (std::vector<SidId>{0}));
    EXPECT_EQ(index_.locate(walk(index_, {red_, shoe_, kEndSid})), (std::vector<SidId>{1}));
    // "shoe" is not a SID prefix; as a substring it belongs only to sid 1.
    EXPECT_EQ(index_.count(TokenSeq{shoe_}), 0u);
    EXPECT_EQ(error_of([&] { index_.locate(walk(index_, {shoe_})); }), ErrorCode::EmptyInterval);
}

TEST_F(ToyIndex, Count) {
    EXPECT_EQ(index_.count(TokenSeq{red_}), 2u);
    EXPECT_EQ(index_.count(TokenSeq{kUnk}), 0u);
    EXPECT_EQ(index_.count(TokenSeq{999}), 0u);
    EXPECT_EQ(index_.count(TokenSeq{}), index_.size());
    EXPECT_EQ(index_.count(TokenSeq{red_, dress_, kEndSid}), 1u);
    EXPECT_EQ(index_.count(TokenSeq{red_, dress_, kEndSid, red_}), 0u);
}

TEST_F(ToyIndex, BuildErrors) {
    EXPECT_EQ(error_of([&] { FmIndex::build({}, toy_.vocab); }), ErrorCode::EmptySidSet);
    std::vector<Product> other;
    other.push_back(cps::testing::caption_product("q", "blue coat"));
    auto other_vocab = build_vocab(Corpus::from_products(other));
    EXPECT_EQ(error_of([&] { FmIndex::build(toy_.corpus.sids(), other_vocab); }), ErrorCode::VocabMismatch);
}

TEST_F(ToyIndex, SerializationIsDeterministicAndRoundTrips) {
    auto bytes = index_.serialize();
    EXPECT_EQ(bytes.substr(0, 5), "FMSID");
    EXPECT_EQ(bytes, FmIndex::build(toy_.corpus.sids(), toy_.vocab).serialize());
    auto loaded = FmIndex::deserialize(bytes, toy_.vocab.digest());
    EXPECT_EQ(loaded.serialize(), bytes);
    EXPECT_EQ(loaded.count(TokenSeq{red_, shoe_}), 1u);
}

TEST_F(ToyIndex, CorruptFilesRejected) {
    auto bytes = index_.serialize();
    EXPECT_EQ(error_of([&] { FmIndex::deserialize(bytes.substr(0, bytes.size() / 2), toy_.vocab.digest()); }),
              ErrorCode::CorruptIndex);
    EXPECT_EQ(error_of([&] { FmIndex::deserialize(bytes, "someotherdigest"); }), ErrorCode::CorruptIndex);
    auto flipped = bytes;
    flipped[20] ^= 0x1;
    EXPECT_EQ(error_of([&] { FmIndex::deserialize(flipped, toy_.vocab.digest()); }), ErrorCode::CorruptIndex);
    EXPECT_EQ(error_of([&] { FmIndex::deserialize("", toy_.vocab.digest()); }), ErrorCode::CorruptIndex);
}

TEST(FmIndexSuffixArray, MatchesSortedSuffixes) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        std::uniform_int_distribution<TokenId> sym(0, 3);
        std::vector<TokenId> text(rng() % 40);
        for (auto& t : text) t = sym(rng);
        auto sa = build_suffix_array(text);
        for (std::size_t i = 1; i < sa.size(); ++i) {
            EXPECT_TRUE(std::lexicographical_compare(text.begin() + sa[i - 1], text.end(), text.begin() + sa[i],
                                                     text.end()));
        }
    }
}

// Random corpora against the brute-force scanner, plus the structural
// properties: monotone extension, continuation soundness/completeness, and
// no match crossing a terminator.
TEST(FmIndexProperties, AgreesWithNaiveScanner) {
    std::mt19937_64 rng(2024);
    for (int corpus_trial = 0; corpus_trial < 20; ++corpus_trial) {
        auto bound = cps::testing::random_corpus(rng, 60, 8);
        FmIndexParams params{static_cast<std::uint32_t>(1 + rng() % 70), static_cast<std::uint32_t>(1 + rng() % 20)};
        auto index = FmIndex::build(bound.corpus.sids(), bound.vocab, params);
        auto scanner = scanner_for(bound.corpus);
        ASSERT_EQ(index.size(), scanner.stream_length());

        for (TokenId c = 0; c < index.alphabet_size(); ++c) {
            std::size_t brute = 0;
            for (std::size_t i = 0; i <= index.size(); ++i) {
                if (i % 13 == 0 || i == index.size()) EXPECT_EQ(index.occ(c, i), brute);
                if (i < index.size()) brute += index.bwt()[i] == c;
            }
        }

        std::uniform_int_distribution<TokenId> any(0, static_cast<TokenId>(bound.vocab.size()));
        for (int p = 0; p < 200; ++p) {
            TokenSeq pattern;
            const auto& entries = scanner.entries();
            const auto& base = entries[rng() % entries.size()].tokens;
            std::size_t len = rng() % (base.size() + 2);
            for (std::size_t i = 0; i < len; ++i) pattern.push_back(i < base.size() ? base[i] : kEndSid);
            if (rng() % 3 == 0 && !pattern.empty()) pattern[rng() % pattern.size()] = any(rng);

            ASSERT_EQ(index.count(pattern), scanner.count(pattern));
            auto interval = walk(index, pattern);
            if (interval.empty()) continue;
            EXPECT_EQ(index.locate(interval), scanner.locate(pattern));
            if (interval.complete) {
                EXPECT_TRUE(index.continuations(interval).empty());
                continue;
            }
            std::set<TokenId> got;
            for (const auto& [t, next] : index.continuations(interval)) {
                got.insert(t);
                EXPECT_FALSE(next.empty());
                EXPECT_LE(next.size(), interval.size());
            }
            EXPECT_EQ(got, scanner.continuations(pattern));
            for (TokenId t = 0; t < index.alphabet_size(); ++t) {
                auto next = index.extend(interval, t);
                EXPECT_EQ(!next.empty(), got.contains(t));
                if (t == kEndSid && !next.empty()) {
                    for (TokenId u = 0; u < index.alphabet_size(); ++u) EXPECT_TRUE(index.extend(next, u).empty());
                }
            }
        }
    }
}

TEST(FmIndexProperties, DuplicateSidsResolveToEveryOwner) {
    std::vector<Product> products;
    for (int i = 0; i < 5; ++i) products.push_back(cps::testing::caption_product("p" + std::to_string(i), "red dress"));
    auto bound = cps::testing::bind(Corpus::from_products(products));
    for (std::uint32_t stride : {1u, 2u, 3u, 16u}) {
        auto index = FmIndex::build(bound.corpus.sids(), bound.vocab, {4, stride});
        auto red = bound.vocab.id_of("red"), dress = bound.vocab.id_of("dress");
        EXPECT_EQ(index.locate(walk(index, {red})), (std::vector<SidId>{0, 1, 2, 3, 4}));
        EXPECT_EQ(index.locate(walk(index, {red, dress, kEndSid})), (std::vector<SidId>{0, 1, 2, 3, 4}));
    }
}

TEST(FmIndexProperties, RoundTripAnswersIdentically) {
    std::mt19937_64 rng(77);
    auto bound = cps::testing::random_corpus(rng, 40, 6);
    auto index = FmIndex::build(bound.corpus.sids(), bound.vocab);
    auto loaded = FmIndex::deserialize(index.serialize(), bound.vocab.digest());
    std::uniform_int_distribution<TokenId> any(0, static_cast<TokenId>(bound.vocab.size() - 1));
    for (int p = 0; p < 100; ++p) {
        TokenSeq pattern(rng() % 4);
        for (auto& t : pattern) t = any(rng);
        EXPECT_EQ(index.count(pattern), loaded.count(pattern));
        auto a = walk(index, pattern), b = walk(loaded, pattern);
        EXPECT_EQ(a, b);
        if (!a.empty()) EXPECT_EQ(index.locate(a), loaded.locate(b));
    }
}
