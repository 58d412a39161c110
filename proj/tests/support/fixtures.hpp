#pragma once

#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cps/corpus.hpp"
#include "cps/tokenizer.hpp"

namespace cps::testing {

struct BoundCorpus {
    Corpus corpus;
    Vocab vocab;
};

inline BoundCorpus bind(Corpus corpus) {
    auto vocab = build_vocab(corpus);
    corpus.bind_vocab(vocab);
    return {std::move(corpus), std::move(vocab)};
}

inline Product caption_product(std::string id, std::string caption) {
    Product p;
    p.product_id = std::move(id);
    p.caption = std::move(caption);
    return p;
}

/// {"red dress" -> p1, "red shoe" -> p2}
inline BoundCorpus toy_corpus() {
    std::vector<Product> products;
    products.push_back(caption_product("p1", "red dress"));
    products.push_back(caption_product("p2", "red shoe"));
    return bind(Corpus::from_products(std::move(products)));
}

/// One product per SID, captions drawn from a small word pool so that
/// prefixes are heavily shared and duplicates occur.
inline BoundCorpus random_corpus(std::mt19937_64& rng, std::size_t max_sids, std::size_t max_tokens) {
    static const std::vector<std::string> kWords = {"red",  "blue",  "green", "dress", "shoe",  "boot", "silk",
                                                    "wool", "long",  "short", "a",     "line",  "knee", "cut",
                                                    "soft", "cotton", "black", "white", "linen", "denim"};
    std::uniform_int_distribution<std::size_t> n_sids(1, max_sids);
    std::uniform_int_distribution<std::size_t> n_tokens(1, max_tokens);
    std::uniform_int_distribution<std::size_t> vocab_cut(2, kWords.size());
    const std::size_t words = vocab_cut(rng);
    std::uniform_int_distribution<std::size_t> pick(0, words - 1);
    std::vector<Product> products;
    const std::size_t s = n_sids(rng);
    for (std::size_t i = 0; i < s; ++i) {
        std::string caption;
        const std::size_t len = n_tokens(rng);
        for (std::size_t j = 0; j < len; ++j) {
            if (j) caption += ' ';
            caption += kWords[pick(rng)];
        }
        products.push_back(caption_product("p" + std::to_string(i), caption));
    }
    return bind(Corpus::from_products(std::move(products)));
}

inline Corpus ingest_string(const std::string& jsonl) {
    std::istringstream in(jsonl);
    return ingest_corpus(in);
}

}  // namespace cps::testing
