#include "cps/lm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cps/corpus.hpp"
#include "cps/error.hpp"
#include "cps/io.hpp"
#include "cps/tokenizer.hpp"

namespace cps {

double TokenLogProbs::at(TokenId token) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), token,
                               [](const auto& e, TokenId t) { return e.first < t; });
    if (it == entries.end() || it->first != token) {
        return -std::numeric_limits<double>::infinity();
    }
    return it->second;
}

TokenLogProbs renormalize(std::vector<std::pair<TokenId, double>> logits) {
    if (logits.empty()) {
        throw Error(ErrorCode::EmptyAllowedSet, "no allowed tokens to score");
    }
    std::sort(logits.begin(), logits.end());
    double peak = -std::numeric_limits<double>::infinity();
    for (const auto& [token, logit] : logits) {
        if (!std::isfinite(logit)) {
            throw Error(ErrorCode::NonFiniteInput, "non-finite logit for token " + std::to_string(token));
        }
        peak = std::max(peak, logit);
    }
    double sum = 0.0;
    for (const auto& [token, logit] : logits) {
        sum += std::exp(logit - peak);
    }
    const double log_z = peak + std::log(sum);
    TokenLogProbs out;
    out.entries.reserve(logits.size());
    for (const auto& [token, logit] : logits) {
        // A lone survivor is exactly certain.
        out.entries.emplace_back(token, logits.size() == 1 ? 0.0 : std::min(0.0, logit - log_z));
    }
    return out;
}

TokenLogProbs UniformModel::score_next(const LmContext&, std::span<const TokenId> allowed) const {
    std::vector<std::pair<TokenId, double>> logits;
    logits.reserve(allowed.size());
    for (TokenId t : allowed) {
        logits.emplace_back(t, 0.0);
    }
    return renormalize(std::move(logits));
}

BigramModel BigramModel::train(const Corpus& corpus, const Vocab& vocab, const BigramParams& params) {
    if (corpus.sids().empty()) {
        throw Error(ErrorCode::EmptyCorpus, "cannot train a bigram model without SIDs");
    }
    BigramModel model;
    model.params_ = params;
    model.vocab_size_ = vocab.size();
    model.prev_totals_.assign(vocab.size(), 0);
    for (const auto& sid : corpus.sids()) {
        TokenSeq tokens = sid.token_ids.empty() ? vocab.encode(sid.text) : sid.token_ids;
        TokenId prev = kEndSid;
        tokens.push_back(kEndSid);
        for (TokenId t : tokens) {
            ++model.pairs_[key(prev, t)];
            ++model.prev_totals_[prev];
            prev = t;
        }
    }
    std::ostringstream desc;
    desc.precision(17);
    desc << params.alpha << '/' << params.beta;
    model.digest_ = Digest().field(corpus.content_digest()).field(vocab.digest()).field(desc.str()).hex();
    return model;
}

std::uint32_t BigramModel::pair_count(TokenId prev, TokenId token) const {
    auto it = pairs_.find(key(prev, token));
    return it == pairs_.end() ? 0 : it->second;
}

std::uint32_t BigramModel::prev_count(TokenId prev) const {
    return prev < prev_totals_.size() ? prev_totals_[prev] : 0;
}

double BigramModel::raw_score(TokenId prev, TokenId token, std::span<const TokenId> query_tokens) const {
    const double num = pair_count(prev, token) + params_.alpha;
    const double den = prev_count(prev) + params_.alpha * static_cast<double>(vocab_size_);
    const bool in_query = std::find(query_tokens.begin(), query_tokens.end(), token) != query_tokens.end();
    return std::log(num / den) + (in_query ? params_.beta : 0.0);
}

TokenLogProbs BigramModel::score_next(const LmContext& ctx, std::span<const TokenId> allowed) const {
    const TokenId prev = ctx.prefix_tokens.empty() ? kEndSid : ctx.prefix_tokens.back();
    std::vector<std::pair<TokenId, double>> logits;
    logits.reserve(allowed.size());
    for (TokenId t : allowed) {
        logits.emplace_back(t, raw_score(prev, t, ctx.inferred_query_tokens));
    }
    return renormalize(std::move(logits));
}

std::string BigramModel::describe() const { return "bigram:" + digest_; }

}  // namespace cps
