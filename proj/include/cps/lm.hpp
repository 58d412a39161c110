#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cps/types.hpp"

namespace cps {

class Corpus;
class Vocab;

struct LmContext {
    TokenSeq inferred_query_tokens;
    // SID tokens generated so far; never contains the terminator.
    TokenSeq prefix_tokens;
    // Raw inferred query and an optional scope description, used only by
    // prompt-driven models.
    std::string inferred_query_text;
    std::string scope_note;
};

/// Log-probabilities over exactly the allowed set, ascending by token id.
struct TokenLogProbs {
    std::vector<std::pair<TokenId, double>> entries;

    /// -inf for tokens outside the distribution.
    double at(TokenId token) const;
};

/// Log-softmax over the given logits. Throws EmptyAllowedSet when empty and
/// NonFiniteInput for NaN/inf logits.
TokenLogProbs renormalize(std::vector<std::pair<TokenId, double>> logits);

/// Next-token scorer behind constrained decoding.
class LanguageModel {
public:
    virtual ~LanguageModel() = default;

    /// Distribution over exactly `allowed` (which must be non-empty).
    virtual TokenLogProbs score_next(const LmContext& ctx, std::span<const TokenId> allowed) const = 0;
    /// Identifies the model and its parameters for reproducibility records.
    virtual std::string describe() const = 0;
};

using LmHandle = std::shared_ptr<const LanguageModel>;

/// Every allowed token equally likely.
class UniformModel final : public LanguageModel {
public:
    TokenLogProbs score_next(const LmContext& ctx, std::span<const TokenId> allowed) const override;
    std::string describe() const override { return "uniform"; }
};

struct BigramParams {
    double alpha = 0.1;
    double beta = 2.0;
};

/// Query-conditioned bigram model over SID token sequences. The first token
/// of a SID is scored as a transition out of the terminator, and the last
/// token transitions into it.
///
///   score(t | prev, q) = log((n(prev,t) + alpha) / (n(prev) + alpha * V)) + beta * [t in q]
///
/// Scores are renormalized over the allowed set.
class BigramModel final : public LanguageModel {
public:
    /// Throws EmptyCorpus when the corpus has no SIDs.
    static BigramModel train(const Corpus& corpus, const Vocab& vocab, const BigramParams& params = {});

    TokenLogProbs score_next(const LmContext& ctx, std::span<const TokenId> allowed) const override;
    std::string describe() const override;

    /// Unnormalized score before masking.
    double raw_score(TokenId prev, TokenId token, std::span<const TokenId> query_tokens) const;
    std::uint32_t pair_count(TokenId prev, TokenId token) const;
    std::uint32_t prev_count(TokenId prev) const;
    const BigramParams& params() const { return params_; }

private:
    static std::uint64_t key(TokenId prev, TokenId token) { return (std::uint64_t{prev} << 32) | token; }

    BigramParams params_;
    std::size_t vocab_size_ = 0;
    std::string digest_;
    std::unordered_map<std::uint64_t, std::uint32_t> pairs_;
    std::vector<std::uint32_t> prev_totals_;
};

}  // namespace cps
