#pragma once

#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cps/decoder.hpp"
#include "cps/types.hpp"

namespace cps {

class ChatClient;
class Corpus;

struct EvaluatorVerdict {
    double confidence = 0.0;  // clamped to [0, 1]
    std::string rationale;
};

struct SidCandidate {
    SidId sid_id = 0;
    std::string product_id;
    std::string text;
    double logprob = 0.0;
};

struct ProductCandidates {
    std::string product_id;
    std::vector<SidCandidate> sids;
};

/// A products x SIDs batch for one inferred query: A products, at most B
/// SIDs each.
struct RerankBatch {
    std::string query;
    std::vector<ProductCandidates> products;

    std::size_t num_products() const { return products.size(); }
    std::size_t max_sids_per_product() const;
    std::size_t num_sids() const;
};

/// Builds a batch from decoder output; SID texts come from the corpus.
RerankBatch make_rerank_batch(std::string query, std::span<const ScoredSid> sids, const Corpus& corpus);

/// Judges how well a SID matches the inferred query. Implementations must be
/// safe to call concurrently.
class Evaluator {
public:
    virtual ~Evaluator() = default;
    virtual EvaluatorVerdict evaluate(const SidCandidate& sid, std::string_view query) const = 0;
    virtual std::string describe() const = 0;
};

/// Token-level F1 between the normalized token multisets of the two texts;
/// 0 when either side is empty.
EvaluatorVerdict evaluate_lexical(std::string_view sid_text, std::string_view query_text);

class LexicalEvaluator final : public Evaluator {
public:
    EvaluatorVerdict evaluate(const SidCandidate& sid, std::string_view query) const override {
        return evaluate_lexical(sid.text, query);
    }
    std::string describe() const override { return "lexical-f1"; }
};

class ConstantEvaluator final : public Evaluator {
public:
    explicit ConstantEvaluator(double confidence) : confidence_(confidence) {}
    EvaluatorVerdict evaluate(const SidCandidate&, std::string_view) const override;
    std::string describe() const override;

private:
    double confidence_;
};

/// Full confidence for SIDs of the target products, `miss` for the rest.
class OracleEvaluator final : public Evaluator {
public:
    explicit OracleEvaluator(std::set<std::string> targets, double miss = 0.01)
        : targets_(std::move(targets)), miss_(miss) {}
    EvaluatorVerdict evaluate(const SidCandidate& sid, std::string_view) const override;
    std::string describe() const override { return "oracle"; }

private:
    std::set<std::string> targets_;
    double miss_;
};

/// LLM judge over the chat-completions transport. Replies that do not parse
/// as a number in [0, 1] are retried twice; after that, and on transport
/// failure, the verdict falls back to 0.5 with a warning, or raises
/// EvaluatorUnavailable in strict mode.
class RemoteJudge final : public Evaluator {
public:
    static constexpr double kFallback = 0.5;
    static constexpr int kParseRetries = 2;

    RemoteJudge(std::shared_ptr<const ChatClient> client, bool strict, std::string prompt_template);
    RemoteJudge(std::shared_ptr<const ChatClient> client, bool strict);

    EvaluatorVerdict evaluate(const SidCandidate& sid, std::string_view query) const override;
    std::string describe() const override;

    static std::optional<double> parse_confidence(std::string_view reply);

private:
    std::shared_ptr<const ChatClient> client_;
    bool strict_;
    std::string prompt_;
};

/// (s - min) / (max - min); all 1.0 when max == min. Throws EmptyInput and
/// NonFiniteInput.
std::vector<double> minmax_normalize(std::span<const double> scores);

struct RankedProduct {
    std::string product_id;
    SidCandidate best_sid;
    double rm_raw = 0.0;  // max raw log-probability over the product's SIDs
    double rm_ttr = 0.0;  // max normalized-and-weighted score, in [0, 1]
    int rank = 0;         // 1-based
};

struct RerankOptions {
    bool ttr_enabled = true;
    // Concurrent evaluator calls within one batch.
    int parallelism = 8;
};

/// Test-time reranking. With TTR on, every SID log-probability in the batch
/// is min-max normalized jointly, multiplied by the evaluator confidence,
/// and each product scores the maximum of its SIDs. With TTR off no
/// evaluator is consulted: products score their maximum raw log-probability
/// and rm_ttr reports the normalized score alone. Ranking is by score, then
/// rm_raw, then product_id. Evaluator calls run on an OpenMP team of
/// `parallelism` threads; the result does not depend on completion order.
std::vector<RankedProduct> rerank(const RerankBatch& batch, const Evaluator& evaluator, const RerankOptions& options);

/// Single-threaded reference for rerank.
std::vector<RankedProduct> rerank_serial(const RerankBatch& batch, const Evaluator& evaluator,
                                         const RerankOptions& options);

}  // namespace cps
