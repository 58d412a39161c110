#include "cps/ttr.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <regex>

#include <spdlog/spdlog.h>

#include "cps/corpus.hpp"
#include "cps/error.hpp"
#include "cps/io.hpp"
#include "cps/remote.hpp"
#include "cps/tokenizer.hpp"

namespace cps {

namespace {

double clamp_unit(double v) {
    if (std::isnan(v)) {
        return 0.0;
    }
    return std::clamp(v, 0.0, 1.0);
}

void check_batch(const RerankBatch& batch) {
    if (batch.products.empty()) {
        throw Error(ErrorCode::EmptyBatch, "nothing to rerank");
    }
    for (const auto& p : batch.products) {
        if (p.sids.empty()) {
            throw Error(ErrorCode::InvalidParameters, "product '" + p.product_id + "' has no SIDs to rerank");
        }
    }
}

std::vector<const SidCandidate*> flatten(const RerankBatch& batch) {
    std::vector<const SidCandidate*> flat;
    flat.reserve(batch.num_sids());
    for (const auto& p : batch.products) {
        for (const auto& s : p.sids) {
            flat.push_back(&s);
        }
    }
    return flat;
}

std::vector<RankedProduct> score_and_rank(const RerankBatch& batch, std::span<const double> confidences,
                                          bool ttr_enabled) {
    const auto flat = flatten(batch);
    std::vector<double> raw(flat.size());
    std::transform(flat.begin(), flat.end(), raw.begin(), [](const SidCandidate* s) { return s->logprob; });
    const auto sigma = minmax_normalize(raw);

    std::vector<RankedProduct> ranked;
    ranked.reserve(batch.products.size());
    std::size_t k = 0;
    for (const auto& product : batch.products) {
        RankedProduct out;
        out.product_id = product.product_id;
        out.rm_raw = -std::numeric_limits<double>::infinity();
        out.rm_ttr = -1.0;
        const SidCandidate* best = nullptr;
        for (const auto& sid : product.sids) {
            const double adjusted = ttr_enabled ? sigma[k] * confidences[k] : sigma[k];
            out.rm_raw = std::max(out.rm_raw, sid.logprob);
            const bool take = best == nullptr || adjusted > out.rm_ttr ||
                              (adjusted == out.rm_ttr && (sid.logprob > best->logprob ||
                                                          (sid.logprob == best->logprob && sid.sid_id < best->sid_id)));
            if (take) {
                best = &sid;
                out.rm_ttr = adjusted;
            }
            ++k;
        }
        out.best_sid = *best;
        ranked.push_back(std::move(out));
    }
    std::sort(ranked.begin(), ranked.end(), [ttr_enabled](const RankedProduct& a, const RankedProduct& b) {
        if (ttr_enabled && a.rm_ttr != b.rm_ttr) {
            return a.rm_ttr > b.rm_ttr;
        }
        if (a.rm_raw != b.rm_raw) {
            return a.rm_raw > b.rm_raw;
        }
        return a.product_id < b.product_id;
    });
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        ranked[i].rank = static_cast<int>(i + 1);
    }
    return ranked;
}

}  // namespace

std::size_t RerankBatch::max_sids_per_product() const {
    std::size_t b = 0;
    for (const auto& p : products) {
        b = std::max(b, p.sids.size());
    }
    return b;
}

std::size_t RerankBatch::num_sids() const {
    std::size_t n = 0;
    for (const auto& p : products) {
        n += p.sids.size();
    }
    return n;
}

RerankBatch make_rerank_batch(std::string query, std::span<const ScoredSid> sids, const Corpus& corpus) {
    RerankBatch batch;
    batch.query = std::move(query);
    std::map<std::string, std::size_t> slot;
    for (const auto& s : sids) {
        auto [it, inserted] = slot.emplace(s.product_id, batch.products.size());
        if (inserted) {
            batch.products.push_back({s.product_id, {}});
        }
        batch.products[it->second].sids.push_back({s.sid_id, s.product_id, corpus.sids()[s.sid_id].text, s.logprob});
    }
    return batch;
}

EvaluatorVerdict evaluate_lexical(std::string_view sid_text, std::string_view query_text) {
    const auto sid = normalize_tokens(sid_text);
    const auto query = normalize_tokens(query_text);
    if (sid.empty() || query.empty()) {
        return {0.0, "empty side"};
    }
    std::map<std::string, int> remaining;
    for (const auto& w : query) {
        ++remaining[w];
    }
    std::size_t overlap = 0;
    for (const auto& w : sid) {
        auto it = remaining.find(w);
        if (it != remaining.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) {
        return {0.0, "no shared tokens"};
    }
    const double precision = static_cast<double>(overlap) / static_cast<double>(sid.size());
    const double recall = static_cast<double>(overlap) / static_cast<double>(query.size());
    return {2.0 * precision * recall / (precision + recall), {}};
}

EvaluatorVerdict ConstantEvaluator::evaluate(const SidCandidate&, std::string_view) const {
    return {clamp_unit(confidence_), {}};
}

std::string ConstantEvaluator::describe() const { return "constant:" + std::to_string(confidence_); }

EvaluatorVerdict OracleEvaluator::evaluate(const SidCandidate& sid, std::string_view) const {
    return {targets_.contains(sid.product_id) ? 1.0 : clamp_unit(miss_), {}};
}

RemoteJudge::RemoteJudge(std::shared_ptr<const ChatClient> client, bool strict, std::string prompt_template)
    : client_(std::move(client)), strict_(strict), prompt_(std::move(prompt_template)) {}

RemoteJudge::RemoteJudge(std::shared_ptr<const ChatClient> client, bool strict)
    : RemoteJudge(std::move(client), strict, load_prompt_asset("judge_v1.txt")) {}

std::optional<double> RemoteJudge::parse_confidence(std::string_view reply) {
    static const std::regex number(R"(^\s*([01](?:\.\d+)?|\.\d+)\s*$)");
    std::cmatch m;
    if (!std::regex_match(reply.data(), reply.data() + reply.size(), m, number)) {
        return std::nullopt;
    }
    const double v = std::stod(m[1].str());
    if (v < 0.0 || v > 1.0) {
        return std::nullopt;
    }
    return v;
}

EvaluatorVerdict RemoteJudge::evaluate(const SidCandidate& sid, std::string_view query) const {
    const auto prompt = render_template(prompt_, {{"query", std::string(query)}, {"sid", sid.text}});
    ChatClient::Options options;
    options.max_tokens = 8;
    std::string failure;
    for (int attempt = 0; attempt <= kParseRetries; ++attempt) {
        std::string reply;
        try {
            reply = client_->complete_text({{"user", prompt}}, options);
        } catch (const Error& e) {
            failure = e.what();
            break;
        }
        if (auto v = parse_confidence(reply)) {
            return {*v, reply};
        }
        failure = "unparseable judge reply '" + reply + "'";
    }
    if (strict_) {
        throw Error(ErrorCode::EvaluatorUnavailable, failure);
    }
    spdlog::warn("judge fallback to {} for sid {}: {}", kFallback, sid.sid_id, failure);
    return {kFallback, "fallback: " + failure};
}

std::string RemoteJudge::describe() const {
    return "remote-judge:" + client_->config().model + ":" + sha256_hex(prompt_).substr(0, 12) + (strict_ ? ":strict" : "");
}

std::vector<double> minmax_normalize(std::span<const double> scores) {
    if (scores.empty()) {
        throw Error(ErrorCode::EmptyInput, "nothing to normalize");
    }
    double lo = scores[0], hi = scores[0];
    for (double s : scores) {
        if (!std::isfinite(s)) {
            throw Error(ErrorCode::NonFiniteInput, "scores must be finite");
        }
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    std::vector<double> out(scores.size(), 1.0);
    if (hi == lo) {
        return out;
    }
    const double span = hi - lo;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::clamp((scores[i] - lo) / span, 0.0, 1.0);
    }
    return out;
}

std::vector<RankedProduct> rerank(const RerankBatch& batch, const Evaluator& evaluator, const RerankOptions& options) {
    check_batch(batch);
    const auto flat = flatten(batch);
    const auto n = static_cast<std::int64_t>(flat.size());
    std::vector<double> confidences(flat.size(), 1.0);
    if (options.ttr_enabled) {
        std::vector<std::exception_ptr> errors(flat.size());
        const int threads = std::max(1, options.parallelism);
#pragma omp parallel for num_threads(threads) schedule(dynamic, 1)
        for (std::int64_t i = 0; i < n; ++i) {
            try {
                confidences[i] = clamp_unit(evaluator.evaluate(*flat[i], batch.query).confidence);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
        for (const auto& e : errors) {
            if (e) {
                std::rethrow_exception(e);
            }
        }
    }
    return score_and_rank(batch, confidences, options.ttr_enabled);
}

std::vector<RankedProduct> rerank_serial(const RerankBatch& batch, const Evaluator& evaluator,
                                         const RerankOptions& options) {
    check_batch(batch);
    const auto flat = flatten(batch);
    std::vector<double> confidences(flat.size(), 1.0);
    if (options.ttr_enabled) {
        for (std::size_t i = 0; i < flat.size(); ++i) {
            confidences[i] = clamp_unit(evaluator.evaluate(*flat[i], batch.query).confidence);
        }
    }
    return score_and_rank(batch, confidences, options.ttr_enabled);
}

}  // namespace cps
