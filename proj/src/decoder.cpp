#include "cps/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "cps/corpus.hpp"
#include "cps/error.hpp"
#include "cps/tokenizer.hpp"

namespace cps {

namespace {

struct Hypothesis {
    Interval interval;
    TokenSeq tokens;
    std::vector<double> steps;
    double logprob = 0.0;
};

bool better(const Hypothesis& a, const Hypothesis& b) {
    if (a.logprob != b.logprob) {
        return a.logprob > b.logprob;
    }
    return a.tokens < b.tokens;
}

}  // namespace

void DecodeConfig::validate() const {
    if (beam_width < 1) {
        throw Error(ErrorCode::InvalidParameters, "beam_width must be >= 1");
    }
    if (top_b < 1 || top_b > beam_width) {
        throw Error(ErrorCode::InvalidParameters, "top_b must be in [1, beam_width]");
    }
    if (max_len < 1) {
        throw Error(ErrorCode::InvalidParameters, "max_len must be >= 1");
    }
}

double sid_logprob(std::span<const double> step_logprobs) {
    double sum = 0.0;
    for (double lp : step_logprobs) {
        if (!std::isfinite(lp) || lp > 0.0) {
            throw Error(ErrorCode::NonFiniteInput, "step log-probability must be finite and <= 0");
        }
        sum += lp;
    }
    return sum;
}

bool ranks_before(const ScoredSid& a, const ScoredSid& b) {
    if (a.logprob != b.logprob) {
        return a.logprob > b.logprob;
    }
    if (a.token_ids != b.token_ids) {
        return a.token_ids < b.token_ids;
    }
    return a.sid_id < b.sid_id;
}

std::map<std::string, std::vector<ScoredSid>> group_by_product(std::span<const ScoredSid> sids, int top_b) {
    std::map<std::string, std::vector<ScoredSid>> groups;
    for (const auto& sid : sids) {
        groups[sid.product_id].push_back(sid);
    }
    for (auto& [product, group] : groups) {
        std::sort(group.begin(), group.end(), [](const ScoredSid& a, const ScoredSid& b) {
            return a.logprob != b.logprob ? a.logprob > b.logprob : a.sid_id < b.sid_id;
        });
        if (group.size() > static_cast<std::size_t>(std::max(top_b, 0))) {
            group.resize(static_cast<std::size_t>(std::max(top_b, 0)));
        }
    }
    return groups;
}

FmIndex build_scoped_index(const Corpus& corpus, const Vocab& vocab, std::span<const std::string> candidates,
                           const FmIndexParams& params) {
    if (candidates.empty()) {
        throw Error(ErrorCode::EmptyScope, "candidate scope is empty");
    }
    std::vector<SidId> ids;
    for (const auto& product_id : candidates) {
        if (corpus.find_product(product_id) == nullptr) {
            throw Error(ErrorCode::ProductNotFound, "candidate '" + product_id + "' is not in the corpus");
        }
        auto owned = corpus.sids_of(product_id);
        ids.insert(ids.end(), owned.begin(), owned.end());
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.empty()) {
        throw Error(ErrorCode::EmptyScope, "candidate products own no SIDs");
    }
    std::vector<SidRecord> scoped;
    scoped.reserve(ids.size());
    for (SidId id : ids) {
        scoped.push_back(corpus.sids()[id]);
    }
    return FmIndex::build(scoped, vocab, params);
}

std::vector<ScoredSid> beam_search(const LanguageModel& model, const FmIndex& index, const Corpus& corpus,
                                   const Vocab& vocab, std::string_view inferred_query, const DecodeConfig& config,
                                   std::string_view scope_note) {
    config.validate();
    if (index.vocab_digest() != vocab.digest() || corpus.vocab_digest() != vocab.digest()) {
        throw Error(ErrorCode::VocabMismatch, "index, corpus and vocabulary were not built together");
    }
    LmContext ctx;
    ctx.inferred_query_tokens = vocab.encode(inferred_query);
    ctx.inferred_query_text = std::string(inferred_query);
    ctx.scope_note = std::string(scope_note);

    const auto beam_width = static_cast<std::size_t>(config.beam_width);
    const auto max_len = static_cast<std::size_t>(config.max_len);
    std::vector<Hypothesis> live(1);
    live[0].interval = index.root_interval();
    std::vector<Hypothesis> finished;

    while (!live.empty()) {
        std::vector<Hypothesis> next;
        for (const auto& hyp : live) {
            auto conts = index.continuations(hyp.interval);
            std::vector<TokenId> allowed;
            allowed.reserve(conts.size());
            for (const auto& c : conts) {
                allowed.push_back(c.first);
            }
            ctx.prefix_tokens = hyp.tokens;
            const auto dist = model.score_next(ctx, allowed);
            for (const auto& [token, interval] : conts) {
                const double lp = dist.at(token);
                if (token != kEndSid && hyp.tokens.size() >= max_len) {
                    continue;
                }
                Hypothesis ext = hyp;
                ext.interval = interval;
                ext.steps.push_back(lp);
                ext.logprob = hyp.logprob + lp;
                if (token == kEndSid) {
                    finished.push_back(std::move(ext));
                } else {
                    ext.tokens.push_back(token);
                    next.push_back(std::move(ext));
                }
            }
        }
        std::sort(next.begin(), next.end(), better);
        if (next.size() > beam_width) {
            next.resize(beam_width);
        }
        live = std::move(next);
    }

    const auto sid_records = corpus.sids();
    std::vector<ScoredSid> emitted;
    for (const auto& hyp : finished) {
        for (SidId id : index.locate(hyp.interval)) {
            ScoredSid sid;
            sid.sid_id = id;
            sid.product_id = sid_records[id].product_id;
            sid.token_ids = hyp.tokens;
            sid.step_logprobs = hyp.steps;
            sid.logprob = sid_logprob(hyp.steps);
            emitted.push_back(std::move(sid));
        }
    }
    std::vector<ScoredSid> out;
    for (auto& [product, group] : group_by_product(emitted, config.top_b)) {
        for (auto& sid : group) {
            out.push_back(std::move(sid));
        }
    }
    std::sort(out.begin(), out.end(), ranks_before);
    return out;
}

std::vector<ScoredSid> generate_sids(const LanguageModel& model, const FmIndex& index, const Corpus& corpus,
                                     const Vocab& vocab, const RetrievalRequest& request, const DecodeConfig& config) {
    config.validate();
    if (index.vocab_digest() != vocab.digest()) {
        throw Error(ErrorCode::VocabMismatch, "index was built under a different vocabulary");
    }
    if (!request.candidates) {
        return beam_search(model, index, corpus, vocab, request.inferred_query, config);
    }
    auto scoped = build_scoped_index(corpus, vocab, *request.candidates, index.params());
    return beam_search(model, scoped, corpus, vocab, request.inferred_query, config,
                       std::to_string(request.candidates->size()) + " candidate products");
}

}  // namespace cps
