#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cps/fm_index.hpp"
#include "cps/lm.hpp"

namespace cps {

class Corpus;
class Vocab;

struct DecodeConfig {
    int beam_width = 10;
    // SIDs kept per product.
    int top_b = 2;
    // Longest SID, in tokens, that decoding may emit.
    int max_len = 32;

    /// Throws InvalidParameters unless beam_width >= 1, 1 <= top_b <= beam_width
    /// and max_len >= 1.
    void validate() const;
};

/// A generated semantic ID; `logprob` is the sum of `step_logprobs`, which
/// include the terminating step.
struct ScoredSid {
    SidId sid_id = 0;
    std::string product_id;
    TokenSeq token_ids;
    std::vector<double> step_logprobs;
    double logprob = 0.0;
};

/// Sum of per-token log-probabilities. Throws NonFiniteInput for NaN/inf or
/// positive entries.
double sid_logprob(std::span<const double> step_logprobs);

/// Orders by logprob descending, then token ids lexicographically, then sid_id.
bool ranks_before(const ScoredSid& a, const ScoredSid& b);

/// Groups SIDs by product, each group best-first (ties by sid_id), truncated
/// to top_b.
std::map<std::string, std::vector<ScoredSid>> group_by_product(std::span<const ScoredSid> sids, int top_b);

/// Index over only the SIDs of the given products; sid ids are preserved.
/// Throws EmptyScope for an empty candidate list and ProductNotFound for
/// unknown ids.
FmIndex build_scoped_index(const Corpus& corpus, const Vocab& vocab, std::span<const std::string> candidates,
                           const FmIndexParams& params = {});

struct RetrievalRequest {
    std::string inferred_query;
    // Restricts decoding to these products; std::nullopt searches the
    // whole index.
    std::optional<std::vector<std::string>> candidates;
};

/// Constrained beam search over SIDs. Every step scores the index
/// continuations of each live hypothesis, keeps the beam_width best by
/// cumulative log-probability (ties by token ids), and moves hypotheses that
/// take the terminator to a finished list that does not use beam slots.
/// Output keeps top_b SIDs per product, sorted with ranks_before.
///
/// `index` must be the full-corpus index; candidate requests decode over a
/// scoped index built for the call. Throws VocabMismatch when the index,
/// vocabulary and corpus disagree.
std::vector<ScoredSid> generate_sids(const LanguageModel& model, const FmIndex& index, const Corpus& corpus,
                                     const Vocab& vocab, const RetrievalRequest& request, const DecodeConfig& config);

/// Beam search over exactly the given index.
std::vector<ScoredSid> beam_search(const LanguageModel& model, const FmIndex& index, const Corpus& corpus,
                                   const Vocab& vocab, std::string_view inferred_query, const DecodeConfig& config,
                                   std::string_view scope_note = {});

}  // namespace cps
