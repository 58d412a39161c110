#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cps/dialogue.hpp"

namespace cps {

class Corpus;

struct EvalTurn {
    std::string user_text;
    std::optional<std::string> ref_product_id;
    std::string target_product_id;
    std::optional<std::vector<std::string>> candidate_ids;
};

struct EvalDialogue {
    std::string dialogue_id;
    std::vector<EvalTurn> turns;
};

/// One dialogue per line. Throws line-numbered MalformedRecord.
std::vector<EvalDialogue> parse_dataset(std::istream& in);
std::string serialize_dataset(std::span<const EvalDialogue> dataset);

/// Throws DatasetCorpusMismatch when a target, reference or candidate id is
/// not in the corpus, or candidate_ids leave out the target.
void check_dataset(std::span<const EvalDialogue> dataset, const Corpus& corpus);

/// 1/rank; 0 when the target was not ranked. Throws InvalidParameters for
/// rank < 1.
double mrr(std::optional<int> rank);
/// 1/log2(1 + rank) when rank <= k, else 0. Throws InvalidCutoff for k < 1.
double ndcg_at_k(std::optional<int> rank, int k);

/// The target plus n - 1 distractors drawn uniformly without replacement,
/// sorted by id. Deterministic in (corpus digest, target, n, seed). Throws
/// TooFewProducts and ProductNotFound.
std::vector<std::string> build_candidate_set(const Corpus& corpus, const std::string& target, std::size_t n,
                                             std::uint64_t seed);

/// Produces one turn given the history so far; results must be ranked
/// best-first and cover every product the ranker wants scored.
using TurnRunner = std::function<Turn(std::span<const Turn> history, const UserInput& input,
                                      const std::vector<std::string>& candidates, bool ttr_enabled)>;

/// Runs turns through the engine with `base`, ranking all candidates.
TurnRunner engine_runner(const Engine& engine, SessionConfig base);

enum class TtrModes { Off, On, Both };

struct EvalOptions {
    std::uint64_t seed = 0;
    std::size_t num_candidates = 100;
    TtrModes modes = TtrModes::Both;
    // Dialogue length for the per-turn table; defaults to the most common
    // length in the dataset (the longer one on ties).
    std::optional<std::size_t> uniform_length;
    int parallelism = 8;
    // Recorded verbatim in the report.
    std::string config_digest;
};

struct MetricMeans {
    double mrr = 0.0;
    double ndcg1 = 0.0;
    double ndcg5 = 0.0;
    double ndcg10 = 0.0;
    std::size_t count = 0;

    nlohmann::json to_json() const;
};

/// Mean of the four metrics over the given target ranks.
MetricMeans mean_metrics(std::span<const std::optional<int>> ranks);

struct DialogueRanks {
    std::string dialogue_id;
    // mode name ("ttr_off" / "ttr_on") -> target rank per turn
    std::map<std::string, std::vector<std::optional<int>>> ranks;
};

struct EvalReport {
    nlohmann::json metadata;
    std::map<std::string, MetricMeans> final_turn;
    std::size_t uniform_length = 0;
    std::size_t uniform_dialogues = 0;
    // per_turn[t][mode]
    std::vector<std::map<std::string, MetricMeans>> per_turn;
    std::vector<DialogueRanks> dialogues;

    nlohmann::json to_json() const;  // includes "digest"
    std::string digest() const;
    /// Pretty JSON with a trailing newline; byte-stable.
    std::string serialize() const;
    std::string per_turn_csv() const;
};

/// Replays every dialogue with candidate scoping, once per TTR mode, on an
/// OpenMP team of `options.parallelism` threads. Candidate sets are drawn
/// once per dialogue for the final turn's target; a turn with its own
/// candidate_ids uses those, and a turn whose target differs gets a set of
/// its own. Throws DatasetCorpusMismatch and TooFewProducts.
EvalReport run_eval(std::span<const EvalDialogue> dataset, const Corpus& corpus, const TurnRunner& runner,
                    const EvalOptions& options);

/// Single-threaded reference for run_eval.
EvalReport run_eval_serial(std::span<const EvalDialogue> dataset, const Corpus& corpus, const TurnRunner& runner,
                           const EvalOptions& options);

}  // namespace cps
