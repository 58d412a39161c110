#include "cps/eval.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <istream>
#include <set>

#include "cps/corpus.hpp"
#include "cps/error.hpp"
#include "cps/io.hpp"
#include "cps/rng.hpp"

namespace cps {

using nlohmann::json;

SeededRng SeededRng::from_material(std::string_view material) {
    const auto hex = sha256_hex(material);
    return SeededRng(std::stoull(hex.substr(0, 16), nullptr, 16));
}

// --- dataset ------------------------------------------------------------

namespace {

json turn_json(const EvalTurn& t) {
    json j = {{"user_text", t.user_text}, {"target_product_id", t.target_product_id}};
    if (t.ref_product_id) j["ref_product_id"] = *t.ref_product_id;
    if (t.candidate_ids) j["candidate_ids"] = *t.candidate_ids;
    return j;
}

EvalTurn turn_of(const json& j) {
    EvalTurn t;
    t.user_text = j.at("user_text").get<std::string>();
    t.target_product_id = j.at("target_product_id").get<std::string>();
    if (j.contains("ref_product_id") && !j["ref_product_id"].is_null()) {
        t.ref_product_id = j["ref_product_id"].get<std::string>();
    }
    if (j.contains("candidate_ids") && !j["candidate_ids"].is_null()) {
        t.candidate_ids = j["candidate_ids"].get<std::vector<std::string>>();
    }
    return t;
}

}  // namespace

std::vector<EvalDialogue> parse_dataset(std::istream& in) {
    std::vector<EvalDialogue> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto j = json::parse(line);
            EvalDialogue d;
            d.dialogue_id = j.at("dialogue_id").get<std::string>();
            for (const auto& t : j.at("turns")) d.turns.push_back(turn_of(t));
            if (d.turns.empty()) {
                throw Error(ErrorCode::MalformedRecord, "dialogue '" + d.dialogue_id + "' has no turns", line_no);
            }
            out.push_back(std::move(d));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::MalformedRecord, std::string("dataset: ") + e.what(), line_no);
        }
    }
    return out;
}

std::string serialize_dataset(std::span<const EvalDialogue> dataset) {
    std::string out;
    for (const auto& d : dataset) {
        json turns = json::array();
        for (const auto& t : d.turns) turns.push_back(turn_json(t));
        out += json{{"dialogue_id", d.dialogue_id}, {"turns", std::move(turns)}}.dump() + "\n";
    }
    return out;
}

void check_dataset(std::span<const EvalDialogue> dataset, const Corpus& corpus) {
    auto require = [&](const std::string& id, const EvalDialogue& d, const char* what) {
        if (corpus.find_product(id) == nullptr) {
            throw Error(ErrorCode::DatasetCorpusMismatch,
                        "dialogue '" + d.dialogue_id + "': " + what + " '" + id + "' is not in the corpus");
        }
    };
    for (const auto& d : dataset) {
        for (const auto& t : d.turns) {
            require(t.target_product_id, d, "target");
            if (t.ref_product_id) require(*t.ref_product_id, d, "reference");
            if (t.candidate_ids) {
                for (const auto& c : *t.candidate_ids) require(c, d, "candidate");
                if (std::find(t.candidate_ids->begin(), t.candidate_ids->end(), t.target_product_id) ==
                    t.candidate_ids->end()) {
                    throw Error(ErrorCode::DatasetCorpusMismatch,
                                "dialogue '" + d.dialogue_id + "': candidate_ids leave out the target");
                }
            }
        }
    }
}

// --- metrics ------------------------------------------------------------

double mrr(std::optional<int> rank) {
    if (!rank) return 0.0;
    if (*rank < 1) throw Error(ErrorCode::InvalidParameters, "rank must be >= 1");
    return 1.0 / *rank;
}

double ndcg_at_k(std::optional<int> rank, int k) {
    if (k < 1) throw Error(ErrorCode::InvalidCutoff, "cutoff must be >= 1");
    if (!rank) return 0.0;
    if (*rank < 1) throw Error(ErrorCode::InvalidParameters, "rank must be >= 1");
    return *rank <= k ? 1.0 / std::log2(1.0 + *rank) : 0.0;
}

std::vector<std::string> build_candidate_set(const Corpus& corpus, const std::string& target, std::size_t n,
                                             std::uint64_t seed) {
    if (n == 0) throw Error(ErrorCode::InvalidParameters, "candidate set size must be >= 1");
    if (corpus.size() < n) {
        throw Error(ErrorCode::TooFewProducts, "corpus has " + std::to_string(corpus.size()) +
                                                   " products, candidate sets need " + std::to_string(n));
    }
    corpus.get_product(target);
    std::vector<std::string> pool;
    pool.reserve(corpus.size() - 1);
    for (const auto& p : corpus.products()) {
        if (p.product_id != target) pool.push_back(p.product_id);
    }
    std::sort(pool.begin(), pool.end());
    Digest material;
    material.field(corpus.content_digest()).field(target).field(std::to_string(n)).field(std::to_string(seed));
    auto rng = SeededRng::from_material(material.hex());
    // Partial Fisher-Yates: the first n - 1 slots become the sample.
    for (std::size_t i = 0; i + 1 < n; ++i) {
        std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    }
    pool.resize(n - 1);
    pool.push_back(target);
    std::sort(pool.begin(), pool.end());
    return pool;
}

TurnRunner engine_runner(const Engine& engine, SessionConfig base) {
    return [&engine, base](std::span<const Turn> history, const UserInput& input,
                           const std::vector<std::string>& candidates, bool ttr_enabled) {
        SessionConfig config = base;
        config.rerank.ttr_enabled = ttr_enabled;
        config.top_k = static_cast<int>(std::max<std::size_t>(candidates.size(), 1));
        return engine.run_turn(history, input, candidates, config);
    };
}

// --- report -------------------------------------------------------------

json MetricMeans::to_json() const {
    return {{"count", count}, {"mrr", mrr}, {"ndcg@1", ndcg1}, {"ndcg@5", ndcg5}, {"ndcg@10", ndcg10}};
}

MetricMeans mean_metrics(std::span<const std::optional<int>> ranks) {
    MetricMeans m;
    m.count = ranks.size();
    if (ranks.empty()) return m;
    for (const auto& r : ranks) {
        m.mrr += cps::mrr(r);
        m.ndcg1 += ndcg_at_k(r, 1);
        m.ndcg5 += ndcg_at_k(r, 5);
        m.ndcg10 += ndcg_at_k(r, 10);
    }
    const double n = static_cast<double>(ranks.size());
    m.mrr /= n;
    m.ndcg1 /= n;
    m.ndcg5 /= n;
    m.ndcg10 /= n;
    return m;
}

namespace {

json body_of(const EvalReport& r) {
    json final_turn = json::object();
    for (const auto& [mode, m] : r.final_turn) final_turn[mode] = m.to_json();
    json rows = json::array();
    for (std::size_t t = 0; t < r.per_turn.size(); ++t) {
        json row = {{"turn", t + 1}};
        for (const auto& [mode, m] : r.per_turn[t]) row[mode] = m.to_json();
        rows.push_back(std::move(row));
    }
    json dialogues = json::array();
    for (const auto& d : r.dialogues) {
        json ranks = json::object();
        for (const auto& [mode, rs] : d.ranks) {
            json arr = json::array();
            for (const auto& x : rs) arr.push_back(x ? json(*x) : json(nullptr));
            ranks[mode] = std::move(arr);
        }
        dialogues.push_back({{"dialogue_id", d.dialogue_id}, {"ranks", std::move(ranks)}});
    }
    return {{"format", "cps-eval-report"},
            {"version", 1},
            {"metadata", r.metadata},
            {"final_turn", std::move(final_turn)},
            {"per_turn", {{"length", r.uniform_length}, {"dialogues", r.uniform_dialogues}, {"turns", std::move(rows)}}},
            {"dialogues", std::move(dialogues)}};
}

}  // namespace

std::string EvalReport::digest() const {
    return sha256_hex(body_of(*this).dump());
}

json EvalReport::to_json() const {
    auto j = body_of(*this);
    j["digest"] = sha256_hex(j.dump());
    return j;
}

std::string EvalReport::serialize() const {
    return to_json().dump(2) + "\n";
}

std::string EvalReport::per_turn_csv() const {
    std::string out = "turn,mode,count,mrr,ndcg@1,ndcg@5,ndcg@10\n";
    char buf[160];
    for (std::size_t t = 0; t < per_turn.size(); ++t) {
        for (const auto& [mode, m] : per_turn[t]) {
            std::snprintf(buf, sizeof buf, "%zu,%s,%zu,%.6f,%.6f,%.6f,%.6f\n", t + 1, mode.c_str(), m.count, m.mrr,
                          m.ndcg1, m.ndcg5, m.ndcg10);
            out += buf;
        }
    }
    return out;
}

// --- run ----------------------------------------------------------------

namespace {

std::vector<std::pair<std::string, bool>> modes_of(TtrModes modes) {
    switch (modes) {
        case TtrModes::Off: return {{"ttr_off", false}};
        case TtrModes::On: return {{"ttr_on", true}};
        case TtrModes::Both: break;
    }
    return {{"ttr_off", false}, {"ttr_on", true}};
}

std::optional<int> rank_of(const Turn& turn, const std::string& target) {
    for (std::size_t i = 0; i < turn.results.size(); ++i) {
        if (turn.results[i].product_id == target) return static_cast<int>(i + 1);
    }
    return std::nullopt;
}

DialogueRanks evaluate_dialogue(const EvalDialogue& d, const Corpus& corpus, const TurnRunner& runner,
                                const EvalOptions& options) {
    DialogueRanks out{d.dialogue_id, {}};
    std::map<std::string, std::vector<std::string>> sets;  // by target
    auto candidates_for = [&](const EvalTurn& t) -> const std::vector<std::string>& {
        auto it = sets.find(t.target_product_id);
        if (it == sets.end()) {
            it = sets.emplace(t.target_product_id,
                              build_candidate_set(corpus, t.target_product_id, options.num_candidates, options.seed))
                     .first;
        }
        return it->second;
    };
    candidates_for(d.turns.back());
    for (const auto& [mode, ttr] : modes_of(options.modes)) {
        std::vector<Turn> history;
        auto& ranks = out.ranks[mode];
        for (const auto& t : d.turns) {
            const auto& cands = t.candidate_ids ? *t.candidate_ids : candidates_for(t);
            auto turn = runner(history, {t.user_text, t.ref_product_id}, cands, ttr);
            ranks.push_back(rank_of(turn, t.target_product_id));
            history.push_back(std::move(turn));
        }
    }
    return out;
}

std::size_t pick_uniform_length(std::span<const EvalDialogue> dataset, const EvalOptions& options) {
    if (options.uniform_length) return *options.uniform_length;
    std::map<std::size_t, std::size_t> counts;
    for (const auto& d : dataset) ++counts[d.turns.size()];
    std::size_t best = 0, best_count = 0;
    for (const auto& [len, c] : counts) {
        if (c >= best_count) {
            best = len;
            best_count = c;
        }
    }
    return best;
}

EvalReport aggregate(std::span<const EvalDialogue> dataset, const Corpus& corpus, std::vector<DialogueRanks> ranks,
                     const EvalOptions& options) {
    EvalReport report;
    const auto modes = modes_of(options.modes);
    report.uniform_length = pick_uniform_length(dataset, options);
    report.per_turn.resize(report.uniform_length);
    for (const auto& [mode, ttr] : modes) {
        std::vector<std::optional<int>> finals;
        std::vector<std::vector<std::optional<int>>> by_turn(report.uniform_length);
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            const auto& rs = ranks[i].ranks.at(mode);
            finals.push_back(rs.back());
            if (rs.size() == report.uniform_length) {
                for (std::size_t t = 0; t < rs.size(); ++t) by_turn[t].push_back(rs[t]);
            }
        }
        report.final_turn[mode] = mean_metrics(finals);
        for (std::size_t t = 0; t < report.uniform_length; ++t) {
            report.per_turn[t][mode] = mean_metrics(by_turn[t]);
        }
    }
    report.uniform_dialogues = std::count_if(dataset.begin(), dataset.end(), [&](const EvalDialogue& d) {
        return d.turns.size() == report.uniform_length;
    });
    json mode_names = json::array();
    for (const auto& m : modes) mode_names.push_back(m.first);
    report.metadata = {{"seed", options.seed},
                       {"num_candidates", options.num_candidates},
                       {"candidate_sets", "per-dialogue"},
                       {"modes", std::move(mode_names)},
                       {"ttr_enabled", options.modes != TtrModes::Off},
                       {"config_digest", options.config_digest},
                       {"corpus_digest", corpus.content_digest()},
                       {"dataset_digest", sha256_hex(serialize_dataset(dataset))},
                       {"dialogues", dataset.size()}};
    report.dialogues = std::move(ranks);
    return report;
}

void check_inputs(std::span<const EvalDialogue> dataset, const Corpus& corpus, const EvalOptions& options) {
    if (dataset.empty()) throw Error(ErrorCode::EmptyInput, "dataset has no dialogues");
    check_dataset(dataset, corpus);
    if (corpus.size() < options.num_candidates) {
        throw Error(ErrorCode::TooFewProducts, "corpus has " + std::to_string(corpus.size()) +
                                                   " products, candidate sets need " +
                                                   std::to_string(options.num_candidates));
    }
    if (options.parallelism < 1) throw Error(ErrorCode::InvalidParameters, "parallelism must be >= 1");
}

}  // namespace

EvalReport run_eval_serial(std::span<const EvalDialogue> dataset, const Corpus& corpus, const TurnRunner& runner,
                           const EvalOptions& options) {
    check_inputs(dataset, corpus, options);
    std::vector<DialogueRanks> ranks;
    ranks.reserve(dataset.size());
    for (const auto& d : dataset) ranks.push_back(evaluate_dialogue(d, corpus, runner, options));
    return aggregate(dataset, corpus, std::move(ranks), options);
}

EvalReport run_eval(std::span<const EvalDialogue> dataset, const Corpus& corpus, const TurnRunner& runner,
                    const EvalOptions& options) {
    check_inputs(dataset, corpus, options);
    const auto n = static_cast<std::ptrdiff_t>(dataset.size());
    std::vector<DialogueRanks> ranks(dataset.size());
    std::vector<std::exception_ptr> errors(dataset.size());
#pragma omp parallel for schedule(dynamic) num_threads(options.parallelism)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            ranks[i] = evaluate_dialogue(dataset[i], corpus, runner, options);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return aggregate(dataset, corpus, std::move(ranks), options);
}

}  // namespace cps
