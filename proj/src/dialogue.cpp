#include "cps/dialogue.hpp"

#include <chrono>
#include <ctime>
#include <sstream>

#include <spdlog/spdlog.h>

#include "cps/corpus.hpp"
#include "cps/error.hpp"
#include "cps/fm_index.hpp"
#include "cps/io.hpp"
#include "cps/remote.hpp"
#include "cps/tokenizer.hpp"

namespace cps {

namespace {

using nlohmann::json;

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[40];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

json ranked_to_json(const RankedProduct& r) {
    return {{"rank", r.rank},
            {"product_id", r.product_id},
            {"rm_raw", r.rm_raw},
            {"rm_ttr", r.rm_ttr},
            {"best_sid", {{"sid_id", r.best_sid.sid_id}, {"text", r.best_sid.text}, {"logprob", r.best_sid.logprob}}}};
}

RankedProduct ranked_from_json(const json& j) {
    RankedProduct r;
    r.rank = j.at("rank").get<int>();
    r.product_id = j.at("product_id").get<std::string>();
    r.rm_raw = j.at("rm_raw").get<double>();
    r.rm_ttr = j.at("rm_ttr").get<double>();
    const auto& s = j.at("best_sid");
    r.best_sid = {s.at("sid_id").get<SidId>(), r.product_id, s.at("text").get<std::string>(),
                  s.at("logprob").get<double>()};
    return r;
}

}  // namespace

json to_json(const Turn& turn) {
    json results = json::array();
    for (const auto& r : turn.results) results.push_back(ranked_to_json(r));
    json j = {{"user_text", turn.user_text},
              {"ref_product_id", turn.ref_product_id ? json(*turn.ref_product_id) : json(nullptr)},
              {"inferred_query", turn.inferred_query},
              {"results", std::move(results)},
              {"timestamp", turn.timestamp}};
    return j;
}

Turn turn_from_json(const json& j) {
    Turn t;
    t.user_text = j.at("user_text").get<std::string>();
    if (j.contains("ref_product_id") && !j["ref_product_id"].is_null()) {
        t.ref_product_id = j["ref_product_id"].get<std::string>();
    }
    t.inferred_query = j.at("inferred_query").get<std::string>();
    for (const auto& r : j.at("results")) t.results.push_back(ranked_from_json(r));
    t.timestamp = j.value("timestamp", "");
    return t;
}

// --- SessionConfig ------------------------------------------------------

void SessionConfig::validate() const {
    decode.validate();
    if (rerank.parallelism < 1) {
        throw Error(ErrorCode::InvalidParameters, "parallelism must be >= 1");
    }
    if (top_k < 1) {
        throw Error(ErrorCode::InvalidParameters, "top_k must be >= 1");
    }
}

json SessionConfig::to_json() const {
    return {{"beam_width", decode.beam_width}, {"top_b", decode.top_b},         {"max_len", decode.max_len},
            {"ttr_enabled", rerank.ttr_enabled}, {"parallelism", rerank.parallelism}, {"top_k", top_k}};
}

SessionConfig SessionConfig::from_json(const json& j) {
    return SessionConfig{}.with_overrides(j);
}

SessionConfig SessionConfig::with_overrides(const json& overrides) const {
    if (overrides.is_null()) {
        return *this;
    }
    if (!overrides.is_object()) {
        throw Error(ErrorCode::InvalidOverride, "overrides must be a JSON object");
    }
    SessionConfig out = *this;
    for (const auto& [key, value] : overrides.items()) {
        int* target = nullptr;
        if (key == "ttr_enabled") {
            if (!value.is_boolean()) {
                throw Error(ErrorCode::InvalidOverride, "ttr_enabled must be a boolean");
            }
            out.rerank.ttr_enabled = value.get<bool>();
            continue;
        }
        if (key == "beam_width") target = &out.decode.beam_width;
        else if (key == "top_b") target = &out.decode.top_b;
        else if (key == "max_len") target = &out.decode.max_len;
        else if (key == "top_k") target = &out.top_k;
        else if (key == "parallelism") target = &out.rerank.parallelism;
        else throw Error(ErrorCode::InvalidOverride, "unknown override '" + key + "'");
        if (!value.is_number_integer()) {
            throw Error(ErrorCode::InvalidOverride, key + " must be an integer");
        }
        const auto v = value.get<std::int64_t>();
        if (v < -1'000'000 || v > 1'000'000) {
            throw Error(ErrorCode::InvalidOverride, key + " is out of range");
        }
        *target = static_cast<int>(v);
    }
    try {
        out.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::InvalidOverride, e.what());
    }
    return out;
}

// --- reformulation ------------------------------------------------------

std::string baseline_reformulate(std::span<const Turn> history, std::string_view current,
                                 const std::optional<std::string>& ref_caption) {
    std::string out;
    if (!history.empty()) {
        out = history.back().inferred_query;
    }
    auto append = [&out](std::string_view part) {
        if (!out.empty()) out += " | ";
        out += part;
    };
    append(current);
    if (ref_caption) {
        append("ref: " + *ref_caption);
    }
    return out;
}

RemoteReformulator::RemoteReformulator(std::shared_ptr<const ChatClient> client, bool strict,
                                       std::string prompt_template)
    : client_(std::move(client)), strict_(strict), prompt_(std::move(prompt_template)) {}

RemoteReformulator::RemoteReformulator(std::shared_ptr<const ChatClient> client, bool strict)
    : RemoteReformulator(std::move(client), strict, load_prompt_asset("reformulate_v1.txt")) {}

std::string RemoteReformulator::reformulate(std::span<const Turn> history, std::string_view current,
                                            const std::optional<std::string>& ref_caption) const {
    std::string rendered_history;
    for (std::size_t i = 0; i < history.size(); ++i) {
        rendered_history += "turn " + std::to_string(i + 1) + ": " + history[i].user_text + "\n";
    }
    if (rendered_history.empty()) rendered_history = "(none)\n";
    const auto prompt = render_template(prompt_, {{"history", rendered_history},
                                                  {"current", std::string(current)},
                                                  {"reference", ref_caption.value_or("none")}});
    std::string failure;
    try {
        auto text = client_->complete_text({{"user", prompt}}, {128, 0.0, 0});
        if (!normalize_tokens(text).empty()) {
            return text;
        }
        failure = "empty rewrite";
    } catch (const Error& e) {
        if (strict_) throw;
        failure = e.what();
    }
    if (strict_) {
        throw Error(ErrorCode::RemoteUnavailable, "reformulator: " + failure);
    }
    spdlog::warn("reformulator fallback to baseline: {}", failure);
    return baseline_reformulate(history, current, ref_caption);
}

std::string RemoteReformulator::describe() const {
    return "remote:" + client_->config().model + ":" + sha256_hex(prompt_).substr(0, 12) + (strict_ ? ":strict" : "");
}

std::string reformulate(std::span<const Turn> history, const UserInput& input, const Corpus& corpus,
                        const Reformulator& reformulator) {
    std::optional<std::string> caption;
    if (input.ref_product_id) {
        const Product* p = corpus.find_product(*input.ref_product_id);
        if (p == nullptr) {
            throw Error(ErrorCode::UnresolvedReference, "unknown reference product '" + *input.ref_product_id + "'");
        }
        caption = p->caption ? *p->caption : p->description.value_or("");
    }
    auto query = reformulator.reformulate(history, input.user_text, caption);
    if (normalize_tokens(query).empty()) {
        throw Error(ErrorCode::EmptyInput, "inferred query is empty");
    }
    return query;
}

// --- Engine -------------------------------------------------------------

Engine::Engine(std::shared_ptr<const Corpus> corpus, std::shared_ptr<const Vocab> vocab,
               std::shared_ptr<const FmIndex> index, LmHandle model, std::shared_ptr<const Evaluator> evaluator,
               std::shared_ptr<const Reformulator> reformulator, SessionConfig defaults)
    : corpus_(std::move(corpus)),
      vocab_(std::move(vocab)),
      index_(std::move(index)),
      model_(std::move(model)),
      evaluator_(std::move(evaluator)),
      reformulator_(std::move(reformulator)),
      defaults_(defaults) {
    defaults_.validate();
}

Turn Engine::run_turn(std::span<const Turn> history, const UserInput& input,
                      const std::optional<std::vector<std::string>>& candidates, const SessionConfig& config) const {
    Turn turn;
    turn.user_text = input.user_text;
    turn.ref_product_id = input.ref_product_id;
    turn.inferred_query = reformulate(history, input, *corpus_, *reformulator_);
    const auto sids =
        generate_sids(*model_, *index_, *corpus_, *vocab_, {turn.inferred_query, candidates}, config.decode);
    if (!sids.empty()) {
        auto ranked = rerank(make_rerank_batch(turn.inferred_query, sids, *corpus_), *evaluator_, config.rerank);
        if (ranked.size() > static_cast<std::size_t>(config.top_k)) {
            ranked.resize(static_cast<std::size_t>(config.top_k));
        }
        turn.results = std::move(ranked);
    }
    turn.timestamp = utc_now();
    return turn;
}

std::string Engine::describe() const {
    Digest d;
    d.field(corpus_->content_digest())
        .field(vocab_->digest())
        .field(model_->describe())
        .field(evaluator_->describe())
        .field(reformulator_->describe())
        .field(defaults_.to_json().dump());
    return d.hex();
}

// --- sessions -----------------------------------------------------------

json Session::to_json() const {
    json turns_json = json::array();
    for (const auto& t : turns) turns_json.push_back(cps::to_json(t));
    return {{"session_id", session_id}, {"config", config.to_json()}, {"turns", std::move(turns_json)}};
}

std::string Session::to_jsonl() const {
    std::string out = json{{"session_id", session_id}, {"config", config.to_json()}}.dump() + "\n";
    for (const auto& t : turns) out += cps::to_json(t).dump() + "\n";
    return out;
}

Session Session::from_jsonl(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    Session s;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            auto j = json::parse(line);
            if (line_no == 1) {
                s.session_id = j.at("session_id").get<std::string>();
                s.config = SessionConfig::from_json(j.at("config"));
            } else {
                s.turns.push_back(turn_from_json(j));
            }
        } catch (const json::exception& e) {
            throw Error(ErrorCode::MalformedRecord, std::string("session snapshot: ") + e.what(), line_no);
        }
    }
    if (s.session_id.empty()) {
        throw Error(ErrorCode::MalformedRecord, "session snapshot has no header");
    }
    return s;
}

SessionStore::SessionStore(std::shared_ptr<const Engine> engine, std::optional<std::filesystem::path> snapshot_dir)
    : engine_(std::move(engine)), snapshot_dir_(std::move(snapshot_dir)) {
    if (snapshot_dir_) {
        std::filesystem::create_directories(*snapshot_dir_);
    }
}

std::string SessionStore::create(const json& overrides) {
    auto config = engine_->defaults().with_overrides(overrides);
    auto slot = std::make_shared<Slot>();
    std::unique_lock lock(mutex_);
    char id[32];
    std::snprintf(id, sizeof id, "s%06llu", static_cast<unsigned long long>(next_id_++));
    slot->session.session_id = id;
    slot->session.config = config;
    sessions_.emplace(id, slot);
    lock.unlock();
    snapshot(slot->session);
    return id;
}

std::shared_ptr<SessionStore::Slot> SessionStore::find(const std::string& session_id) const {
    std::shared_lock lock(mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) {
        throw Error(ErrorCode::SessionNotFound, "unknown session '" + session_id + "'");
    }
    return it->second;
}

Turn SessionStore::post_turn(const std::string& session_id, const UserInput& input,
                             const std::optional<std::vector<std::string>>& candidates, std::size_t* turn_index) {
    auto slot = find(session_id);
    std::lock_guard lock(slot->mutex);
    auto turn = engine_->run_turn(slot->session.turns, input, candidates, slot->session.config);
    slot->session.turns.push_back(turn);
    if (turn_index) *turn_index = slot->session.turns.size() - 1;
    snapshot(slot->session);
    return turn;
}

Session SessionStore::get(const std::string& session_id) const {
    auto slot = find(session_id);
    std::lock_guard lock(slot->mutex);
    return slot->session;
}

std::size_t SessionStore::size() const {
    std::shared_lock lock(mutex_);
    return sessions_.size();
}

void SessionStore::snapshot(const Session& session) const {
    if (!snapshot_dir_) return;
    try {
        write_file_atomic(*snapshot_dir_ / (session.session_id + ".jsonl"), session.to_jsonl());
    } catch (const std::exception& e) {
        spdlog::warn("snapshot of {} failed: {}", session.session_id, e.what());
    }
}

}  // namespace cps
