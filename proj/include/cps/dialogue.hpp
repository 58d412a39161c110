#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cps/decoder.hpp"
#include "cps/ttr.hpp"

namespace cps {

class ChatClient;
class Corpus;
class FmIndex;
class Vocab;

/// One user turn. `ref_product_id` stands in for an image the user points
/// at; it is resolved to that product's caption.
struct UserInput {
    std::string user_text;
    std::optional<std::string> ref_product_id;
};

struct Turn {
    std::string user_text;
    std::optional<std::string> ref_product_id;
    std::string inferred_query;
    std::vector<RankedProduct> results;
    std::string timestamp;  // UTC, ISO 8601
};

nlohmann::json to_json(const Turn& turn);
Turn turn_from_json(const nlohmann::json& j);

/// Per-session settings, frozen when the session is created.
struct SessionConfig {
    DecodeConfig decode;
    RerankOptions rerank;
    int top_k = 10;

    /// Throws InvalidParameters.
    void validate() const;
    nlohmann::json to_json() const;
    static SessionConfig from_json(const nlohmann::json& j);
    /// Applies a flat object of overrides (ttr_enabled, beam_width, top_b,
    /// max_len, top_k, parallelism). Unknown keys, wrong types and values
    /// that break the config invariants throw InvalidOverride.
    SessionConfig with_overrides(const nlohmann::json& overrides) const;
};

/// Turns the dialogue so far plus the current input into one standalone
/// query. `ref_caption` is the resolved caption of the referenced product.
class Reformulator {
public:
    virtual ~Reformulator() = default;
    virtual std::string reformulate(std::span<const Turn> history, std::string_view current,
                                    const std::optional<std::string>& ref_caption) const = 0;
    virtual std::string describe() const = 0;
};

/// Deterministic template: the previous inferred query (which already
/// carries the earlier turns), " | ", the current text, and
/// " | ref: <caption>" when a product is referenced.
std::string baseline_reformulate(std::span<const Turn> history, std::string_view current,
                                 const std::optional<std::string>& ref_caption);

class BaselineReformulator final : public Reformulator {
public:
    std::string reformulate(std::span<const Turn> history, std::string_view current,
                            const std::optional<std::string>& ref_caption) const override {
        return baseline_reformulate(history, current, ref_caption);
    }
    std::string describe() const override { return "baseline"; }
};

/// Asks the chat model for the rewrite. Failures fall back to the baseline
/// with a warning, or throw RemoteUnavailable in strict mode.
class RemoteReformulator final : public Reformulator {
public:
    RemoteReformulator(std::shared_ptr<const ChatClient> client, bool strict, std::string prompt_template);
    RemoteReformulator(std::shared_ptr<const ChatClient> client, bool strict);

    std::string reformulate(std::span<const Turn> history, std::string_view current,
                            const std::optional<std::string>& ref_caption) const override;
    std::string describe() const override;

private:
    std::shared_ptr<const ChatClient> client_;
    bool strict_;
    std::string prompt_;
};

/// Resolves the reference and runs the reformulator. Throws
/// UnresolvedReference for unknown products and EmptyInput when the result
/// has no tokens.
std::string reformulate(std::span<const Turn> history, const UserInput& input, const Corpus& corpus,
                        const Reformulator& reformulator);

/// Read-only retrieval pipeline shared by every session.
class Engine {
public:
    Engine(std::shared_ptr<const Corpus> corpus, std::shared_ptr<const Vocab> vocab,
           std::shared_ptr<const FmIndex> index, LmHandle model, std::shared_ptr<const Evaluator> evaluator,
           std::shared_ptr<const Reformulator> reformulator, SessionConfig defaults = {});

    /// reformulate -> generate_sids -> rerank -> top-K. Pure apart from the
    /// timestamp; safe to call concurrently.
    Turn run_turn(std::span<const Turn> history, const UserInput& input,
                  const std::optional<std::vector<std::string>>& candidates, const SessionConfig& config) const;

    const Corpus& corpus() const { return *corpus_; }
    const Vocab& vocab() const { return *vocab_; }
    const FmIndex& index() const { return *index_; }
    const LanguageModel& model() const { return *model_; }
    const Evaluator& evaluator() const { return *evaluator_; }
    const Reformulator& reformulator() const { return *reformulator_; }
    const SessionConfig& defaults() const { return defaults_; }

    /// Identifies corpus, vocabulary, model, evaluator, reformulator and
    /// defaults.
    std::string describe() const;

private:
    std::shared_ptr<const Corpus> corpus_;
    std::shared_ptr<const Vocab> vocab_;
    std::shared_ptr<const FmIndex> index_;
    LmHandle model_;
    std::shared_ptr<const Evaluator> evaluator_;
    std::shared_ptr<const Reformulator> reformulator_;
    SessionConfig defaults_;
};

struct Session {
    std::string session_id;
    SessionConfig config;
    std::vector<Turn> turns;

    nlohmann::json to_json() const;
    /// Header line with id and config, then one turn per line.
    std::string to_jsonl() const;
    static Session from_jsonl(std::string_view text);
};

/// In-memory sessions. Turns within a session are serialized; distinct
/// sessions run concurrently. A failed turn leaves the session unchanged.
class SessionStore {
public:
    explicit SessionStore(std::shared_ptr<const Engine> engine,
                          std::optional<std::filesystem::path> snapshot_dir = std::nullopt);

    /// Throws InvalidOverride.
    std::string create(const nlohmann::json& overrides = nlohmann::json::object());
    /// Throws SessionNotFound, plus anything the pipeline throws.
    /// `turn_index`, when given, receives the 0-based position of the turn.
    Turn post_turn(const std::string& session_id, const UserInput& input,
                   const std::optional<std::vector<std::string>>& candidates = std::nullopt,
                   std::size_t* turn_index = nullptr);
    /// Copy of the session; throws SessionNotFound.
    Session get(const std::string& session_id) const;
    std::size_t size() const;

    const Engine& engine() const { return *engine_; }

private:
    struct Slot {
        std::mutex mutex;
        Session session;
    };
    std::shared_ptr<Slot> find(const std::string& session_id) const;
    void snapshot(const Session& session) const;

    std::shared_ptr<const Engine> engine_;
    std::optional<std::filesystem::path> snapshot_dir_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<Slot>> sessions_;
    std::uint64_t next_id_ = 1;
};

}  // namespace cps
