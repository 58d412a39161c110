#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <semaphore>
#include <string>
#include <vector>

#include <json.hpp>

#include "cps/lm.hpp"

namespace cps {

class Vocab;

/// Transport settings for an OpenAI-compatible chat-completions endpoint.
struct RemoteConfig {
    std::string base_url;  // e.g. "https://api.openai.com/v1"
    std::string model;
    std::string api_key;
    int timeout_ms = 30000;
    int retries = 3;
    int backoff_ms = 250;
    int max_in_flight = 8;

    /// CPS_LLM_BASE_URL, CPS_LLM_MODEL, CPS_LLM_API_KEY, CPS_LLM_TIMEOUT_MS
    /// override the fields they name.
    void apply_env();
    nlohmann::json to_json(bool include_secret = false) const;
    static RemoteConfig from_json(const nlohmann::json& j);
};

struct ChatMessage {
    std::string role;
    std::string content;
};

/// Thread-safe chat-completions client. At most `max_in_flight` requests run
/// at once; every request carries its own correlation id and each caller
/// receives the response to its own request.
class ChatClient {
public:
    explicit ChatClient(RemoteConfig config);

    struct Options {
        int max_tokens = 64;
        double temperature = 0.0;
        int top_logprobs = 0;  // 0 disables log-prob output
    };

    /// Full response body. Throws RemoteUnavailable once retries are spent.
    nlohmann::json complete(const std::vector<ChatMessage>& messages, const Options& options) const;
    /// Trimmed text of the first choice.
    std::string complete_text(const std::vector<ChatMessage>& messages, const Options& options) const;

    const RemoteConfig& config() const { return config_; }

private:
    RemoteConfig config_;
    std::string host_;
    std::string path_prefix_;
    mutable std::counting_semaphore<1024> in_flight_;
    mutable std::atomic<std::uint64_t> next_id_{1};
};

/// Fills `{name}` placeholders in a prompt template.
std::string render_template(std::string text, const std::vector<std::pair<std::string, std::string>>& values);

/// Loads a prompt asset by file name from the asset directory.
std::string load_prompt_asset(const std::string& name);

/// Remote next-token scorer in propose mode: asks for the top-20 next-token
/// log-probabilities, maps whole words onto the vocabulary, gives allowed
/// tokens missing from the response a floor of -20, and renormalizes.
class RemoteModel final : public LanguageModel {
public:
    static constexpr int kTopK = 20;
    static constexpr double kFloorLogProb = -20.0;

    RemoteModel(std::shared_ptr<const ChatClient> client, std::shared_ptr<const Vocab> vocab,
                std::string prompt_template = load_prompt_asset("retriever_v1.txt"));

    TokenLogProbs score_next(const LmContext& ctx, std::span<const TokenId> allowed) const override;
    std::string describe() const override;

private:
    std::shared_ptr<const ChatClient> client_;
    std::shared_ptr<const Vocab> vocab_;
    std::string prompt_;
};

}  // namespace cps
