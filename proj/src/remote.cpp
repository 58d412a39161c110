#include "cps/remote.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "cps/error.hpp"
#include "cps/io.hpp"
#include "cps/tokenizer.hpp"

namespace cps {

namespace {

std::string trim_copy(std::string s) {
    auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) {
        return {};
    }
    auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

void RemoteConfig::apply_env() {
    if (const char* v = std::getenv("CPS_LLM_BASE_URL")) base_url = v;
    if (const char* v = std::getenv("CPS_LLM_MODEL")) model = v;
    if (const char* v = std::getenv("CPS_LLM_API_KEY")) api_key = v;
    if (const char* v = std::getenv("CPS_LLM_TIMEOUT_MS")) timeout_ms = std::atoi(v);
}

nlohmann::json RemoteConfig::to_json(bool include_secret) const {
    nlohmann::json j = {{"base_url", base_url},     {"model", model},         {"timeout_ms", timeout_ms},
                        {"retries", retries},       {"backoff_ms", backoff_ms}, {"max_in_flight", max_in_flight}};
    if (include_secret) {
        j["api_key"] = api_key;
    }
    return j;
}

RemoteConfig RemoteConfig::from_json(const nlohmann::json& j) {
    RemoteConfig c;
    c.base_url = j.value("base_url", c.base_url);
    c.model = j.value("model", c.model);
    c.api_key = j.value("api_key", c.api_key);
    c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
    c.retries = j.value("retries", c.retries);
    c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    return c;
}

ChatClient::ChatClient(RemoteConfig config)
    : config_(std::move(config)), in_flight_(std::clamp(config_.max_in_flight, 1, 1024)) {
    const auto& url = config_.base_url;
    auto scheme_end = url.find("://");
    auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto path_start = url.find('/', host_start);
    host_ = url.substr(0, path_start);
    path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') {
        path_prefix_.pop_back();
    }
}

nlohmann::json ChatClient::complete(const std::vector<ChatMessage>& messages, const Options& options) const {
    if (config_.base_url.empty()) {
        throw Error(ErrorCode::RemoteUnavailable, "no remote endpoint configured");
    }
    nlohmann::json body = {{"model", config_.model},
                           {"max_tokens", options.max_tokens},
                           {"temperature", options.temperature},
                           {"messages", nlohmann::json::array()}};
    for (const auto& m : messages) {
        body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    }
    if (options.top_logprobs > 0) {
        body["logprobs"] = true;
        body["top_logprobs"] = options.top_logprobs;
    }
    const std::string request_id = "cps-" + std::to_string(next_id_.fetch_add(1));
    httplib::Headers headers = {{"X-Request-Id", request_id}};
    if (!config_.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + config_.api_key);
    }
    const auto payload = body.dump();
    std::string last_error;
    const int attempts = std::max(1, config_.retries + 1);
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(config_.backoff_ms * (1 << (attempt - 1))));
        }
        in_flight_.acquire();
        httplib::Result res{nullptr, httplib::Error::Unknown};
        {
            httplib::Client client(host_);
            auto timeout = std::chrono::milliseconds(config_.timeout_ms);
            client.set_connection_timeout(timeout);
            client.set_read_timeout(timeout);
            client.set_write_timeout(timeout);
            res = client.Post(path_prefix_ + "/chat/completions", headers, payload, "application/json");
        }
        in_flight_.release();
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 200) {
            try {
                return nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::exception& e) {
                last_error = std::string("unparseable response: ") + e.what();
                continue;
            }
        }
        last_error = "HTTP " + std::to_string(res->status);
        if (!retryable_status(res->status)) {
            break;
        }
    }
    throw Error(ErrorCode::RemoteUnavailable, request_id + " " + last_error);
}

std::string ChatClient::complete_text(const std::vector<ChatMessage>& messages, const Options& options) const {
    auto response = complete(messages, options);
    try {
        return trim_copy(response.at("choices").at(0).at("message").at("content").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::RemoteUnavailable, std::string("response without message content: ") + e.what());
    }
}

std::string render_template(std::string text, const std::vector<std::pair<std::string, std::string>>& values) {
    for (const auto& [name, value] : values) {
        const std::string placeholder = "{" + name + "}";
        for (auto pos = text.find(placeholder); pos != std::string::npos;
             pos = text.find(placeholder, pos + value.size())) {
            text.replace(pos, placeholder.size(), value);
        }
    }
    return text;
}

std::string load_prompt_asset(const std::string& name) {
    const char* dir = std::getenv("CPS_ASSET_DIR");
    std::filesystem::path base = dir ? dir : CPS_ASSET_DIR;
    return read_file(base / "prompts" / name);
}

RemoteModel::RemoteModel(std::shared_ptr<const ChatClient> client, std::shared_ptr<const Vocab> vocab,
                         std::string prompt_template)
    : client_(std::move(client)), vocab_(std::move(vocab)), prompt_(std::move(prompt_template)) {}

TokenLogProbs RemoteModel::score_next(const LmContext& ctx, std::span<const TokenId> allowed) const {
    if (allowed.empty()) {
        throw Error(ErrorCode::EmptyAllowedSet, "no allowed tokens to score");
    }
    const auto prompt = render_template(prompt_, {{"query", ctx.inferred_query_text},
                                                  {"scope", ctx.scope_note.empty() ? "full catalog" : ctx.scope_note},
                                                  {"prefix", vocab_->decode(ctx.prefix_tokens)}});
    ChatClient::Options options;
    options.max_tokens = 1;
    options.top_logprobs = kTopK;
    auto response = client_->complete({{"user", prompt}}, options);

    std::map<TokenId, double> proposed;
    try {
        const auto& top = response.at("choices").at(0).at("logprobs").at("content").at(0).at("top_logprobs");
        for (const auto& entry : top) {
            const auto text = entry.at("token").get<std::string>();
            const double logprob = entry.at("logprob").get<double>();
            TokenId id = kUnk;
            const auto trimmed = trim_copy(text);
            if (trimmed == kEndSidText || (trimmed.empty() && text.find('\n') != std::string::npos)) {
                id = kEndSid;
            } else if (auto words = normalize_tokens(text); words.size() == 1) {
                id = vocab_->id_of(words[0]);
            }
            if (id == kUnk || !std::isfinite(logprob)) {
                continue;
            }
            auto [it, inserted] = proposed.emplace(id, logprob);
            if (!inserted) {
                it->second = std::max(it->second, logprob);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::RemoteUnavailable, std::string("response without top log-probs: ") + e.what());
    }

    std::vector<std::pair<TokenId, double>> logits;
    logits.reserve(allowed.size());
    for (TokenId t : allowed) {
        auto it = proposed.find(t);
        logits.emplace_back(t, it == proposed.end() ? kFloorLogProb : it->second);
    }
    return renormalize(std::move(logits));
}

std::string RemoteModel::describe() const {
    return "remote:" + client_->config().model + ":" + sha256_hex(prompt_).substr(0, 12) + "@" + vocab_->digest();
}

}  // namespace cps
