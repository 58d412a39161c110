#include "cps/engine_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "cps/corpus.hpp"
#include "cps/error.hpp"
#include "cps/fm_index.hpp"
#include "cps/io.hpp"
#include "cps/tokenizer.hpp"
#include "cps/ttr.hpp"

namespace cps {

namespace {

using nlohmann::json;

void only_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) {
        throw Error(ErrorCode::InvalidConfig, where + " must be an object");
    }
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items()) {
        if (!ok.count(key)) {
            throw Error(ErrorCode::InvalidConfig, "unknown config key '" + where + key + "'");
        }
    }
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

EngineConfig EngineConfig::from_json(const json& j) {
    EngineConfig c;
    try {
        only_keys(j, {"corpus", "index", "decode", "ttr", "top_k", "lm", "reformulator", "strict", "remote", "bind",
                      "snapshot_dir"},
                  "");
        read(j, "corpus", c.corpus_path);
        read(j, "index", c.index_path);
        if (j.contains("decode")) {
            const auto& d = j["decode"];
            only_keys(d, {"beam_width", "top_b", "max_len"}, "decode.");
            read(d, "beam_width", c.session.decode.beam_width);
            read(d, "top_b", c.session.decode.top_b);
            read(d, "max_len", c.session.decode.max_len);
        }
        if (j.contains("ttr")) {
            const auto& t = j["ttr"];
            only_keys(t, {"enabled", "evaluator", "parallelism"}, "ttr.");
            read(t, "enabled", c.session.rerank.ttr_enabled);
            read(t, "evaluator", c.evaluator);
            read(t, "parallelism", c.session.rerank.parallelism);
        }
        read(j, "top_k", c.session.top_k);
        if (j.contains("lm")) {
            const auto& l = j["lm"];
            only_keys(l, {"kind", "alpha", "beta"}, "lm.");
            read(l, "kind", c.lm);
            read(l, "alpha", c.bigram.alpha);
            read(l, "beta", c.bigram.beta);
        }
        read(j, "reformulator", c.reformulator);
        read(j, "strict", c.strict);
        if (j.contains("remote")) {
            only_keys(j["remote"],
                      {"base_url", "model", "api_key", "timeout_ms", "retries", "backoff_ms", "max_in_flight"},
                      "remote.");
            c.remote = RemoteConfig::from_json(j["remote"]);
        }
        if (j.contains("bind")) {
            only_keys(j["bind"], {"host", "port"}, "bind.");
            read(j["bind"], "host", c.host);
            read(j["bind"], "port", c.port);
        }
        read(j, "snapshot_dir", c.snapshot_dir);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("config: ") + e.what());
    }
    return c;
}

EngineConfig EngineConfig::load(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
    }
    auto c = from_json(j);
    // Relative paths are relative to the config file.
    const auto base = path.parent_path();
    for (auto* p : {&c.corpus_path, &c.index_path, &c.snapshot_dir}) {
        if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
    }
    c.apply_env();
    return c;
}

json EngineConfig::to_json() const {
    return {{"corpus", corpus_path},
            {"index", index_path},
            {"decode",
             {{"beam_width", session.decode.beam_width},
              {"top_b", session.decode.top_b},
              {"max_len", session.decode.max_len}}},
            {"ttr",
             {{"enabled", session.rerank.ttr_enabled},
              {"evaluator", evaluator},
              {"parallelism", session.rerank.parallelism}}},
            {"top_k", session.top_k},
            {"lm", {{"kind", lm}, {"alpha", bigram.alpha}, {"beta", bigram.beta}}},
            {"reformulator", reformulator},
            {"strict", strict},
            {"remote", remote.to_json(false)},
            {"bind", {{"host", host}, {"port", port}}},
            {"snapshot_dir", snapshot_dir}};
}

void EngineConfig::apply_env() {
    remote.apply_env();
}

void EngineConfig::validate() const {
    auto bad = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
    if (corpus_path.empty()) bad("corpus path is not set");
    if (!std::filesystem::exists(corpus_path)) bad("corpus '" + corpus_path + "' does not exist");
    if (!index_path.empty() && !std::filesystem::is_directory(index_path)) {
        bad("index directory '" + index_path + "' does not exist");
    }
    try {
        session.validate();
    } catch (const Error& e) {
        bad(e.what());
    }
    const std::set<std::string> lms = {"bigram", "uniform", "remote"}, evals = {"lexical", "remote", "constant"},
                                refs = {"baseline", "remote"};
    if (!lms.count(lm)) bad("unknown lm kind '" + lm + "'");
    if (!evals.count(evaluator)) bad("unknown evaluator '" + evaluator + "'");
    if (!refs.count(reformulator)) bad("unknown reformulator '" + reformulator + "'");
    const bool needs_remote = lm == "remote" || evaluator == "remote" || reformulator == "remote";
    if (needs_remote && remote.base_url.empty()) bad("remote components need remote.base_url or CPS_LLM_BASE_URL");
    if (port < 0 || port > 65535) bad("port out of range");
    if (bigram.alpha <= 0) bad("lm.alpha must be > 0");
}

std::string EngineConfig::digest() const {
    json j = {{"session", session.to_json()}, {"lm", lm},           {"alpha", bigram.alpha},
              {"beta", bigram.beta},         {"evaluator", evaluator}, {"reformulator", reformulator},
              {"strict", strict},            {"remote_model", remote.model}};
    return sha256_hex(j.dump());
}

// --- artifacts ----------------------------------------------------------

namespace {

std::shared_ptr<Corpus> read_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open corpus '" + path.string() + "'");
    return std::make_shared<Corpus>(ingest_corpus(in));
}

}  // namespace

IndexBundle build_bundle(const std::filesystem::path& corpus_path) {
    auto corpus = read_corpus(corpus_path);
    auto vocab = std::make_shared<Vocab>(build_vocab(*corpus));
    corpus->bind_vocab(*vocab);
    auto index = std::make_shared<FmIndex>(FmIndex::build(corpus->sids(), *vocab));
    return {std::move(corpus), std::move(vocab), std::move(index)};
}

void write_index_dir(const IndexBundle& bundle, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "vocab.jsonl", bundle.vocab->serialize());
    write_file_atomic(dir / "sids.jsonl", bundle.corpus->serialize_sids());
    write_file_atomic(dir / "index.fm", bundle.index->serialize());
    json manifest = {{"format", "cps-index"},
                     {"version", 1},
                     {"corpus_digest", bundle.corpus->content_digest()},
                     {"vocab_digest", bundle.vocab->digest()},
                     {"products", bundle.corpus->size()},
                     {"sids", bundle.index->sid_count()}};
    // Manifest last: its presence marks a complete directory.
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

IndexBundle load_bundle(const std::filesystem::path& corpus_path, const std::filesystem::path& index_dir) {
    auto corpus = read_corpus(corpus_path);
    json manifest;
    try {
        manifest = json::parse(read_file(index_dir / "manifest.json"));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::CorruptIndex, "index manifest: " + std::string(e.what()));
    }
    if (manifest.value("corpus_digest", "") != corpus->content_digest()) {
        throw Error(ErrorCode::CorruptIndex, "index in '" + index_dir.string() + "' was built from a different corpus");
    }
    std::istringstream vocab_in(read_file(index_dir / "vocab.jsonl"));
    auto vocab = std::make_shared<Vocab>(Vocab::load(vocab_in));
    std::istringstream sids_in(read_file(index_dir / "sids.jsonl"));
    corpus->load_sids(sids_in);
    corpus->bind_vocab(*vocab);
    auto index = std::make_shared<FmIndex>(FmIndex::deserialize(read_file(index_dir / "index.fm"), vocab->digest()));
    if (index->sid_count() != corpus->sids().size()) {
        throw Error(ErrorCode::CorruptIndex, "index and SID sidecar disagree on the SID count");
    }
    return {std::move(corpus), std::move(vocab), std::move(index)};
}

std::shared_ptr<const Engine> build_engine(const EngineConfig& config) {
    config.validate();
    auto bundle = config.index_path.empty() ? build_bundle(config.corpus_path)
                                            : load_bundle(config.corpus_path, config.index_path);
    return build_engine(config, std::move(bundle));
}

std::shared_ptr<const Engine> build_engine(const EngineConfig& config, IndexBundle bundle) {
    std::shared_ptr<const ChatClient> client;
    auto remote = [&] {
        if (!client) client = std::make_shared<ChatClient>(config.remote);
        return client;
    };
    LmHandle model;
    if (config.lm == "remote") {
        model = std::make_shared<RemoteModel>(remote(), bundle.vocab);
    } else if (config.lm == "uniform") {
        model = std::make_shared<UniformModel>();
    } else {
        model = std::make_shared<BigramModel>(BigramModel::train(*bundle.corpus, *bundle.vocab, config.bigram));
    }
    std::shared_ptr<const Evaluator> evaluator;
    if (config.evaluator == "remote") {
        evaluator = std::make_shared<RemoteJudge>(remote(), config.strict);
    } else if (config.evaluator == "constant") {
        evaluator = std::make_shared<ConstantEvaluator>(1.0);
    } else {
        evaluator = std::make_shared<LexicalEvaluator>();
    }
    std::shared_ptr<const Reformulator> reformulator;
    if (config.reformulator == "remote") {
        reformulator = std::make_shared<RemoteReformulator>(remote(), config.strict);
    } else {
        reformulator = std::make_shared<BaselineReformulator>();
    }
    return std::make_shared<Engine>(std::move(bundle.corpus), std::move(bundle.vocab), std::move(bundle.index),
                                    std::move(model), std::move(evaluator), std::move(reformulator), config.session);
}

}  // namespace cps
