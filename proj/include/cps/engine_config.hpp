#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>

#include "cps/dialogue.hpp"
#include "cps/lm.hpp"
#include "cps/remote.hpp"

namespace cps {

class Corpus;
class FmIndex;
class Vocab;

struct EngineConfig {
    std::string corpus_path;
    // Directory written by `index build`; empty builds the index in memory.
    std::string index_path;
    SessionConfig session;
    std::string lm = "bigram";              // bigram | uniform | remote
    BigramParams bigram;
    std::string evaluator = "lexical";      // lexical | remote | constant
    std::string reformulator = "baseline";  // baseline | remote
    // Remote failures raise instead of falling back.
    bool strict = false;
    RemoteConfig remote;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string snapshot_dir;

    /// Nested object mirroring the fields; absent keys keep their defaults,
    /// unknown keys throw InvalidConfig.
    static EngineConfig from_json(const nlohmann::json& j);
    /// Reads a JSON config file, then applies environment overrides.
    static EngineConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
    /// Remote credentials from CPS_LLM_* variables.
    void apply_env();
    /// Throws InvalidConfig for missing paths, unknown kinds or bad values.
    void validate() const;
    /// Digest of the settings that affect rankings.
    std::string digest() const;
};

struct IndexBundle {
    std::shared_ptr<const Corpus> corpus;
    std::shared_ptr<const Vocab> vocab;
    std::shared_ptr<const FmIndex> index;
};

/// Strict ingest, vocabulary and index over the corpus file.
IndexBundle build_bundle(const std::filesystem::path& corpus_path);

/// Writes vocab.jsonl, sids.jsonl, index.fm and manifest.json into `dir`,
/// each atomically.
void write_index_dir(const IndexBundle& bundle, const std::filesystem::path& dir);

/// Loads the corpus and the index files built from it. Throws CorruptIndex
/// when the index was built from a different corpus.
IndexBundle load_bundle(const std::filesystem::path& corpus_path, const std::filesystem::path& index_dir);

/// Corpus, index and the model/evaluator/reformulator the config names.
std::shared_ptr<const Engine> build_engine(const EngineConfig& config);
std::shared_ptr<const Engine> build_engine(const EngineConfig& config, IndexBundle bundle);

}  // namespace cps
