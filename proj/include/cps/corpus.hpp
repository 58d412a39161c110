#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cps/error.hpp"
#include "cps/types.hpp"

namespace cps {

class Vocab;

struct Product {
    std::string product_id;
    std::optional<std::string> title;
    std::optional<std::string> description;
    std::optional<std::string> caption;
    std::map<std::string, std::string> attributes;
    // Opaque locator, never dereferenced by the engine.
    std::optional<std::string> image_ref;
    // Unknown record fields, kept so that serialization round-trips.
    nlohmann::json extra = nlohmann::json::object();

    nlohmann::json to_json() const;
};

enum class SidSource { Caption, Description, Attribute };

std::string_view to_string(SidSource source) noexcept;

struct SidRecord {
    SidId sid_id = 0;
    std::string product_id;
    SidSource source_field = SidSource::Caption;
    std::string text;
    TokenSeq token_ids;
};

/// Which product fields contribute semantic IDs. Captions become one SID,
/// descriptions one SID per sentence, attributes one "name: value" SID each.
struct SidPolicy {
    bool caption = true;
    bool description = true;
    bool attributes = true;
};

/// Splits on '.', '!' or '?' followed by whitespace. Pieces keep their
/// terminal punctuation and are trimmed; empty pieces are dropped.
std::vector<std::string> split_sentences(std::string_view text);

/// SIDs for one product, in caption, description, attribute order. Returned
/// records carry sid_id 0 and no token ids; Corpus assigns both.
std::vector<SidRecord> extract_sids(const Product& product, const SidPolicy& policy);

class Corpus {
public:
    Corpus() = default;

    /// Assumes products already satisfy the Product invariants.
    static Corpus from_products(std::vector<Product> products, const SidPolicy& policy = {});

    std::span<const Product> products() const { return products_; }
    std::span<const SidRecord> sids() const { return sids_; }
    std::size_t size() const { return products_.size(); }
    bool empty() const { return products_.empty(); }

    const Product& get_product(std::string_view product_id) const;
    const Product* find_product(std::string_view product_id) const;
    /// sid_ids owned by a product, ascending. Empty for unknown ids.
    std::span<const SidId> sids_of(std::string_view product_id) const;

    /// Tokenizes every SID under `vocab` and records its digest.
    void bind_vocab(const Vocab& vocab);
    const std::string& vocab_digest() const { return vocab_digest_; }

    /// Canonical JSONL, one product per line in ingest order.
    std::string serialize() const;
    std::string content_digest() const;

    /// Sidecar (".sids.jsonl") with one SID record per line.
    std::string serialize_sids() const;
    /// Replaces the SID list with one read from a sidecar. Token ids are
    /// cleared; call bind_vocab afterwards.
    void load_sids(std::istream& in);

private:
    void reindex();

    std::vector<Product> products_;
    std::vector<SidRecord> sids_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::unordered_map<std::string, std::vector<SidId>> sids_by_product_;
    std::string vocab_digest_;
};

struct IngestIssue {
    std::size_t line = 0;
    ErrorCode code = ErrorCode::MalformedRecord;
    std::string message;
};

struct IngestReport {
    Corpus corpus;
    std::vector<IngestIssue> rejected;
};

/// Strict ingest: the first invalid line aborts with a line-numbered Error.
Corpus ingest_corpus(std::istream& in, const SidPolicy& policy = {});

/// Lenient ingest: invalid lines are skipped and reported.
IngestReport ingest_corpus_lenient(std::istream& in, const SidPolicy& policy = {});

Product product_from_json(const nlohmann::json& record, std::size_t line);

}  // namespace cps
