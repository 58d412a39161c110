#include "cps/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <sstream>
#include <unordered_set>

#include "cps/io.hpp"
#include "cps/tokenizer.hpp"

namespace cps {

namespace {

using nlohmann::json;

const std::unordered_set<std::string> kKnownFields = {
    "product_id", "title", "description", "caption", "attributes", "image_ref",
};

bool has_text(const std::optional<std::string>& field) {
    return field && field->find_first_not_of(" \t\r\n") != std::string::npos;
}

std::optional<std::string> optional_string(const json& record, const char* key, std::size_t line) {
    auto it = record.find(key);
    if (it == record.end() || it->is_null()) {
        return std::nullopt;
    }
    if (!it->is_string()) {
        throw Error(ErrorCode::MalformedRecord, std::string("field '") + key + "' must be a string", line);
    }
    return it->get<std::string>();
}

std::string_view trim(std::string_view s) {
    auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::optional<SidSource> parse_source(std::string_view s) {
    if (s == "caption") return SidSource::Caption;
    if (s == "description") return SidSource::Description;
    if (s == "attribute") return SidSource::Attribute;
    return std::nullopt;
}

template <typename OnRecord, typename OnIssue>
void scan_lines(std::istream& in, OnRecord&& on_record, OnIssue&& on_issue) {
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        try {
            json record;
            try {
                record = json::parse(line);
            } catch (const json::parse_error& e) {
                throw Error(ErrorCode::MalformedRecord, e.what(), line_no);
            }
            auto product = product_from_json(record, line_no);
            if (!seen.insert(product.product_id).second) {
                throw Error(ErrorCode::DuplicateProductId, "product_id '" + product.product_id + "' already seen",
                            line_no);
            }
            on_record(std::move(product));
        } catch (const Error& e) {
            on_issue(e);
        }
    }
}

}  // namespace

std::string_view to_string(SidSource source) noexcept {
    switch (source) {
        case SidSource::Caption: return "caption";
        case SidSource::Description: return "description";
        case SidSource::Attribute: return "attribute";
    }
    return "caption";
}

json Product::to_json() const {
    json out = extra.is_object() ? extra : json::object();
    out["product_id"] = product_id;
    if (title) out["title"] = *title;
    if (description) out["description"] = *description;
    if (caption) out["caption"] = *caption;
    if (!attributes.empty()) out["attributes"] = attributes;
    if (image_ref) out["image_ref"] = *image_ref;
    return out;
}

Product product_from_json(const json& record, std::size_t line) {
    if (!record.is_object()) {
        throw Error(ErrorCode::MalformedRecord, "record is not a JSON object", line);
    }
    auto id = record.find("product_id");
    if (id == record.end() || !id->is_string() || id->get<std::string>().empty()) {
        throw Error(ErrorCode::MalformedRecord, "missing or empty product_id", line);
    }
    Product product;
    product.product_id = id->get<std::string>();
    product.title = optional_string(record, "title", line);
    product.description = optional_string(record, "description", line);
    product.caption = optional_string(record, "caption", line);
    product.image_ref = optional_string(record, "image_ref", line);
    if (auto attrs = record.find("attributes"); attrs != record.end() && !attrs->is_null()) {
        if (!attrs->is_object()) {
            throw Error(ErrorCode::MalformedRecord, "attributes must be an object", line);
        }
        for (const auto& [name, value] : attrs->items()) {
            if (value.is_string()) {
                product.attributes[name] = value.get<std::string>();
            } else if (value.is_number() || value.is_boolean()) {
                product.attributes[name] = value.dump();
            } else {
                throw Error(ErrorCode::MalformedRecord, "attribute '" + name + "' must be a scalar", line);
            }
        }
    }
    for (const auto& [key, value] : record.items()) {
        if (!kKnownFields.contains(key)) {
            product.extra[key] = value;
        }
    }
    if (!has_text(product.caption) && !has_text(product.description)) {
        throw Error(ErrorCode::EmptyTextFields, "product '" + product.product_id + "' has neither caption nor description",
                    line);
    }
    return product;
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    auto emit = [&](std::string_view piece) {
        piece = trim(piece);
        if (!piece.empty()) {
            out.emplace_back(piece);
        }
    };
    std::size_t start = 0;
    for (std::size_t i = 0; i + 1 < text.size(); ++i) {
        char c = text[i];
        if ((c == '.' || c == '!' || c == '?') && std::isspace(static_cast<unsigned char>(text[i + 1]))) {
            emit(text.substr(start, i + 1 - start));
            start = i + 1;
        }
    }
    emit(text.substr(start));
    return out;
}

std::vector<SidRecord> extract_sids(const Product& product, const SidPolicy& policy) {
    std::vector<SidRecord> out;
    auto add = [&](SidSource source, std::string text) {
        if (normalize_tokens(text).empty()) {
            return;
        }
        SidRecord rec;
        rec.product_id = product.product_id;
        rec.source_field = source;
        rec.text = std::move(text);
        out.push_back(std::move(rec));
    };
    if (policy.caption && has_text(product.caption)) {
        add(SidSource::Caption, std::string(trim(*product.caption)));
    }
    if (policy.description && has_text(product.description)) {
        for (auto& sentence : split_sentences(*product.description)) {
            add(SidSource::Description, std::move(sentence));
        }
    }
    if (policy.attributes) {
        for (const auto& [name, value] : product.attributes) {
            if (!trim(value).empty()) {
                add(SidSource::Attribute, name + ": " + value);
            }
        }
    }
    return out;
}

Corpus Corpus::from_products(std::vector<Product> products, const SidPolicy& policy) {
    Corpus corpus;
    corpus.products_ = std::move(products);
    for (const auto& product : corpus.products_) {
        for (auto& sid : extract_sids(product, policy)) {
            sid.sid_id = static_cast<SidId>(corpus.sids_.size());
            corpus.sids_.push_back(std::move(sid));
        }
    }
    corpus.reindex();
    return corpus;
}

void Corpus::reindex() {
    by_id_.clear();
    sids_by_product_.clear();
    for (std::size_t i = 0; i < products_.size(); ++i) {
        by_id_.emplace(products_[i].product_id, i);
    }
    for (const auto& sid : sids_) {
        sids_by_product_[sid.product_id].push_back(sid.sid_id);
    }
}

const Product* Corpus::find_product(std::string_view product_id) const {
    auto it = by_id_.find(std::string(product_id));
    return it == by_id_.end() ? nullptr : &products_[it->second];
}

const Product& Corpus::get_product(std::string_view product_id) const {
    if (const auto* product = find_product(product_id)) {
        return *product;
    }
    throw Error(ErrorCode::ProductNotFound, "no product '" + std::string(product_id) + "'");
}

std::span<const SidId> Corpus::sids_of(std::string_view product_id) const {
    auto it = sids_by_product_.find(std::string(product_id));
    if (it == sids_by_product_.end()) {
        return {};
    }
    return it->second;
}

void Corpus::bind_vocab(const Vocab& vocab) {
    for (auto& sid : sids_) {
        sid.token_ids = vocab.encode(sid.text);
    }
    vocab_digest_ = vocab.digest();
}

std::string Corpus::serialize() const {
    std::string out;
    for (const auto& product : products_) {
        out += product.to_json().dump();
        out += "\n";
    }
    return out;
}

std::string Corpus::content_digest() const { return sha256_hex(serialize()); }

std::string Corpus::serialize_sids() const {
    std::string out;
    for (const auto& sid : sids_) {
        out += json{{"sid_id", sid.sid_id},
                    {"product_id", sid.product_id},
                    {"source_field", to_string(sid.source_field)},
                    {"text", sid.text}}
                   .dump();
        out += "\n";
    }
    return out;
}

void Corpus::load_sids(std::istream& in) {
    std::vector<SidRecord> loaded;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        SidRecord rec;
        try {
            auto j = json::parse(line);
            rec.sid_id = j.at("sid_id").get<SidId>();
            rec.product_id = j.at("product_id").get<std::string>();
            auto source = parse_source(j.at("source_field").get<std::string>());
            if (!source) {
                throw Error(ErrorCode::MalformedRecord, "unknown source_field", line_no);
            }
            rec.source_field = *source;
            rec.text = j.at("text").get<std::string>();
        } catch (const json::exception& e) {
            throw Error(ErrorCode::MalformedRecord, e.what(), line_no);
        }
        if (rec.sid_id != loaded.size()) {
            throw Error(ErrorCode::MalformedRecord, "sid_id values must be dense and ordered", line_no);
        }
        const auto* product = find_product(rec.product_id);
        if (product == nullptr) {
            throw Error(ErrorCode::ProductNotFound, "sid references unknown product '" + rec.product_id + "'",
                        line_no);
        }
        bool verbatim = false;
        switch (rec.source_field) {
            case SidSource::Caption:
                verbatim = product->caption && product->caption->find(rec.text) != std::string::npos;
                break;
            case SidSource::Description:
                verbatim = product->description && product->description->find(rec.text) != std::string::npos;
                break;
            case SidSource::Attribute:
                for (const auto& [name, value] : product->attributes) {
                    verbatim = verbatim || (name + ": " + value).find(rec.text) != std::string::npos;
                }
                break;
        }
        if (!verbatim) {
            throw Error(ErrorCode::MalformedRecord, "sid text is not a substring of its source field", line_no);
        }
        loaded.push_back(std::move(rec));
    }
    sids_ = std::move(loaded);
    vocab_digest_.clear();
    reindex();
}

IngestReport ingest_corpus_lenient(std::istream& in, const SidPolicy& policy) {
    std::vector<Product> products;
    IngestReport report;
    scan_lines(
        in, [&](Product p) { products.push_back(std::move(p)); },
        [&](const Error& e) {
            report.rejected.push_back({e.line().value_or(0), e.code(), e.what()});
        });
    report.corpus = Corpus::from_products(std::move(products), policy);
    return report;
}

Corpus ingest_corpus(std::istream& in, const SidPolicy& policy) {
    std::vector<Product> products;
    scan_lines(
        in, [&](Product p) { products.push_back(std::move(p)); }, [](const Error& e) { throw e; });
    return Corpus::from_products(std::move(products), policy);
}

}  // namespace cps
