#include "cps/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <set>

#include <json.hpp>

#include "cps/corpus.hpp"
#include "cps/error.hpp"
#include "cps/io.hpp"

namespace cps {

namespace {

constexpr int kVocabFormatVersion = 1;

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c) != 0; }

}  // namespace

std::vector<std::string> normalize_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) {
            ++i;
        }
        std::size_t start = i;
        while (i < text.size() && !is_space(static_cast<unsigned char>(text[i]))) {
            ++i;
        }
        std::size_t end = i;
        while (start < end && is_punct(static_cast<unsigned char>(text[start]))) {
            ++start;
        }
        while (end > start && is_punct(static_cast<unsigned char>(text[end - 1]))) {
            --end;
        }
        if (start == end) {
            continue;
        }
        std::string word(text.substr(start, end - start));
        for (auto& c : word) {
            c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
        out.push_back(std::move(word));
    }
    return out;
}

std::string normalize(std::string_view text) {
    std::string out;
    for (const auto& word : normalize_tokens(text)) {
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += word;
    }
    return out;
}

Vocab Vocab::from_words(std::vector<std::string> words) {
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    Vocab vocab;
    Digest digest;
    digest.field("cps-vocab-v1").field(kEndSidText).field(kUnkText);
    for (const auto& word : words) {
        digest.field(word);
    }
    vocab.digest_ = digest.hex();
    vocab.words_ = std::move(words);
    vocab.ids_.reserve(vocab.words_.size());
    for (std::size_t i = 0; i < vocab.words_.size(); ++i) {
        vocab.ids_.emplace(vocab.words_[i], static_cast<TokenId>(i + kFirstWordId));
    }
    return vocab;
}

TokenId Vocab::id_of(std::string_view normalized_word) const {
    auto it = ids_.find(std::string(normalized_word));
    return it == ids_.end() ? kUnk : it->second;
}

std::string_view Vocab::word_of(TokenId id) const {
    if (id == kEndSid) {
        return kEndSidText;
    }
    if (id == kUnk) {
        return kUnkText;
    }
    if (id >= size()) {
        throw Error(ErrorCode::UnknownId, "token id " + std::to_string(id) + " >= vocabulary size " +
                                              std::to_string(size()));
    }
    return words_[id - kFirstWordId];
}

TokenSeq Vocab::encode(std::string_view text) const {
    TokenSeq out;
    for (const auto& word : normalize_tokens(text)) {
        out.push_back(id_of(word));
    }
    return out;
}

std::string Vocab::decode(const TokenSeq& seq) const {
    std::string out;
    for (TokenId id : seq) {
        auto word = word_of(id);
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += word;
    }
    return out;
}

std::string Vocab::serialize() const {
    nlohmann::json header = {
        {"format", "cps-vocab"},
        {"version", kVocabFormatVersion},
        {"digest", digest_},
        {"size", size()},
        {"reserved", {{"end_sid", {{"id", kEndSid}, {"text", kEndSidText}}},
                      {"unk", {{"id", kUnk}, {"text", kUnkText}}}}},
    };
    std::string out = header.dump() + "\n";
    for (std::size_t i = 0; i < words_.size(); ++i) {
        out += nlohmann::json{{"token", words_[i]}, {"id", i + kFirstWordId}}.dump();
        out += "\n";
    }
    return out;
}

Vocab Vocab::load(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorCode::CorruptIndex, "vocabulary file is empty");
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::CorruptIndex, std::string("bad vocabulary header: ") + e.what(), 1);
    }
    if (header.value("format", "") != "cps-vocab" || header.value("version", 0) != kVocabFormatVersion) {
        throw Error(ErrorCode::CorruptIndex, "unsupported vocabulary format", 1);
    }
    std::vector<std::string> words;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            auto rec = nlohmann::json::parse(line);
            auto id = rec.at("id").get<std::size_t>();
            if (id != words.size() + kFirstWordId) {
                throw Error(ErrorCode::CorruptIndex, "non-dense token id", line_no);
            }
            words.push_back(rec.at("token").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::CorruptIndex, e.what(), line_no);
        }
    }
    auto vocab = from_words(words);
    if (vocab.size() != words.size() + kFirstWordId || vocab.digest() != header.value("digest", "")) {
        throw Error(ErrorCode::CorruptIndex, "vocabulary digest mismatch");
    }
    return vocab;
}

Vocab build_vocab(const Corpus& corpus) {
    if (corpus.sids().empty()) {
        throw Error(ErrorCode::EmptyCorpus, "no semantic IDs to build a vocabulary from");
    }
    std::set<std::string> words;
    for (const auto& sid : corpus.sids()) {
        for (auto& word : normalize_tokens(sid.text)) {
            words.insert(std::move(word));
        }
    }
    return Vocab::from_words({words.begin(), words.end()});
}

}  // namespace cps
