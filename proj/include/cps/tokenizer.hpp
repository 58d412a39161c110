#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cps/types.hpp"

namespace cps {

class Corpus;

/// Lowercase, split on whitespace, strip leading/trailing ASCII punctuation
/// from each token. Tokens that strip to nothing are dropped.
std::vector<std::string> normalize_tokens(std::string_view text);

/// normalize_tokens joined by single spaces.
std::string normalize(std::string_view text);

inline constexpr std::string_view kEndSidText = "<end>";
inline constexpr std::string_view kUnkText = "<unk>";

/// Word-level vocabulary. Id 0 is the SID terminator, id 1 the unknown
/// token; corpus words follow in lexicographic order from id 2.
class Vocab {
public:
    Vocab() = default;

    static Vocab from_words(std::vector<std::string> words);

    std::size_t size() const { return words_.size() + kFirstWordId; }
    const std::string& digest() const { return digest_; }

    /// kUnk when the word is not in the vocabulary.
    TokenId id_of(std::string_view normalized_word) const;
    /// Throws UnknownId for ids >= size().
    std::string_view word_of(TokenId id) const;

    TokenSeq encode(std::string_view text) const;
    std::string decode(const TokenSeq& seq) const;

    /// JSONL: a header line with digest and reserved ids, then one
    /// {"token","id"} line per word.
    std::string serialize() const;
    static Vocab load(std::istream& in);

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, TokenId> ids_;
    std::string digest_;
};

/// Throws EmptyCorpus when the corpus has no SIDs.
Vocab build_vocab(const Corpus& corpus);

inline TokenSeq encode(const Vocab& vocab, std::string_view text) { return vocab.encode(text); }
inline std::string decode(const Vocab& vocab, const TokenSeq& seq) { return vocab.decode(seq); }

}  // namespace cps
