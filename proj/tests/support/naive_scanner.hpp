#pragma once

// Brute-force reference for prefix queries over SID token sequences. Shares
// no code with the FM-index.

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <vector>

#include "cps/types.hpp"

namespace cps::testing {

class NaiveScanner {
public:
    struct Entry {
        SidId sid_id;
        TokenSeq tokens;
    };

    explicit NaiveScanner(std::vector<Entry> entries) : entries_(std::move(entries)) {
        for (const auto& e : entries_) total_ += e.tokens.size() + 1;
    }

    std::size_t stream_length() const { return total_; }

    static bool is_prefix(const TokenSeq& pattern, const TokenSeq& tokens) {
        return pattern.size() <= tokens.size() && std::equal(pattern.begin(), pattern.end(), tokens.begin());
    }

    // A pattern ending in the terminator matches SIDs equal to the rest.
    std::vector<SidId> matches(const TokenSeq& pattern) const {
        std::vector<SidId> out;
        bool terminated = !pattern.empty() && pattern.back() == kEndSid;
        TokenSeq body(pattern.begin(), pattern.end() - (terminated ? 1 : 0));
        if (std::find(body.begin(), body.end(), kEndSid) != body.end()) return out;
        for (const auto& e : entries_) {
            if (terminated ? e.tokens == body : is_prefix(body, e.tokens)) out.push_back(e.sid_id);
        }
        if (terminated && body.empty()) out.clear();
        std::sort(out.begin(), out.end());
        return out;
    }

    std::size_t count(const TokenSeq& pattern) const {
        if (pattern.empty()) return total_;
        return matches(pattern).size();
    }

    std::vector<SidId> locate(const TokenSeq& pattern) const {
        auto out = matches(pattern);
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    // Next tokens after a non-terminated prefix; the terminator appears when a
    // SID equals the prefix (never for the empty prefix).
    std::set<TokenId> continuations(const TokenSeq& prefix) const {
        std::set<TokenId> out;
        for (const auto& e : entries_) {
            if (!is_prefix(prefix, e.tokens)) continue;
            if (e.tokens.size() > prefix.size()) {
                out.insert(e.tokens[prefix.size()]);
            } else if (!prefix.empty()) {
                out.insert(kEndSid);
            }
        }
        return out;
    }

    const std::vector<Entry>& entries() const { return entries_; }

private:
    std::vector<Entry> entries_;
    std::size_t total_ = 0;
};

}  // namespace cps::testing
