#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cps/corpus.hpp"
#include "cps/types.hpp"

namespace cps {

class Vocab;

/// Half-open suffix-array range matching a generated SID prefix. `complete`
/// marks an interval reached through the SID terminator: it matches whole
/// SIDs and cannot be extended further.
struct Interval {
    std::size_t lo = 0;
    std::size_t hi = 0;
    std::size_t depth = 0;
    bool complete = false;

    std::size_t size() const { return hi - lo; }
    bool empty() const { return hi == lo; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

struct FmIndexParams {
    std::uint32_t occ_stride = 64;
    std::uint32_t sa_stride = 16;
};

/// FM-index over the concatenation of every SID's tokens in reverse order,
/// each followed by the terminator. Backward search on the reversed stream
/// turns "append a token to a left-to-right prefix" into one LF step, and
/// anchoring the search at the terminators restricts matches to SID prefixes.
///
/// Rows whose BWT symbol is the terminator are the starts of reversed SID
/// blocks; `end_rank_sid_` lists their sid ids in row order so completed
/// matches resolve without LF-stepping through a terminator (multiple equal
/// terminators do not give a consistent LF for that symbol).
class FmIndex {
public:
    FmIndex() = default;

    /// Throws EmptySidSet for no SIDs, VocabMismatch when a SID is not
    /// tokenized under `vocab` or contains a reserved id.
    static FmIndex build(std::span<const SidRecord> sids, const Vocab& vocab, const FmIndexParams& params = {});

    std::size_t size() const { return bwt_.size(); }
    std::size_t sid_count() const { return doc_sids_.size(); }
    std::size_t alphabet_size() const { return sigma_; }
    const std::string& vocab_digest() const { return vocab_digest_; }
    const FmIndexParams& params() const { return params_; }

    std::span<const TokenId> bwt() const { return bwt_; }
    std::span<const std::uint64_t> c_table() const { return c_; }

    /// Occurrences of `symbol` in bwt[0, pos).
    std::size_t occ(TokenId symbol, std::size_t pos) const;

    Interval root_interval() const { return {0, bwt_.size(), 0, false}; }
    Interval extend(const Interval& interval, TokenId token) const;
    /// Every token whose extension is non-empty, ascending by id. Throws
    /// EmptyInterval.
    std::vector<std::pair<TokenId, Interval>> continuations(const Interval& interval) const;
    /// Sorted, de-duplicated sid ids of the SIDs matched by the interval.
    /// Throws EmptyInterval.
    std::vector<SidId> locate(const Interval& interval) const;
    std::size_t count(std::span<const TokenId> pattern) const;

    /// Versioned little-endian binary form with a trailing checksum.
    std::string serialize() const;
    /// Throws CorruptIndex on truncation, checksum/version mismatch, or a
    /// vocabulary digest different from `expected_vocab_digest`.
    static FmIndex deserialize(std::string_view bytes, std::string_view expected_vocab_digest);

private:
    void rebuild_sample_rank();
    bool is_sampled(std::size_t row, std::size_t& sample_index) const;
    SidId sid_at_position(std::uint64_t pos) const;
    Interval backward_step(std::size_t lo, std::size_t hi, TokenId token, std::size_t depth) const;

    FmIndexParams params_;
    std::string vocab_digest_;
    std::size_t sigma_ = 0;
    std::vector<TokenId> bwt_;
    std::vector<std::uint64_t> c_;
    std::vector<std::uint32_t> occ_checkpoints_;
    std::vector<std::uint64_t> sample_bits_;
    std::vector<std::uint32_t> sample_rank_;
    std::vector<std::uint64_t> sa_samples_;
    std::vector<std::uint64_t> doc_starts_;
    std::vector<SidId> doc_sids_;
    std::vector<SidId> end_rank_sid_;
};

/// Prefix-doubling suffix array of an integer string; end of string sorts
/// before every symbol.
std::vector<std::uint64_t> build_suffix_array(std::span<const TokenId> text);

}  // namespace cps
