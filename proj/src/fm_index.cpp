#include "cps/fm_index.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <numeric>

#include "cps/error.hpp"
#include "cps/io.hpp"
#include "cps/tokenizer.hpp"

namespace cps {

namespace {

constexpr std::string_view kMagic = "FMSID";
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::size_t kChecksumHexLen = 64;

class Writer {
public:
    void bytes(std::string_view s) { out_.append(s); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void str(std::string_view s) {
        u64(s.size());
        bytes(s);
    }
    template <typename T>
    void vec(const std::vector<T>& v) {
        u64(v.size());
        for (auto x : v) {
            if constexpr (sizeof(T) == 4) {
                u32(static_cast<std::uint32_t>(x));
            } else {
                u64(static_cast<std::uint64_t>(x));
            }
        }
    }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(std::string_view in) : in_(in) {}

    std::string_view bytes(std::size_t n) {
        need(n);
        auto s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint32_t u32() {
        auto s = bytes(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(s[i])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        auto s = bytes(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(s[i])) << (8 * i);
        return v;
    }
    std::string str() {
        auto n = u64();
        return std::string(bytes(n));
    }
    template <typename T>
    std::vector<T> vec() {
        auto n = u64();
        need(n * sizeof(T));
        std::vector<T> v(n);
        for (auto& x : v) {
            if constexpr (sizeof(T) == 4) {
                x = static_cast<T>(u32());
            } else {
                x = static_cast<T>(u64());
            }
        }
        return v;
    }
    bool done() const { return pos_ == in_.size(); }

private:
    void need(std::size_t n) const {
        if (n > in_.size() - pos_) {
            throw Error(ErrorCode::CorruptIndex, "index file truncated");
        }
    }

    std::string_view in_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint64_t> build_suffix_array(std::span<const TokenId> text) {
    const std::size_t n = text.size();
    std::vector<std::uint64_t> sa(n);
    std::iota(sa.begin(), sa.end(), std::uint64_t{0});
    if (n == 0) {
        return sa;
    }
    std::vector<std::int64_t> rank(text.begin(), text.end());
    std::vector<std::int64_t> next(n);
    for (std::size_t k = 1;; k <<= 1) {
        auto key = [&](std::uint64_t i) {
            return std::pair{rank[i], i + k < n ? rank[i + k] : std::int64_t{-1}};
        };
        std::sort(sa.begin(), sa.end(), [&](std::uint64_t a, std::uint64_t b) { return key(a) < key(b); });
        next[sa[0]] = 0;
        for (std::size_t i = 1; i < n; ++i) {
            next[sa[i]] = next[sa[i - 1]] + (key(sa[i - 1]) < key(sa[i]) ? 1 : 0);
        }
        rank.swap(next);
        if (rank[sa[n - 1]] == static_cast<std::int64_t>(n - 1) || k >= n) {
            break;
        }
    }
    return sa;
}

FmIndex FmIndex::build(std::span<const SidRecord> sids, const Vocab& vocab, const FmIndexParams& params) {
    if (sids.empty()) {
        throw Error(ErrorCode::EmptySidSet, "cannot index an empty SID set");
    }
    if (params.occ_stride == 0 || params.sa_stride == 0) {
        throw Error(ErrorCode::InvalidParameters, "index strides must be positive");
    }
    FmIndex index;
    index.params_ = params;
    index.vocab_digest_ = vocab.digest();
    index.sigma_ = vocab.size();

    std::vector<TokenId> text;
    for (const auto& sid : sids) {
        if (sid.token_ids.empty() || sid.token_ids != vocab.encode(sid.text)) {
            throw Error(ErrorCode::VocabMismatch, "sid " + std::to_string(sid.sid_id) + " is not tokenized under vocabulary " +
                                                      vocab.digest().substr(0, 12));
        }
        for (TokenId t : sid.token_ids) {
            if (t < kFirstWordId) {
                throw Error(ErrorCode::VocabMismatch, "sid " + std::to_string(sid.sid_id) + " contains a reserved token");
            }
        }
        index.doc_starts_.push_back(text.size());
        index.doc_sids_.push_back(sid.sid_id);
        text.insert(text.end(), sid.token_ids.rbegin(), sid.token_ids.rend());
        text.push_back(kEndSid);
    }

    const std::size_t n = text.size();
    const auto sa = build_suffix_array(text);
    index.bwt_.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        index.bwt_[r] = text[sa[r] == 0 ? n - 1 : sa[r] - 1];
    }

    index.c_.assign(index.sigma_ + 1, 0);
    for (TokenId t : text) {
        ++index.c_[t + 1];
    }
    std::partial_sum(index.c_.begin(), index.c_.end(), index.c_.begin());

    const std::size_t k = params.occ_stride;
    const std::size_t checkpoints = n / k + 1;
    index.occ_checkpoints_.assign(checkpoints * index.sigma_, 0);
    std::vector<std::uint32_t> running(index.sigma_, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (i % k == 0) {
            std::copy(running.begin(), running.end(), index.occ_checkpoints_.begin() + (i / k) * index.sigma_);
        }
        ++running[index.bwt_[i]];
    }
    if (n % k == 0) {
        std::copy(running.begin(), running.end(), index.occ_checkpoints_.begin() + (n / k) * index.sigma_);
    }

    index.sample_bits_.assign((n + 63) / 64, 0);
    for (std::size_t r = 0; r < n; ++r) {
        if (sa[r] % params.sa_stride == 0) {
            index.sample_bits_[r / 64] |= std::uint64_t{1} << (r % 64);
            index.sa_samples_.push_back(sa[r]);
        }
    }
    index.rebuild_sample_rank();

    for (std::size_t r = 0; r < n; ++r) {
        if (index.bwt_[r] == kEndSid) {
            index.end_rank_sid_.push_back(index.sid_at_position(sa[r]));
        }
    }
    return index;
}

void FmIndex::rebuild_sample_rank() {
    sample_rank_.assign(sample_bits_.size() + 1, 0);
    for (std::size_t w = 0; w < sample_bits_.size(); ++w) {
        sample_rank_[w + 1] = sample_rank_[w] + static_cast<std::uint32_t>(std::popcount(sample_bits_[w]));
    }
}

bool FmIndex::is_sampled(std::size_t row, std::size_t& sample_index) const {
    const auto word = sample_bits_[row / 64];
    const auto bit = std::uint64_t{1} << (row % 64);
    if ((word & bit) == 0) {
        return false;
    }
    sample_index = sample_rank_[row / 64] + static_cast<std::size_t>(std::popcount(word & (bit - 1)));
    return true;
}

SidId FmIndex::sid_at_position(std::uint64_t pos) const {
    auto it = std::upper_bound(doc_starts_.begin(), doc_starts_.end(), pos);
    return doc_sids_[static_cast<std::size_t>(it - doc_starts_.begin()) - 1];
}

std::size_t FmIndex::occ(TokenId symbol, std::size_t pos) const {
    if (symbol >= sigma_) {
        return 0;
    }
    const std::size_t k = params_.occ_stride;
    const std::size_t block = pos / k;
    std::size_t count = occ_checkpoints_[block * sigma_ + symbol];
    for (std::size_t i = block * k; i < pos; ++i) {
        count += bwt_[i] == symbol ? 1 : 0;
    }
    return count;
}

Interval FmIndex::backward_step(std::size_t lo, std::size_t hi, TokenId token, std::size_t depth) const {
    if (token >= sigma_) {
        return {0, 0, depth + 1, false};
    }
    const std::size_t base = c_[token];
    return {base + occ(token, lo), base + occ(token, hi), depth + 1, token == kEndSid};
}

Interval FmIndex::extend(const Interval& interval, TokenId token) const {
    if (interval.empty() || interval.complete) {
        return {0, 0, interval.depth + 1, false};
    }
    if (interval.depth == 0) {
        if (token == kEndSid) {
            return {0, 0, 1, false};
        }
        // The empty prefix is anchored at the terminator rows [0, S).
        return backward_step(0, c_[kEndSid + 1], token, 0);
    }
    return backward_step(interval.lo, interval.hi, token, interval.depth);
}

std::vector<std::pair<TokenId, Interval>> FmIndex::continuations(const Interval& interval) const {
    if (interval.empty()) {
        throw Error(ErrorCode::EmptyInterval, "continuations of an empty interval");
    }
    std::vector<std::pair<TokenId, Interval>> out;
    if (interval.complete) {
        return out;
    }
    const std::size_t lo = interval.depth == 0 ? 0 : interval.lo;
    const std::size_t hi = interval.depth == 0 ? c_[kEndSid + 1] : interval.hi;
    std::vector<TokenId> symbols;
    if (hi - lo <= sigma_) {
        symbols.assign(bwt_.begin() + static_cast<std::ptrdiff_t>(lo), bwt_.begin() + static_cast<std::ptrdiff_t>(hi));
        std::sort(symbols.begin(), symbols.end());
        symbols.erase(std::unique(symbols.begin(), symbols.end()), symbols.end());
    } else {
        for (TokenId c = 0; c < sigma_; ++c) {
            if (occ(c, hi) > occ(c, lo)) {
                symbols.push_back(c);
            }
        }
    }
    out.reserve(symbols.size());
    for (TokenId t : symbols) {
        auto next = extend(interval, t);
        if (!next.empty()) {
            out.emplace_back(t, next);
        }
    }
    return out;
}

std::vector<SidId> FmIndex::locate(const Interval& interval) const {
    if (interval.empty()) {
        throw Error(ErrorCode::EmptyInterval, "locate on an empty interval");
    }
    std::vector<SidId> out;
    if (interval.depth == 0) {
        out = doc_sids_;
    } else if (interval.complete) {
        out.assign(end_rank_sid_.begin() + static_cast<std::ptrdiff_t>(interval.lo),
                   end_rank_sid_.begin() + static_cast<std::ptrdiff_t>(interval.hi));
    } else {
        out.reserve(interval.size());
        for (std::size_t row = interval.lo; row < interval.hi; ++row) {
            std::size_t r = row;
            std::uint64_t steps = 0;
            for (;;) {
                std::size_t sample = 0;
                if (is_sampled(r, sample)) {
                    out.push_back(sid_at_position(sa_samples_[sample] + steps));
                    break;
                }
                const TokenId c = bwt_[r];
                if (c == kEndSid) {
                    out.push_back(end_rank_sid_[occ(kEndSid, r)]);
                    break;
                }
                r = c_[c] + occ(c, r);
                ++steps;
            }
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::size_t FmIndex::count(std::span<const TokenId> pattern) const {
    auto interval = root_interval();
    for (TokenId t : pattern) {
        interval = extend(interval, t);
        if (interval.empty()) {
            return 0;
        }
    }
    return interval.size();
}

std::string FmIndex::serialize() const {
    Writer w;
    w.bytes(kMagic);
    w.u32(kFormatVersion);
    w.str(vocab_digest_);
    w.u32(params_.occ_stride);
    w.u32(params_.sa_stride);
    w.u64(sigma_);
    w.vec(c_);
    w.vec(bwt_);
    w.vec(occ_checkpoints_);
    w.vec(sample_bits_);
    w.vec(sa_samples_);
    w.vec(doc_starts_);
    w.vec(doc_sids_);
    w.vec(end_rank_sid_);
    auto body = w.take();
    body += sha256_hex(body);
    return body;
}

FmIndex FmIndex::deserialize(std::string_view bytes, std::string_view expected_vocab_digest) {
    if (bytes.size() < kMagic.size() + kChecksumHexLen) {
        throw Error(ErrorCode::CorruptIndex, "index file truncated");
    }
    auto body = bytes.substr(0, bytes.size() - kChecksumHexLen);
    if (sha256_hex(body) != bytes.substr(body.size())) {
        throw Error(ErrorCode::CorruptIndex, "index checksum mismatch");
    }
    Reader r(body);
    if (r.bytes(kMagic.size()) != kMagic) {
        throw Error(ErrorCode::CorruptIndex, "bad magic");
    }
    if (auto version = r.u32(); version != kFormatVersion) {
        throw Error(ErrorCode::CorruptIndex, "unsupported index format version " + std::to_string(version));
    }
    FmIndex index;
    index.vocab_digest_ = r.str();
    if (index.vocab_digest_ != expected_vocab_digest) {
        throw Error(ErrorCode::CorruptIndex, "index was built under a different vocabulary");
    }
    index.params_.occ_stride = r.u32();
    index.params_.sa_stride = r.u32();
    index.sigma_ = r.u64();
    index.c_ = r.vec<std::uint64_t>();
    index.bwt_ = r.vec<TokenId>();
    index.occ_checkpoints_ = r.vec<std::uint32_t>();
    index.sample_bits_ = r.vec<std::uint64_t>();
    index.sa_samples_ = r.vec<std::uint64_t>();
    index.doc_starts_ = r.vec<std::uint64_t>();
    index.doc_sids_ = r.vec<SidId>();
    index.end_rank_sid_ = r.vec<SidId>();
    const std::size_t n = index.bwt_.size();
    if (!r.done() || index.params_.occ_stride == 0 || index.c_.size() != index.sigma_ + 1 ||
        index.occ_checkpoints_.size() != (n / index.params_.occ_stride + 1) * index.sigma_ ||
        index.sample_bits_.size() != (n + 63) / 64 || index.doc_starts_.size() != index.doc_sids_.size() ||
        index.doc_sids_.empty() || index.end_rank_sid_.size() != index.doc_sids_.size() ||
        index.c_.back() != n) {
        throw Error(ErrorCode::CorruptIndex, "inconsistent index sections");
    }
    for (TokenId t : index.bwt_) {
        if (t >= index.sigma_) {
            throw Error(ErrorCode::CorruptIndex, "bwt symbol outside alphabet");
        }
    }
    index.rebuild_sample_rank();
    if (index.sample_rank_.back() != index.sa_samples_.size()) {
        throw Error(ErrorCode::CorruptIndex, "sample table size mismatch");
    }
    return index;
}

}  // namespace cps
