#pragma once

#include <cstdint>
#include <vector>

namespace cps {

using TokenId = std::uint32_t;
using SidId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

/// Reserved vocabulary ids.
inline constexpr TokenId kEndSid = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kFirstWordId = 2;

}  // namespace cps
