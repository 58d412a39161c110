#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace cps {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Incremental SHA-256 for digests built from many fields.
class Digest {
public:
    Digest();
    ~Digest();
    Digest(const Digest&) = delete;
    Digest& operator=(const Digest&) = delete;

    Digest& update(std::string_view data);
    /// Length-prefixed update, so that ("ab","c") and ("a","bc") differ.
    Digest& field(std::string_view data);
    std::string hex();

private:
    void* ctx_;
};

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames over `path`; a failed write never
/// leaves a partial file at `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace cps
