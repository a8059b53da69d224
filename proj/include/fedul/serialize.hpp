#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedul/fed.hpp"

namespace fedul {

// Binary artifact container. Layout: "CNDA" magic, u32 format version, u32
// payload kind, then the kind-specific payload. Integers little-endian,
// floats IEEE binary64. A missing file raises ArtifactError (the caller
// forgot a training step); a present-but-broken file raises DataError.
inline constexpr std::uint32_t kContainerVersion = 1;

enum class ArtifactKind : std::uint32_t { Model = 1, Ledger = 2, RoundStore = 3 };

struct LoadedModel {
    ParamVector params;
    ModelSpec spec;
};

void save_model(const std::string& path, const ParamVector& params,
                const ModelSpec& spec);
LoadedModel load_model(const std::string& path);

void save_ledger(const std::string& path, const ContributionLedger& ledger);
ContributionLedger load_ledger(const std::string& path);

void save_store(const std::string& path, const RoundStore& store);
RoundStore load_store(const std::string& path);

// Appends one line (a newline is added) to a log file, creating it if
// needed.
void append_line(const std::string& path, const std::string& line);

// CSV with a header row. Every row must match the header width; fields
// containing commas, quotes or newlines are quoted.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// FNV-1a 64-bit.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(const std::string& s);
std::uint64_t file_digest(const std::string& path); // IoError if unreadable
std::string hex64(std::uint64_t v);

} // namespace fedul
