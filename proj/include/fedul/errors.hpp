#pragma once

#include <stdexcept>
#include <string>

namespace fedul {

// Error categories map onto CLI exit codes: ConfigError -> 2, IoError -> 3,
// ArtifactError -> 4. Everything else is a plain failure (1).

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Requested artifacts (trained model, ledger, round store) are missing.
struct ArtifactError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or non-finite data encountered at runtime.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API misuse: dimension mismatches, out-of-range ids. Programming errors,
// not user input errors.
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

} // namespace fedul
