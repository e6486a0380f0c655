#pragma once

#include <stdexcept>
#include <string>

namespace vpkl {

// Failure classes. The CLI maps DataError and friends to exit code 1,
// UsageError to exit code 2.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct GenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SamplingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EpisodeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct OptimizerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EvaluationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Debug-mode numeric screening. On by default in debug builds; ops verify
// their outputs are finite and throw on NaN/Inf.
bool debug_checks_enabled();
void set_debug_checks(bool enabled);

}  // namespace vpkl
