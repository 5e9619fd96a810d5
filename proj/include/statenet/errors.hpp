#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace statenet {

// Base class for all library errors.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Mixed address widths in one operation.
struct width_error : error {
    using error::error;
};

// Requested state is outside the node's owned range and not cached.
struct not_held_error : error {
    using error::error;
};

// A Merkle proof failed to verify against the expected root.
struct verification_error : error {
    using error::error;
};

// A touched branch has no accompanying proof, so the root cannot be updated.
struct cannot_update_error : error {
    using error::error;
};

// Iterative lookup exhausted all candidates without finding a holder.
struct lookup_failed_error : error {
    using error::error;
};

// Malformed input file; carries the 1-based line number when known.
struct parse_error : error {
    explicit parse_error(const std::string& msg, std::size_t line = 0)
        : error(line ? msg + " (line " + std::to_string(line) + ")" : msg), line(line)
    {}
    std::size_t line;
};

// Structurally valid input violating the schema (e.g. address overflow).
struct schema_error : parse_error {
    using parse_error::parse_error;
};

// Workload generator could not meet a calibration target.
struct calibration_error : error {
    using error::error;
};

// Degenerate sample set passed to a regression fit.
struct fit_error : error {
    using error::error;
};

struct config_error : error {
    using error::error;
};

} // namespace statenet
