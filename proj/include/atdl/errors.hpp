#pragma once

#include <stdexcept>
#include <string>

namespace atdl {

// Base class for all errors raised by this library. The CLI maps each
// subclass to a distinct process exit code.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape mismatch between operands, or an empty operand where a nonempty
// one is required.
struct dimension_error : error {
    using error::error;
};

// Malformed on-disk artifact: bad magic, truncated payload, unparsable text.
struct format_error : error {
    using error::error;
};

// Filesystem problem: missing path, unreadable file, failed write.
struct io_error : error {
    using error::error;
};

// Semantically invalid value: out-of-range id, zero vector where a direction
// is needed, empty corpus, unknown token.
struct value_error : error {
    using error::error;
};

} // namespace atdl
