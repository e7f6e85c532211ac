#pragma once

#include <stdexcept>
#include <string>

namespace segicl {

// Shape/size disagreement between tensors or against a config.
struct dimension_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A call that violates an operation's preconditions (non-scalar loss,
// missing gradient, k larger than available supports, ...).
struct contract_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN/Inf produced from finite inputs.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Sequence does not fit the encoder's configured capacity.
struct capacity_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Rejection sampling exhausted its attempt budget.
struct generation_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File/stream level failures; message carries the path.
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad config file content or bad user-supplied values (maps to usage exit).
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Word outside the fixed vocabulary.
struct vocab_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operation requires state (trained weights, checkpoint) that is absent.
struct state_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training diverged (non-finite loss); a diagnostic snapshot is written first.
struct training_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace segicl
