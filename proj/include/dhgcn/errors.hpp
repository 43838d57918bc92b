#pragma once

#include <stdexcept>
#include <string>

namespace dhgcn {

/// Operand shapes or dimensions do not agree.
class dimension_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A value left the finite domain (NaN/inf, atanh/log/sqrt outside their domain).
/// The message names the producing operation.
class numeric_fault : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input that is well-typed but admits no meaningful answer (all-zero weights, empty batch).
class degenerate_input : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Two operands were built for different curvatures.
class curvature_mismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed dataset, config, or checkpoint content.
class parse_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File could not be opened, read, or written.
class io_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss or activation.
class divergence_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require_same_dim(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw dimension_error(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                              " vs " + std::to_string(b) + ")");
    }
}

}  // namespace detail
}  // namespace dhgcn
