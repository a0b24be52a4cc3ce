#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rbm {

enum class ErrorKind {
    dimension,
    parameter,
    factorization,
    m_matrix,
    configuration,
    size,
    alignment,
    shape,
    convergence,
    submatrix,
    domain,
    insufficient_data,
    validation,
    assumption,
    io,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` carries the category so
/// callers (tests, the CLI exit-code mapping) can branch without RTTI games.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }

    /// Same kind, message prefixed with `context: `.
    Error annotated(std::string_view context) const;

private:
    ErrorKind kind_;
};

/// CLI exit code for an error kind: 2 validation, 3 assumption, 4 I/O.
int exit_code(ErrorKind kind);

}  // namespace rbm
