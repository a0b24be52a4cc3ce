#include "rbm/errors.hpp"

namespace rbm {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::dimension: return "dimension error";
    case ErrorKind::parameter: return "parameter error";
    case ErrorKind::factorization: return "factorization error";
    case ErrorKind::m_matrix: return "M-matrix violation";
    case ErrorKind::configuration: return "configuration error";
    case ErrorKind::size: return "size error";
    case ErrorKind::alignment: return "alignment error";
    case ErrorKind::shape: return "shape error";
    case ErrorKind::convergence: return "non-convergence";
    case ErrorKind::submatrix: return "singular submatrix";
    case ErrorKind::domain: return "domain error";
    case ErrorKind::insufficient_data: return "insufficient data";
    case ErrorKind::validation: return "validation error";
    case ErrorKind::assumption: return "assumption failure";
    case ErrorKind::io: return "I/O error";
    }
    return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

Error Error::annotated(std::string_view context) const {
    // what() already carries the kind prefix; strip it so it is not doubled.
    std::string msg = what();
    const auto prefix = std::string(to_string(kind_)) + ": ";
    if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
    return Error(kind_, std::string(context) + ": " + msg);
}

int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::assumption:
    case ErrorKind::m_matrix:
        return 3;
    case ErrorKind::io:
        return 4;
    default:
        return 2;
    }
}

}  // namespace rbm
