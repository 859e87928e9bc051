#include "paccs/errors.hpp"

namespace paccs {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::validation: return "validation";
        case ErrorKind::config: return "config";
        case ErrorKind::domain: return "domain";
        case ErrorKind::integrity: return "integrity";
        case ErrorKind::data: return "data";
        case ErrorKind::divergence: return "divergence";
        case ErrorKind::io: return "io";
    }
    return "error";
}

int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::validation:
        case ErrorKind::config:
        case ErrorKind::domain: return 2;
        case ErrorKind::integrity:
        case ErrorKind::data:
        case ErrorKind::io: return 3;
        case ErrorKind::divergence: return 4;
    }
    return 1;
}

}  // namespace paccs
