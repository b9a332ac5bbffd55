#pragma once

#include <stdexcept>
#include <string>

namespace prpl {

enum class ErrorKind {
    contract,
    configuration,
    data,
    numerical,
    training,
    sampling,
    planning,
    versioning,
    unsupported,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::contract: return "contract violation";
        case ErrorKind::configuration: return "configuration error";
        case ErrorKind::data: return "data error";
        case ErrorKind::numerical: return "numerical guard";
        case ErrorKind::training: return "training error";
        case ErrorKind::sampling: return "sampling error";
        case ErrorKind::planning: return "planning error";
        case ErrorKind::versioning: return "versioning error";
        case ErrorKind::unsupported: return "unsupported";
    }
    return "error";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    /// Process exit code for the command-line front end.
    int exit_code() const noexcept {
        switch (kind_) {
            case ErrorKind::configuration:
            case ErrorKind::versioning:
            case ErrorKind::unsupported:
                return 2;
            case ErrorKind::data:
                return 3;
            default:
                return 1;
        }
    }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
    if (!condition) fail(kind, what);
}

}  // namespace prpl
