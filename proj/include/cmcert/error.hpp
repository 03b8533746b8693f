#pragma once

#include <stdexcept>
#include <string>

namespace cmcert {

enum class ErrorKind {
    precondition,
    resonance,
    indeterminate_splitting,
    not_contraction,
    certification,
    oracle,
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
    case ErrorKind::precondition: return "precondition";
    case ErrorKind::resonance: return "resonance";
    case ErrorKind::indeterminate_splitting: return "indeterminate splitting";
    case ErrorKind::not_contraction: return "not a contraction";
    case ErrorKind::certification: return "certification";
    case ErrorKind::oracle: return "oracle";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
    throw Error(kind, msg);
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) fail(ErrorKind::precondition, msg);
}

}  // namespace cmcert
