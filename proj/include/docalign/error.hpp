#pragma once

#include <stdexcept>
#include <string>

namespace docalign {

// Broad failure categories; the CLI maps them to exit codes
// (config/parse/validation/io -> 2, numeric -> 3).
enum class Errc {
    config,
    parse,
    validation,
    io,
    numeric,
};

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, Errc code, const std::string& msg) {
    if (!cond) fail(code, msg);
}

}  // namespace docalign
