#pragma once

#include <stdexcept>
#include <string>

namespace fedfa {

// Library errors carry a short machine-readable code ("empty-tensor",
// "slice-bounds", ...) alongside a human-readable message.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& detail)
        : std::runtime_error(code + ": " + detail), code_(std::move(code)) {}
    explicit Error(std::string code) : std::runtime_error(code), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

}  // namespace fedfa
