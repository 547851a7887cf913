#pragma once

#include <stdexcept>
#include <string>

namespace procplan {

/// Library error. `code` is a short machine-readable identifier
/// (e.g. "empty_corpus", "unknown_node"); what() carries the human text.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

}  // namespace procplan
