#pragma once

#include <stdexcept>
#include <string>

namespace polydet {

// Exit codes shared with the CLI.
enum class ErrorClass { Input = 2, Numerical = 3, Internal = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, std::string kind, const std::string& msg)
        : std::runtime_error(kind + ": " + msg), cls_(cls), kind_(std::move(kind)) {}

    ErrorClass error_class() const { return cls_; }
    int exit_code() const { return static_cast<int>(cls_); }
    const std::string& kind() const { return kind_; }

private:
    ErrorClass cls_;
    std::string kind_;
};

[[noreturn]] inline void input_error(const std::string& kind, const std::string& msg) {
    throw Error(ErrorClass::Input, kind, msg);
}

[[noreturn]] inline void numerical_error(const std::string& kind, const std::string& msg) {
    throw Error(ErrorClass::Numerical, kind, msg);
}

[[noreturn]] inline void internal_error(const std::string& kind, const std::string& msg) {
    throw Error(ErrorClass::Internal, kind, msg);
}

} // namespace polydet
