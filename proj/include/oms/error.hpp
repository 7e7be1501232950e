#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace oms {

/// Error raised by any library module. `module()` names the module that
/// failed and `code()` is a short machine-readable tag such as
/// "invalid-dims" or "insufficient-statistics".
class Error : public std::runtime_error {
public:
    Error(std::string module, std::string code, const std::string& message)
        : std::runtime_error(message), module_(std::move(module)), code_(std::move(code)) {}

    const std::string& module() const noexcept { return module_; }
    const std::string& code() const noexcept { return code_; }

private:
    std::string module_;
    std::string code_;
};

/// Non-convergence of an iterative solve; carries the final residual.
class ConvergenceError : public Error {
public:
    ConvergenceError(std::string module, const std::string& message, double residual)
        : Error(std::move(module), "convergence", message), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

} // namespace oms
