#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "iegs/types.hpp"

namespace iegs {

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

struct ValidationError : std::runtime_error {
  explicit ValidationError(std::vector<Diagnostic> diags)
      : std::runtime_error(join(diags)), diagnostics(std::move(diags)) {}
  std::vector<Diagnostic> diagnostics;

 private:
  static std::string join(const std::vector<Diagnostic>& diags) {
    std::string out = "instance validation failed:";
    for (const auto& d : diags) out += "\n  [" + d.field + "] " + d.message;
    return out;
  }
};

struct SolveError : std::runtime_error {
  explicit SolveError(const std::string& what) : std::runtime_error(what) {}
};

struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace iegs
