#pragma once

#include <stdexcept>
#include <string>

namespace ftl {

/// Unreadable input, syntax error, or schema violation. Maps to CLI exit code 1.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Domain-level failure: infeasible tiling problem, invalid fusion request,
/// tensor that fits no memory level. Maps to CLI exit code 2.
struct InfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

} // namespace ftl
