#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace ranova {

// Error taxonomy shared by the library and the command line driver. Every
// exception carries a short machine-readable category so callers (and the
// error report written by the CLI) can dispatch without string matching.
class error : public std::runtime_error {
 public:
  error(std::string category, const std::string& what)
      : std::runtime_error(what), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

// Malformed call: bad sizes, empty group, negative penalty, unknown name.
struct argument_error : error {
  explicit argument_error(const std::string& what) : error("argument", what) {}
};

// Input point outside the support of a marginal distribution.
struct domain_error : error {
  explicit domain_error(const std::string& what) : error("domain", what) {}
};

// A derived object could not be built (non-positive normalizer, bad table).
struct construction_error : error {
  explicit construction_error(const std::string& what)
      : error("construction", what) {}
};

// Numerical failure in a solver or factorization. `where` identifies the
// block or matrix involved when known.
struct numerical_error : error {
  explicit numerical_error(const std::string& what, std::string where = "")
      : error("numerical", where.empty() ? what : what + " [" + where + "]"),
        where_(std::move(where)) {}

  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

// Text input that does not parse; `line` is 1-based, 0 when unknown.
struct parse_error : error {
  parse_error(const std::string& what, long line = 0)
      : error("parse",
              line > 0 ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}

  long line() const noexcept { return line_; }

 private:
  long line_;
};

// Structurally valid input that violates a documented requirement.
struct validation_error : error {
  explicit validation_error(const std::string& what)
      : error("validation", what) {}
};

// Filesystem trouble: missing file, unwritable output.
struct io_error : error {
  explicit io_error(const std::string& what) : error("io", what) {}
};

// Model carries no signal (all component variances zero, empty support).
struct degenerate_model_error : error {
  explicit degenerate_model_error(const std::string& what)
      : error("degenerate_model", what) {}
};

}  // namespace ranova
