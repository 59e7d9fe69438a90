#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gateseg::harness {

/// Process exit codes; scripts branch on the failure class.
enum ExitCode : int {
  kOk = 0,
  kValidationError = 2,
  kDataError = 3,
  kMetricUndefined = 4,
};

struct Issue {
  std::string code;     ///< machine-readable: unknown_version, duplicate_query_id, ...
  std::string query_id; ///< empty for manifest-level issues
  std::string field;
  std::string message;
};

inline std::string describe(const Issue& i) {
  std::string s = i.code;
  if (!i.query_id.empty()) s += " [query " + i.query_id + "]";
  if (!i.field.empty()) s += " [field " + i.field + "]";
  if (!i.message.empty()) s += ": " + i.message;
  return s;
}

/// Manifest or option validation failure. Carries every issue found.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(std::vector<Issue> issues)
      : std::runtime_error(join(issues)), issues_(std::move(issues)) {}
  ValidationError(std::string code, std::string query_id, std::string field, std::string message)
      : ValidationError(std::vector<Issue>{{std::move(code), std::move(query_id), std::move(field), std::move(message)}}) {}

  const std::vector<Issue>& issues() const noexcept { return issues_; }

private:
  static std::string join(const std::vector<Issue>& issues) {
    std::string s;
    for (const auto& i : issues) s += (s.empty() ? "" : "\n") + describe(i);
    return s;
  }

  std::vector<Issue> issues_;
};

/// Referenced data could not be read or does not match the manifest.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace gateseg::harness
