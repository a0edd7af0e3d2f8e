#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace maskforge {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed data handed to an operation (empty waveform, negative magnitudes, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Parameters that violate an operation's contract (bad geometry, lambda >= 1, ...).
class InvalidConfig : public Error {
 public:
  using Error::Error;
};

// Dimension disagreement between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Unparseable or version-mismatched file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Linearly dependent reference set in the metric decomposition.
class DegenerateReferences : public Error {
 public:
  using Error::Error;
};

// Aggregated validation failures; carries every violation, not just the first.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : Error(join(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& problems) {
    std::ostringstream out;
    out << "invalid configuration (" << problems.size() << " problem"
        << (problems.size() == 1 ? "" : "s") << "):";
    for (const auto& p : problems) out << "\n  - " << p;
    return out.str();
  }

  std::vector<std::string> problems_;
};

namespace detail {

inline void require(bool ok, const std::string& message) {
  if (!ok) throw InvalidInput(message);
}

template <typename E>
[[noreturn]] void fail(const std::string& message) {
  throw E(message);
}

}  // namespace detail

}  // namespace maskforge
