#pragma once

#include <stdexcept>
#include <string>

namespace satnews {

// Coarse failure class; the CLI maps each kind onto its exit code.
enum class ErrorKind { config, data, numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

struct EmptyDocument : DataError {
  explicit EmptyDocument(const std::string& what = "document has no text") : DataError(what) {}
};

struct EmptyCorpus : DataError {
  explicit EmptyCorpus(const std::string& what = "corpus is empty") : DataError(what) {}
};

struct VocabMismatch : DataError {
  explicit VocabMismatch(const std::string& what) : DataError(what) {}
};

struct EmptyScores : DataError {
  explicit EmptyScores(const std::string& what = "score sequence is empty") : DataError(what) {}
};

struct DegenerateLabels : DataError {
  explicit DegenerateLabels(const std::string& what) : DataError(what) {}
};

struct DegeneratePairs : DataError {
  explicit DegeneratePairs(const std::string& what = "all paired differences are zero")
      : DataError(what) {}
};

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::numerical: return 4;
  }
  return 1;
}

}  // namespace satnews
