#pragma once

#include <stdexcept>
#include <string>

namespace cmcrl {

/// Invalid or inconsistent configuration (bad hyperparameter, malformed
/// config file, architecture mismatch).
class config_error : public std::runtime_error {
public:
  explicit config_error(const std::string& msg) : std::runtime_error("config: " + msg) {}
};

/// Dataset ingestion failure (missing directory, empty class, ...).
class ingest_error : public std::runtime_error {
public:
  explicit ingest_error(const std::string& msg) : std::runtime_error("ingest: " + msg) {}
};

/// File or serialization failure.
class io_error : public std::runtime_error {
public:
  explicit io_error(const std::string& msg) : std::runtime_error("io: " + msg) {}
};

/// Violated call contract (noise sample reaching the memory, empty input, ...).
class contract_error : public std::logic_error {
public:
  explicit contract_error(const std::string& msg) : std::logic_error("contract: " + msg) {}
};

/// Evaluation failure (empty test set, degenerate metric input).
class eval_error : public std::runtime_error {
public:
  explicit eval_error(const std::string& msg) : std::runtime_error("eval: " + msg) {}
};

inline void check_config(bool ok, const std::string& msg) {
  if (!ok) throw config_error(msg);
}

inline void check_contract(bool ok, const std::string& msg) {
  if (!ok) throw contract_error(msg);
}

}  // namespace cmcrl
