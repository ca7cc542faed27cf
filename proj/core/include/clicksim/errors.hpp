#pragma once

#include <stdexcept>
#include <string>

namespace clicksim {

// Malformed or inconsistent input data (files, configs, records).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// A caller broke an API precondition (shape mismatch, stale cache, ...).
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

inline void check_contract(bool ok, const std::string& msg) {
  if (!ok) throw ContractError(msg);
}

inline void check_data(bool ok, const std::string& msg) {
  if (!ok) throw DataError(msg);
}

}  // namespace clicksim
