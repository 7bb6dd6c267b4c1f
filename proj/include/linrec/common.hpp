#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace linrec {

using index_t = std::int64_t;

/// Thrown when a caller breaks an operation's documented contract
/// (shape mismatch, invalid plan, bad configuration value).
class ContractViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void contract_fail(const std::string& msg) {
  throw ContractViolation(msg);
}

inline void require(bool ok, const char* msg) {
  if (!ok) contract_fail(msg);
}

enum class Activation { Tanh, Identity, Relu };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
  }
  return "?";
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "identity") return Activation::Identity;
  if (s == "relu") return Activation::Relu;
  contract_fail("unknown activation tag: " + s);
}

template <class S>
inline S sigmoid(S z) {
  return S(1) / (S(1) + std::exp(-z));
}

template <class S>
inline S apply_activation(Activation a, S z) {
  switch (a) {
    case Activation::Tanh: return std::tanh(z);
    case Activation::Identity: return z;
    case Activation::Relu: return z > S(0) ? z : S(0);
  }
  return z;
}

// Derivative expressed through the activation value itself; all three
// supported activations admit this form.
template <class S>
inline S activation_deriv_from_value(Activation a, S v) {
  switch (a) {
    case Activation::Tanh: return S(1) - v * v;
    case Activation::Identity: return S(1);
    case Activation::Relu: return v > S(0) ? S(1) : S(0);
  }
  return S(1);
}

}  // namespace linrec
