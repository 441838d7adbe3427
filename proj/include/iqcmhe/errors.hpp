#pragma once

#include <stdexcept>
#include <string>

namespace iqcmhe {

struct DimMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct BadParams : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NotPositiveDefinite : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotPsd : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DomainViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TooManyVertices : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidCertificate : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace iqcmhe
