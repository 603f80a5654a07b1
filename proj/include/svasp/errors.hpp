#pragma once

#include <stdexcept>
#include <string>

namespace svasp {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeMismatch : Error {
  using Error::Error;
};
struct BadRank : Error {
  using Error::Error;
};
struct NonFinite : Error {
  using Error::Error;
};
struct NotScalar : Error {
  using Error::Error;
};
struct LengthMismatch : Error {
  using Error::Error;
};
struct PrefixGap : Error {
  using Error::Error;
};
struct DegenerateCrop : Error {
  using Error::Error;
};
struct MissingClass : Error {
  using Error::Error;
};
struct LabelOutOfRange : Error {
  using Error::Error;
};
struct InsufficientData : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct InvalidConfig : Error {
  using Error::Error;
};
struct VersionMismatch : Error {
  using Error::Error;
};

}  // namespace svasp
