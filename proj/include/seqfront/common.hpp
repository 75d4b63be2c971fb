#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace seqfront {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatF = Mat<float>;
using MatD = Mat<double>;

/// Base class for all toolkit errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad configuration or schema violation. CLI exit code 2.
struct ConfigError : Error {
  using Error::Error;
};

/// Invalid input to an operation (empty word, too-short waveform, unknown
/// phone, out-of-vocabulary token, inconsistent state). CLI exit code 2.
struct InvalidInputError : Error {
  using Error::Error;
};

/// A required upstream artifact is missing (e.g. MTL at tap levels 2-5
/// without a pre-trained checkpoint). CLI exit code 3.
struct DependencyError : Error {
  using Error::Error;
};

/// Non-finite loss or prediction during training. CLI exit code 4.
struct NumericError : Error {
  using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidInputError(msg);
}

inline void require_config(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

}  // namespace seqfront
