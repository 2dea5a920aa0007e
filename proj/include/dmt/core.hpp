#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace dmt {

// Double precision throughout; gradient checks against central finite
// differences require it.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Error taxonomy. The CLI maps ConfigError/ParseError to exit code 2 and
// everything else to exit code 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IndexError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a training-path accessor touches the ground truth of an
// unlabeled row; those labels exist only for the noise analyzer.
struct SealedLabelError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace dmt
