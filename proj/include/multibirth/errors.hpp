#ifndef MULTIBIRTH_ERRORS_HPP
#define MULTIBIRTH_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mbp {

// Base class for all errors raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Inverse transform failed to meet the stopping rule within max_terms,
// or a raw inversion landed outside [0,1] by more than the clamp slack.
struct NonConvergence : Error {
  using Error::Error;
};

// t <= 0 passed where a positive time is required.
struct InvalidTime : Error {
  using Error::Error;
};

// A lattice sweep produced non-finite values (ill-conditioned rates).
struct OverflowDomain : Error {
  using Error::Error;
};

// Event-count lattice cannot be bounded (open model with immigration).
struct UnboundedLattice : Error {
  using Error::Error;
};

// Invalid model parameter (e.g. negative rate constant).
struct InvalidParam : Error {
  using Error::Error;
};

// A transition probability fell below the floor without being structurally zero.
struct NumericalUnderflow : Error {
  using Error::Error;
};

// No feasible completion of a partially observed state.
struct EmptySupport : Error {
  using Error::Error;
};

// Sampler initial point has non-finite log posterior.
struct BadInit : Error {
  using Error::Error;
};

// Uniformization leaked more probability mass than the tolerance allows.
struct TruncationLeak : Error {
  using Error::Error;
};

// Malformed input file; message carries the file name and line number.
struct ParseError : Error {
  using Error::Error;
};

}  // namespace mbp

#endif
