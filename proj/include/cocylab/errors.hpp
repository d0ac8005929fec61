#pragma once

#include <stdexcept>
#include <string>

namespace cocylab {

// Malformed input: probability vectors off the simplex, non-stochastic
// kernels, mis-sized matrices, bad config documents.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An index or horizon outside the sampled data.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// An operation's precondition does not hold (e.g. non-invariant subspace,
// nonzero mean for a recurrence test).
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NonUniqueStationary : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ContainmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UngroupableSpectrum : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvarianceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A request that exceeds desk-scale memory or time.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cocylab
