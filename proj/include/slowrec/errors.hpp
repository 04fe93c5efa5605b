#pragma once

#include <stdexcept>
#include <string>

namespace slowrec {

// Base for every library failure. name() is the stable identifier used by the CLI.
class Error : public std::runtime_error {
 public:
  Error(std::string name, const std::string& what)
      : std::runtime_error(what), name_(std::move(name)) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

class SingularPoint : public Error {
 public:
  SingularPoint(double x, const std::string& what) : Error("SingularPoint", what), x_(x) {}
  double x() const { return x_; }

 private:
  double x_;
};

class OrbitHitSingular : public Error {
 public:
  OrbitHitSingular(long iterate, double x, const std::string& what)
      : Error("OrbitHitSingular", what), iterate_(iterate), x_(x) {}
  long iterate() const { return iterate_; }
  double x() const { return x_; }

 private:
  long iterate_;
  double x_;
};

#define SLOWREC_SIMPLE_ERROR(Name)                                      \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(#Name, what) {}      \
  };

SLOWREC_SIMPLE_ERROR(InvalidParameters)
SLOWREC_SIMPLE_ERROR(InfiniteRecurrence)
SLOWREC_SIMPLE_ERROR(NoFeasibleThreshold)
SLOWREC_SIMPLE_ERROR(PullbackFailure)
SLOWREC_SIMPLE_ERROR(DepthOverflow)
SLOWREC_SIMPLE_ERROR(SampleBudgetExceeded)
SLOWREC_SIMPLE_ERROR(ExactCapExceeded)
SLOWREC_SIMPLE_ERROR(IntervalCountOverflow)
SLOWREC_SIMPLE_ERROR(InsufficientData)
SLOWREC_SIMPLE_ERROR(NoConvergence)
SLOWREC_SIMPLE_ERROR(ConfigError)

#undef SLOWREC_SIMPLE_ERROR

}  // namespace slowrec
