#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace asyncsgd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using Iteration = std::int64_t;
using WorkerId = int;
using ClientId = int;

// Error hierarchy. Each failure mode named in the public contracts gets its own type so
// callers (notably the CLI) can map them to exit codes without string matching.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidSpecError : public Error {
public:
    using Error::Error;
};

class InvalidConfigError : public Error {
public:
    using Error::Error;
};

class NumericDomainError : public Error {
public:
    using Error::Error;
};

class SimulationDeadlock : public Error {
public:
    using Error::Error;
};

class IdentityViolation : public Error {
public:
    IdentityViolation(std::int64_t lhs, std::int64_t rhs)
        : Error("concurrency conservation identity violated: lhs=" + std::to_string(lhs) +
                " rhs=" + std::to_string(rhs)),
          lhs_(lhs),
          rhs_(rhs) {}

    std::int64_t lhs() const { return lhs_; }
    std::int64_t rhs() const { return rhs_; }

private:
    std::int64_t lhs_;
    std::int64_t rhs_;
};

class TuningFailed : public Error {
public:
    using Error::Error;
};

}  // namespace asyncsgd
