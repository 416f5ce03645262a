#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace iifrl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr const char* kVersion = "0.1.0";

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct ShapeMismatchError : Error {
    using Error::Error;
};
struct NonFiniteError : Error {
    using Error::Error;
};
struct StepAfterDoneError : Error {
    using Error::Error;
};
struct NotTabularError : Error {
    using Error::Error;
};
struct OracleUnavailableError : Error {
    using Error::Error;
};
struct NoRecordsError : Error {
    using Error::Error;
};
struct EmptyValidationError : Error {
    using Error::Error;
};
struct MissingCheckpointsError : Error {
    using Error::Error;
};
struct DegenerateInputError : Error {
    using Error::Error;
};
struct TooFewPositiveError : Error {
    using Error::Error;
};
struct NoEdgesError : Error {
    using Error::Error;
};
struct TooFewSeedsError : Error {
    using Error::Error;
};
struct ParseError : Error {
    using Error::Error;
};
struct UnknownKeyError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};

inline void require_same_size(Eigen::Index a, Eigen::Index b, const char* where) {
    if (a != b)
        throw ShapeMismatchError(std::string(where) + ": size " + std::to_string(a) +
                                 " vs " + std::to_string(b));
}

}  // namespace iifrl
