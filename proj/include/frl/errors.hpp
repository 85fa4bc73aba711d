#pragma once

#include <stdexcept>
#include <string>

namespace frl {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed factor, CPT, network or field.
class ModelError : public Error {
public:
    using Error::Error;
};

/// Division by an exact zero while forming a ratio potential.
class ZeroDenominatorError : public ModelError {
public:
    using ModelError::ModelError;
};

class IngestError : public Error {
public:
    using Error::Error;
};

class LearningError : public Error {
public:
    using Error::Error;
};

class InferenceError : public Error {
public:
    using Error::Error;
};

/// The ratio-field and brute-force paths disagree on an instance.
class OracleMismatchError : public Error {
public:
    using Error::Error;
};

} // namespace frl
