#pragma once

#include <stdexcept>
#include <string>

namespace mfcq {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class SingularParameterError : public Error {
public:
    using Error::Error;
};

class OverflowError : public Error {
public:
    using Error::Error;
};

class PositivityError : public Error {
public:
    using Error::Error;
};

class StabilityError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
};

class CertificateError : public Error {
public:
    using Error::Error;
};

class BandViolationError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, long episode)
        : Error(what + " (episode " + std::to_string(episode) + ")"), episode_(episode) {}
    long episode() const { return episode_; }

private:
    long episode_;
};

}  // namespace mfcq
