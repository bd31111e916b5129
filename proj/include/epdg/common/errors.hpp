// errors.hpp
//
// exception types shared across the toolkit

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace epdg {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ike codec
class InvariantViolation : public Error {
public:
    using Error::Error;
};

class Truncated : public Error {
public:
    using Error::Error;
};

class MalformedChain : public Error {
public:
    using Error::Error;
};

class MalformedPayload : public Error {
public:
    using Error::Error;
};

class EmptyProposal : public Error {
public:
    using Error::Error;
};

// dh engine
class UnknownGroup : public Error {
public:
    explicit UnknownGroup(int id)
        : Error("unknown MODP group " + std::to_string(id)), id_(id) {}
    int id() const noexcept { return id_; }

private:
    int id_;
};

class InvalidPeerKey : public Error {
public:
    using Error::Error;
};

// discovery
class InvalidPlmn : public Error {
public:
    using Error::Error;
};

class ResolverUnavailable : public Error {
public:
    using Error::Error;
};

// transport / scanner
class TransportFailure : public Error {
public:
    using Error::Error;
};

class AddressInUse : public Error {
public:
    using Error::Error;
};

class UnauthorizedTarget : public Error {
public:
    using Error::Error;
};

// key analysis
class DomainError : public Error {
public:
    using Error::Error;
};

class MalformedBlacklist : public Error {
public:
    MalformedBlacklist(std::size_t line, const std::string& what)
        : Error("blacklist line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// attack simulation
class PreconditionError : public Error {
public:
    using Error::Error;
};

// malformed input documents (scenario, fleet, config records)
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace epdg
