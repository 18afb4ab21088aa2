#pragma once

#include <stdexcept>
#include <string>

namespace j3dai {

// Base of every error the toolchain raises. Messages always name the
// offending element (field, tensor, layer, line) so a CLI user can act on them.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class QuantError : public Error {
public:
    using Error::Error;
};

class AssemblyError : public Error {
public:
    AssemblyError(int line, const std::string& msg)
        : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

class SimError : public Error {
public:
    using Error::Error;
};

class MappingError : public Error {
public:
    using Error::Error;
};

class CodegenError : public Error {
public:
    using Error::Error;
};

} // namespace j3dai
