#pragma once

#include <stdexcept>
#include <string>

namespace ran {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor shape / dimension mismatch. Message names the offending dimension.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

/// Invalid or inconsistent configuration. Carries the field name so the CLI
/// can report it and exit with the config-error code.
class ConfigError : public Error {
public:
    ConfigError(std::string field_name, const std::string& msg)
        : Error("config field '" + field_name + "': " + msg), field(std::move(field_name)) {}
    std::string field;
};

/// A required input file is absent. Carries the path; maps to exit code 2.
class MissingArtifactError : public Error {
public:
    explicit MissingArtifactError(std::string missing_path)
        : Error("missing artifact: " + missing_path), path(std::move(missing_path)) {}
    std::string path;
};

/// Training aborted (NaN loss, degenerate dataset, ...).
class TrainError : public Error {
public:
    explicit TrainError(const std::string& msg) : Error(msg) {}
};

/// Corrupt or mismatched serialized data (checkpoints, feature files, images).
class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

} // namespace ran
