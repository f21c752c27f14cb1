#pragma once

#include <stdexcept>
#include <string>

namespace urpca {

// I/O failure: missing file, unreadable or unwritable path.
class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed content: bad magic, wrong shape, truncated record.
class FormatError : public std::runtime_error {
public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// File was written by an incompatible format revision.
class VersionError : public std::runtime_error {
public:
  explicit VersionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace urpca
