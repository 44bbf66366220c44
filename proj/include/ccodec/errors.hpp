#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ccodec {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
  public:
    using Error::Error;
};

class InputError : public Error {
  public:
    using Error::Error;
};

class FramingError : public Error {
  public:
    using Error::Error;
};

class CheckpointError : public Error {
  public:
    using Error::Error;
};

// Malformed coded stream. offset is the byte position where parsing stopped.
class StreamError : public Error {
  public:
    StreamError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const { return offset_; }

  private:
    std::size_t offset_;
};

class TrainingError : public Error {
  public:
    using Error::Error;
};

} // namespace ccodec
