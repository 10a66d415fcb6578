#pragma once

#include <stdexcept>
#include <string>

namespace vseg {

// Base of every error raised by the toolkit. `kind()` is a short stable tag
// used by the CLI to print machine-parsable error lines.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message) : Error("shape", message) {}
};

class GraphError : public Error {
 public:
  explicit GraphError(const std::string& message) : Error("graph", message) {}
};

class OptimizerError : public Error {
 public:
  explicit OptimizerError(const std::string& message) : Error("optimizer", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("config", message) {}
};

class CheckpointCorruptError : public Error {
 public:
  explicit CheckpointCorruptError(const std::string& message)
      : Error("checkpoint-corrupt", message) {}
};

class CheckpointVersionError : public Error {
 public:
  explicit CheckpointVersionError(const std::string& message)
      : Error("checkpoint-version", message) {}
};

class NrrdError : public Error {
 public:
  NrrdError(const std::string& message, int line = 0)
      : Error("nrrd", line > 0 ? "line " + std::to_string(line) + ": " + message : message),
        line_(line) {}

  // 1-based header line the error refers to, 0 when not tied to a line.
  int line() const noexcept { return line_; }

 private:
  int line_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io", message) {}
};

class GeometryError : public Error {
 public:
  explicit GeometryError(const std::string& message) : Error("geometry", message) {}
};

class PipelineError : public Error {
 public:
  explicit PipelineError(const std::string& message) : Error("pipeline", message) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& message) : Error("training", message) {}
};

class MetricError : public Error {
 public:
  explicit MetricError(const std::string& message) : Error("metric", message) {}
};

}  // namespace vseg
