#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace voxgrid {

// Exception taxonomy shared by every module. The CLI maps these onto exit
// codes: NumericalError -> 3, everything else -> 2.

/// Invalid argument supplied by the caller (index out of range, bad threshold).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data is inconsistent (unknown element, malformed record).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Required configuration is missing (e.g. density maps for a density mode).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary file does not follow its documented layout.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Tensor shapes do not line up for a layer.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or gradient during training.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, int epoch)
      : std::runtime_error(what), epoch_(epoch) {}

  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace voxgrid
