#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace scgan {

/// Input rejected by a contract check (bad shapes, bad parameters, bad config).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or grid shape does not satisfy an architecture or operation contract.
class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A pipeline stage was invoked before the artifacts it depends on exist.
class PreconditionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Spatial extent of a 3D grid, x fastest in memory.
struct Dims {
  int x = 0;
  int y = 0;
  int z = 0;

  [[nodiscard]] std::size_t count() const {
    return static_cast<std::size_t>(x) * static_cast<std::size_t>(y) * static_cast<std::size_t>(z);
  }
  [[nodiscard]] int operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  int& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }
  [[nodiscard]] std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(x) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(y) * static_cast<std::size_t>(k));
  }
  [[nodiscard]] bool contains(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < x && j < y && k < z;
  }
  bool operator==(const Dims&) const = default;
  [[nodiscard]] std::string str() const;
};

}  // namespace scgan
