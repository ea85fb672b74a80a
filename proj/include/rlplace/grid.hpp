#pragma once

#include <cassert>
#include <cstdint>
#include <span>
#include <vector>

namespace rlplace {

struct Position {
  int x = 0;
  int y = 0;
  friend bool operator==(const Position&, const Position&) = default;
  friend auto operator<=>(const Position&, const Position&) = default;
};

// Row-major width x height matrix addressed as (x, y).
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {}

  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] int height() const { return height_; }
  [[nodiscard]] int size() const { return width_ * height_; }

  [[nodiscard]] bool contains(Position p) const {
    return p.x >= 0 && p.y >= 0 && p.x < width_ && p.y < height_;
  }
  [[nodiscard]] int index(int x, int y) const { return y * width_ + x; }
  [[nodiscard]] Position position(int index) const { return {index % width_, index / width_}; }

  T& at(int x, int y) {
    assert(contains({x, y}));
    return data_[static_cast<std::size_t>(index(x, y))];
  }
  const T& at(int x, int y) const {
    assert(contains({x, y}));
    return data_[static_cast<std::size_t>(index(x, y))];
  }
  T& at(Position p) { return at(p.x, p.y); }
  const T& at(Position p) const { return at(p.x, p.y); }

  T& operator[](int i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](int i) const { return data_[static_cast<std::size_t>(i)]; }

  std::span<T> cells() { return data_; }
  std::span<const T> cells() const { return data_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

// 1 = legal. A byte grid instead of Grid<bool> so cells are addressable.
using ActionMask = Grid<std::uint8_t>;

}  // namespace rlplace
