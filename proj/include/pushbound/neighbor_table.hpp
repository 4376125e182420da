#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace pushbound {

// Dense row-major table of neighbor indices: `rows` entries of `k` indices each.
struct NeighborTable {
  std::size_t rows = 0;
  std::size_t k = 0;
  std::vector<std::uint32_t> indices;  // rows * k entries

  NeighborTable() = default;
  NeighborTable(std::size_t rows_, std::size_t k_)
      : rows(rows_), k(k_), indices(rows_ * k_, 0) {}

  std::uint32_t at(std::size_t row, std::size_t j) const { return indices[row * k + j]; }
  std::uint32_t& at(std::size_t row, std::size_t j) { return indices[row * k + j]; }
  bool empty() const { return indices.empty(); }
};

}  // namespace pushbound
