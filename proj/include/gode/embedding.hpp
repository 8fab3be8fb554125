// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string_view>

#include "gode/matrix.hpp"

namespace gode {

enum class Flavor { Initial, Convolved };

inline std::string_view to_string(Flavor f) noexcept {
  return f == Flavor::Initial ? "initial" : "convolved";
}

/// User and item embedding tables sharing one dimension.
struct EmbeddingSet {
  DenseMatrix users;
  DenseMatrix items;
  Flavor flavor = Flavor::Initial;

  std::size_t dim() const noexcept { return users.cols(); }
  std::size_t n_users() const noexcept { return users.rows(); }
  std::size_t n_items() const noexcept { return items.rows(); }

  friend bool operator==(const EmbeddingSet&, const EmbeddingSet&) = default;
};

}  // namespace gode
