#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace merchcast {

/// K-fold partition of a training set. `fold[i]` is the fold of the record
/// at position i (whose id is `ids[i]`).
struct FoldAssignment {
    int k = 5;
    std::uint64_t seed = 0;
    std::vector<std::int64_t> ids;
    std::vector<int> fold;

    std::vector<std::size_t> validation_positions(int f) const;
    std::vector<std::size_t> training_positions(int f) const;
    std::vector<std::size_t> sizes() const;
};

}  // namespace merchcast
