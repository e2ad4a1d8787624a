#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gfpn {

/// Group id -> owned element indices, stored as CSR offsets. Groups are
/// disjoint. Used for neighbourhood reductions and grid-cell pooling.
class SegmentIndex {
 public:
  SegmentIndex() : offsets_{0} {}

  /// Throws ContractError if an element appears in more than one group.
  static SegmentIndex from_groups(const std::vector<std::vector<std::size_t>>& groups);
  /// Groups [offsets[g], offsets[g+1]) over elements 0..offsets.back()-1.
  static SegmentIndex contiguous(std::vector<std::size_t> offsets);

  std::size_t group_count() const { return offsets_.size() - 1; }
  std::size_t element_count() const { return indices_.size(); }
  std::span<const std::size_t> group(std::size_t g) const {
    return {indices_.data() + offsets_[g], offsets_[g + 1] - offsets_[g]};
  }
  std::size_t group_size(std::size_t g) const { return offsets_[g + 1] - offsets_[g]; }
  /// Largest element index + 1 (0 when empty).
  std::size_t max_element_bound() const { return bound_; }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> indices_;
  std::size_t bound_ = 0;
};

}  // namespace gfpn
