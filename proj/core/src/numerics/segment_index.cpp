#include "gfpn/numerics/segment_index.hpp"

#include <algorithm>
#include <string>

#include "gfpn/errors.hpp"

namespace gfpn {

SegmentIndex SegmentIndex::from_groups(const std::vector<std::vector<std::size_t>>& groups) {
  SegmentIndex idx;
  idx.offsets_.reserve(groups.size() + 1);
  for (const auto& g : groups) {
    idx.indices_.insert(idx.indices_.end(), g.begin(), g.end());
    idx.offsets_.push_back(idx.indices_.size());
  }
  for (auto i : idx.indices_) idx.bound_ = std::max(idx.bound_, i + 1);

  std::vector<char> seen(idx.bound_, 0);
  for (auto i : idx.indices_) {
    if (seen[i]) {
      throw ContractError("segment index: element " + std::to_string(i) +
                          " belongs to more than one group");
    }
    seen[i] = 1;
  }
  return idx;
}

SegmentIndex SegmentIndex::contiguous(std::vector<std::size_t> offsets) {
  if (offsets.empty() || offsets.front() != 0 || !std::is_sorted(offsets.begin(), offsets.end())) {
    throw ContractError("segment index: offsets must start at 0 and be non-decreasing");
  }
  SegmentIndex idx;
  idx.offsets_ = std::move(offsets);
  idx.indices_.resize(idx.offsets_.back());
  for (std::size_t i = 0; i < idx.indices_.size(); ++i) idx.indices_[i] = i;
  idx.bound_ = idx.indices_.size();
  return idx;
}

}  // namespace gfpn
