#include "gfpn/segmentation/merge_tree.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>
#include <utility>
#include <vector>

namespace gfpn {

std::vector<double> sobel_magnitude(const Image& image) {
  const std::size_t h = image.height();
  const std::size_t w = image.width();
  std::vector<double> gray(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      gray[y * w + x] = (image.at(y, x, 0) + image.at(y, x, 1) + image.at(y, x, 2)) / 3.0;

  auto g = [&](long long y, long long x) {
    y = std::clamp<long long>(y, 0, static_cast<long long>(h) - 1);
    x = std::clamp<long long>(x, 0, static_cast<long long>(w) - 1);
    return gray[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  };
  const double norm = 4.0 * std::sqrt(2.0);
  std::vector<double> mag(h * w);
  for (long long y = 0; y < static_cast<long long>(h); ++y) {
    for (long long x = 0; x < static_cast<long long>(w); ++x) {
      const double gx = (g(y - 1, x + 1) + 2.0 * g(y, x + 1) + g(y + 1, x + 1)) -
                        (g(y - 1, x - 1) + 2.0 * g(y, x - 1) + g(y + 1, x - 1));
      const double gy = (g(y + 1, x - 1) + 2.0 * g(y + 1, x) + g(y + 1, x + 1)) -
                        (g(y - 1, x - 1) + 2.0 * g(y - 1, x) + g(y - 1, x + 1));
      mag[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] =
          std::sqrt(gx * gx + gy * gy) / norm;
    }
  }
  return mag;
}

namespace {

struct Boundary {
  double strength = 0.0;  // summed edge gradients
  std::size_t length = 0;
};

using Neighbor = std::pair<std::size_t, Boundary>;  // sorted by id
using Key = std::tuple<double, std::size_t, std::size_t>;  // cost, lo, hi

struct Region {
  double sum[3] = {0.0, 0.0, 0.0};
  std::size_t pixels = 0;
  std::vector<Neighbor> neighbors;
  bool alive = false;
  Key best{0.0, 0, 0};  // cheapest merge involving this region
};

// Binary min-heap over region ids with one entry per region, ordered by the
// regions' best keys. Entries are updated in place.
class RegionHeap {
 public:
  static constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);

  RegionHeap(const std::vector<Region>& regions) : regions_(regions), pos_(regions.size(), kAbsent) {}

  bool empty() const { return heap_.empty(); }
  std::size_t top() const { return heap_.front(); }

  void update(std::size_t r) {
    if (pos_[r] == kAbsent) {
      pos_[r] = heap_.size();
      heap_.push_back(r);
    }
    sift_down(sift_up(pos_[r]));
  }

  void remove(std::size_t r) {
    const std::size_t i = pos_[r];
    if (i == kAbsent) return;
    pos_[r] = kAbsent;
    const std::size_t last = heap_.back();
    heap_.pop_back();
    if (i == heap_.size()) return;
    heap_[i] = last;
    pos_[last] = i;
    sift_down(sift_up(i));
  }

 private:
  bool less(std::size_t i, std::size_t j) const { return regions_[heap_[i]].best < regions_[heap_[j]].best; }
  void swap_at(std::size_t i, std::size_t j) {
    std::swap(heap_[i], heap_[j]);
    pos_[heap_[i]] = i;
    pos_[heap_[j]] = j;
  }
  std::size_t sift_up(std::size_t i) {
    while (i > 0 && less(i, (i - 1) / 2)) {
      swap_at(i, (i - 1) / 2);
      i = (i - 1) / 2;
    }
    return i;
  }
  void sift_down(std::size_t i) {
    for (;;) {
      std::size_t smallest = i;
      const std::size_t l = 2 * i + 1;
      if (l < heap_.size() && less(l, smallest)) smallest = l;
      if (l + 1 < heap_.size() && less(l + 1, smallest)) smallest = l + 1;
      if (smallest == i) return;
      swap_at(i, smallest);
      i = smallest;
    }
  }

  const std::vector<Region>& regions_;
  std::vector<std::size_t> heap_;
  std::vector<std::size_t> pos_;
};

// Every live region with a neighbour sits in the heap under its cheapest
// merge, so the heap minimum is the global minimum over adjacent pairs in
// (cost, lower id, higher id) order.
class Agglomerator {
 public:
  Agglomerator(const Image& image, const MergeCostOptions& options)
      : options_(options), regions_(2 * image.pixel_count()), heap_(regions_) {
    const std::size_t h = image.height();
    const std::size_t w = image.width();
    const auto grad = sobel_magnitude(image);
    for (std::size_t p = 0; p < h * w; ++p) {
      Region& r = regions_[p];
      for (std::size_t c = 0; c < 3; ++c) r.sum[c] = image.at(p / w, p % w, c);
      r.pixels = 1;
      r.alive = true;
    }
    // Visiting pixels in row-major order keeps every neighbour list sorted.
    for (std::size_t p = 0; p < h * w; ++p) {
      const std::size_t y = p / w;
      const std::size_t x = p % w;
      auto edge = [&](std::size_t q) { return Boundary{0.5 * (grad[p] + grad[q]), 1}; };
      if (y > 0) regions_[p].neighbors.emplace_back(p - w, edge(p - w));
      if (x > 0) regions_[p].neighbors.emplace_back(p - 1, edge(p - 1));
      if (x + 1 < w) regions_[p].neighbors.emplace_back(p + 1, edge(p + 1));
      if (y + 1 < h) regions_[p].neighbors.emplace_back(p + w, edge(p + w));
    }
    for (std::size_t p = 0; p < h * w; ++p) refresh(p);
    next_id_ = h * w;
  }

  MergeTree run(std::size_t height, std::size_t width) {
    MergeTree tree;
    tree.height = height;
    tree.width = width;
    tree.merges.reserve(height * width);
    while (!heap_.empty()) {
      const auto [cost, lo, hi] = regions_[heap_.top()].best;
      const std::size_t m = merge(lo, hi);
      tree.merges.push_back(MergeRecord{lo, hi, m, cost});
    }
    return tree;
  }

 private:
  double cost(std::size_t a, std::size_t b, const Boundary& boundary) const {
    const Region& ra = regions_[a];
    const Region& rb = regions_[b];
    double d2 = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      const double diff = ra.sum[c] / static_cast<double>(ra.pixels) -
                          rb.sum[c] / static_cast<double>(rb.pixels);
      d2 += diff * diff;
    }
    const double color = std::sqrt(d2) / std::sqrt(3.0);
    const double edge = boundary.strength / static_cast<double>(boundary.length);
    return color + options_.boundary_weight * edge;
  }

  // Recomputes the best merge of r from scratch.
  void refresh(std::size_t r) {
    Region& reg = regions_[r];
    if (reg.neighbors.empty()) {
      heap_.remove(r);
      return;
    }
    bool first = true;
    for (const auto& [n, bd] : reg.neighbors) {
      const Key cand{cost(r, n, bd), std::min(r, n), std::max(r, n)};
      if (first || cand < reg.best) reg.best = cand;
      first = false;
    }
    heap_.update(r);
  }

  std::size_t merge(std::size_t a, std::size_t b) {
    const std::size_t m = next_id_++;
    Region& ra = regions_[a];
    Region& rb = regions_[b];
    Region& rm = regions_[m];
    for (std::size_t c = 0; c < 3; ++c) rm.sum[c] = ra.sum[c] + rb.sum[c];
    rm.pixels = ra.pixels + rb.pixels;
    rm.alive = true;

    // Sorted union of both boundaries, minus the one between a and b.
    auto& na = ra.neighbors;
    auto& nb = rb.neighbors;
    rm.neighbors.reserve(na.size() + nb.size());
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < na.size() || j < nb.size()) {
      Neighbor next;
      if (j == nb.size() || (i < na.size() && na[i].first < nb[j].first)) {
        next = na[i++];
      } else if (i == na.size() || nb[j].first < na[i].first) {
        next = nb[j++];
      } else {
        next = na[i++];
        next.second.strength += nb[j].second.strength;
        next.second.length += nb[j++].second.length;
      }
      if (next.first != a && next.first != b) rm.neighbors.push_back(next);
    }
    ra.alive = rb.alive = false;
    std::vector<Neighbor>().swap(na);
    std::vector<Neighbor>().swap(nb);
    heap_.remove(a);
    heap_.remove(b);

    for (const auto& [n, bd] : rm.neighbors) {
      auto& list = regions_[n].neighbors;
      std::erase_if(list, [&](const Neighbor& e) { return e.first == a || e.first == b; });
      list.emplace_back(m, bd);  // m exceeds every existing id
    }

    refresh(m);
    for (const auto& [n, bd] : rm.neighbors) {
      Region& rn = regions_[n];
      const auto& [c, lo, hi] = rn.best;
      if (lo == a || lo == b || hi == a || hi == b) {
        refresh(n);
        continue;
      }
      const Key cand{cost(n, m, bd), n, m};
      if (cand < rn.best) {
        rn.best = cand;
        heap_.update(n);
      }
    }
    return m;
  }

  MergeCostOptions options_;
  std::vector<Region> regions_;
  RegionHeap heap_;
  std::size_t next_id_ = 0;
};

}  // namespace

MergeTree build_merge_tree(const Image& image, const MergeCostOptions& options) {
  Agglomerator agg(image, options);
  return agg.run(image.height(), image.width());
}

}  // namespace gfpn
