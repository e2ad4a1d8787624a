// Acceptance suite: one PASS/FAIL line per criterion. Arguments select
// criteria by number (default: all seven). Exit status is non-zero if any
// selected criterion fails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gfpn/bridge/bridge.hpp"
#include "gfpn/gnn/graphfpn.hpp"
#include "gfpn/graph/graph_pyramid.hpp"
#include "gfpn/pipeline/ablation.hpp"
#include "gfpn/pipeline/checkpoint.hpp"
#include "gfpn/pipeline/config.hpp"
#include "gfpn/pipeline/dataset.hpp"
#include "gfpn/pipeline/gradcheck_suite.hpp"
#include "gfpn/pipeline/train.hpp"
#include "gfpn/segmentation/hierarchy.hpp"
#include "oracles.hpp"

namespace {

using namespace gfpn;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string fixed(double v, int digits = 2) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

// Counts failed checks and remembers the first one.
class Failures {
 public:
  void check(bool ok, const std::string& what) {
    if (ok) return;
    if (count_++ == 0) first_ = what;
  }
  std::size_t count() const { return count_; }
  std::string summary() const { return count_ ? std::to_string(count_) + " failed, first: " + first_ : ""; }

 private:
  std::size_t count_ = 0;
  std::string first_;
};

std::size_t ceil_div(std::size_t n, std::size_t d) { return (n + d - 1) / d; }

bool region_connected(const Partition& p, std::size_t region) {
  const auto& pixels = p.pixels(region);
  if (pixels.empty()) return false;
  const std::size_t w = p.width();
  const std::size_t h = p.height();
  std::set<std::size_t> seen{pixels[0]};
  std::vector<std::size_t> stack{pixels[0]};
  while (!stack.empty()) {
    const std::size_t q = stack.back();
    stack.pop_back();
    const std::size_t y = q / w;
    const std::size_t x = q % w;
    std::vector<std::size_t> next;
    if (y > 0) next.push_back(q - w);
    if (y + 1 < h) next.push_back(q + w);
    if (x > 0) next.push_back(q - 1);
    if (x + 1 < w) next.push_back(q + 1);
    for (auto n : next) {
      if (p.labels()[n] == region && seen.insert(n).second) stack.push_back(n);
    }
  }
  return seen.size() == pixels.size();
}

// Per node: incident hierarchical edges ranked by similarity (descending,
// ties to the lower peer). Checks that at least ceil(m/2) survive and that
// every removed edge sits in the bottom half at both endpoints.
void check_pruning(const GraphPyramid& g, Failures& f, const std::string& where) {
  std::vector<std::vector<std::pair<double, std::size_t>>> incident(g.node_count());
  for (const auto& e : g.hierarchical) {
    incident[e.descendant].push_back({e.similarity, e.ancestor});
    incident[e.ancestor].push_back({e.similarity, e.descendant});
  }
  std::vector<std::vector<std::size_t>> ranked(g.node_count());
  for (std::size_t n = 0; n < g.node_count(); ++n) {
    auto& list = incident[n];
    std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (const auto& [sim, peer] : list) ranked[n].push_back(peer);
  }
  auto rank = [&](std::size_t node, std::size_t peer) {
    return static_cast<std::size_t>(std::find(ranked[node].begin(), ranked[node].end(), peer) -
                                    ranked[node].begin());
  };
  std::vector<std::size_t> kept(g.node_count(), 0);
  for (const auto& e : g.hierarchical) {
    if (e.kept) {
      ++kept[e.descendant];
      ++kept[e.ancestor];
      continue;
    }
    const std::size_t md = ranked[e.descendant].size();
    const std::size_t ma = ranked[e.ancestor].size();
    f.check(rank(e.descendant, e.ancestor) >= ceil_div(md, 2) && rank(e.ancestor, e.descendant) >= ceil_div(ma, 2),
            where + ": removed edge in a top half");
  }
  for (std::size_t n = 0; n < g.node_count(); ++n) {
    f.check(kept[n] >= ceil_div(ranked[n].size(), 2), where + ": node keeps fewer than half its edges");
  }
}

Outcome structural_invariants() {
  const double start = cpu_seconds();
  Failures f;
  Rng rng(101);
  const std::size_t sizes[] = {16, 32, 48, 64};
  const std::size_t finest[] = {256, 100, 64, 17, 1};
  for (std::size_t i = 0; i < 100; ++i) {
    const std::size_t side = sizes[i % 4];
    const std::size_t n = std::min(finest[i % 5], side * side);
    const auto sample = gen_dataset(derive_seed(5150, i), 1, side).front();
    const auto h = extract_hierarchy(build_merge_tree(sample.image), n);
    const std::string where = "image " + std::to_string(i);
    const auto counts = level_counts(n);
    std::size_t expected_nodes = 0;
    for (std::size_t l = 0; l < kHierarchyLevels; ++l) {
      const Partition& p = h.levels[l];
      const std::size_t want = ceil_div(n, std::size_t{1} << (2 * l));
      expected_nodes += want;
      f.check(counts[l] == want && p.region_count() == want, where + ": region count law");
      f.check(p.labels().size() == side * side, where + ": label map size");
      std::size_t covered = 0;
      for (std::size_t r = 0; r < p.region_count(); ++r) {
        covered += p.pixels(r).size();
        f.check(region_connected(p, r), where + ": region not connected");
      }
      f.check(covered == side * side, where + ": regions do not cover the image");
      for (auto lab : p.labels()) f.check(lab < p.region_count(), where + ": label out of range");
      if (l + 1 < kHierarchyLevels) {
        const auto& next = h.levels[l + 1].labels();
        for (std::size_t q = 0; q < p.labels().size(); ++q) {
          f.check(h.parents[l][p.labels()[q]] == next[q], where + ": levels not nested");
        }
      }
    }
    const GraphPyramid g = build_graph(h);
    f.check(g.node_count() == expected_nodes, where + ": node count formula");
    const Tensor feats = uniform({g.node_count(), 8}, -1, 1, rng);
    check_pruning(prune_hierarchical(g, feats, PruneRule::kUnion), f, where);
  }
  const double seconds = cpu_seconds() - start;
  f.check(seconds < 60.0, "over the 60 s budget");
  return {f.count() == 0, "100 images, " + fixed(seconds) + " s CPU" + (f.count() ? "; " + f.summary() : "")};
}

Outcome gradient_fidelity() {
  const double start = cpu_seconds();
  Failures f;
  double worst = 0.0;
  std::string worst_name;
  std::size_t cases = 0;
  for (auto level : {GradCheckLevel::kMicro, GradCheckLevel::kLayer, GradCheckLevel::kFull}) {
    for (const auto& c : run_gradcheck_suite(level)) {
      ++cases;
      f.check(c.result.max_rel_error < 1e-4 && c.result.coordinates_checked > 0, c.name);
      if (c.result.max_rel_error >= worst) {
        worst = c.result.max_rel_error;
        worst_name = c.name;
      }
    }
  }
  const double seconds = cpu_seconds() - start;
  f.check(seconds < 120.0, "over the 120 s budget");
  std::ostringstream d;
  d << cases << " cases, worst rel. err " << worst << " (" << worst_name << "), " << fixed(seconds) << " s CPU";
  if (f.count()) d << "; " << f.summary();
  return {f.count() == 0, d.str()};
}

std::vector<std::pair<std::size_t, std::size_t>> random_edges(std::size_t n, std::size_t m, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::set<std::pair<std::size_t, std::size_t>> e;
  for (std::size_t t = 0; t < m; ++t) {
    const std::size_t u = pick(rng);
    const std::size_t v = pick(rng);
    if (u != v) e.insert({std::min(u, v), std::max(u, v)});
  }
  return {e.begin(), e.end()};
}

Outcome analytic_identities() {
  Failures f;
  Rng rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 5 + trial;
    const std::size_t d = 2 + trial % 6;
    const auto nb = make_neighborhoods(n, random_edges(n, 2 * n, rng));
    Tape tape;
    GnnLayerParams p = init_gnn_layer(d, rng);
    const Var h = tape.constant(uniform({n, d}, -2, 2, rng));

    const auto v = gfpn::bind(tape, p, false);
    f.check(channel_self_attention(h, nb, v).value().equals(h.value()), "beta = 0 is not the identity");

    p.gate = Tensor::zeros({d, d});
    const auto zero_gate = gfpn::bind(tape, p, false);
    const Tensor gated = channel_wise_attention(h, nb, zero_gate).value();
    for (std::size_t i = 0; i < gated.size(); ++i) {
      f.check(gated[i] == 0.5 * h.value()[i], "W1 = 0 does not gate uniformly by 0.5");
    }

    const Tensor alpha = spatial_attention_coefficients(h, nb, v).value();
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (auto e : nb.groups.group(i)) s += alpha[e];
      f.check(std::abs(s - 1.0) <= 1e-12, "attention row does not sum to 1");
    }
    const Tensor x = channel_similarity(h, nb).value();
    for (std::size_t r = 0; r < n * d; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += x[r * d + c];
      f.check(std::abs(s - 1.0) <= 1e-12, "similarity row does not sum to 1");
    }

    const std::size_t side = 4 << (trial % 3);
    const auto labels = oracle::random_partition(side, side, 3 + trial, rng);
    const CellAssignment cells = assign_cells(Partition(side, side, labels), side / 2, side / 2);
    const std::size_t dp = 2 + trial % 4;
    BridgeLevelParams bp = init_bridge_level(3, dp, dp, rng);
    Tensor fuse = Tensor::zeros({dp, 2 * dp});
    std::vector<double> fd(fuse.data().begin(), fuse.data().end());
    for (std::size_t k = 0; k < dp; ++k) fd[k * 2 * dp + k] = 1.0;
    bp.fuse = Tensor({dp, 2 * dp}, fd);
    const auto bv = gfpn::bind(tape, bp, false);
    const Var level = tape.constant(uniform({dp, side / 2, side / 2}, -1, 1, rng));
    const Var nodes = tape.constant(uniform({cells.superpixel_count(), dp}, -1, 1, rng));
    f.check(gnn_to_cnn(nodes, cells, level, bv).value().equals(level.value()), "fuse [I|0] does not return P");
  }
  return {f.count() == 0, "20 random instances per identity" + (f.count() ? "; " + f.summary() : "")};
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Outcome oracle_equivalence() {
  Failures f;
  Rng rng(404);
  const std::size_t trials = 20;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::string where = " (instance " + std::to_string(t) + ")";

    const std::size_t rows = 10 + t;
    const Tensor x = uniform({rows, 3}, -1, 1, rng);
    std::vector<std::size_t> perm(rows);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<std::size_t>> groups(1 + t % 5);
    for (std::size_t i = 0; i < rows; ++i) groups[i % groups.size()].push_back(perm[i]);
    const auto idx = SegmentIndex::from_groups(groups);
    const std::pair<ops::Reduce, oracle::Mode> modes[] = {{ops::Reduce::kMean, oracle::Mode::kMean},
                                                          {ops::Reduce::kMax, oracle::Mode::kMax},
                                                          {ops::Reduce::kMin, oracle::Mode::kMin},
                                                          {ops::Reduce::kSum, oracle::Mode::kSum}};
    for (const auto& [mode, omode] : modes) {
      Tape tape;
      f.check(oracle::to_rows(ops::segment_reduce(tape.constant(x), idx, mode).value()) ==
                  oracle::segment_reduce(oracle::to_rows(x), groups, omode),
              "segment_reduce" + where);
    }

    const std::size_t stride = 1 + t % 2;
    const std::size_t ks = t % 3 == 0 ? 1 : 3;
    const std::size_t side = 5 + t % 6;
    const Tensor img = uniform({1 + t % 3, side, side}, -1, 1, rng);
    const Tensor k = uniform({1 + t % 4, 1 + t % 3, ks, ks}, -1, 1, rng);
    {
      Tape tape;
      f.check(values(ops::conv2d(tape.constant(img), tape.constant(k), stride).value()) ==
                  oracle::conv2d(img, k, stride),
              "conv2d" + where);
    }

    const auto labels = oracle::random_partition(16, 16, 4 + 3 * t, rng);
    const Partition p(16, 16, labels);
    const auto got = adjacency(p);
    const auto want = oracle::adjacency(16, 16, labels, p.region_count());
    bool same = got.size() == want.size();
    for (std::size_t r = 0; same && r < got.size(); ++r) {
      same = std::set<std::size_t>(got[r].begin(), got[r].end()) == want[r];
    }
    f.check(same, "adjacency" + where);

    for (std::size_t g : {16u, 8u, 4u, 2u}) {
      f.check(assign_cells(p, g, g).owner == oracle::cell_owners(16, 16, labels, g, g), "cell assignment" + where);
    }

    std::array<Partition, kHierarchyLevels> levels;
    auto lab = labels;
    levels[0] = p;
    for (std::size_t l = 1; l < kHierarchyLevels; ++l) {
      const std::size_t count = levels[l - 1].region_count();
      const std::size_t keep = ceil_div(count, 4);
      std::vector<std::size_t> parent(count);
      for (std::size_t r = 0; r < count; ++r) {
        parent[r] = r < keep ? r : std::uniform_int_distribution<std::size_t>(0, keep - 1)(rng);
      }
      for (auto& v : lab) v = parent[v];
      levels[l] = Partition::densified(16, 16, lab);
    }
    const GraphPyramid g = build_graph(hierarchy_from_levels(levels));
    const Tensor feats = uniform({g.node_count(), 4}, -1, 1, rng);
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (const auto& e : g.hierarchical) edges.push_back({e.descendant, e.ancestor});
    for (auto rule : {PruneRule::kUnion, PruneRule::kIntersection}) {
      std::set<std::pair<std::size_t, std::size_t>> kept;
      for (const auto& e : prune_hierarchical(g, feats, rule).hierarchical)
        if (e.kept) kept.insert({e.descendant, e.ancestor});
      f.check(kept == oracle::prune(edges, oracle::to_rows(feats), rule == PruneRule::kIntersection),
              "pruning" + where);
    }
  }
  return {f.count() == 0,
          std::to_string(trials) + " instances each: segment_reduce, conv2d, adjacency, cells, pruning" +
              (f.count() ? "; " + f.summary() : "")};
}

Outcome directional_training() {
  Failures f;
  std::ostringstream d;
  double graph_sum = 0.0;
  double base_sum = 0.0;
  std::vector<double> graph_acc;
  std::vector<double> base_acc;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    for (bool graphfpn : {true, false}) {
      TrainConfig config;
      config.seed = seed;
      config.ablation.graphfpn = graphfpn;
      const double start = cpu_seconds();
      const TrainResult r = train(config);
      const double seconds = cpu_seconds() - start;
      const double acc = r.metrics.back().test_accuracy;
      (graphfpn ? graph_acc : base_acc).push_back(acc);
      (graphfpn ? graph_sum : base_sum) += acc;
      f.check(seconds <= 600.0, "seed " + std::to_string(seed) + " over 10 min CPU");
      std::cerr << "  seed " << seed << (graphfpn ? " graphfpn " : " baseline ") << fixed(100.0 * acc)
                << "% in " << fixed(seconds, 0) << " s CPU\n";
    }
  }
  const double graph_mean = 100.0 * graph_sum / 3.0;
  const double base_mean = 100.0 * base_sum / 3.0;
  f.check(graph_mean >= base_mean + 1.0, "mean gain below 1.0 point");
  for (std::size_t s = 0; s < 3; ++s) {
    f.check(100.0 * graph_acc[s] >= 100.0 * base_acc[s] - 0.5, "seed " + std::to_string(s) + " below baseline - 0.5");
  }
  d << "graphfpn " << fixed(graph_mean) << "% vs baseline " << fixed(base_mean) << "% (";
  for (std::size_t s = 0; s < 3; ++s) {
    d << (s ? ", " : "") << fixed(100.0 * graph_acc[s]) << "/" << fixed(100.0 * base_acc[s]);
  }
  d << ")";
  if (f.count()) d << "; " << f.summary();
  return {f.count() == 0, d.str()};
}

Outcome ablation_harness() {
  Failures f;
  TrainConfig base = micro_config();
  base.schedule = {3, 3, 3};
  base.epochs = 2;
  const AblationGrid grid = standard_ablation_grid(base);
  f.check(grid.runs.size() == 12, "grid has " + std::to_string(grid.runs.size()) + " runs");
  const auto first = run_ablation(grid);
  const auto second = run_ablation(grid);
  f.check(first.size() == grid.runs.size() && second.size() == grid.runs.size(), "not every run completed");
  for (std::size_t i = 0; i < std::min(first.size(), second.size()); ++i) {
    f.check(first[i].key == second[i].key && first[i].checkpoint_hash == second[i].checkpoint_hash &&
                first[i].log_hash == second[i].log_hash,
            "run " + first[i].key + " is not deterministic");
  }
  const std::string table = ablation_markdown(grid, first);
  std::set<std::string> tables;
  for (const auto& row : grid.rows) {
    tables.insert(row.table);
    f.check(table.find(row.label) != std::string::npos, "table lacks row " + row.label);
  }
  for (const char* t : {"layer_groups", "attention", "layers_per_group"}) {
    f.check(tables.count(t) == 1, std::string("missing table ") + t);
  }
  std::cerr << table;
  return {f.count() == 0, std::to_string(first.size()) + " runs trained twice with identical hashes, " +
                              std::to_string(grid.rows.size()) + " table rows" +
                              (f.count() ? "; " + f.summary() : "")};
}

Outcome determinism() {
  Failures f;
  TrainConfig config;
  config.seed = 11;
  config.train_samples = 3;
  config.test_samples = 2;
  config.epochs = 2;
  config.batch_size = 2;
  const TrainResult a = train(config);
  const TrainResult b = train(config);
  const std::string ca = serialize_checkpoint({config, a.params, a.rng_state});
  const std::string cb = serialize_checkpoint({config, b.params, b.rng_state});
  f.check(ca == cb, "checkpoints differ");
  f.check(a.log == b.log, "metric logs differ");
  return {f.count() == 0, "checkpoint " + fnv1a_hex(ca) + " (" + std::to_string(ca.size()) + " bytes), log " +
                              fnv1a_hex(a.log) + (f.count() ? "; " + f.summary() : "")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"structural invariants", structural_invariants},
      {"gradient fidelity", gradient_fidelity},
      {"analytic identities", analytic_identities},
      {"oracle equivalence", oracle_equivalence},
      {"directional training", directional_training},
      {"ablation harness", ablation_harness},
      {"determinism", determinism},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (k < 1 || k > static_cast<int>(criteria.size())) {
      std::cerr << "usage: acceptance [criterion 1-7 ...]\n";
      return 2;
    }
    selected.insert(static_cast<std::size_t>(k));
  }
  bool all_pass = true;
  for (std::size_t k = 1; k <= criteria.size(); ++k) {
    if (!selected.empty() && !selected.count(k)) continue;
    Outcome o;
    try {
      o = criteria[k - 1].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all_pass = all_pass && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << k << " " << criteria[k - 1].first << ": "
              << o.detail << std::endl;
  }
  return all_pass ? 0 : 1;
}
