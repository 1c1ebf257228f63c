#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "histflow/compact_set.hpp"
#include "histflow/couplings.hpp"
#include "histflow/error.hpp"
#include "histflow/lineage.hpp"
#include "histflow/model.hpp"
#include "histflow/poisson_tail.hpp"
#include "histflow/random.hpp"
#include "histflow/simulator.hpp"
#include "histflow/spine.hpp"
#include "histflow/stats.hpp"

namespace histflow {

/// Ulam-Harris-Neveu label: initial individual `root` and a binary word,
/// one letter per branch event on the way down (0 keeps the lineage, 1
/// takes the offspring lineage).
struct HunLabel {
  std::size_t root = 0;
  std::string word;

  std::size_t depth() const noexcept { return word.size(); }
  HunLabel child(char bit) const { return {root, word + bit}; }

  /// Descendant test by prefix matching (a label descends from itself).
  bool descends_from(const HunLabel& a) const noexcept {
    return root == a.root && word.size() >= a.word.size() && word.compare(0, a.word.size(), a.word) == 0;
  }
  bool descends_from(std::size_t i) const noexcept { return root == i; }

  std::string to_string() const { return std::to_string(root) + ":" + word; }
  friend bool operator==(const HunLabel&, const HunLabel&) = default;
};

inline constexpr std::size_t kNoNode = std::numeric_limits<std::size_t>::max();

struct YuleNode {
  HunLabel label;
  double birth = 0.0;
  /// Time of the node's branch event; infinity if none before the horizon.
  double branch = std::numeric_limits<double>::infinity();
  /// Branch event pruned: the offspring were erased and the individual died.
  bool pruned = false;
  /// Keep probability b^n / (b^n + d^n) at the branch event.
  double keep_probability = 0.0;
  Lineage lineage;
  std::size_t parent = kNoNode;
  std::size_t child0 = kNoNode;
  std::size_t child1 = kNoNode;

  bool alive_at(double t) const noexcept { return birth <= t && t < branch; }
  /// Branch events on the way from the root, N^{n,alpha} at the birth time.
  std::size_t jumps() const noexcept { return label.depth(); }
};

struct YuleTree {
  double horizon = 1.0;
  std::size_t n = 1;
  std::vector<YuleNode> nodes;
  std::vector<std::size_t> roots;

  /// |V_t|: individuals alive at time t <= horizon.
  std::size_t alive_count(double t) const {
    if (t > horizon) fail(ErrorKind::domain, "alive count requested past the tree horizon");
    std::size_t c = 0;
    for (const auto& v : nodes)
      if (v.alive_at(t)) ++c;
    return c;
  }

  /// V_T at the horizon, as node indices in creation order.
  std::vector<std::size_t> alive_leaves() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].alive_at(horizon)) out.push_back(i);
    return out;
  }
};

/// Dominating form: b = B_hi constant, D = 0, U = 0, so that b^n = n r + B_hi
/// and d^n = n r.
inline bool is_dominating_form(const ModelConfig& cfg) {
  return cfg.b.is_constant() && cfg.b.base == cfg.bounds.b_hi && cfg.D.is_constant() && cfg.D.base == 0.0 &&
         cfg.U.is_zero();
}

/// Pruned Yule tree on [0, T] from the given initial traits. Each
/// individual branches at rate b^n + d^n = 2 n r + B_hi; the branch is kept
/// with probability b^n / (b^n + d^n), giving offspring alpha0 with lineage
/// y and alpha1 with lineage (y | t | h), h ~ K^n(y(t-), .); otherwise the
/// individual dies. Subtrees are grown depth first.
inline YuleTree grow_pruned_yule(const ModelConfig& cfg, const std::vector<Trait>& initial, double T, Stream& rng) {
  if (!is_dominating_form(cfg))
    fail(ErrorKind::invalid_config, "pruned Yule tree needs the dominating form b = B_hi, D = 0, U = 0", "model");
  if (!(T > 0.0)) fail(ErrorKind::invalid_config, "horizon must be positive", "model.horizon");
  YuleTree tree;
  tree.horizon = T;
  tree.n = cfg.n;
  const double nd = cfg.nd();
  const double B = cfg.bounds.b_hi;
  for (std::size_t i = 0; i < initial.size(); ++i) {
    YuleNode root;
    root.label = {i, {}};
    root.lineage = Lineage::constant(initial[i]);
    tree.nodes.push_back(std::move(root));
    tree.roots.push_back(i);
  }
  std::vector<std::size_t> stack(tree.roots.rbegin(), tree.roots.rend());

  while (!stack.empty()) {
    const std::size_t k = stack.back();
    stack.pop_back();
    const LineageNode* tip = tree.nodes[k].lineage.tip();
    const double t0 = tree.nodes[k].birth;
    const double since = tip->piece_start->time;
    const double e = t0 + invert_spine_hazard(cfg, t0, tip->trait, since, rng.exponential());
    if (e > T) continue;
    const double r = cfg.r(cfg.space, e, tip->trait, since);
    const double keep = (nd * r + B) / (2.0 * nd * r + B);
    tree.nodes[k].branch = e;
    tree.nodes[k].keep_probability = keep;
    if (!rng.bernoulli(keep)) {
      tree.nodes[k].pruned = true;
      continue;
    }
    if (tree.nodes.size() + 2 > cfg.event_cap)
      fail(ErrorKind::capacity, "Yule tree exceeded the event cap of " + std::to_string(cfg.event_cap));
    auto off = sample_offspring_trait(cfg.kernel, cfg.space, cfg.n, cfg.p, tip->trait, rng);
    YuleNode a, b;
    a.label = tree.nodes[k].label.child('0');
    b.label = tree.nodes[k].label.child('1');
    a.birth = b.birth = e;
    a.parent = b.parent = k;
    a.lineage = tree.nodes[k].lineage;
    b.lineage = tree.nodes[k].lineage.extended(e, std::move(off.trait));
    tree.nodes[k].child0 = tree.nodes.size();
    tree.nodes[k].child1 = tree.nodes.size() + 1;
    tree.nodes.push_back(std::move(a));
    tree.nodes.push_back(std::move(b));
    stack.push_back(tree.nodes[k].child1);
    stack.push_back(tree.nodes[k].child0);
  }
  return tree;
}

inline YuleTree grow_pruned_yule(const ModelConfig& cfg, const Trait& y0, double T, Stream& rng) {
  return grow_pruned_yule(cfg, std::vector<Trait>{y0}, T, rng);
}

/// One JSON object per node: label, birth, branch (null if none), pruned,
/// terminal trait of the node's lineage.
inline void write_tree_jsonl(const YuleTree& tree, std::ostream& out) {
  for (const auto& v : tree.nodes) {
    nlohmann::json j;
    j["label"] = v.label.to_string();
    j["birth"] = v.birth;
    j["branch"] = std::isinf(v.branch) ? nlohmann::json(nullptr) : nlohmann::json(v.branch);
    j["pruned"] = v.pruned;
    const auto c = v.lineage.tip_trait().coords();
    j["trait"] = std::vector<double>(c.begin(), c.end());
    out << j.dump() << '\n';
  }
}

struct EscapeEstimate {
  /// E[X_T((K^T)^c)] from direct simulation.
  double direct = 0.0;
  double direct_se = 0.0;
  /// P((Ybar)^T not in K^T) over spine samples, and the same for Y.
  double spine_escape = 0.0;
  double spine_escape_se = 0.0;
  double spine_escape_y = 0.0;
  double initial_mass = 0.0;
  double c = 0.0;
  double A = 0.0;
  PoissonTail tail;
  /// m0 (e^{cA} P(Ybar not in K) + tail bound).
  double surrogate = 0.0;
  double surrogate_se = 0.0;
};

/// Direct Monte Carlo of the escape mass next to its spine upper bound.
/// Replicate k uses streams (seed, k, "escape-*").
inline EscapeEstimate estimate_escape_mass(const ModelConfig& cfg, const InitialLaw& initial,
                                           const CompactSetSpec& K, double A, std::size_t replicates,
                                           std::uint64_t seed) {
  if (!(A > 0.0)) fail(ErrorKind::invalid_config, "A must be positive", "A");
  if (replicates < 2) fail(ErrorKind::invalid_config, "need at least 2 replicates", "replicates");
  const double T = cfg.horizon;
  if (K.horizon != T) fail(ErrorKind::invalid_config, "compact set horizon must equal the model horizon", "K.horizon");
  K.validate(cfg.space);
  EscapeEstimate out;
  out.A = A;
  out.initial_mass = static_cast<double>(initial.count(cfg.n)) / cfg.nd();
  out.tail = poisson_tail(cfg.n, T, cfg.bounds, A);
  out.c = out.tail.c;

  SampleMoments direct, spine, spine_y;
  CompactSetTester tester;
  for (std::size_t k = 0; k < replicates; ++k) {
    Stream init = derive_stream(seed, k, "escape-initial");
    Stream rng = derive_stream(seed, k, "escape-direct");
    PopulationState s = make_initial(cfg, initial, init);
    simulate(cfg, s, rng);
    direct.add(measure_outside(cfg.space, s, K, T));

    Stream start = derive_stream(seed, k, "escape-spine-initial");
    const Trait y0 = initial.sample(cfg.space, start);
    const auto pair = spine_pair(cfg, y0, T, seed, k);
    spine.add(tester.contains(cfg.space, pair.ybar, K, T) ? 0.0 : 1.0);
    spine_y.add(tester.contains(cfg.space, pair.y, K, T) ? 0.0 : 1.0);
  }
  out.direct = direct.mean();
  out.direct_se = direct.standard_error();
  out.spine_escape = spine.mean();
  out.spine_escape_se = spine.standard_error();
  out.spine_escape_y = spine_y.mean();
  const double f = std::exp(out.c * A);
  out.surrogate = out.initial_mass * (f * out.spine_escape + out.tail.bound);
  out.surrogate_se = out.initial_mass * f * out.spine_escape_se;
  return out;
}

}  // namespace histflow
