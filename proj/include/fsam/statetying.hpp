// fsam/statetying.hpp

// Copyright 2026  fsam authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "fsam/corpus.hpp"
#include "fsam/decode.hpp"
#include "fsam/network.hpp"
#include "fsam/numerics.hpp"

namespace fsam {

// Utterance-edge contexts use the boundary marker instead of a phone.
constexpr int kBoundaryContext = -1;
constexpr const char* kBoundarySymbol = "#";

// One context-dependent state variant: a CI state (center phone + position)
// in a specific left/right phone context.
struct ContextVariant {
  int center = -1;
  int pos = 0;
  int left = kBoundaryContext;
  int right = kBoundaryContext;

  auto operator<=>(const ContextVariant&) const = default;
};

struct VariantStats {
  long count = 0;
  Distribution mean_posterior;  // over CI model states
};

struct PosteriorStats {
  int num_classes = 0;
  std::map<ContextVariant, VariantStats> variants;

  long total_frames() const {
    long n = 0;
    for (const auto& [v, s] : variants) n += s.count;
    return n;
  }
};

// Count-weighted average network posteriors per context variant, taken over
// aligned frames. Cross-word contexts come from the neighboring phone
// occurrences; utterance edges use the boundary marker. Whether the network
// expects delta-augmented input is inferred from its input dimension.
inline PosteriorStats accumulate_stats(const Network& net, const Corpus& corpus,
                                       const std::vector<Alignment>& alignments,
                                       int workers = 1) {
  if (alignments.size() != corpus.utts.size())
    throw Error("accumulate_stats: " + std::to_string(alignments.size()) +
                " alignments for " + std::to_string(corpus.utts.size()) + " utterances");
  const int S = corpus.phones.num_model_states();
  if (net.output_dim() != S)
    throw DimensionError("accumulate_stats: network outputs " +
                         std::to_string(net.output_dim()) + " classes, phone set has " +
                         std::to_string(S));
  const bool deltas = net.input_dim() == 3 * corpus.dim();
  if (!deltas && net.input_dim() != corpus.dim())
    throw DimensionError("accumulate_stats: network input dim matches neither raw nor "
                         "delta-augmented features");

  struct Partial {
    std::map<ContextVariant, std::pair<long, Vector>> sums;
  };
  std::vector<Partial> partials(corpus.utts.size());

  parallel_for(workers, corpus.utts.size(), [&](size_t i) {
    const Alignment& ali = alignments[i];
    if (ali.empty()) return;
    const Utterance& utt = corpus.utts[i];
    if (ali.num_frames != utt.num_frames())
      throw Error("accumulate_stats: alignment/corpus frame mismatch for " + utt.id);
    const Matrix input = deltas ? add_deltas(utt.features) : utt.features;
    const Matrix post = forward(net, input);

    // Group segments into phone occurrences: a new occurrence starts when the
    // phone changes or the state position fails to advance.
    struct Occurrence {
      int phone;
      int first_seg, last_seg;
    };
    std::vector<Occurrence> occs;
    for (int s = 0; s < static_cast<int>(ali.segments.size()); ++s) {
      const auto& seg = ali.segments[s];
      if (occs.empty() || seg.phone != ali.segments[s - 1].phone ||
          seg.pos <= ali.segments[s - 1].pos) {
        occs.push_back({seg.phone, s, s});
      } else {
        occs.back().last_seg = s;
      }
    }
    auto& sums = partials[i].sums;
    for (int o = 0; o < static_cast<int>(occs.size()); ++o) {
      const int left = o == 0 ? kBoundaryContext : occs[o - 1].phone;
      const int right = o + 1 == static_cast<int>(occs.size()) ? kBoundaryContext
                                                               : occs[o + 1].phone;
      for (int s = occs[o].first_seg; s <= occs[o].last_seg; ++s) {
        const auto& seg = ali.segments[s];
        const ContextVariant v{occs[o].phone, seg.pos, left, right};
        auto it = sums.find(v);
        if (it == sums.end()) it = sums.emplace(v, std::make_pair(0L, Vector::Zero(S))).first;
        for (int t = seg.start; t < seg.end; ++t) {
          it->second.first += 1;
          it->second.second += post.row(t).transpose();
        }
      }
    }
  });

  PosteriorStats stats;
  stats.num_classes = S;
  for (const auto& partial : partials) {
    for (const auto& [v, cs] : partial.sums) {
      auto& dst = stats.variants[v];
      if (dst.mean_posterior.empty()) dst.mean_posterior.assign(S, 0.0);
      // Merge as sums first; finalized below.
      dst.count += cs.first;
      for (int s = 0; s < S; ++s) dst.mean_posterior[s] += cs.second(s);
    }
  }
  for (auto& [v, s] : stats.variants)
    for (double& x : s.mean_posterior) x /= static_cast<double>(s.count);
  return stats;
}

struct Question {
  std::string name;
  bool on_left = true;   // else applies to the right context
  std::vector<int> set;  // sorted phone ids

  bool contains(int phone) const {
    return std::binary_search(set.begin(), set.end(), phone);
  }
  bool answer(const ContextVariant& v) const { return contains(on_left ? v.left : v.right); }
};

// `NAME<TAB>L|R<TAB>ph1 ph2 ...`; each set must be a non-empty proper subset
// of the phone inventory.
inline std::vector<Question> load_questions(const std::string& path, const PhoneSet& phones) {
  std::ifstream in(path);
  if (!in) throw ParseError("questions: cannot open " + path);
  std::vector<Question> qs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    Question q;
    std::string side;
    if (!(ss >> q.name >> side) || (side != "L" && side != "R"))
      throw ParseError("questions: " + path + ":" + std::to_string(lineno) +
                       ": expected NAME L|R phones...");
    q.on_left = side == "L";
    std::string sym;
    while (ss >> sym) {
      const int id = phones.phone_id(sym);
      if (id < 0)
        throw ParseError("questions: " + path + ":" + std::to_string(lineno) +
                         ": unknown phone " + sym);
      q.set.push_back(id);
    }
    std::sort(q.set.begin(), q.set.end());
    q.set.erase(std::unique(q.set.begin(), q.set.end()), q.set.end());
    if (q.set.empty() || static_cast<int>(q.set.size()) >= phones.num_phones())
      throw ParseError("questions: " + path + ":" + std::to_string(lineno) +
                       ": set must be a non-empty proper subset");
    for (const auto& other : qs)
      if (other.name == q.name)
        throw ParseError("questions: " + path + ":" + std::to_string(lineno) +
                         ": duplicate name " + q.name);
    qs.push_back(std::move(q));
  }
  return qs;
}

enum class CentroidKind { kArithmetic, kGeometric };
enum class KlDirection { kMemberToCentroid, kCentroidToMember };

struct ClusterOptions {
  CentroidKind centroid = CentroidKind::kArithmetic;
  KlDirection direction = KlDirection::kMemberToCentroid;
  double min_gain = 1e-6;
};

struct TyingMember {
  ContextVariant variant;
  long count = 0;
  const Distribution* mean = nullptr;
};

inline Distribution cluster_centroid(const std::vector<TyingMember>& members,
                                     const ClusterOptions& opts) {
  if (members.empty()) throw Error("cluster_centroid: no members");
  const size_t S = members.front().mean->size();
  Distribution c(S, 0.0);
  double total = 0.0;
  if (opts.centroid == CentroidKind::kArithmetic) {
    for (const auto& m : members) {
      for (size_t s = 0; s < S; ++s) c[s] += m.count * (*m.mean)[s];
      total += static_cast<double>(m.count);
    }
    for (double& x : c) x /= total;
  } else {
    // Normalized geometric mean over floored member distributions.
    for (const auto& m : members) {
      const Distribution sm = smoothed(*m.mean);
      for (size_t s = 0; s < S; ++s) c[s] += m.count * std::log(sm[s]);
      total += static_cast<double>(m.count);
    }
    double hi = c[0];
    for (double x : c) hi = std::max(hi, x / total);
    double norm = 0.0;
    for (size_t s = 0; s < S; ++s) {
      c[s] = std::exp(c[s] / total - hi);
      norm += c[s];
    }
    for (double& x : c) x /= norm;
  }
  return smoothed(c);
}

// Divergence of a member set around its centroid:
// sum_i count_i * KL(member_i || centroid) in the default direction.
inline double cluster_cost(const std::vector<TyingMember>& members, const ClusterOptions& opts = {}) {
  if (members.empty()) throw Error("cluster_cost: no members");
  const Distribution c = cluster_centroid(members, opts);
  double cost = 0.0;
  for (const auto& m : members) {
    const double kl = opts.direction == KlDirection::kMemberToCentroid
                          ? kl_divergence(*m.mean, c)
                          : kl_divergence(c, *m.mean);
    cost += static_cast<double>(m.count) * kl;
  }
  return cost;
}

struct SplitChoice {
  int question = -1;  // index into the question list
  double gain = 0.0;
  std::vector<TyingMember> yes, no;
};

// Highest-gain question; ties go to the lexicographically smallest question
// name. Nothing is returned when every question leaves a side empty or the
// best gain is below min_gain.
inline std::optional<SplitChoice> best_split(const std::vector<TyingMember>& members,
                                             const std::vector<Question>& questions,
                                             const ClusterOptions& opts = {}) {
  if (members.size() < 2) return std::nullopt;
  const double parent_cost = cluster_cost(members, opts);
  std::optional<SplitChoice> best;
  for (int q = 0; q < static_cast<int>(questions.size()); ++q) {
    std::vector<TyingMember> yes, no;
    for (const auto& m : members) (questions[q].answer(m.variant) ? yes : no).push_back(m);
    if (yes.empty() || no.empty()) continue;
    const double gain = parent_cost - cluster_cost(yes, opts) - cluster_cost(no, opts);
    const bool better =
        !best || gain > best->gain ||
        (gain == best->gain && questions[q].name < questions[best->question].name);
    if (better) best = SplitChoice{q, gain, std::move(yes), std::move(no)};
  }
  if (!best || best->gain < opts.min_gain) return std::nullopt;
  return best;
}

struct TieNode {
  int question = -1;  // -1 for leaves
  int yes = -1, no = -1;
  int leaf_id = -1;
};

struct TieTree {
  std::vector<Question> questions;
  std::map<std::pair<int, int>, int> roots;  // (center, pos) -> node index
  std::vector<TieNode> nodes;
  int num_leaves = 0;
  bool exhausted = false;   // ran out of splittable nodes before the target
  double total_cost = 0.0;  // sum of leaf costs after building
};

// Greedy global best-first splitting across all (center phone, state
// position) roots until the tree has target_leaves leaves or no leaf has a
// split worth min_gain. Leaf ids are dense and follow split order.
inline TieTree build_tie_tree(const PosteriorStats& stats, const std::vector<Question>& questions,
                              int target_leaves, const ClusterOptions& opts = {}) {
  std::map<std::pair<int, int>, std::vector<TyingMember>> groups;
  for (const auto& [v, s] : stats.variants)
    groups[{v.center, v.pos}].push_back({v, s.count, &s.mean_posterior});
  if (groups.empty()) throw Error("build_tie_tree: empty stats");
  if (target_leaves < static_cast<int>(groups.size()))
    throw ConfigError("build_tie_tree: target " + std::to_string(target_leaves) +
                      " is below the root count " + std::to_string(groups.size()));

  TieTree tree;
  tree.questions = questions;

  struct Pending {
    double gain;
    long seq;
    int node;
    SplitChoice choice;
  };
  auto worse = [](const Pending& a, const Pending& b) {
    return a.gain < b.gain || (a.gain == b.gain && a.seq > b.seq);
  };
  std::priority_queue<Pending, std::vector<Pending>, decltype(worse)> heap(worse);
  std::vector<std::vector<TyingMember>> node_members;
  std::vector<int> leaves;  // node indices in leaf order
  long seq = 0;

  auto add_node = [&](std::vector<TyingMember> members) {
    tree.nodes.push_back({});
    node_members.push_back(std::move(members));
    const int idx = static_cast<int>(tree.nodes.size()) - 1;
    if (auto split = best_split(node_members[idx], questions, opts))
      heap.push({split->gain, seq++, idx, std::move(*split)});
    return idx;
  };

  for (auto& [key, members] : groups) {
    const int idx = add_node(std::move(members));
    tree.roots[key] = idx;
    leaves.push_back(idx);
  }

  while (static_cast<int>(leaves.size()) < target_leaves && !heap.empty()) {
    Pending top = heap.top();
    heap.pop();
    const int yes = add_node(std::move(top.choice.yes));
    const int no = add_node(std::move(top.choice.no));
    tree.nodes[top.node].question = top.choice.question;
    tree.nodes[top.node].yes = yes;
    tree.nodes[top.node].no = no;
    const auto at = std::find(leaves.begin(), leaves.end(), top.node);
    const auto pos = leaves.erase(at);
    leaves.insert(pos, {yes, no});
  }

  tree.exhausted = static_cast<int>(leaves.size()) < target_leaves;
  tree.num_leaves = static_cast<int>(leaves.size());
  for (int i = 0; i < tree.num_leaves; ++i) tree.nodes[leaves[i]].leaf_id = i;
  for (int leaf : leaves) tree.total_cost += cluster_cost(node_members[leaf], opts);
  return tree;
}

// Routes a variant to its tied state. Unseen contexts route by their question
// answers like any other variant.
inline int map_variant(const TieTree& tree, const ContextVariant& v) {
  const auto it = tree.roots.find({v.center, v.pos});
  if (it == tree.roots.end())
    throw Error("map_variant: no tree for center phone " + std::to_string(v.center) +
                " position " + std::to_string(v.pos));
  int node = it->second;
  while (tree.nodes[node].question >= 0)
    node = tree.questions[tree.nodes[node].question].answer(v) ? tree.nodes[node].yes
                                                               : tree.nodes[node].no;
  return tree.nodes[node].leaf_id;
}

namespace detail {

inline std::string context_symbol(const PhoneSet& phones, int id) {
  return id == kBoundaryContext ? kBoundarySymbol : phones.phones[id];
}

inline int context_id(const PhoneSet& phones, const std::string& sym) {
  if (sym == kBoundarySymbol) return kBoundaryContext;
  const int id = phones.phone_id(sym);
  if (id < 0) throw ParseError("unknown phone symbol " + sym);
  return id;
}

inline int tie_subtree_size(const TieTree& tree, int node) {
  const TieNode& n = tree.nodes[node];
  if (n.question < 0) return 1;
  return 1 + tie_subtree_size(tree, n.yes) + tie_subtree_size(tree, n.no);
}

// Pre-order dump; node ids are pre-order positions within the tree.
inline void dump_tie_node(const TieTree& tree, int node, int id, std::ostream& out) {
  const TieNode& n = tree.nodes[node];
  if (n.question < 0) {
    out << id << "\tleaf\t" << n.leaf_id << "\n";
    return;
  }
  const int yes_id = id + 1;
  const int no_id = yes_id + tie_subtree_size(tree, n.yes);
  out << id << "\tsplit\t" << tree.questions[n.question].name << "\t" << yes_id << "\t" << no_id
      << "\n";
  dump_tie_node(tree, n.yes, yes_id, out);
  dump_tie_node(tree, n.no, no_id, out);
}

}  // namespace detail

// Tree file: embedded question inventory, then one pre-order node dump per
// (center phone, state position) root. Loading and saving again reproduces
// the file byte for byte.
inline void save_tie_tree(const TieTree& tree, const PhoneSet& phones, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_tie_tree: cannot write " + path);
  out << "FSTREE1\n";
  out << "questions\t" << tree.questions.size() << "\n";
  for (const auto& q : tree.questions) {
    out << q.name << "\t" << (q.on_left ? "L" : "R");
    for (int p : q.set) out << (p == q.set.front() ? "\t" : " ") << phones.phones[p];
    out << "\n";
  }
  out << "trees\t" << tree.roots.size() << "\tleaves\t" << tree.num_leaves << "\n";
  for (const auto& [key, root] : tree.roots) {
    int count = 0;
    std::vector<int> stack{root};
    while (!stack.empty()) {
      const int n = stack.back();
      stack.pop_back();
      ++count;
      if (tree.nodes[n].question >= 0) {
        stack.push_back(tree.nodes[n].no);
        stack.push_back(tree.nodes[n].yes);
      }
    }
    out << "tree\t" << phones.phones[key.first] << "\t" << key.second << "\t" << count << "\n";
    detail::dump_tie_node(tree, root, 0, out);
  }
}

inline TieTree load_tie_tree(const std::string& path, const PhoneSet& phones) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_tie_tree: cannot open " + path);
  std::string line;
  auto next_line = [&]() {
    if (!std::getline(in, line)) throw ParseError("load_tie_tree: " + path + ": truncated");
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    return line;
  };
  if (next_line() != "FSTREE1") throw ParseError("load_tie_tree: " + path + ": bad magic");

  TieTree tree;
  std::istringstream qh(next_line());
  std::string tag;
  size_t nq = 0;
  if (!(qh >> tag >> nq) || tag != "questions")
    throw ParseError("load_tie_tree: " + path + ": expected questions header");
  std::map<std::string, int> qindex;
  for (size_t i = 0; i < nq; ++i) {
    std::istringstream qs(next_line());
    Question q;
    std::string side, sym;
    if (!(qs >> q.name >> side) || (side != "L" && side != "R"))
      throw ParseError("load_tie_tree: " + path + ": bad question line");
    q.on_left = side == "L";
    while (qs >> sym) q.set.push_back(detail::context_id(phones, sym));
    std::sort(q.set.begin(), q.set.end());
    qindex[q.name] = static_cast<int>(i);
    tree.questions.push_back(std::move(q));
  }

  std::istringstream th(next_line());
  size_t ntrees = 0;
  int nleaves = 0;
  if (!(th >> tag >> ntrees) || tag != "trees" || !(th >> tag >> nleaves) || tag != "leaves")
    throw ParseError("load_tie_tree: " + path + ": expected trees header");
  tree.num_leaves = nleaves;

  for (size_t t = 0; t < ntrees; ++t) {
    std::istringstream hh(next_line());
    std::string center_sym;
    int pos = 0, count = 0;
    if (!(hh >> tag >> center_sym >> pos >> count) || tag != "tree")
      throw ParseError("load_tie_tree: " + path + ": expected tree header");
    const int center = phones.phone_id(center_sym);
    if (center < 0) throw ParseError("load_tie_tree: " + path + ": unknown phone " + center_sym);
    const int base = static_cast<int>(tree.nodes.size());
    tree.roots[{center, pos}] = base;
    tree.nodes.resize(base + count);
    for (int i = 0; i < count; ++i) {
      std::istringstream ns(next_line());
      int id = 0;
      std::string kind;
      if (!(ns >> id >> kind) || id != i)
        throw ParseError("load_tie_tree: " + path + ": bad node line");
      if (kind == "leaf") {
        int leaf_id = 0;
        if (!(ns >> leaf_id)) throw ParseError("load_tie_tree: " + path + ": bad leaf line");
        tree.nodes[base + i].leaf_id = leaf_id;
      } else if (kind == "split") {
        std::string qname;
        int yes = 0, no = 0;
        if (!(ns >> qname >> yes >> no))
          throw ParseError("load_tie_tree: " + path + ": bad split line");
        const auto qit = qindex.find(qname);
        if (qit == qindex.end())
          throw ParseError("load_tie_tree: " + path + ": unknown question " + qname);
        tree.nodes[base + i].question = qit->second;
        tree.nodes[base + i].yes = base + yes;
        tree.nodes[base + i].no = base + no;
      } else {
        throw ParseError("load_tie_tree: " + path + ": bad node kind " + kind);
      }
    }
  }
  return tree;
}

// `center<TAB>pos<TAB>left<TAB>right<TAB>leaf_id` for every observed variant.
inline void save_tied_state_map(const TieTree& tree, const PosteriorStats& stats,
                                const PhoneSet& phones, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_tied_state_map: cannot write " + path);
  for (const auto& [v, s] : stats.variants) {
    out << phones.phones[v.center] << "\t" << v.pos << "\t"
        << detail::context_symbol(phones, v.left) << "\t"
        << detail::context_symbol(phones, v.right) << "\t" << map_variant(tree, v) << "\n";
  }
}

}  // namespace fsam
