// fsam/graph.hpp

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

#include <cmath>
#include <string>
#include <vector>

#include "fsam/common.hpp"
#include "fsam/lexicon.hpp"
#include "fsam/numerics.hpp"
#include "fsam/phoneset.hpp"

namespace fsam {

// A node either emits one model state (model_state >= 0, with its phone and
// state position) or is a non-emitting epsilon connector (model_state == -1).
struct GraphNode {
  int model_state = -1;
  int phone = -1;
  int pos = -1;
  bool emitting() const { return model_state >= 0; }
};

// enters_phone marks arcs that start a new phone occurrence at their target;
// decoding uses it to segment paths at phone re-entries (a 1-state phone can
// repeat without changing node).
struct GraphArc {
  int from = -1;
  int to = -1;
  double log_prob = 0.0;
  bool enters_phone = false;
};

// HMM state graph. Built with epsilon connectors so that every emitting
// node's outgoing probabilities sum to 1 in the linear domain; compile()
// folds the epsilons into a transition table over emitting nodes only, which
// is what forward-backward and Viterbi run on. Arcs that reach the exit node
// carry the path's acceptance weight and are kept separate from the
// stochastic outgoing mass.
struct StateGraph {
  std::vector<GraphNode> nodes;
  std::vector<GraphArc> arcs;
  int entry = -1;
  int exit = -1;

  // Compiled view, indexed by dp slot (one per emitting node).
  struct InArc {
    int src = -1;  // dp slot
    double weight = 0.0;
    bool enters_phone = false;
  };
  struct OutArc {
    int dst = -1;  // dp slot
    double weight = 0.0;
  };
  std::vector<int> emit_nodes;             // dp slot -> node index
  std::vector<std::vector<InArc>> in_arcs;
  std::vector<std::vector<OutArc>> out_arcs;
  std::vector<double> entry_weight;        // per dp slot; kLogZero if no entry arc
  std::vector<double> exit_weight;         // per dp slot; kLogZero if no exit arc
  int min_frames = 0;                      // shortest accepting path length

  int num_emitting() const { return static_cast<int>(emit_nodes.size()); }

  int max_model_state() const {
    int m = -1;
    for (const auto& n : nodes)
      if (n.model_state > m) m = n.model_state;
    return m;
  }

  int add_node(GraphNode n) {
    nodes.push_back(n);
    return static_cast<int>(nodes.size()) - 1;
  }

  void add_arc(int from, int to, double log_prob, bool enters_phone = false) {
    arcs.push_back({from, to, log_prob, enters_phone});
  }

  // Folds epsilon connectors. Parallel expanded arcs between the same pair of
  // nodes are kept separate (they are distinct transition routes: a self-loop
  // and a loop re-entry may join the same nodes with different weights).
  void compile() {
    const int n = static_cast<int>(nodes.size());
    std::vector<std::vector<int>> out_raw(n);
    for (int a = 0; a < static_cast<int>(arcs.size()); ++a) out_raw[arcs[a].from].push_back(a);

    emit_nodes.clear();
    std::vector<int> dp_of(n, -1);
    for (int v = 0; v < n; ++v) {
      if (nodes[v].emitting()) {
        dp_of[v] = static_cast<int>(emit_nodes.size());
        emit_nodes.push_back(v);
      }
    }
    const int ne = num_emitting();
    in_arcs.assign(ne, {});
    out_arcs.assign(ne, {});
    entry_weight.assign(ne, kLogZero);
    exit_weight.assign(ne, kLogZero);

    // Expand the epsilon closure of every arc leaving src (entry or emitting).
    auto expand = [&](int src) {
      struct Item {
        int node;
        double w;
        bool enters;
        int depth;
      };
      std::vector<Item> stack;
      for (int a : out_raw[src])
        stack.push_back({arcs[a].to, arcs[a].log_prob, arcs[a].enters_phone, 0});
      while (!stack.empty()) {
        const Item it = stack.back();
        stack.pop_back();
        if (it.depth > n) throw Error("graph: epsilon cycle detected");
        if (it.node == exit) {
          if (src == entry) throw Error("graph: empty accepting path");
          const int s = dp_of[src];
          exit_weight[s] = log_add(exit_weight[s], it.w);
          continue;
        }
        if (nodes[it.node].emitting()) {
          const int d = dp_of[it.node];
          if (src == entry) {
            entry_weight[d] = log_add(entry_weight[d], it.w);
          } else {
            in_arcs[d].push_back({dp_of[src], it.w, it.enters});
          }
          continue;
        }
        for (int a : out_raw[it.node])
          stack.push_back({arcs[a].to, it.w + arcs[a].log_prob, arcs[a].enters_phone,
                           it.depth + 1});
      }
    };
    expand(entry);
    for (int v : emit_nodes) expand(v);

    for (int d = 0; d < ne; ++d)
      for (const auto& ia : in_arcs[d]) out_arcs[ia.src].push_back({d, ia.weight});

    min_frames = shortest_accepting_path();
    check_connected();
  }

 private:
  int shortest_accepting_path() const {
    const int ne = num_emitting();
    constexpr int kInf = 1 << 28;
    std::vector<int> dist(ne, kInf);
    std::vector<int> frontier;
    for (int d = 0; d < ne; ++d) {
      if (entry_weight[d] != kLogZero) {
        dist[d] = 1;
        frontier.push_back(d);
      }
    }
    while (!frontier.empty()) {
      std::vector<int> next;
      for (int i : frontier) {
        for (const auto& oa : out_arcs[i]) {
          if (dist[oa.dst] > dist[i] + 1) {
            dist[oa.dst] = dist[i] + 1;
            next.push_back(oa.dst);
          }
        }
      }
      frontier.swap(next);
    }
    int best = kInf;
    for (int d = 0; d < ne; ++d)
      if (exit_weight[d] != kLogZero && dist[d] < best) best = dist[d];
    if (best == kInf) throw Error("graph: no accepting path");
    return best;
  }

  void check_connected() const {
    const int ne = num_emitting();
    std::vector<char> fwd(ne, 0), bwd(ne, 0);
    std::vector<int> stack;
    for (int d = 0; d < ne; ++d)
      if (entry_weight[d] != kLogZero) {
        fwd[d] = 1;
        stack.push_back(d);
      }
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      for (const auto& oa : out_arcs[i])
        if (!fwd[oa.dst]) {
          fwd[oa.dst] = 1;
          stack.push_back(oa.dst);
        }
    }
    for (int d = 0; d < ne; ++d)
      if (exit_weight[d] != kLogZero) {
        bwd[d] = 1;
        stack.push_back(d);
      }
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      for (const auto& ia : in_arcs[i])
        if (!bwd[ia.src]) {
          bwd[ia.src] = 1;
          stack.push_back(ia.src);
        }
    }
    for (int d = 0; d < ne; ++d)
      if (!fwd[d] || !bwd[d])
        throw Error("graph: emitting node " + std::to_string(emit_nodes[d]) +
                    " is on no entry-to-exit path");
  }
};

enum class GraphStage { kBootstrap, kRefined };

namespace detail {

struct PhoneInstance {
  int first = -1;
  int last = -1;
};

inline PhoneInstance add_phone_instance(StateGraph& g, const PhoneSet& ps, int phone) {
  const double half = std::log(0.5);
  const int k = ps.phone_states(phone);
  PhoneInstance inst;
  int prev = -1;
  for (int pos = 0; pos < k; ++pos) {
    const int v = g.add_node({ps.model_state(phone, pos), phone, pos});
    g.add_arc(v, v, half);  // self-loop
    if (prev >= 0) g.add_arc(prev, v, half);
    if (pos == 0) inst.first = v;
    prev = v;
  }
  inst.last = prev;
  return inst;
}

// Attaches one phone after junction `from`; returns the junction that
// follows it (which has already collected the phone's leave probability).
inline int append_phone(StateGraph& g, const PhoneSet& ps, int from, int phone,
                        double entry_weight) {
  const auto inst = add_phone_instance(g, ps, phone);
  g.add_arc(from, inst.first, entry_weight, /*enters_phone=*/true);
  const int tail = g.add_node({});
  g.add_arc(inst.last, tail, std::log(0.5));
  return tail;
}

}  // namespace detail

// Forced graph for one transcript. Both stages put a mandatory silence at the
// utterance start and end; bootstrap chains the first pronunciation of every
// word with nothing between words, refined adds parallel pronunciation
// alternatives and a skippable short pause after each word. Every phone entry
// carries the same uniform weight as the free-loop graph, so numerator paths
// score identically under both graphs.
inline StateGraph build_numerator_graph(const std::vector<std::string>& transcript,
                                        const Lexicon& lexicon, const PhoneSet& phones,
                                        GraphStage stage) {
  for (const auto& w : transcript)
    if (!lexicon.has(w)) throw LexiconError("numerator graph: word not in lexicon: " + w);

  const double entry_w = -std::log(static_cast<double>(phones.num_phones()));
  StateGraph g;
  g.entry = g.add_node({});
  g.exit = g.add_node({});

  int at = detail::append_phone(g, phones, g.entry, phones.silence, entry_w);

  for (const auto& word : transcript) {
    const auto& all_prons = lexicon.prons(word);
    std::vector<Pronunciation> prons;
    if (stage == GraphStage::kBootstrap) {
      prons.push_back(all_prons.front());
    } else {
      for (const auto& p : all_prons)
        if (std::find(prons.begin(), prons.end(), p) == prons.end()) prons.push_back(p);
    }

    const int word_out = g.add_node({});
    for (const auto& pron : prons) {
      int cur = at;
      for (int phone : pron) cur = detail::append_phone(g, phones, cur, phone, entry_w);
      g.add_arc(cur, word_out, 0.0);
    }
    at = word_out;

    if (stage == GraphStage::kRefined && phones.short_pause >= 0) {
      const int sp_tail = detail::append_phone(g, phones, at, phones.short_pause, entry_w);
      const int merged = g.add_node({});
      g.add_arc(at, merged, 0.0);  // skip
      g.add_arc(sp_tail, merged, 0.0);
      at = merged;
    }
  }

  if (!transcript.empty()) at = detail::append_phone(g, phones, at, phones.silence, entry_w);
  g.add_arc(at, g.exit, 0.0);

  g.compile();
  return g;
}

// Free phone loop: every phone model in parallel between the loop start and
// loop end, uniform entry probability 1/|phones|, back-arc of probability 1,
// no priors or language model weighting.
inline StateGraph build_denominator_graph(const PhoneSet& phones) {
  const double entry_w = -std::log(static_cast<double>(phones.num_phones()));
  StateGraph g;
  g.entry = g.add_node({});
  g.exit = g.add_node({});
  const int loop_start = g.add_node({});
  const int loop_end = g.add_node({});
  g.add_arc(g.entry, loop_start, 0.0);

  for (int p = 0; p < phones.num_phones(); ++p) {
    const auto inst = detail::add_phone_instance(g, phones, p);
    g.add_arc(loop_start, inst.first, entry_w, /*enters_phone=*/true);
    g.add_arc(inst.last, loop_end, std::log(0.5));
  }
  g.add_arc(loop_end, loop_start, 0.0);  // back-arc, probability 1
  g.add_arc(loop_end, g.exit, 0.0);

  g.compile();
  return g;
}

// Raw-structure invariant: outgoing transition probabilities of every
// emitting node sum to 1 in the linear domain (arcs into the exit epsilon
// beyond a node's stochastic mass never occur in built graphs).
inline double max_emitting_sum_error(const StateGraph& g) {
  double worst = 0.0;
  for (int v = 0; v < static_cast<int>(g.nodes.size()); ++v) {
    if (!g.nodes[v].emitting()) continue;
    double sum = 0.0;
    for (const auto& a : g.arcs)
      if (a.from == v) sum += std::exp(a.log_prob);
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return worst;
}

}  // namespace fsam
