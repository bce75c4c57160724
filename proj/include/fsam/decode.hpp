// fsam/decode.hpp

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
#include <sstream>
#include <string>
#include <vector>

#include "fsam/graph.hpp"
#include "fsam/matrix.hpp"
#include "fsam/numerics.hpp"

namespace fsam {

// Per-frame, per-model-state posterior occupancies. Rows sum to 1.
struct OccupancyMatrix {
  Matrix gamma;  // T x S
  LogProb total_log_likelihood = kLogZero;
};

// One maximal run of frames in a single graph node.
struct AlignSegment {
  int model_state = -1;
  int phone = -1;
  int pos = -1;
  int start = 0;  // inclusive frame
  int end = 0;    // exclusive frame
};

// Contiguous, non-overlapping segments tiling [0, num_frames).
struct Alignment {
  std::vector<AlignSegment> segments;
  int num_frames = 0;

  bool empty() const { return segments.empty(); }
};

namespace detail {

inline void check_decode_inputs(const StateGraph& g, const Matrix& loglikes) {
  if (g.num_emitting() == 0) throw Error("decode: graph has no emitting nodes");
  if (loglikes.cols() <= g.max_model_state())
    throw DimensionError("decode: loglike matrix has " + std::to_string(loglikes.cols()) +
                         " states, graph references state " +
                         std::to_string(g.max_model_state()));
  if (loglikes.rows() < g.min_frames)
    throw InfeasibleUtteranceError(
        "decode: utterance of " + std::to_string(loglikes.rows()) +
        " frames is shorter than the graph's minimum path length " +
        std::to_string(g.min_frames));
}

}  // namespace detail

// Total log-likelihood only (a forward pass without the backward half).
inline LogProb total_log_likelihood(const StateGraph& g, const Matrix& loglikes) {
  detail::check_decode_inputs(g, loglikes);
  const int T = static_cast<int>(loglikes.rows());
  const int N = g.num_emitting();
  Matrix alpha(T, N);

  auto emission = [&](int t, int d) { return loglikes(t, g.nodes[g.emit_nodes[d]].model_state); };

  for (int d = 0; d < N; ++d)
    alpha(0, d) = g.entry_weight[d] == kLogZero ? kLogZero : g.entry_weight[d] + emission(0, d);
  for (int t = 1; t < T; ++t) {
    for (int d = 0; d < N; ++d) {
      double acc = kLogZero;
      for (const auto& ia : g.in_arcs[d]) {
        const double prev = alpha(t - 1, ia.src);
        if (prev != kLogZero) acc = log_add(acc, prev + ia.weight);
      }
      alpha(t, d) = acc == kLogZero ? kLogZero : acc + emission(t, d);
    }
  }
  double total = kLogZero;
  for (int d = 0; d < N; ++d)
    if (g.exit_weight[d] != kLogZero && alpha(T - 1, d) != kLogZero)
      total = log_add(total, alpha(T - 1, d) + g.exit_weight[d]);
  return total;
}

// Posterior state occupancies gamma[t][r] over all accepting paths of length
// T, and the total log-likelihood. num_states sets the width of gamma (the
// network's output dimension); it must cover every state the graph emits.
inline OccupancyMatrix forward_backward(const StateGraph& g, const Matrix& loglikes) {
  detail::check_decode_inputs(g, loglikes);
  const int T = static_cast<int>(loglikes.rows());
  const int N = g.num_emitting();
  const int S = static_cast<int>(loglikes.cols());

  auto emission = [&](int t, int d) { return loglikes(t, g.nodes[g.emit_nodes[d]].model_state); };

  Matrix alpha(T, N), beta(T, N);
  for (int d = 0; d < N; ++d)
    alpha(0, d) = g.entry_weight[d] == kLogZero ? kLogZero : g.entry_weight[d] + emission(0, d);
  for (int t = 1; t < T; ++t) {
    for (int d = 0; d < N; ++d) {
      double acc = kLogZero;
      for (const auto& ia : g.in_arcs[d]) {
        const double prev = alpha(t - 1, ia.src);
        if (prev != kLogZero) acc = log_add(acc, prev + ia.weight);
      }
      alpha(t, d) = acc == kLogZero ? kLogZero : acc + emission(t, d);
    }
  }
  double total = kLogZero;
  for (int d = 0; d < N; ++d)
    if (g.exit_weight[d] != kLogZero && alpha(T - 1, d) != kLogZero)
      total = log_add(total, alpha(T - 1, d) + g.exit_weight[d]);
  if (total == kLogZero)
    throw InfeasibleUtteranceError("forward_backward: no accepting path has nonzero probability");

  for (int d = 0; d < N; ++d) beta(T - 1, d) = g.exit_weight[d];
  for (int t = T - 2; t >= 0; --t) {
    for (int d = 0; d < N; ++d) {
      double acc = kLogZero;
      for (const auto& oa : g.out_arcs[d]) {
        const double next = beta(t + 1, oa.dst);
        if (next != kLogZero) acc = log_add(acc, oa.weight + emission(t + 1, oa.dst) + next);
      }
      beta(t, d) = acc;
    }
  }

  OccupancyMatrix occ;
  occ.total_log_likelihood = total;
  occ.gamma = Matrix::Zero(T, S);
  for (int t = 0; t < T; ++t) {
    for (int d = 0; d < N; ++d) {
      const double a = alpha(t, d), b = beta(t, d);
      if (a == kLogZero || b == kLogZero) continue;
      occ.gamma(t, g.nodes[g.emit_nodes[d]].model_state) += std::exp(a + b - total);
    }
  }
  return occ;
}

// Single best accepting path and its log score. Among equal-scoring paths the
// one whose node at the latest divergence frame has the lowest model-state
// index (then the lowest node id) wins, which makes the result deterministic.
inline std::pair<Alignment, LogProb> viterbi(const StateGraph& g, const Matrix& loglikes) {
  detail::check_decode_inputs(g, loglikes);
  const int T = static_cast<int>(loglikes.rows());
  const int N = g.num_emitting();

  auto emission = [&](int t, int d) { return loglikes(t, g.nodes[g.emit_nodes[d]].model_state); };
  auto tie_key = [&](int d) {
    return std::pair<int, int>(g.nodes[g.emit_nodes[d]].model_state, g.emit_nodes[d]);
  };

  Matrix score(T, N);
  std::vector<std::vector<int>> back(T, std::vector<int>(N, -1));  // in-arc index

  for (int d = 0; d < N; ++d)
    score(0, d) = g.entry_weight[d] == kLogZero ? kLogZero : g.entry_weight[d] + emission(0, d);
  for (int t = 1; t < T; ++t) {
    for (int d = 0; d < N; ++d) {
      double best = kLogZero;
      int best_arc = -1;
      for (int a = 0; a < static_cast<int>(g.in_arcs[d].size()); ++a) {
        const auto& ia = g.in_arcs[d][a];
        const double prev = score(t - 1, ia.src);
        if (prev == kLogZero) continue;
        const double cand = prev + ia.weight;
        if (best_arc < 0 || cand > best ||
            (cand == best && tie_key(ia.src) < tie_key(g.in_arcs[d][best_arc].src))) {
          best = cand;
          best_arc = a;
        }
      }
      score(t, d) = best == kLogZero ? kLogZero : best + emission(t, d);
      back[t][d] = best_arc;
    }
  }

  double total = kLogZero;
  int last = -1;
  for (int d = 0; d < N; ++d) {
    if (g.exit_weight[d] == kLogZero || score(T - 1, d) == kLogZero) continue;
    const double cand = score(T - 1, d) + g.exit_weight[d];
    if (last < 0 || cand > total || (cand == total && tie_key(d) < tie_key(last))) {
      total = cand;
      last = d;
    }
  }
  if (last < 0)
    throw InfeasibleUtteranceError("viterbi: no accepting path has nonzero probability");

  // Trace back; record per frame (dp slot, did this frame's arc enter a phone).
  std::vector<int> path(T);
  std::vector<char> entered(T, 1);
  int cur = last;
  for (int t = T - 1; t >= 0; --t) {
    path[t] = cur;
    if (t > 0) {
      const auto& ia = g.in_arcs[cur][back[t][cur]];
      entered[t] = ia.enters_phone ? 1 : 0;
      cur = ia.src;
    }
  }

  Alignment ali;
  ali.num_frames = T;
  for (int t = 0; t < T; ++t) {
    const auto& node = g.nodes[g.emit_nodes[path[t]]];
    const bool boundary = t == 0 || path[t] != path[t - 1] || entered[t];
    if (boundary) {
      ali.segments.push_back({node.model_state, node.phone, node.pos, t, t + 1});
    } else {
      ali.segments.back().end = t + 1;
    }
  }
  return {ali, total};
}

// Hard occupancies of an alignment path.
inline OccupancyMatrix occupancy_from_alignment(const Alignment& a, int num_states,
                                                LogProb total = kLogZero) {
  OccupancyMatrix occ;
  occ.total_log_likelihood = total;
  occ.gamma = Matrix::Zero(a.num_frames, num_states);
  for (const auto& seg : a.segments) {
    if (seg.model_state < 0 || seg.model_state >= num_states)
      throw DimensionError("occupancy_from_alignment: state " +
                           std::to_string(seg.model_state) + " out of range");
    for (int t = seg.start; t < seg.end; ++t) occ.gamma(t, seg.model_state) = 1.0;
  }
  return occ;
}

// Structural validity: segments tile [0, T) and the frame-level state
// sequence is realizable as a path through the graph. This walks reachable
// node sets directly on the compiled transitions, independent of how the
// alignment was produced.
inline bool alignment_respects_graph(const Alignment& a, const StateGraph& g) {
  int expect = 0;
  for (const auto& seg : a.segments) {
    if (seg.start != expect || seg.end <= seg.start) return false;
    expect = seg.end;
  }
  if (expect != a.num_frames) return false;
  if (a.num_frames == 0) return true;

  std::vector<int> state_of_frame(a.num_frames);
  for (const auto& seg : a.segments)
    for (int t = seg.start; t < seg.end; ++t) state_of_frame[t] = seg.model_state;

  const int N = g.num_emitting();
  std::vector<char> alive(N, 0);
  for (int d = 0; d < N; ++d)
    alive[d] = g.entry_weight[d] != kLogZero &&
               g.nodes[g.emit_nodes[d]].model_state == state_of_frame[0];
  for (int t = 1; t < a.num_frames; ++t) {
    std::vector<char> next(N, 0);
    bool any = false;
    for (int d = 0; d < N; ++d) {
      if (g.nodes[g.emit_nodes[d]].model_state != state_of_frame[t]) continue;
      for (const auto& ia : g.in_arcs[d]) {
        if (alive[ia.src]) {
          next[d] = 1;
          any = true;
          break;
        }
      }
    }
    if (!any) return false;
    alive.swap(next);
  }
  for (int d = 0; d < N; ++d)
    if (alive[d] && g.exit_weight[d] != kLogZero) return true;
  return false;
}

// Alignment file: `UTTID<TAB>start<TAB>end<TAB>phone<TAB>state_pos`, segments
// sorted by start frame, utterances sorted by id.
inline void save_alignments(const std::map<std::string, Alignment>& alis,
                            const PhoneSet& phones, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("alignments: cannot write " + path);
  for (const auto& [id, ali] : alis) {
    for (const auto& seg : ali.segments) {
      out << id << "\t" << seg.start << "\t" << seg.end << "\t" << phones.phones[seg.phone]
          << "\t" << seg.pos << "\n";
    }
  }
}

inline std::map<std::string, Alignment> load_alignments(const std::string& path,
                                                        const PhoneSet& phones) {
  std::ifstream in(path);
  if (!in) throw ParseError("alignments: cannot open " + path);
  std::map<std::string, Alignment> alis;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id, phone_sym;
    int start = 0, end = 0, pos = 0;
    if (!(ss >> id >> start >> end >> phone_sym >> pos))
      throw ParseError("alignments: " + path + ":" + std::to_string(lineno) + ": bad line");
    const int phone = phones.phone_id(phone_sym);
    if (phone < 0)
      throw ParseError("alignments: " + path + ":" + std::to_string(lineno) +
                       ": unknown phone " + phone_sym);
    auto& ali = alis[id];
    ali.segments.push_back({phones.model_state(phone, pos), phone, pos, start, end});
    ali.num_frames = std::max(ali.num_frames, end);
  }
  for (auto& [id, ali] : alis)
    std::sort(ali.segments.begin(), ali.segments.end(),
              [](const AlignSegment& x, const AlignSegment& y) { return x.start < y.start; });
  return alis;
}

}  // namespace fsam
