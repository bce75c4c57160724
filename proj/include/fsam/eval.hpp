// fsam/eval.hpp

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
#include <string>
#include <vector>

#include "fsam/corpus.hpp"
#include "fsam/decode.hpp"
#include "fsam/network.hpp"
#include "fsam/training.hpp"

namespace fsam {

// Phone occurrences of an alignment: a new occurrence starts whenever the
// phone changes or the state position fails to advance (strict left-to-right
// topologies only ever repeat a phone by re-entering it).
inline std::vector<int> phone_occurrences(const Alignment& ali) {
  std::vector<int> seq;
  int prev_phone = -1, prev_pos = -1;
  for (const auto& seg : ali.segments) {
    if (seg.phone != prev_phone || seg.pos <= prev_pos) seq.push_back(seg.phone);
    prev_phone = seg.phone;
    prev_pos = seg.pos;
  }
  return seq;
}

// Fraction of frames whose aligned phone matches the ground truth, over
// utterances that have both an alignment and a reference.
inline double frame_accuracy(const std::vector<Alignment>& alis, const Corpus& corpus) {
  if (alis.size() != corpus.utts.size())
    throw DimensionError("frame_accuracy: alignment count mismatch");
  long match = 0, total = 0;
  for (size_t i = 0; i < alis.size(); ++i) {
    const auto& truth = corpus.utts[i].ground_truth;
    if (!truth || alis[i].empty()) continue;
    std::vector<int> hyp(alis[i].num_frames, -1), ref(truth->num_frames, -2);
    for (const auto& seg : alis[i].segments)
      for (int t = seg.start; t < seg.end; ++t) hyp[t] = seg.phone;
    for (const auto& seg : truth->segments)
      for (int t = seg.start; t < seg.end; ++t) ref[t] = seg.phone;
    const int T = std::min<int>(hyp.size(), ref.size());
    for (int t = 0; t < T; ++t)
      if (hyp[t] == ref[t]) ++match;
    total += T;
  }
  if (total == 0) throw Error("frame_accuracy: no utterance has both alignment and reference");
  return static_cast<double>(match) / static_cast<double>(total);
}

// Edit distance with unit substitution/insertion/deletion costs.
inline int levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    prev.swap(cur);
  }
  return prev[m];
}

struct PerResult {
  double per = 0.0;
  long edits = 0;
  long ref_length = 0;
};

// Phone error rate: free-loop Viterbi decode against the reference phone
// occurrence sequence, total edit distance over total reference length.
inline PerResult phone_error_rate(const Network& net, const Corpus& corpus,
                                  const std::vector<Matrix>& inputs, int workers = 1) {
  const StateGraph den = build_denominator_graph(corpus.phones);
  std::vector<long> edits(corpus.utts.size(), 0), lens(corpus.utts.size(), 0);
  parallel_for(workers, corpus.utts.size(), [&](size_t i) {
    const auto& truth = corpus.utts[i].ground_truth;
    if (!truth) return;
    ForwardCache cache;
    forward(net, inputs[i], &cache);
    const Matrix loglikes = log_posteriors_from_cache(cache);
    const auto [path, score] = viterbi(den, loglikes);
    const std::vector<int> hyp = phone_occurrences(path);
    const std::vector<int> ref = phone_occurrences(*truth);
    edits[i] = levenshtein(hyp, ref);
    lens[i] = static_cast<long>(ref.size());
  });
  PerResult res;
  for (size_t i = 0; i < corpus.utts.size(); ++i) {
    res.edits += edits[i];
    res.ref_length += lens[i];
  }
  if (res.ref_length == 0) throw Error("phone_error_rate: no reference sequences");
  res.per = static_cast<double>(res.edits) / static_cast<double>(res.ref_length);
  return res;
}

}  // namespace fsam
