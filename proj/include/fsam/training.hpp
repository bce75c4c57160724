// fsam/training.hpp

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
#include <limits>
#include <string>
#include <vector>

#include "fsam/corpus.hpp"
#include "fsam/decode.hpp"
#include "fsam/graph.hpp"
#include "fsam/network.hpp"

namespace fsam {

// Whether the denominator occupancies come from the best decoded path (the
// standard mode here) or from a full forward-backward over the loop graph
// (comparison mode only).
enum class DenominatorMode { kViterbiPath, kFullForwardBackward };

struct MmiUttResult {
  Matrix output_grad;            // gamma_num - gamma_den, rows sum to 0
  LogProb num_loglike = kLogZero;   // numerator forward-backward total
  LogProb den_loglike = kLogZero;   // denominator forward total (same measure,
                                    // so num_loglike <= den_loglike always)
  LogProb den_best_loglike = kLogZero;  // score of the best denominator path
  double frame_agreement = 0.0;  // argmax gamma_num == denominator path state
  double silence_fraction = 0.0;  // denominator-path frames decoded as silence
  Alignment den_path;
};

// One utterance of the modified MMI criterion: numerator occupancies from
// forward-backward over the forced graph, denominator occupancies from the
// best free-loop path, log posteriors used directly as state log-likelihoods
// (no priors, no language model, no acoustic scaling). Both graphs are built
// and decoded fresh with the current network. `cache` (optional) receives the
// forward pass for the caller's backprop.
inline MmiUttResult mmi_utterance_gradient(const Network& net, const Matrix& features,
                                           const std::vector<std::string>& transcript,
                                           const Lexicon& lexicon, const PhoneSet& phones,
                                           GraphStage stage = GraphStage::kBootstrap,
                                           DenominatorMode den_mode = DenominatorMode::kViterbiPath,
                                           ForwardCache* cache = nullptr) {
  ForwardCache local;
  ForwardCache* fc = cache ? cache : &local;
  forward(net, features, fc);
  const Matrix loglikes = log_posteriors_from_cache(*fc);
  const int S = static_cast<int>(loglikes.cols());
  const int T = static_cast<int>(loglikes.rows());

  const StateGraph num_graph = build_numerator_graph(transcript, lexicon, phones, stage);
  const StateGraph den_graph = build_denominator_graph(phones);

  MmiUttResult res;
  const OccupancyMatrix num_occ = forward_backward(num_graph, loglikes);
  res.num_loglike = num_occ.total_log_likelihood;
  res.den_loglike = total_log_likelihood(den_graph, loglikes);

  auto [den_path, den_score] = viterbi(den_graph, loglikes);
  res.den_best_loglike = den_score;
  res.den_path = den_path;

  OccupancyMatrix den_occ;
  if (den_mode == DenominatorMode::kViterbiPath) {
    den_occ = occupancy_from_alignment(den_path, S, den_score);
  } else {
    den_occ = forward_backward(den_graph, loglikes);
  }

  res.output_grad = num_occ.gamma - den_occ.gamma;

  int agree = 0, sil_frames = 0;
  std::vector<int> den_state(T);
  for (const auto& seg : den_path.segments) {
    const bool is_sil = seg.phone == phones.silence || seg.phone == phones.short_pause;
    for (int t = seg.start; t < seg.end; ++t) {
      den_state[t] = seg.model_state;
      if (is_sil) ++sil_frames;
    }
  }
  for (int t = 0; t < T; ++t) {
    int arg = 0;
    num_occ.gamma.row(t).maxCoeff(&arg);
    if (arg == den_state[t]) ++agree;
  }
  res.frame_agreement = T > 0 ? static_cast<double>(agree) / T : 0.0;
  res.silence_fraction = T > 0 ? static_cast<double>(sil_frames) / T : 0.0;
  return res;
}

// Frame-level CE gradient against fixed occupancy targets.
inline Matrix ce_utterance_gradient(const Network& net, const Matrix& features,
                                    const OccupancyMatrix& targets,
                                    ForwardCache* cache = nullptr) {
  ForwardCache local;
  ForwardCache* fc = cache ? cache : &local;
  const Matrix posteriors = forward(net, features, fc);
  return ce_output_grad(posteriors, targets.gamma);
}

// Hold-out backoff state: keeps the best-scoring weights and halves the
// learning rate whenever the hold-out error fails to improve.
struct HoldoutController {
  double best_error = std::numeric_limits<double>::infinity();
  Network backup;
  double lr = 0.0;
  int halvings = 0;
  int max_halvings = 8;

  bool exhausted() const { return halvings >= max_halvings; }
};

enum class BackoffDecision { kContinue, kRestored };

// Improvement snapshots the network; anything else restores the snapshot and
// halves the learning rate. Training stops once max_halvings restores have
// happened.
inline BackoffDecision holdout_backoff(HoldoutController& ctrl, Network& net,
                                       double current_error) {
  if (current_error < ctrl.best_error) {
    ctrl.best_error = current_error;
    ctrl.backup = net;
    return BackoffDecision::kContinue;
  }
  net = ctrl.backup;
  ctrl.lr /= 2.0;
  ++ctrl.halvings;
  return BackoffDecision::kRestored;
}

enum class HoldoutMetric { kFrameCe, kMmiDisagreement };

// Hold-out error of the current network. frame_ce is the mean cross-entropy
// per frame against the network's own numerator occupancies;
// mmi_disagreement is 1 - mean frame agreement between numerator argmax and
// the denominator best path.
inline double holdout_error(const Network& net, const Corpus& corpus,
                            const std::vector<int>& holdout_idx,
                            const std::vector<Matrix>& inputs, HoldoutMetric metric,
                            GraphStage stage, int workers = 1) {
  if (holdout_idx.empty()) throw ConfigError("holdout_error: empty hold-out set");
  std::vector<double> value(holdout_idx.size(), 0.0);
  std::vector<double> frames(holdout_idx.size(), 0.0);
  parallel_for(workers, holdout_idx.size(), [&](size_t k) {
    const Utterance& utt = corpus.utts[holdout_idx[k]];
    const Matrix& feats = inputs[holdout_idx[k]];
    try {
      if (metric == HoldoutMetric::kFrameCe) {
        ForwardCache cache;
        forward(net, feats, &cache);
        const Matrix loglikes = log_posteriors_from_cache(cache);
        const StateGraph g = build_numerator_graph(utt.transcript, corpus.lexicon,
                                                   corpus.phones, stage);
        const OccupancyMatrix occ = forward_backward(g, loglikes);
        value[k] = -(occ.gamma.array() * loglikes.array()).sum();
        frames[k] = static_cast<double>(feats.rows());
      } else {
        const MmiUttResult res = mmi_utterance_gradient(net, feats, utt.transcript,
                                                        corpus.lexicon, corpus.phones, stage);
        value[k] = res.frame_agreement;
        frames[k] = 1.0;
      }
    } catch (const InfeasibleUtteranceError&) {
      frames[k] = 0.0;  // skip, consistent with training
    } catch (const LexiconError&) {
      frames[k] = 0.0;
    }
  });
  double num = 0.0, den = 0.0;
  for (size_t k = 0; k < holdout_idx.size(); ++k) {
    num += value[k];
    den += frames[k];
  }
  if (den == 0.0) throw ConfigError("holdout_error: no usable hold-out utterance");
  return metric == HoldoutMetric::kFrameCe ? num / den : 1.0 - num / den;
}

}  // namespace fsam
