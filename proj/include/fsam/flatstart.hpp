// fsam/flatstart.hpp

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
#include <numeric>
#include <string>
#include <vector>

#include "fsam/config.hpp"
#include "fsam/corpus.hpp"
#include "fsam/eval.hpp"
#include "fsam/network.hpp"
#include "fsam/training.hpp"

namespace fsam {

enum class Strategy { kIterativeCe, kMmi, kMmiThenCe };

inline Strategy strategy_from_string(const std::string& name) {
  if (name == "iterative_ce") return Strategy::kIterativeCe;
  if (name == "mmi") return Strategy::kMmi;
  if (name == "mmi_then_ce") return Strategy::kMmiThenCe;
  throw ConfigError("unknown strategy '" + name +
                    "' (expected iterative_ce, mmi or mmi_then_ce)");
}

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kIterativeCe: return "iterative_ce";
    case Strategy::kMmi: return "mmi";
    case Strategy::kMmiThenCe: return "mmi_then_ce";
  }
  return "?";
}

struct FlatstartConfig {
  Strategy strategy = Strategy::kMmi;
  int ce_iterations = 4;        // training rounds of the iterative CE scheme
  int epochs_per_iteration = 12;
  double ce_lr = 0.01;
  double mmi_lr = 0.001;
  double ce_momentum = 0.9;
  double mmi_momentum = 0.0;
  double holdout_fraction = 0.1;
  uint64_t seed = 1;
  int epoch_cap = 50;           // MMI epochs
  int max_halvings = 8;
  int refine_after_epochs = -1;  // -1: refine once the first epoch improves
  int ce_minibatch = 100;        // frames
  std::vector<int> hidden = {64, 64};
  DenominatorMode den_mode = DenominatorMode::kViterbiPath;
  HoldoutMetric holdout_metric = HoldoutMetric::kFrameCe;
  bool use_deltas = true;
  int workers = 1;
  // Fault injection for backoff tests: multiplies the learning rate for one
  // epoch to force a hold-out regression.
  int lr_spike_epoch = -1;
  double lr_spike_factor = 100.0;

  void validate(int corpus_size) const {
    if (ce_iterations < 1) throw ConfigError("flatstart: ce_iterations must be >= 1");
    if (epochs_per_iteration < 0) throw ConfigError("flatstart: epochs_per_iteration < 0");
    if (ce_lr <= 0.0 || mmi_lr <= 0.0) throw ConfigError("flatstart: learning rates must be > 0");
    if (holdout_fraction <= 0.0 || holdout_fraction >= 1.0)
      throw ConfigError("flatstart: holdout_fraction must be in (0,1)");
    const int k = holdout_count(corpus_size);
    if (k < 1 || k >= corpus_size)
      throw ConfigError("flatstart: holdout split leaves no training data");
    if (epoch_cap < 1) throw ConfigError("flatstart: epoch_cap must be >= 1");
    if (ce_minibatch < 1) throw ConfigError("flatstart: ce_minibatch must be >= 1");
    if (hidden.empty()) throw ConfigError("flatstart: need at least one hidden layer");
  }

  int holdout_count(int corpus_size) const {
    return std::max(1, static_cast<int>(std::lround(holdout_fraction * corpus_size)));
  }
};

inline FlatstartConfig flatstart_config_from(Config& cfg) {
  FlatstartConfig fc;
  fc.strategy = strategy_from_string(cfg.get_string("strategy", to_string(fc.strategy)));
  fc.ce_iterations = static_cast<int>(cfg.get_int("ce_iterations", fc.ce_iterations));
  fc.epochs_per_iteration =
      static_cast<int>(cfg.get_int("epochs_per_iteration", fc.epochs_per_iteration));
  fc.ce_lr = cfg.get_double("ce_lr", fc.ce_lr);
  fc.mmi_lr = cfg.get_double("mmi_lr", fc.mmi_lr);
  if (cfg.has("initial_lr")) {
    const double lr = cfg.get_double("initial_lr", 0.0);
    fc.ce_lr = lr;
    fc.mmi_lr = lr;
  }
  fc.ce_momentum = cfg.get_double("ce_momentum", fc.ce_momentum);
  fc.mmi_momentum = cfg.get_double("mmi_momentum", fc.mmi_momentum);
  fc.holdout_fraction = cfg.get_double("holdout_fraction", fc.holdout_fraction);
  fc.seed = static_cast<uint64_t>(cfg.get_int("seed", static_cast<int64_t>(fc.seed)));
  fc.epoch_cap = static_cast<int>(cfg.get_int("epoch_cap", fc.epoch_cap));
  fc.max_halvings = static_cast<int>(cfg.get_int("max_halvings", fc.max_halvings));
  fc.refine_after_epochs =
      static_cast<int>(cfg.get_int("refine_after_epochs", fc.refine_after_epochs));
  fc.ce_minibatch = static_cast<int>(cfg.get_int("ce_minibatch", fc.ce_minibatch));
  const int num_hidden = static_cast<int>(cfg.get_int("hidden_layers", fc.hidden.size()));
  const int units = static_cast<int>(cfg.get_int("hidden_units", fc.hidden.front()));
  if (num_hidden < 1 || units < 1) throw ConfigError("flatstart: bad hidden layer shape");
  fc.hidden.assign(num_hidden, units);
  const std::string den = cfg.get_string("den_mode", "viterbi");
  if (den == "viterbi")
    fc.den_mode = DenominatorMode::kViterbiPath;
  else if (den == "full_fb")
    fc.den_mode = DenominatorMode::kFullForwardBackward;
  else
    throw ConfigError("flatstart: den_mode must be viterbi or full_fb");
  const std::string metric = cfg.get_string("holdout_metric", "frame_ce");
  if (metric == "frame_ce")
    fc.holdout_metric = HoldoutMetric::kFrameCe;
  else if (metric == "mmi_disagreement")
    fc.holdout_metric = HoldoutMetric::kMmiDisagreement;
  else
    throw ConfigError("flatstart: holdout_metric must be frame_ce or mmi_disagreement");
  fc.use_deltas = cfg.get_bool("use_deltas", fc.use_deltas);
  fc.lr_spike_epoch = static_cast<int>(cfg.get_int("lr_spike_epoch", fc.lr_spike_epoch));
  fc.lr_spike_factor = cfg.get_double("lr_spike_factor", fc.lr_spike_factor);
  return fc;
}

struct EpochRow {
  int epoch = 0;
  std::string mode;  // "ce" or "mmi"
  double num_loglike_per_frame = 0.0;
  double holdout_error = 0.0;
  double lr = 0.0;
  double silence_fraction = 0.0;
  bool restored = false;
  double frame_accuracy = -1.0;  // -1 when no ground truth
  int skipped = 0;
};

struct FlatstartResult {
  Network net;
  std::vector<Alignment> alignments;  // per corpus utterance; empty = skipped
  std::vector<EpochRow> log;
  int total_epochs = 0;
  int skipped_utterances = 0;
};

// Lays the bootstrap numerator state chain uniformly over [0, T): every state
// gets floor(T/N) frames and the first T mod N states one extra.
inline Alignment uniform_segmentation(const std::vector<std::string>& transcript,
                                      const Lexicon& lexicon, const PhoneSet& phones, int T) {
  std::vector<int> chain{phones.silence};
  for (const auto& word : transcript) {
    const auto& pron = lexicon.prons(word).front();
    chain.insert(chain.end(), pron.begin(), pron.end());
  }
  if (!transcript.empty()) chain.push_back(phones.silence);

  std::vector<std::pair<int, int>> states;  // (phone, pos)
  for (int phone : chain)
    for (int pos = 0; pos < phones.phone_states(phone); ++pos) states.push_back({phone, pos});
  const int N = static_cast<int>(states.size());
  if (T < N)
    throw InfeasibleUtteranceError("uniform_segmentation: " + std::to_string(T) +
                                   " frames for " + std::to_string(N) + " states");
  Alignment ali;
  ali.num_frames = T;
  const int base = T / N, extra = T % N;
  int at = 0;
  for (int i = 0; i < N; ++i) {
    const int dur = base + (i < extra ? 1 : 0);
    const auto [phone, pos] = states[i];
    ali.segments.push_back({phones.model_state(phone, pos), phone, pos, at, at + dur});
    at += dur;
  }
  return ali;
}

namespace detail {

struct TrainSetup {
  std::vector<Matrix> inputs;  // delta-augmented features, per utterance
  std::vector<int> train_idx;
  std::vector<int> holdout_idx;
  std::vector<int> layer_sizes;
};

inline TrainSetup make_setup(const Corpus& corpus, const FlatstartConfig& cfg) {
  if (corpus.utts.empty()) throw ConfigError("flatstart: empty corpus");
  cfg.validate(static_cast<int>(corpus.utts.size()));
  TrainSetup s;
  s.inputs.resize(corpus.utts.size());
  parallel_for(cfg.workers, corpus.utts.size(), [&](size_t i) {
    s.inputs[i] = cfg.use_deltas ? add_deltas(corpus.utts[i].features)
                                 : corpus.utts[i].features;
  });

  const int n = static_cast<int>(corpus.utts.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(sub_seed(cfg.seed, 1));
  rng.shuffle(order);
  const int k = cfg.holdout_count(n);
  s.holdout_idx.assign(order.begin(), order.begin() + k);
  s.train_idx.assign(order.begin() + k, order.end());
  std::sort(s.holdout_idx.begin(), s.holdout_idx.end());
  std::sort(s.train_idx.begin(), s.train_idx.end());

  s.layer_sizes.push_back(static_cast<int>(s.inputs.front().cols()));
  for (int h : cfg.hidden) s.layer_sizes.push_back(h);
  s.layer_sizes.push_back(corpus.phones.num_model_states());
  return s;
}

inline bool has_ground_truth(const Corpus& corpus) {
  for (const auto& u : corpus.utts)
    if (u.ground_truth) return true;
  return false;
}

}  // namespace detail

// Viterbi forced alignment of every utterance with the given network.
// Infeasible utterances come back empty; *skipped counts them.
inline std::vector<Alignment> realign(const Network& net, const Corpus& corpus,
                                      const std::vector<Matrix>& inputs, GraphStage stage,
                                      int workers = 1, int* skipped = nullptr) {
  std::vector<Alignment> alis(corpus.utts.size());
  std::vector<char> failed(corpus.utts.size(), 0);
  parallel_for(workers, corpus.utts.size(), [&](size_t i) {
    try {
      ForwardCache cache;
      forward(net, inputs[i], &cache);
      const Matrix loglikes = log_posteriors_from_cache(cache);
      const StateGraph g =
          build_numerator_graph(corpus.utts[i].transcript, corpus.lexicon, corpus.phones, stage);
      alis[i] = viterbi(g, loglikes).first;
    } catch (const InfeasibleUtteranceError&) {
      failed[i] = 1;
    } catch (const LexiconError&) {
      failed[i] = 1;
    }
  });
  if (skipped) *skipped += std::accumulate(failed.begin(), failed.end(), 0);
  return alis;
}

namespace detail {

inline double eval_accuracy(const Network& net, const Corpus& corpus,
                            const std::vector<Matrix>& inputs, int workers) {
  if (!has_ground_truth(corpus)) return -1.0;
  const std::vector<Alignment> alis = realign(net, corpus, inputs, GraphStage::kRefined, workers);
  return frame_accuracy(alis, corpus);
}

// One CE training run on fixed per-utterance occupancy targets: shuffled
// frame-level minibatches, plain SGD with momentum, no backoff. Appends one
// log row per epoch.
inline Network train_ce_network(const Corpus& corpus, const FlatstartConfig& cfg,
                                const TrainSetup& setup,
                                const std::vector<OccupancyMatrix>& targets, int epochs,
                                uint64_t init_seed, uint64_t shuffle_seed,
                                std::vector<EpochRow>& log, int* epoch_counter, int skipped) {
  Network net = init_network(setup.layer_sizes, init_seed);
  if (epochs == 0) return net;
  const int S = net.output_dim();
  const int D = net.input_dim();

  // Frame pool over training utterances with valid targets.
  std::vector<std::pair<int, int>> frames;  // (utt, t)
  long sil_frames = 0;
  const int sil_lo = corpus.phones.state_offset(corpus.phones.silence);
  const int sil_hi = sil_lo + corpus.phones.silence_states;
  for (int i : setup.train_idx) {
    if (targets[i].gamma.rows() == 0) continue;
    for (int t = 0; t < targets[i].gamma.rows(); ++t) {
      frames.push_back({i, t});
      int arg = 0;
      targets[i].gamma.row(t).maxCoeff(&arg);
      if (arg >= sil_lo && arg < sil_hi) ++sil_frames;
    }
  }
  if (frames.empty()) throw ConfigError("flatstart: no usable training frames");
  const double sil_fraction = static_cast<double>(sil_frames) / frames.size();

  long holdout_frames = 0;
  for (int i : setup.holdout_idx)
    if (targets[i].gamma.rows() > 0) holdout_frames += targets[i].gamma.rows();

  Rng rng(shuffle_seed);
  SgdState vel;
  for (int e = 0; e < epochs; ++e) {
    rng.shuffle(frames);
    double loss = 0.0;
    for (size_t b = 0; b < frames.size(); b += cfg.ce_minibatch) {
      const int B = static_cast<int>(std::min<size_t>(cfg.ce_minibatch, frames.size() - b));
      Matrix x(B, D), y(B, S);
      for (int r = 0; r < B; ++r) {
        const auto [i, t] = frames[b + r];
        x.row(r) = setup.inputs[i].row(t);
        y.row(r) = targets[i].gamma.row(t);
      }
      ForwardCache cache;
      const Matrix post = forward(net, x, &cache);
      loss += (y.array() * log_posteriors_from_cache(cache).array()).sum();
      // Mean gradient over the minibatch frames.
      const Matrix og = ce_output_grad(post, y) / static_cast<double>(B);
      const Gradients grads = backward(net, cache, og);
      sgd_step(net, grads, cfg.ce_lr, cfg.ce_momentum, vel);
    }

    double holdout_ce = 0.0;
    for (int i : setup.holdout_idx) {
      if (targets[i].gamma.rows() == 0) continue;
      ForwardCache cache;
      forward(net, setup.inputs[i], &cache);
      holdout_ce -= (targets[i].gamma.array() * log_posteriors_from_cache(cache).array()).sum();
    }

    EpochRow row;
    row.epoch = ++*epoch_counter;
    row.mode = "ce";
    row.num_loglike_per_frame = loss / frames.size();
    row.holdout_error = holdout_frames > 0 ? holdout_ce / holdout_frames : 0.0;
    row.lr = cfg.ce_lr;
    row.silence_fraction = sil_fraction;
    row.restored = false;
    row.frame_accuracy = eval_accuracy(net, corpus, setup.inputs, cfg.workers);
    row.skipped = skipped;
    log.push_back(row);
  }
  return net;
}

inline std::vector<OccupancyMatrix> hard_targets(const std::vector<Alignment>& alis,
                                                 int num_states) {
  std::vector<OccupancyMatrix> targets(alis.size());
  for (size_t i = 0; i < alis.size(); ++i)
    if (!alis[i].empty()) targets[i] = occupancy_from_alignment(alis[i], num_states);
  return targets;
}

}  // namespace detail

// Iterative CE flat start: train on uniform-segmentation targets, then
// repeatedly realign with the current network and retrain a freshly
// initialized network on the new hard targets.
inline FlatstartResult iterative_ce_flatstart(const Corpus& corpus, const FlatstartConfig& cfg) {
  const auto setup = detail::make_setup(corpus, cfg);
  const int S = corpus.phones.num_model_states();

  FlatstartResult res;
  std::vector<OccupancyMatrix> targets(corpus.utts.size());
  for (size_t i = 0; i < corpus.utts.size(); ++i) {
    try {
      const Alignment uni =
          uniform_segmentation(corpus.utts[i].transcript, corpus.lexicon, corpus.phones,
                               corpus.utts[i].num_frames());
      targets[i] = occupancy_from_alignment(uni, S);
    } catch (const InfeasibleUtteranceError&) {
      ++res.skipped_utterances;
    } catch (const LexiconError&) {
      ++res.skipped_utterances;
    }
  }

  int epoch_counter = 0;
  Network net;
  for (int iter = 0; iter < cfg.ce_iterations; ++iter) {
    if (iter > 0) {
      int skipped = 0;
      const std::vector<Alignment> alis =
          realign(net, corpus, setup.inputs, GraphStage::kRefined, cfg.workers, &skipped);
      res.skipped_utterances = skipped;
      targets = detail::hard_targets(alis, S);
    }
    net = detail::train_ce_network(corpus, cfg, setup, targets, cfg.epochs_per_iteration,
                                   sub_seed(cfg.seed, 100 + iter), sub_seed(cfg.seed, 300 + iter),
                                   res.log, &epoch_counter, res.skipped_utterances);
  }

  res.alignments = realign(net, corpus, setup.inputs, GraphStage::kRefined, cfg.workers);
  res.net = std::move(net);
  res.total_epochs = epoch_counter;
  return res;
}

// MMI flat start from randomly initialized weights: one weight update per
// utterance with graphs re-decoded on the fly, hold-out backoff after every
// epoch. Stops at the epoch cap or when the learning rate has been halved
// max_halvings times.
inline FlatstartResult mmi_flatstart(const Corpus& corpus, const FlatstartConfig& cfg) {
  const auto setup = detail::make_setup(corpus, cfg);

  FlatstartResult res;
  Network net = init_network(setup.layer_sizes, sub_seed(cfg.seed, 2));
  HoldoutController ctrl;
  ctrl.lr = cfg.mmi_lr;
  ctrl.max_halvings = cfg.max_halvings;
  SgdState vel;
  Rng order_rng(sub_seed(cfg.seed, 3));
  GraphStage stage = GraphStage::kBootstrap;

  for (int epoch = 1; epoch <= cfg.epoch_cap; ++epoch) {
    const double lr = epoch == cfg.lr_spike_epoch ? ctrl.lr * cfg.lr_spike_factor : ctrl.lr;
    std::vector<int> order = setup.train_idx;
    order_rng.shuffle(order);

    double num_ll = 0.0, sil = 0.0;
    long frames = 0;
    int skipped = 0;
    for (int i : order) {
      const Utterance& utt = corpus.utts[i];
      try {
        ForwardCache cache;
        const MmiUttResult r =
            mmi_utterance_gradient(net, setup.inputs[i], utt.transcript, corpus.lexicon,
                                   corpus.phones, stage, cfg.den_mode, &cache);
        const Gradients grads = backward(net, cache, r.output_grad);
        sgd_step(net, grads, lr, cfg.mmi_momentum, vel);
        num_ll += r.num_loglike;
        sil += r.silence_fraction * utt.num_frames();
        frames += utt.num_frames();
      } catch (const InfeasibleUtteranceError&) {
        ++skipped;
      } catch (const LexiconError&) {
        ++skipped;
      }
    }
    if (frames == 0) throw ConfigError("flatstart: every training utterance was skipped");

    const double herr = holdout_error(net, corpus, setup.holdout_idx, setup.inputs,
                                      cfg.holdout_metric, stage, cfg.workers);
    const BackoffDecision decision = holdout_backoff(ctrl, net, herr);
    if (decision == BackoffDecision::kRestored) vel.reset();

    EpochRow row;
    row.epoch = ++res.total_epochs;
    row.mode = "mmi";
    row.num_loglike_per_frame = num_ll / frames;
    row.holdout_error = herr;
    row.lr = lr;
    row.silence_fraction = sil / frames;
    row.restored = decision == BackoffDecision::kRestored;
    row.frame_accuracy = detail::eval_accuracy(net, corpus, setup.inputs, cfg.workers);
    row.skipped = skipped;
    res.log.push_back(row);
    res.skipped_utterances = skipped;

    if (stage == GraphStage::kBootstrap) {
      const bool auto_switch =
          cfg.refine_after_epochs < 0 && decision == BackoffDecision::kContinue;
      const bool forced_switch = cfg.refine_after_epochs >= 0 && epoch >= cfg.refine_after_epochs;
      if (auto_switch || forced_switch) stage = GraphStage::kRefined;
    }
    if (ctrl.exhausted()) break;
  }

  res.alignments = realign(net, corpus, setup.inputs, GraphStage::kRefined, cfg.workers);
  res.net = std::move(net);
  return res;
}

// MMI flat start followed by one CE training run on the MMI alignments; the
// CE network supplies the final labels. With a zero-epoch CE stage the MMI
// result passes through unchanged.
inline FlatstartResult mmi_then_ce(const Corpus& corpus, const FlatstartConfig& cfg) {
  FlatstartResult mmi = mmi_flatstart(corpus, cfg);
  if (cfg.epochs_per_iteration == 0) return mmi;

  const auto setup = detail::make_setup(corpus, cfg);
  const std::vector<OccupancyMatrix> targets =
      detail::hard_targets(mmi.alignments, corpus.phones.num_model_states());

  FlatstartResult res;
  res.log = std::move(mmi.log);
  res.skipped_utterances = mmi.skipped_utterances;
  int epoch_counter = mmi.total_epochs;
  Network net = detail::train_ce_network(corpus, cfg, setup, targets, cfg.epochs_per_iteration,
                                         sub_seed(cfg.seed, 4), sub_seed(cfg.seed, 5), res.log,
                                         &epoch_counter, res.skipped_utterances);
  res.alignments = realign(net, corpus, setup.inputs, GraphStage::kRefined, cfg.workers);
  res.net = std::move(net);
  res.total_epochs = epoch_counter;
  return res;
}

inline FlatstartResult run_flatstart(const Corpus& corpus, const FlatstartConfig& cfg) {
  switch (cfg.strategy) {
    case Strategy::kIterativeCe: return iterative_ce_flatstart(corpus, cfg);
    case Strategy::kMmi: return mmi_flatstart(corpus, cfg);
    case Strategy::kMmiThenCe: return mmi_then_ce(corpus, cfg);
  }
  throw ConfigError("flatstart: bad strategy");
}

}  // namespace fsam
