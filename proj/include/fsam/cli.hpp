// fsam/cli.hpp

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

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fsam/corpus.hpp"
#include "fsam/eval.hpp"
#include "fsam/flatstart.hpp"
#include "fsam/statetying.hpp"

namespace fsam {

// All numeric CSV fields use %.17g so written values round-trip exactly.
inline std::string format_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

inline void write_report_csv(const std::vector<EpochRow>& rows, Strategy strategy,
                             const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("report: cannot write " + path);
  out << "epoch,mode,num_loglike_per_frame,holdout_error,lr,silence_fraction,restored,"
         "frame_accuracy,skipped,strategy\n";
  for (const auto& r : rows) {
    out << r.epoch << "," << r.mode << "," << format_double(r.num_loglike_per_frame) << ","
        << format_double(r.holdout_error) << "," << format_double(r.lr) << ","
        << format_double(r.silence_fraction) << "," << (r.restored ? 1 : 0) << ","
        << format_double(r.frame_accuracy) << "," << r.skipped << "," << to_string(strategy)
        << "\n";
  }
}

// Generates a synthetic corpus (with ground-truth alignments) on disk.
inline void cmd_gen(const std::string& spec_path, const std::string& out_dir,
                    std::optional<uint64_t> seed_override) {
  SyntheticSpec spec = load_synthetic_spec(spec_path);
  if (seed_override) spec.seed = *seed_override;
  const Corpus corpus = generate_synthetic(spec);
  save_corpus(corpus, out_dir);
  std::cout << "gen: wrote " << corpus.utts.size() << " utterances, "
            << corpus.phones.num_phones() << " phones, "
            << corpus.phones.num_model_states() << " model states to " << out_dir << "\n";
}

// Runs one flat-start strategy end to end; writes the model, the alignments
// and the per-epoch CSV report.
inline void cmd_flatstart(const std::string& corpus_dir, const std::string& config_path,
                          const std::string& strategy_override, const std::string& model_out,
                          const std::string& align_out, const std::string& report_out,
                          std::optional<uint64_t> seed_override, int workers) {
  Config raw = config_path.empty() ? Config() : Config::from_file(config_path);
  FlatstartConfig cfg = flatstart_config_from(raw);
  raw.finish();
  if (!strategy_override.empty()) cfg.strategy = strategy_from_string(strategy_override);
  if (seed_override) cfg.seed = *seed_override;
  cfg.workers = workers;

  const Corpus corpus = load_corpus(corpus_dir);
  const auto t0 = std::chrono::steady_clock::now();
  const FlatstartResult res = run_flatstart(corpus, cfg);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  save_network(res.net, model_out);
  std::map<std::string, Alignment> alis;
  for (size_t i = 0; i < corpus.utts.size(); ++i)
    if (!res.alignments[i].empty()) alis[corpus.utts[i].id] = res.alignments[i];
  save_alignments(alis, corpus.phones, align_out);
  if (!report_out.empty()) write_report_csv(res.log, cfg.strategy, report_out);

  std::cout << "flatstart: strategy=" << to_string(cfg.strategy)
            << " epochs=" << res.total_epochs << " skipped=" << res.skipped_utterances;
  if (!res.log.empty() && res.log.back().frame_accuracy >= 0.0)
    std::cout << " frame_accuracy=" << res.log.back().frame_accuracy;
  std::cout << " wall_time_s=" << secs << "\n";
}

// Forced alignment of a corpus with an existing model.
inline void cmd_align(const std::string& corpus_dir, const std::string& model_path,
                      const std::string& out_path, const std::string& stage_name, int workers) {
  const Corpus corpus = load_corpus(corpus_dir);
  const Network net = load_network(model_path);
  GraphStage stage = GraphStage::kRefined;
  if (stage_name == "bootstrap")
    stage = GraphStage::kBootstrap;
  else if (stage_name != "refined")
    throw ConfigError("align: stage must be bootstrap or refined");

  std::vector<Matrix> inputs(corpus.utts.size());
  const bool deltas = net.input_dim() == 3 * corpus.dim();
  parallel_for(workers, corpus.utts.size(), [&](size_t i) {
    inputs[i] = deltas ? add_deltas(corpus.utts[i].features) : corpus.utts[i].features;
  });
  int skipped = 0;
  const std::vector<Alignment> alis = realign(net, corpus, inputs, stage, workers, &skipped);
  std::map<std::string, Alignment> out;
  for (size_t i = 0; i < corpus.utts.size(); ++i)
    if (!alis[i].empty()) out[corpus.utts[i].id] = alis[i];
  save_alignments(out, corpus.phones, out_path);
  std::cout << "align: wrote " << out.size() << " alignments, skipped " << skipped << "\n";
}

// KL decision-tree tying for each requested leaf count: writes
// <prefix>.<count>.tree and <prefix>.<count>.map.
inline void cmd_tie(const std::string& corpus_dir, const std::string& model_path,
                    const std::string& align_path, const std::string& questions_path,
                    const std::vector<int>& targets, const std::string& out_prefix,
                    double min_gain, const std::string& centroid_name,
                    const std::string& direction_name, int workers) {
  const Corpus corpus = load_corpus(corpus_dir);
  const Network net = load_network(model_path);
  const auto ali_map = load_alignments(align_path, corpus.phones);
  std::vector<Alignment> alis(corpus.utts.size());
  for (size_t i = 0; i < corpus.utts.size(); ++i)
    if (auto it = ali_map.find(corpus.utts[i].id); it != ali_map.end()) alis[i] = it->second;

  const std::vector<Question> questions = load_questions(questions_path, corpus.phones);
  ClusterOptions opts;
  opts.min_gain = min_gain;
  if (centroid_name == "arithmetic")
    opts.centroid = CentroidKind::kArithmetic;
  else if (centroid_name == "geometric")
    opts.centroid = CentroidKind::kGeometric;
  else
    throw ConfigError("tie: centroid must be arithmetic or geometric");
  if (direction_name == "member_to_centroid")
    opts.direction = KlDirection::kMemberToCentroid;
  else if (direction_name == "centroid_to_member")
    opts.direction = KlDirection::kCentroidToMember;
  else
    throw ConfigError("tie: direction must be member_to_centroid or centroid_to_member");

  const PosteriorStats stats = accumulate_stats(net, corpus, alis, workers);
  std::cout << "tie: " << stats.variants.size() << " context variants over "
            << stats.total_frames() << " frames\n";
  for (int target : targets) {
    const TieTree tree = build_tie_tree(stats, questions, target, opts);
    const std::string base = out_prefix + "." + std::to_string(target);
    save_tie_tree(tree, corpus.phones, base + ".tree");
    save_tied_state_map(tree, stats, corpus.phones, base + ".map");
    std::cout << "tie: target " << target << " -> " << tree.num_leaves << " leaves, total cost "
              << tree.total_cost << (tree.exhausted ? " (exhausted: no splittable node left)" : "")
              << "\n";
  }
}

// Frame accuracy against a reference alignment file, and phone error rate of
// the free-loop decode when a model is given.
inline void cmd_eval(const std::string& corpus_dir, const std::string& align_path,
                     const std::string& ref_path, const std::string& model_path, int workers) {
  Corpus corpus = load_corpus(corpus_dir);
  if (!ref_path.empty()) {
    const auto refs = load_alignments(ref_path, corpus.phones);
    for (auto& utt : corpus.utts) {
      const auto it = refs.find(utt.id);
      utt.ground_truth = it == refs.end() ? std::nullopt : std::optional<Alignment>(it->second);
    }
  }
  const auto ali_map = load_alignments(align_path, corpus.phones);
  std::vector<Alignment> alis(corpus.utts.size());
  bool any = false;
  for (size_t i = 0; i < corpus.utts.size(); ++i) {
    if (auto it = ali_map.find(corpus.utts[i].id); it != ali_map.end()) {
      alis[i] = it->second;
      any = true;
    }
  }
  if (!any) throw Error("eval: no alignment matches any corpus utterance id");
  for (const auto& [id, ali] : ali_map)
    if (std::none_of(corpus.utts.begin(), corpus.utts.end(),
                     [&](const Utterance& u) { return u.id == id; }))
      throw Error("eval: alignment id " + id + " not in corpus");

  std::cout << "eval: frame_accuracy=" << format_double(frame_accuracy(alis, corpus)) << "\n";
  if (!model_path.empty()) {
    const Network net = load_network(model_path);
    const bool deltas = net.input_dim() == 3 * corpus.dim();
    std::vector<Matrix> inputs(corpus.utts.size());
    parallel_for(workers, corpus.utts.size(), [&](size_t i) {
      inputs[i] = deltas ? add_deltas(corpus.utts[i].features) : corpus.utts[i].features;
    });
    const PerResult per = phone_error_rate(net, corpus, inputs, workers);
    std::cout << "eval: phone_error_rate=" << format_double(per.per) << " (" << per.edits
              << " edits / " << per.ref_length << " reference phones)\n";
  }
}

// Merges per-strategy epoch CSVs into one comparison table: strategy, epochs,
// final hold-out error, final frame accuracy.
inline void cmd_report(const std::vector<std::string>& inputs, const std::string& out_path) {
  struct Summary {
    std::string strategy;
    int epochs = 0;
    std::string holdout, accuracy;
  };
  std::vector<Summary> rows;
  for (const auto& path : inputs) {
    std::ifstream in(path);
    if (!in) throw ParseError("report: cannot open " + path);
    std::string line, last;
    std::getline(in, line);  // header
    int epochs = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      last = line;
      ++epochs;
    }
    if (last.empty()) throw ParseError("report: " + path + " has no epochs");
    std::vector<std::string> fields;
    std::istringstream ss(last);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() < 10) throw ParseError("report: " + path + ": bad row");
    rows.push_back({fields[9], epochs, fields[3], fields[7]});
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw Error("report: cannot write " + out_path);
  out << "strategy,epochs,final_holdout_error,final_frame_accuracy\n";
  for (const auto& r : rows)
    out << r.strategy << "," << r.epochs << "," << r.holdout << "," << r.accuracy << "\n";
  std::cout << "report: wrote " << rows.size() << " strategies to " << out_path << "\n";
}

}  // namespace fsam
