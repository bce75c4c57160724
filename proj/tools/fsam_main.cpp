// tools/fsam_main.cpp

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

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fsam/fsam.hpp"

int main(int argc, char** argv) {
  CLI::App app{"fsam: GMM-free flat-start acoustic model training"};
  app.require_subcommand(1);

  int workers = 1;
  app.add_option("--workers", workers, "worker threads for read-only passes (1 = reference mode)");

  std::string spec_path, out_dir;
  int64_t seed_arg = -1;
  auto* gen = app.add_subcommand("gen", "generate a synthetic corpus");
  gen->add_option("--spec", spec_path, "synthetic spec config file")->required();
  gen->add_option("--out", out_dir, "output corpus directory")->required();
  gen->add_option("--seed", seed_arg, "seed override");

  std::string corpus_dir, config_path, strategy, model_out, align_out, report_out;
  auto* flatstart = app.add_subcommand("flatstart", "run a flat-start training strategy");
  flatstart->add_option("--corpus", corpus_dir, "corpus directory")->required();
  flatstart->add_option("--config", config_path, "flat key = value config file");
  flatstart->add_option("--strategy", strategy, "iterative_ce | mmi | mmi_then_ce");
  flatstart->add_option("--model-out", model_out, "model file to write")->required();
  flatstart->add_option("--align-out", align_out, "alignment file to write")->required();
  flatstart->add_option("--report-out", report_out, "per-epoch CSV to write");
  flatstart->add_option("--seed", seed_arg, "seed override");

  std::string model_path, align_path, stage = "refined";
  auto* align = app.add_subcommand("align", "forced-align a corpus with a model");
  align->add_option("--corpus", corpus_dir, "corpus directory")->required();
  align->add_option("--model", model_path, "model file")->required();
  align->add_option("--out", align_out, "alignment file to write")->required();
  align->add_option("--stage", stage, "bootstrap | refined (default refined)");

  std::string questions_path, out_prefix, centroid = "arithmetic", direction = "member_to_centroid";
  std::vector<int> targets;
  double min_gain = 1e-6;
  auto* tie = app.add_subcommand("tie", "KL decision-tree state tying");
  tie->add_option("--corpus", corpus_dir, "corpus directory")->required();
  tie->add_option("--model", model_path, "model file")->required();
  tie->add_option("--align", align_path, "alignment file")->required();
  tie->add_option("--questions", questions_path, "question file")->required();
  tie->add_option("--targets", targets, "tied-state counts")->required()->delimiter(',');
  tie->add_option("--out-prefix", out_prefix, "output prefix")->required();
  tie->add_option("--min-gain", min_gain, "minimum split gain");
  tie->add_option("--centroid", centroid, "arithmetic | geometric");
  tie->add_option("--direction", direction, "member_to_centroid | centroid_to_member");

  std::string ref_path;
  auto* eval = app.add_subcommand("eval", "frame accuracy and phone error rate");
  eval->add_option("--corpus", corpus_dir, "corpus directory")->required();
  eval->add_option("--align", align_path, "alignment file to score")->required();
  eval->add_option("--ref", ref_path, "reference alignments (default: corpus alignments.ref)");
  eval->add_option("--model", model_path, "model file (enables phone error rate)");

  std::vector<std::string> report_inputs;
  std::string report_table;
  auto* report = app.add_subcommand("report", "merge per-strategy CSVs into one table");
  report->add_option("--inputs", report_inputs, "per-epoch CSV files")->required()->delimiter(',');
  report->add_option("--out", report_table, "comparison table to write")->required();

  CLI11_PARSE(app, argc, argv);

  const std::optional<uint64_t> seed =
      seed_arg >= 0 ? std::optional<uint64_t>(static_cast<uint64_t>(seed_arg)) : std::nullopt;
  try {
    if (gen->parsed()) {
      fsam::cmd_gen(spec_path, out_dir, seed);
    } else if (flatstart->parsed()) {
      fsam::cmd_flatstart(corpus_dir, config_path, strategy, model_out, align_out, report_out,
                          seed, workers);
    } else if (align->parsed()) {
      fsam::cmd_align(corpus_dir, model_path, align_out, stage, workers);
    } else if (tie->parsed()) {
      fsam::cmd_tie(corpus_dir, model_path, align_path, questions_path, targets, out_prefix,
                    min_gain, centroid, direction, workers);
    } else if (eval->parsed()) {
      fsam::cmd_eval(corpus_dir, align_path, ref_path, model_path, workers);
    } else if (report->parsed()) {
      fsam::cmd_report(report_inputs, report_table);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
