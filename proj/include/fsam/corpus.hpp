// fsam/corpus.hpp

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

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fsam/common.hpp"
#include "fsam/config.hpp"
#include "fsam/decode.hpp"
#include "fsam/lexicon.hpp"
#include "fsam/matrix.hpp"
#include "fsam/phoneset.hpp"

namespace fsam {

struct Utterance {
  std::string id;
  Matrix features;  // T x D
  std::vector<std::string> transcript;
  std::optional<Alignment> ground_truth;  // synthetic corpora only

  int num_frames() const { return static_cast<int>(features.rows()); }
};

struct Corpus {
  PhoneSet phones;
  Lexicon lexicon;
  std::vector<Utterance> utts;  // sorted by id

  int dim() const { return utts.empty() ? 0 : static_cast<int>(utts.front().features.cols()); }
};

// Appends delta and delta-delta rows computed with the +-2 regression window
// (denominator 2 * sum k^2 = 10); edge frames replicate. A constant signal
// has zero deltas.
inline Matrix add_deltas(const Matrix& features) {
  const int T = static_cast<int>(features.rows());
  const int D = static_cast<int>(features.cols());
  if (T < 1) throw DimensionError("add_deltas: empty feature matrix");
  auto regression = [&](const Matrix& x) {
    Matrix d(T, D);
    for (int t = 0; t < T; ++t) {
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(D);
      for (int k = 1; k <= 2; ++k) {
        const int hi = std::min(T - 1, t + k);
        const int lo = std::max(0, t - k);
        acc += k * (x.row(hi) - x.row(lo));
      }
      d.row(t) = acc / 10.0;
    }
    return d;
  };
  const Matrix d1 = regression(features);
  const Matrix d2 = regression(d1);
  Matrix out(T, 3 * D);
  out.leftCols(D) = features;
  out.middleCols(D, D) = d1;
  out.rightCols(D) = d2;
  return out;
}

// Feature file: magic FSFT1, little-endian u32 T, u32 D, then T*D f32
// row-major.
inline void save_features(const Matrix& features, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_features: cannot write " + path);
  out.write("FSFT1", 5);
  const uint32_t T = static_cast<uint32_t>(features.rows());
  const uint32_t D = static_cast<uint32_t>(features.cols());
  auto put_u32 = [&](uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  put_u32(T);
  put_u32(D);
  std::vector<float> row(D);
  for (uint32_t t = 0; t < T; ++t) {
    for (uint32_t d = 0; d < D; ++d) row[d] = static_cast<float>(features(t, d));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(sizeof(float) * D));
  }
  if (!out) throw Error("save_features: write failed for " + path);
}

inline Matrix load_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("load_features: cannot open " + path);
  char magic[5];
  if (!in.read(magic, 5) || std::memcmp(magic, "FSFT1", 5) != 0)
    throw ParseError("load_features: " + path + ": bad magic at offset 0");
  auto get_u32 = [&](long offset, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
      throw ParseError("load_features: " + path + ": truncated " + what + " at byte offset " +
                       std::to_string(offset));
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
  };
  const uint32_t T = get_u32(5, "frame count");
  const uint32_t D = get_u32(9, "dimension");
  if (T == 0 || D == 0) throw ParseError("load_features: " + path + ": empty matrix");
  Matrix m(T, D);
  std::vector<float> row(D);
  for (uint32_t t = 0; t < T; ++t) {
    if (!in.read(reinterpret_cast<char*>(row.data()),
                 static_cast<std::streamsize>(sizeof(float) * D))) {
      const long offset = 13 + static_cast<long>(t) * static_cast<long>(D) * 4;
      throw ParseError("load_features: " + path + ": truncated at byte offset " +
                       std::to_string(offset));
    }
    for (uint32_t d = 0; d < D; ++d) m(t, d) = row[d];
  }
  return m;
}

// Corpus directory layout:
//   phones.txt       one phone symbol per line
//   lexicon.txt      WORD<TAB>ph1 ph2 ...
//   transcripts.txt  UTTID<TAB>word word ...   (empty word list = silence only)
//   <uttid>.fea      features, one file per utterance
//   alignments.ref   optional ground-truth alignment
inline Corpus load_corpus(const std::string& dir, int states_per_phone = 3,
                          int silence_states = 3) {
  namespace fs = std::filesystem;
  Corpus corpus;
  corpus.phones = load_phoneset((fs::path(dir) / "phones.txt").string(), states_per_phone,
                                silence_states);
  corpus.lexicon = load_lexicon((fs::path(dir) / "lexicon.txt").string(), corpus.phones);

  const std::string tpath = (fs::path(dir) / "transcripts.txt").string();
  std::ifstream tin(tpath);
  if (!tin) throw ParseError("load_corpus: cannot open " + tpath);
  std::map<std::string, std::vector<std::string>> transcripts;
  std::string line;
  int lineno = 0;
  while (std::getline(tin, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const std::string id = tab == std::string::npos ? line : line.substr(0, tab);
    if (id.empty())
      throw ParseError("load_corpus: " + tpath + ":" + std::to_string(lineno) + ": empty id");
    std::vector<std::string> words;
    if (tab != std::string::npos) {
      std::istringstream rest(line.substr(tab + 1));
      std::string w;
      while (rest >> w) words.push_back(w);
    }
    if (transcripts.count(id))
      throw ParseError("load_corpus: " + tpath + ":" + std::to_string(lineno) +
                       ": duplicate utterance id " + id);
    transcripts[id] = std::move(words);
  }

  std::map<std::string, Alignment> refs;
  const std::string rpath = (fs::path(dir) / "alignments.ref").string();
  if (fs::exists(rpath)) refs = load_alignments(rpath, corpus.phones);

  // std::map iteration gives the lexicographic id order required for
  // reproducible shuffles.
  for (auto& [id, words] : transcripts) {
    Utterance utt;
    utt.id = id;
    utt.transcript = std::move(words);
    utt.features = load_features((fs::path(dir) / (id + ".fea")).string());
    if (auto it = refs.find(id); it != refs.end()) utt.ground_truth = it->second;
    corpus.utts.push_back(std::move(utt));
  }
  for (const auto& u : corpus.utts)
    if (u.features.cols() != corpus.utts.front().features.cols())
      throw ParseError("load_corpus: inconsistent feature dimension in " + u.id);
  return corpus;
}

inline void save_corpus(const Corpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_phoneset(corpus.phones, (fs::path(dir) / "phones.txt").string());
  save_lexicon(corpus.lexicon, corpus.phones, (fs::path(dir) / "lexicon.txt").string());
  std::ofstream tout((fs::path(dir) / "transcripts.txt").string(), std::ios::binary);
  if (!tout) throw Error("save_corpus: cannot write transcripts.txt");
  std::map<std::string, Alignment> refs;
  for (const auto& u : corpus.utts) {
    tout << u.id << "\t";
    for (size_t i = 0; i < u.transcript.size(); ++i)
      tout << (i ? " " : "") << u.transcript[i];
    tout << "\n";
    save_features(u.features, (fs::path(dir) / (u.id + ".fea")).string());
    if (u.ground_truth) refs[u.id] = *u.ground_truth;
  }
  if (!refs.empty())
    save_alignments(refs, corpus.phones, (fs::path(dir) / "alignments.ref").string());
}

// Synthetic corpus description. Emission means (one vector per model state)
// are drawn from the seed when left empty, scaled by mean_scale; separability
// against noise_std is what makes the desk-scale experiments meaningful.
struct SyntheticSpec {
  int num_phones = 10;  // regular phones; silence is added on top
  int states_per_phone = 3;
  int silence_states = 3;
  bool with_short_pause = false;
  int dim = 8;
  int num_utterances = 200;
  int vocab_size = 10;
  int min_words = 3;
  int max_words = 8;
  int max_pron_len = 2;
  double state_duration_mean = 2.5;  // geometric, minimum 1 frame
  double sil_duration_mean = 2.0;
  double noise_std = 0.4;
  double mean_scale = 1.0;
  // Blends each frame's emission mean with its neighbors' (weight w, 1-2w, w)
  // before adding noise, so state boundaries smear the way coarticulated
  // speech frames do. 0 = crisp boundaries.
  double coarticulation = 0.0;
  uint64_t seed = 1;
  std::vector<Vector> state_means;  // filled from seed when empty

  void validate() const {
    if (num_phones < 1 || states_per_phone < 1 || silence_states < 1)
      throw ConfigError("synthetic spec: counts must be positive");
    if (dim < 1 || num_utterances < 1 || vocab_size < 1)
      throw ConfigError("synthetic spec: counts must be positive");
    if (min_words < 0 || max_words < min_words)
      throw ConfigError("synthetic spec: bad word count range");
    if (noise_std <= 0.0) throw ConfigError("synthetic spec: noise_std must be > 0");
    if (state_duration_mean < 1.0 || sil_duration_mean < 1.0)
      throw ConfigError("synthetic spec: duration means must be >= 1");
    if (max_pron_len < 1) throw ConfigError("synthetic spec: max_pron_len must be >= 1");
    if (coarticulation < 0.0 || coarticulation > 0.45)
      throw ConfigError("synthetic spec: coarticulation must be in [0, 0.45]");
  }
};

inline SyntheticSpec load_synthetic_spec(const std::string& path) {
  Config cfg = Config::from_file(path);
  SyntheticSpec spec;
  spec.num_phones = static_cast<int>(cfg.get_int("phones", spec.num_phones));
  spec.states_per_phone = static_cast<int>(cfg.get_int("states_per_phone", spec.states_per_phone));
  spec.silence_states = static_cast<int>(cfg.get_int("silence_states", spec.silence_states));
  spec.with_short_pause = cfg.get_bool("with_short_pause", spec.with_short_pause);
  spec.dim = static_cast<int>(cfg.get_int("dim", spec.dim));
  spec.num_utterances = static_cast<int>(cfg.get_int("utterances", spec.num_utterances));
  spec.vocab_size = static_cast<int>(cfg.get_int("vocab_size", spec.vocab_size));
  spec.min_words = static_cast<int>(cfg.get_int("min_words", spec.min_words));
  spec.max_words = static_cast<int>(cfg.get_int("max_words", spec.max_words));
  spec.max_pron_len = static_cast<int>(cfg.get_int("max_pron_len", spec.max_pron_len));
  spec.state_duration_mean = cfg.get_double("state_duration_mean", spec.state_duration_mean);
  spec.sil_duration_mean = cfg.get_double("sil_duration_mean", spec.sil_duration_mean);
  spec.noise_std = cfg.get_double("noise_std", spec.noise_std);
  spec.mean_scale = cfg.get_double("mean_scale", spec.mean_scale);
  spec.coarticulation = cfg.get_double("coarticulation", spec.coarticulation);
  spec.seed = static_cast<uint64_t>(cfg.get_int("seed", static_cast<int64_t>(spec.seed)));
  cfg.finish();
  spec.validate();
  return spec;
}

// Samples word sequences, per-state geometric durations (minimum 1), and
// Gaussian emissions around the state means; records the true alignment.
// Deterministic for a given spec + seed.
inline Corpus generate_synthetic(const SyntheticSpec& spec_in) {
  SyntheticSpec spec = spec_in;
  spec.validate();
  Corpus corpus;

  PhoneSet& ps = corpus.phones;
  for (int p = 0; p < spec.num_phones; ++p) ps.phones.push_back("p" + std::to_string(p));
  ps.silence = static_cast<int>(ps.phones.size());
  ps.phones.push_back("!SIL");
  if (spec.with_short_pause) {
    ps.short_pause = static_cast<int>(ps.phones.size());
    ps.phones.push_back("!SP");
  }
  ps.states_per_phone = spec.states_per_phone;
  ps.silence_states = spec.silence_states;
  ps.validate();

  const int S = ps.num_model_states();
  Rng rng(spec.seed);
  if (spec.state_means.empty()) {
    spec.state_means.resize(S);
    for (int s = 0; s < S; ++s) {
      spec.state_means[s] = Vector(spec.dim);
      for (int d = 0; d < spec.dim; ++d) spec.state_means[s](d) = spec.mean_scale * rng.gauss();
    }
  } else if (static_cast<int>(spec.state_means.size()) != S) {
    throw ConfigError("synthetic spec: need one mean per model state");
  }

  // One pronunciation per word, 1..max_pron_len regular phones. The first
  // phone cycles through the inventory so every phone is covered by the
  // vocabulary; the rest are random.
  for (int w = 0; w < spec.vocab_size; ++w) {
    Pronunciation pron{w % spec.num_phones};
    const int len = 1 + rng.uniform_int(spec.max_pron_len);
    for (int i = 1; i < len; ++i) pron.push_back(rng.uniform_int(spec.num_phones));
    corpus.lexicon.add("w" + std::to_string(w), std::move(pron));
  }

  auto geometric = [&](double mean) {
    const double p = 1.0 / mean;  // success probability; duration = 1 + failures
    int extra = 0;
    while (rng.uniform() >= p && extra < 50) ++extra;
    return 1 + extra;
  };

  int width = 1;
  for (int n = spec.num_utterances - 1; n >= 10; n /= 10) ++width;
  for (int u = 0; u < spec.num_utterances; ++u) {
    Utterance utt;
    std::ostringstream id;
    id << "u" << std::setw(width) << std::setfill('0') << u;
    utt.id = id.str();

    const int n_words = spec.min_words + rng.uniform_int(spec.max_words - spec.min_words + 1);
    std::vector<int> phone_chain{ps.silence};
    for (int w = 0; w < n_words; ++w) {
      const std::string word = "w" + std::to_string(rng.uniform_int(spec.vocab_size));
      utt.transcript.push_back(word);
      const auto& pron = corpus.lexicon.prons(word).front();
      phone_chain.insert(phone_chain.end(), pron.begin(), pron.end());
    }
    phone_chain.push_back(ps.silence);

    Alignment truth;
    std::vector<int> frame_state;
    for (int phone : phone_chain) {
      const double mean_dur =
          phone == ps.silence ? spec.sil_duration_mean : spec.state_duration_mean;
      for (int pos = 0; pos < ps.phone_states(phone); ++pos) {
        const int dur = geometric(mean_dur);
        const int start = static_cast<int>(frame_state.size());
        const int state = ps.model_state(phone, pos);
        for (int k = 0; k < dur; ++k) frame_state.push_back(state);
        truth.segments.push_back({state, phone, pos, start, start + dur});
      }
    }
    truth.num_frames = static_cast<int>(frame_state.size());

    const int T = truth.num_frames;
    utt.features.resize(T, spec.dim);
    const double w = spec.coarticulation;
    for (int t = 0; t < T; ++t) {
      const Vector& cur = spec.state_means[frame_state[t]];
      const Vector& prev = spec.state_means[frame_state[std::max(0, t - 1)]];
      const Vector& next = spec.state_means[frame_state[std::min(T - 1, t + 1)]];
      for (int d = 0; d < spec.dim; ++d) {
        const double mean = (1.0 - 2.0 * w) * cur(d) + w * (prev(d) + next(d));
        utt.features(t, d) = mean + spec.noise_std * rng.gauss();
      }
    }
    utt.ground_truth = std::move(truth);
    corpus.utts.push_back(std::move(utt));
  }
  return corpus;
}

}  // namespace fsam
