// tests/test_corpus.cpp

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fsam/corpus.hpp"
#include "oracle.hpp"

using namespace fsam;

TEST_CASE("add_deltas: constant signal has zero deltas", "[corpus]") {
  const Matrix x = Matrix::Constant(7, 3, 2.5);
  const Matrix out = add_deltas(x);
  REQUIRE(out.cols() == 9);
  CHECK(out.leftCols(3) == x);
  CHECK(out.rightCols(6).isZero());
}

TEST_CASE("add_deltas: linear ramp has slope deltas at interior frames", "[corpus]") {
  const double m = 0.7;
  Matrix x(12, 1);
  for (int t = 0; t < 12; ++t) x(t, 0) = m * t + 1.0;
  const Matrix out = add_deltas(x);
  for (int t = 2; t < 10; ++t) CHECK(out(t, 1) == Catch::Approx(m).margin(1e-12));  // delta
  // delta-delta needs a window of interior deltas
  for (int t = 4; t < 8; ++t) CHECK(out(t, 2) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("add_deltas matches the independent implementation", "[corpus]") {
  Rng rng(404);
  Matrix x(11, 4);
  for (int t = 0; t < 11; ++t)
    for (int d = 0; d < 4; ++d) x(t, d) = rng.gauss();
  const Matrix out = add_deltas(x);
  const Matrix d1 = oracle::deltas_direct(x);
  const Matrix d2 = oracle::deltas_direct(d1);
  CHECK((out.middleCols(4, 4) - d1).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((out.rightCols(4) - d2).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(out.leftCols(4) == x);
}

TEST_CASE("feature file round trip is bit-identical", "[corpus]") {
  Rng rng(5);
  Matrix x(6, 3);
  for (int t = 0; t < 6; ++t)
    for (int d = 0; d < 3; ++d) x(t, d) = static_cast<float>(rng.gauss());
  const std::string path = "test_feats.tmp";
  save_features(x, path);
  const Matrix y = load_features(path);
  CHECK(x == y);  // values were float-representable, so exact
  std::remove(path.c_str());
}

TEST_CASE("truncated feature file reports the byte offset", "[corpus]") {
  Matrix x(4, 2);
  x.setZero();
  const std::string path = "test_feats_trunc.tmp";
  save_features(x, path);
  std::filesystem::resize_file(path, 13 + 2 * 2 * 4);  // cut after two frames
  try {
    load_features(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    CHECK(std::string(e.what()).find(std::to_string(13 + 2 * 2 * 4)) != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("synthetic generation is deterministic per seed", "[corpus]") {
  SyntheticSpec spec;
  spec.num_utterances = 5;
  spec.seed = 99;
  const Corpus a = generate_synthetic(spec);
  const Corpus b = generate_synthetic(spec);
  REQUIRE(a.utts.size() == b.utts.size());
  for (size_t i = 0; i < a.utts.size(); ++i) {
    CHECK(a.utts[i].id == b.utts[i].id);
    CHECK(a.utts[i].features == b.utts[i].features);
    CHECK(a.utts[i].transcript == b.utts[i].transcript);
  }
  SyntheticSpec other = spec;
  other.seed = 100;
  const Corpus c = generate_synthetic(other);
  CHECK(a.utts[0].features != c.utts[0].features);
}

TEST_CASE("near-zero noise: nearest-mean classification is perfect", "[corpus]") {
  SyntheticSpec spec;
  spec.num_utterances = 8;
  spec.noise_std = 1e-4;
  spec.seed = 3;
  const Corpus corpus = generate_synthetic(spec);
  // Recover the means the generator drew (same derivation as the generator).
  SyntheticSpec probe = spec;
  probe.num_utterances = 1;
  Rng rng(spec.seed);
  const int S = corpus.phones.num_model_states();
  std::vector<Vector> means(S);
  for (int s = 0; s < S; ++s) {
    means[s] = Vector(spec.dim);
    for (int d = 0; d < spec.dim; ++d) means[s](d) = spec.mean_scale * rng.gauss();
  }
  long ok = 0, total = 0;
  for (const auto& utt : corpus.utts) {
    REQUIRE(utt.ground_truth.has_value());
    std::vector<int> truth(utt.num_frames());
    for (const auto& seg : utt.ground_truth->segments)
      for (int t = seg.start; t < seg.end; ++t) truth[t] = seg.model_state;
    for (int t = 0; t < utt.num_frames(); ++t) {
      int arg = 0;
      double best = 1e300;
      for (int s = 0; s < S; ++s) {
        const double d = (utt.features.row(t).transpose() - means[s]).squaredNorm();
        if (d < best) {
          best = d;
          arg = s;
        }
      }
      ok += arg == truth[t];
      ++total;
    }
  }
  CHECK(ok == total);
}

TEST_CASE("empirical state means stay within 3 sigma / sqrt(n)", "[corpus]") {
  SyntheticSpec spec;
  spec.num_utterances = 60;
  spec.noise_std = 0.5;
  spec.seed = 12;
  const Corpus corpus = generate_synthetic(spec);
  Rng rng(spec.seed);
  const int S = corpus.phones.num_model_states();
  std::vector<Vector> means(S);
  for (int s = 0; s < S; ++s) {
    means[s] = Vector(spec.dim);
    for (int d = 0; d < spec.dim; ++d) means[s](d) = spec.mean_scale * rng.gauss();
  }
  std::vector<Vector> sums(S, Vector::Zero(spec.dim));
  std::vector<long> counts(S, 0);
  for (const auto& utt : corpus.utts)
    for (const auto& seg : utt.ground_truth->segments)
      for (int t = seg.start; t < seg.end; ++t) {
        sums[seg.model_state] += utt.features.row(t).transpose();
        counts[seg.model_state] += 1;
      }
  int checked = 0;
  for (int s = 0; s < S; ++s) {
    if (counts[s] < 30) continue;
    const Vector emp = sums[s] / static_cast<double>(counts[s]);
    const double bound = 3.0 * spec.noise_std / std::sqrt(static_cast<double>(counts[s]));
    for (int d = 0; d < spec.dim; ++d)
      CHECK(std::abs(emp(d) - means[s](d)) < bound * 1.5);  // slack for the few outliers
    ++checked;
  }
  CHECK(checked > 10);
}

TEST_CASE("corpus save/load round trip", "[corpus]") {
  SyntheticSpec spec;
  spec.num_utterances = 6;
  spec.seed = 44;
  const Corpus corpus = generate_synthetic(spec);
  const std::string dir = "test_corpus_dir.tmp";
  save_corpus(corpus, dir);
  const Corpus loaded = load_corpus(dir, spec.states_per_phone, spec.silence_states);
  REQUIRE(loaded.utts.size() == corpus.utts.size());
  for (size_t i = 0; i < corpus.utts.size(); ++i) {
    CHECK(loaded.utts[i].id == corpus.utts[i].id);
    CHECK(loaded.utts[i].transcript == corpus.utts[i].transcript);
    // features pass through f32 on disk
    CHECK((loaded.utts[i].features.cast<float>() == corpus.utts[i].features.cast<float>()));
    REQUIRE(loaded.utts[i].ground_truth.has_value());
    CHECK(loaded.utts[i].ground_truth->segments.size() ==
          corpus.utts[i].ground_truth->segments.size());
  }
  // order-stable: ids ascend
  for (size_t i = 1; i < loaded.utts.size(); ++i)
    CHECK(loaded.utts[i - 1].id < loaded.utts[i].id);
  std::filesystem::remove_all(dir);
}

TEST_CASE("empty transcript line is a silence-only utterance", "[corpus]") {
  const std::string dir = "test_corpus_empty.tmp";
  std::filesystem::create_directories(dir);
  std::ofstream(dir + "/phones.txt") << "a\n!SIL\n";
  std::ofstream(dir + "/lexicon.txt") << "w\ta\n";
  std::ofstream(dir + "/transcripts.txt") << "u0\t\nu1\tw\n";
  save_features(Matrix::Constant(4, 2, 0.5), dir + "/u0.fea");
  save_features(Matrix::Constant(5, 2, 0.5), dir + "/u1.fea");
  const Corpus corpus = load_corpus(dir);
  REQUIRE(corpus.utts.size() == 2);
  CHECK(corpus.utts[0].transcript.empty());
  CHECK(corpus.utts[1].transcript.size() == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic spec config file", "[corpus]") {
  const std::string path = "test_spec.tmp";
  std::ofstream(path) << "phones = 4\nutterances = 3\nnoise_std = 0.2\nseed = 5\n";
  const SyntheticSpec spec = load_synthetic_spec(path);
  CHECK(spec.num_phones == 4);
  CHECK(spec.num_utterances == 3);
  CHECK(spec.noise_std == 0.2);
  std::remove(path.c_str());

  std::ofstream(path) << "phones = 4\nbogus_key = 1\n";
  CHECK_THROWS_AS(load_synthetic_spec(path), ConfigError);
  std::remove(path.c_str());
}
