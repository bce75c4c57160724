// tests/test_graph.cpp

#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "fsam/graph.hpp"
#include "fsam/matrix.hpp"
#include "oracle.hpp"

using namespace fsam;

namespace {

PhoneSet make_phoneset(int num_regular, int states_per_phone, int silence_states,
                       bool with_sp = false) {
  PhoneSet ps;
  for (int p = 0; p < num_regular; ++p) ps.phones.push_back(std::string(1, 'a' + p));
  ps.silence = static_cast<int>(ps.phones.size());
  ps.phones.push_back("!SIL");
  if (with_sp) {
    ps.short_pause = static_cast<int>(ps.phones.size());
    ps.phones.push_back("!SP");
  }
  ps.states_per_phone = states_per_phone;
  ps.silence_states = silence_states;
  ps.validate();
  return ps;
}

int emitting_count(const StateGraph& g) { return g.num_emitting(); }

}  // namespace

TEST_CASE("phoneset state index space", "[graph]") {
  const PhoneSet ps = make_phoneset(2, 3, 3, true);
  // a: 0..2, b: 3..5, sil: 6..8, sp tied to sil middle
  CHECK(ps.num_model_states() == 9);
  CHECK(ps.model_state(0, 0) == 0);
  CHECK(ps.model_state(1, 2) == 5);
  CHECK(ps.model_state(ps.silence, 1) == 7);
  CHECK(ps.model_state(ps.short_pause, 0) == 7);
  CHECK(ps.phone_states(ps.short_pause) == 1);
  CHECK(ps.state_to_phone(4) == std::make_pair(1, 1));
  CHECK_THROWS(ps.model_state(0, 3));
}

TEST_CASE("empty transcript gives a silence-only chain", "[graph]") {
  const PhoneSet ps = make_phoneset(2, 3, 3);
  Lexicon lex;
  lex.add("w", {0, 1});
  const StateGraph g = build_numerator_graph({}, lex, ps, GraphStage::kBootstrap);
  CHECK(emitting_count(g) == 3);  // silence states only
  for (int d = 0; d < g.num_emitting(); ++d)
    CHECK(g.nodes[g.emit_nodes[d]].phone == ps.silence);
  CHECK(g.min_frames == 3);
}

TEST_CASE("bootstrap chain of one two-phone word", "[graph]") {
  const PhoneSet ps = make_phoneset(2, 3, 3);
  Lexicon lex;
  lex.add("w", {0, 1});  // w -> /a b/
  const StateGraph g = build_numerator_graph({"w"}, lex, ps, GraphStage::kBootstrap);
  CHECK(emitting_count(g) == 12);  // sil + a + b + sil, 3 states each
  CHECK(g.min_frames == 12);
  CHECK(max_emitting_sum_error(g) < 1e-9);
}

TEST_CASE("bootstrap uses the first pronunciation only", "[graph]") {
  const PhoneSet ps = make_phoneset(3, 1, 1);
  Lexicon lex;
  lex.add("w", {0});
  lex.add("w", {0, 1, 2});
  const StateGraph g = build_numerator_graph({"w"}, lex, ps, GraphStage::kBootstrap);
  CHECK(emitting_count(g) == 3);  // sil a sil
}

TEST_CASE("out-of-vocabulary word names the word", "[graph]") {
  const PhoneSet ps = make_phoneset(2, 3, 3);
  Lexicon lex;
  lex.add("w", {0});
  try {
    build_numerator_graph({"w", "missing"}, lex, ps, GraphStage::kBootstrap);
    FAIL("expected LexiconError");
  } catch (const LexiconError& e) {
    CHECK(std::string(e.what()).find("missing") != std::string::npos);
  }
}

TEST_CASE("refined graph: short pause is skippable", "[graph]") {
  const PhoneSet ps = make_phoneset(1, 1, 1, /*with_sp=*/true);
  Lexicon lex;
  lex.add("w", {0});
  const StateGraph g = build_numerator_graph({"w", "w"}, lex, ps, GraphStage::kRefined);

  // A short pause may follow each of the two words, so the families are
  // sil a [sp] a [sp] sil. Enumerate at T=6 where all four fit.
  Matrix ll = Matrix::Zero(6, ps.num_model_states());
  const auto paths = oracle::enumerate_paths(g, ll);
  REQUIRE(!paths.empty());
  std::set<std::vector<int>> phone_seqs;
  for (const auto& p : paths) {
    std::vector<int> seq;
    for (int t = 0; t < 6; ++t) {
      const int ph = g.nodes[p.nodes[t]].phone;
      if (seq.empty() || p.entered[t]) seq.push_back(ph);
    }
    phone_seqs.insert(seq);
  }
  const int sil = ps.silence, sp = ps.short_pause;
  const std::set<std::vector<int>> expected{{sil, 0, 0, sil},
                                            {sil, 0, sp, 0, sil},
                                            {sil, 0, 0, sp, sil},
                                            {sil, 0, sp, 0, sp, sil}};
  CHECK(phone_seqs == expected);
}

TEST_CASE("refined graph: pronunciation alternatives in parallel", "[graph]") {
  const PhoneSet ps = make_phoneset(3, 1, 1);
  Lexicon lex;
  lex.add("w", {0});
  lex.add("w", {1, 2});
  const StateGraph boot = build_numerator_graph({"w"}, lex, ps, GraphStage::kBootstrap);
  const StateGraph ref = build_numerator_graph({"w"}, lex, ps, GraphStage::kRefined);
  CHECK(emitting_count(boot) == 3);  // sil a sil
  CHECK(emitting_count(ref) == 5);   // sil {a | b c} sil
  CHECK(ref.min_frames == 3);        // short branch
}

TEST_CASE("denominator loop accepts any length >= 1 with one phone", "[graph]") {
  PhoneSet ps;
  ps.phones = {"!SIL"};
  ps.silence = 0;
  ps.states_per_phone = 1;
  ps.silence_states = 1;
  ps.validate();
  const StateGraph g = build_denominator_graph(ps);
  CHECK(g.min_frames == 1);
  for (int T = 1; T <= 4; ++T) {
    Matrix ll = Matrix::Zero(T, 1);
    CHECK(!oracle::enumerate_paths(g, ll).empty());
  }
}

TEST_CASE("denominator loop: 2 single-state phones accept 4 labelings at T=2", "[graph]") {
  const PhoneSet ps = make_phoneset(1, 1, 1);  // a + !SIL, one state each
  const StateGraph g = build_denominator_graph(ps);
  Matrix ll = Matrix::Zero(2, ps.num_model_states());
  const auto paths = oracle::enumerate_paths(g, ll);
  std::set<std::vector<int>> labelings;
  for (const auto& p : paths) {
    std::vector<int> lab;
    for (int node : p.nodes) lab.push_back(g.nodes[node].model_state);
    labelings.insert(lab);
  }
  CHECK(labelings.size() == 4);  // aa ab ba bb as frame labelings
}

TEST_CASE("denominator phone entries are uniform", "[graph]") {
  const PhoneSet ps = make_phoneset(3, 2, 2);
  const StateGraph g = build_denominator_graph(ps);
  const double expect = -std::log(static_cast<double>(ps.num_phones()));
  int entries = 0;
  for (const auto& a : g.arcs) {
    if (a.enters_phone) {
      CHECK(a.log_prob == Catch::Approx(expect).margin(1e-12));
      ++entries;
    }
  }
  CHECK(entries == ps.num_phones());
  CHECK(max_emitting_sum_error(g) < 1e-9);
}

TEST_CASE("emitting outgoing probabilities sum to one", "[graph]") {
  const PhoneSet ps = make_phoneset(3, 3, 3, true);
  Lexicon lex;
  lex.add("u", {0, 1});
  lex.add("v", {2});
  lex.add("v", {2, 0});
  for (const auto stage : {GraphStage::kBootstrap, GraphStage::kRefined}) {
    const StateGraph g = build_numerator_graph({"u", "v", "u"}, lex, ps, stage);
    CHECK(max_emitting_sum_error(g) < 1e-9);
  }
  CHECK(max_emitting_sum_error(build_denominator_graph(ps)) < 1e-9);
}

TEST_CASE("every emitting node lies on an accepting path", "[graph]") {
  StateGraph g;
  g.entry = g.add_node({});
  g.exit = g.add_node({});
  const int a = g.add_node({0, 0, 0});
  const int b = g.add_node({1, 0, 1});  // dead end
  g.add_arc(g.entry, a, 0.0, true);
  g.add_arc(a, a, std::log(0.5));
  g.add_arc(a, g.exit, std::log(0.5));
  g.add_arc(a, b, std::log(0.5));
  CHECK_THROWS_AS(g.compile(), Error);
}
