// tests/test_statetying.cpp

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "fsam/statetying.hpp"
#include "test_util.hpp"

using namespace fsam;

namespace {

PhoneSet tie_phoneset() {
  PhoneSet ps;
  ps.phones = {"a", "b", "c", "d", "e", "f", "!SIL"};
  ps.silence = 6;
  ps.states_per_phone = 1;
  ps.silence_states = 1;
  ps.validate();
  return ps;
}

Distribution make_dist(std::initializer_list<double> vals) { return Distribution(vals); }

// Stats with k planted groups per (center, pos) root: group g's variants all
// share a prototype distribution; left contexts identify the group.
PosteriorStats planted_stats(const PhoneSet& ps, const std::vector<int>& centers, int k,
                             uint64_t seed, double jitter = 0.01) {
  Rng rng(seed);
  const int S = 8;
  PosteriorStats stats;
  stats.num_classes = S;
  for (int center : centers) {
    std::vector<Distribution> protos(k);
    for (int g = 0; g < k; ++g) {
      Distribution d(S, 0.01);
      d[(center * k + g) % S] = 1.0;  // well separated peaks
      d[(center * k + g + 3) % S] = 0.4;
      protos[g] = smoothed(d);
    }
    // two left-context phones per group: group g owns phones {2g, 2g+1}
    for (int g = 0; g < k; ++g) {
      for (int j = 0; j < 2; ++j) {
        const int left = 2 * g + j;
        Distribution d = protos[g];
        for (double& x : d) x *= 1.0 + jitter * rng.uniform(-1.0, 1.0);
        VariantStats vs;
        vs.count = 5 + rng.uniform_int(20);
        vs.mean_posterior = smoothed(d);
        stats.variants[{center, 0, left, (left + 1) % ps.num_phones()}] = vs;
      }
    }
  }
  return stats;
}

std::vector<Question> planted_questions(int k) {
  // one question per planted group plus distractors
  std::vector<Question> qs;
  for (int g = 0; g < k; ++g)
    qs.push_back({"G" + std::to_string(g), true, {2 * g, 2 * g + 1}});
  qs.push_back({"X_odd", true, {1, 3, 5}});
  qs.push_back({"X_right", false, {0, 1}});
  return qs;
}

}  // namespace

TEST_CASE("cluster_cost basics", "[statetying]") {
  const Distribution d1 = make_dist({0.7, 0.2, 0.1});
  const Distribution d2 = make_dist({0.2, 0.5, 0.3});

  // zero up to the 1e-12 equality tolerance of the divergence
  CHECK(cluster_cost({{{}, 4, &d1}}) < 1e-12);  // single member
  CHECK(cluster_cost({{{}, 3, &d1}, {{}, 5, &d1}}) < 1e-12);  // identical members

  // frozen from an independent high-precision evaluation: counts (3, 1)
  const double cost = cluster_cost({{{}, 3, &d1}, {{}, 1, &d2}});
  CHECK(cost == Catch::Approx(0.39603196650907487).margin(1e-9));
}

TEST_CASE("cluster_cost invariances", "[statetying]") {
  const Distribution d1 = make_dist({0.7, 0.2, 0.1});
  const Distribution d2 = make_dist({0.2, 0.5, 0.3});
  const Distribution d3 = make_dist({0.1, 0.1, 0.8});
  const double base = cluster_cost({{{}, 2, &d1}, {{}, 3, &d2}, {{}, 5, &d3}});
  // member permutation
  CHECK(cluster_cost({{{}, 5, &d3}, {{}, 2, &d1}, {{}, 3, &d2}}) ==
        Catch::Approx(base).margin(1e-12));
  // common count scaling scales the cost by the same factor
  const double scaled = cluster_cost({{{}, 6, &d1}, {{}, 9, &d2}, {{}, 15, &d3}});
  CHECK(scaled == Catch::Approx(3.0 * base).epsilon(1e-12));
}

TEST_CASE("geometric centroid variant stays nonnegative", "[statetying]") {
  ClusterOptions opts;
  opts.centroid = CentroidKind::kGeometric;
  const Distribution d1 = make_dist({0.7, 0.2, 0.1});
  const Distribution d2 = make_dist({0.2, 0.5, 0.3});
  CHECK(cluster_cost({{{}, 3, &d1}, {{}, 1, &d2}}, opts) >= 0.0);
  CHECK(cluster_cost({{{}, 3, &d1}, {{}, 7, &d1}}, opts) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("best_split finds the separating question", "[statetying]") {
  // two well-separated groups split exactly by question L:{0,1}
  const Distribution g1 = smoothed(make_dist({1.0, 0.0, 0.0}));
  const Distribution g2 = smoothed(make_dist({0.0, 0.0, 1.0}));
  std::vector<TyingMember> members{
      {{0, 0, 0, 2}, 3, &g1}, {{0, 0, 1, 2}, 2, &g1},
      {{0, 0, 2, 0}, 4, &g2}, {{0, 0, 3, 2}, 1, &g2}};
  // HI_R splits group 2 itself, so only LOW separates the groups exactly
  const std::vector<Question> questions{{"LOW", true, {0, 1}}, {"HI_R", false, {0, 1}}};

  const auto split = best_split(members, questions);
  REQUIRE(split.has_value());
  CHECK(split->question == 0);
  // children are pure, so the gain equals the full parent cost
  CHECK(split->gain == Catch::Approx(cluster_cost(members)).margin(1e-10));
  CHECK(split->yes.size() == 2);
  CHECK(split->no.size() == 2);
}

TEST_CASE("best_split declines identical members and empty sides", "[statetying]") {
  const Distribution d = smoothed(make_dist({0.5, 0.5}));
  std::vector<TyingMember> members{{{0, 0, 0, 1}, 3, &d}, {{0, 0, 1, 0}, 2, &d}};
  const std::vector<Question> questions{{"Q", true, {0}}, {"EMPTY", true, {5}}};
  CHECK(!best_split(members, questions).has_value());  // zero gain < min_gain
  std::vector<TyingMember> one{{{0, 0, 0, 1}, 3, &d}};
  CHECK(!best_split(one, questions).has_value());
}

TEST_CASE("best_split gains are nonnegative for every question", "[statetying]") {
  Rng rng(88);
  const int S = 6;
  std::vector<Distribution> dists;
  for (int i = 0; i < 12; ++i) {
    Distribution d(S);
    for (int s = 0; s < S; ++s) d[s] = rng.uniform() + 0.01;
    dists.push_back(smoothed(d));
  }
  std::vector<TyingMember> members;
  for (int i = 0; i < 12; ++i)
    members.push_back({{0, 0, i % 5, (i + 2) % 5}, 1 + rng.uniform_int(9), &dists[i]});
  const double parent = cluster_cost(members);
  for (int q = 0; q < 5; ++q) {
    Question question{"Q" + std::to_string(q), q % 2 == 0, {q, (q + 1) % 5}};
    std::vector<TyingMember> yes, no;
    for (const auto& m : members) (question.answer(m.variant) ? yes : no).push_back(m);
    if (yes.empty() || no.empty()) continue;
    const double gain = parent - cluster_cost(yes) - cluster_cost(no);
    CHECK(gain >= -1e-10);
  }
}

TEST_CASE("build_tie_tree: target equal to root count means no splits", "[statetying]") {
  const PhoneSet ps = tie_phoneset();
  const PosteriorStats stats = planted_stats(ps, {0, 1}, 3, 5);
  const TieTree tree = build_tie_tree(stats, planted_questions(3), 2);
  CHECK(tree.num_leaves == 2);
  CHECK(!tree.exhausted);
  for (const auto& [key, root] : tree.roots) CHECK(tree.nodes[root].question == -1);
}

TEST_CASE("build_tie_tree rejects targets below the root count", "[statetying]") {
  const PhoneSet ps = tie_phoneset();
  const PosteriorStats stats = planted_stats(ps, {0, 1, 2}, 2, 6);
  CHECK_THROWS_AS(build_tie_tree(stats, planted_questions(2), 2), ConfigError);
}

TEST_CASE("build_tie_tree recovers planted clusters", "[statetying]") {
  const PhoneSet ps = tie_phoneset();
  const int k = 3;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    const std::vector<int> centers{0, 1, 2};
    const PosteriorStats stats = planted_stats(ps, centers, k, seed);
    const TieTree tree = build_tie_tree(stats, planted_questions(k),
                                        k * static_cast<int>(centers.size()));
    CHECK(tree.num_leaves == k * static_cast<int>(centers.size()));
    // all variants of one planted group land on one leaf, distinct per group
    for (int center : centers) {
      std::set<int> leaves;
      for (int g = 0; g < k; ++g) {
        const int l1 = map_variant(tree, {center, 0, 2 * g, (2 * g + 1) % ps.num_phones()});
        const int l2 = map_variant(tree, {center, 0, 2 * g + 1, (2 * g + 2) % ps.num_phones()});
        CHECK(l1 == l2);
        leaves.insert(l1);
      }
      CHECK(leaves.size() == static_cast<size_t>(k));
    }
  }
}

TEST_CASE("build_tie_tree exhaustion returns fewer leaves with a warning", "[statetying]") {
  const PhoneSet ps = tie_phoneset();
  const PosteriorStats stats = planted_stats(ps, {0}, 3, 7, /*jitter=*/0.0);
  // 6 variants in 3 identical-prototype pairs; the separating questions can
  // give at most 3 leaves with positive gain
  const TieTree tree = build_tie_tree(stats, planted_questions(3), 6);
  CHECK(tree.exhausted);
  CHECK(tree.num_leaves < 6);
  CHECK(tree.num_leaves >= 3);
}

TEST_CASE("splitting never increases total cost", "[statetying]") {
  const PhoneSet ps = tie_phoneset();
  const PosteriorStats stats = planted_stats(ps, {0, 1, 2}, 3, 11, 0.2);
  double prev = std::numeric_limits<double>::infinity();
  for (int target = 3; target <= 9; target += 3) {
    const TieTree tree = build_tie_tree(stats, planted_questions(3), target);
    CHECK(tree.total_cost <= prev + 1e-9);
    prev = tree.total_cost;
  }
}

TEST_CASE("tree determinism including leaf numbering", "[statetying]") {
  const PhoneSet ps = tie_phoneset();
  const PosteriorStats stats = planted_stats(ps, {0, 2}, 3, 13, 0.1);
  const TieTree a = build_tie_tree(stats, planted_questions(3), 6);
  const TieTree b = build_tie_tree(stats, planted_questions(3), 6);
  REQUIRE(a.nodes.size() == b.nodes.size());
  for (size_t i = 0; i < a.nodes.size(); ++i) {
    CHECK(a.nodes[i].question == b.nodes[i].question);
    CHECK(a.nodes[i].leaf_id == b.nodes[i].leaf_id);
  }
}

TEST_CASE("map_variant routes unseen contexts deterministically", "[statetying]") {
  const PhoneSet ps = tie_phoneset();
  const PosteriorStats stats = planted_stats(ps, {0}, 3, 17);
  const TieTree tree = build_tie_tree(stats, planted_questions(3), 3);
  const int unseen = map_variant(tree, {0, 0, 5, 4});  // context never observed
  CHECK(unseen >= 0);
  CHECK(unseen < tree.num_leaves);
  CHECK(map_variant(tree, {0, 0, 5, 4}) == unseen);
  CHECK_THROWS_AS(map_variant(tree, {3, 1, 0, 0}), Error);  // no such root
  // distinct ids over all observed variants equals the leaf count
  std::set<int> ids;
  for (const auto& [v, s] : stats.variants) ids.insert(map_variant(tree, v));
  CHECK(static_cast<int>(ids.size()) == tree.num_leaves);
}

TEST_CASE("question file parsing", "[statetying]") {
  const PhoneSet ps = tie_phoneset();
  const std::string path = "test_questions.tmp";
  std::ofstream(path) << "VOWELS\tL\ta e\nRIGHT_BC\tR\tb c\n";
  const auto qs = load_questions(path, ps);
  REQUIRE(qs.size() == 2);
  CHECK(qs[0].name == "VOWELS");
  CHECK(qs[0].on_left);
  CHECK(qs[0].contains(0));
  CHECK(!qs[1].on_left);
  std::remove(path.c_str());

  std::ofstream(path) << "BAD\tL\tz\n";  // unknown phone
  CHECK_THROWS_AS(load_questions(path, ps), ParseError);
  std::ofstream(path) << "ALL\tL\ta b c d e f !SIL\n";  // not a proper subset
  CHECK_THROWS_AS(load_questions(path, ps), ParseError);
  std::remove(path.c_str());
}

TEST_CASE("tree file round trip is byte-identical", "[statetying]") {
  const PhoneSet ps = tie_phoneset();
  const PosteriorStats stats = planted_stats(ps, {0, 1, 4}, 3, 19, 0.15);
  const TieTree tree = build_tie_tree(stats, planted_questions(3), 7);

  const std::string p1 = "test_tree1.tmp", p2 = "test_tree2.tmp";
  save_tie_tree(tree, ps, p1);
  const TieTree loaded = load_tie_tree(p1, ps);
  save_tie_tree(loaded, ps, p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  CHECK(!b1.empty());
  // routing behavior survives the round trip
  for (const auto& [v, s] : stats.variants)
    CHECK(map_variant(tree, v) == map_variant(loaded, v));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("accumulate_stats gathers boundary contexts and counts", "[statetying]") {
  SyntheticSpec spec;
  spec.num_phones = 2;
  spec.states_per_phone = 2;
  spec.silence_states = 1;
  spec.num_utterances = 4;
  spec.vocab_size = 2;
  spec.max_pron_len = 1;
  spec.min_words = 1;
  spec.max_words = 3;
  spec.seed = 3;
  const Corpus corpus = generate_synthetic(spec);
  const Network net = init_network({spec.dim, 6, corpus.phones.num_model_states()}, 5);

  std::vector<Alignment> alis;
  for (const auto& u : corpus.utts) alis.push_back(*u.ground_truth);
  const PosteriorStats stats = accumulate_stats(net, corpus, alis);

  long total = 0;
  for (const auto& u : corpus.utts) total += u.num_frames();
  CHECK(stats.total_frames() == total);
  for (const auto& [v, s] : stats.variants) {
    CHECK(s.count >= 1);
    double sum = 0;
    for (double x : s.mean_posterior) sum += x;
    CHECK(sum == Catch::Approx(1.0).margin(1e-9));
  }
  // utterance edges carry the boundary context on silence
  bool saw_left_boundary = false, saw_right_boundary = false;
  for (const auto& [v, s] : stats.variants) {
    if (v.center == corpus.phones.silence && v.left == kBoundaryContext)
      saw_left_boundary = true;
    if (v.center == corpus.phones.silence && v.right == kBoundaryContext)
      saw_right_boundary = true;
  }
  CHECK(saw_left_boundary);
  CHECK(saw_right_boundary);
}

TEST_CASE("accumulate_stats: single phone utterance", "[statetying]") {
  PhoneSet ps;
  ps.phones = {"!SIL"};
  ps.silence = 0;
  ps.states_per_phone = 1;
  ps.silence_states = 1;
  ps.validate();
  Corpus corpus;
  corpus.phones = ps;
  Utterance utt;
  utt.id = "u0";
  utt.features = Matrix::Constant(6, 2, 0.3);
  corpus.utts.push_back(utt);
  Alignment ali;
  ali.num_frames = 6;
  ali.segments.push_back({0, 0, 0, 0, 6});
  const Network net = init_network({2, 3, 1}, 1);
  const PosteriorStats stats = accumulate_stats(net, corpus, {ali});
  REQUIRE(stats.variants.size() == 1);
  const auto& [v, s] = *stats.variants.begin();
  CHECK(v.left == kBoundaryContext);
  CHECK(v.right == kBoundaryContext);
  CHECK(s.count == 6);
}
