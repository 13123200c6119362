#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "oracle/oracle.hpp"
#include "sdcd/error.hpp"
#include "sdcd/metrics.hpp"
#include "sdcd/rng.hpp"

using namespace sdcd;

namespace {

PopePrediction pred(bool gt, BinaryAnswer a, PopeStratum s = PopeStratum::kRandom) {
  return PopePrediction{PopeItem{"", "", "obj", gt, s}, a};
}

std::vector<PopePrediction> from_counts(int tp, int fp, int fn, int tn) {
  std::vector<PopePrediction> out;
  for (int i = 0; i < tp; ++i) out.push_back(pred(true, BinaryAnswer::kYes));
  for (int i = 0; i < fp; ++i) out.push_back(pred(false, BinaryAnswer::kYes));
  for (int i = 0; i < fn; ++i) out.push_back(pred(true, BinaryAnswer::kNo));
  for (int i = 0; i < tn; ++i) out.push_back(pred(false, BinaryAnswer::kNo));
  return out;
}

std::filesystem::path write_file(const std::string& name, const std::string& text) {
  const auto dir = std::filesystem::temp_directory_path() / "sdcd_test_metrics";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / name) << text;
  return dir / name;
}

SynonymMap animals() {
  SynonymMap m;
  m.add("dog", {"dogs", "puppy"});
  m.add("cat", {"cats", "kitten"});
  m.add("car", {"cars"});
  m.add("fire hydrant", {"hydrant"});
  return m;
}

}  // namespace

TEST_CASE("parse_binary_answer") {
  CHECK(parse_binary_answer("Yes, there is a dog.") == BinaryAnswer::kYes);
  CHECK(parse_binary_answer("no") == BinaryAnswer::kNo);
  CHECK(parse_binary_answer("NO.") == BinaryAnswer::kNo);
  CHECK(parse_binary_answer("It is unclear.") == BinaryAnswer::kUnparseable);
  CHECK(parse_binary_answer("I would say yes") == BinaryAnswer::kYes);
  CHECK(parse_binary_answer("yes or no?") == BinaryAnswer::kYes);
  CHECK(parse_binary_answer("maybe yes, maybe no") == BinaryAnswer::kUnparseable);
  CHECK(parse_binary_answer("") == BinaryAnswer::kUnparseable);
  CHECK(parse_binary_answer("nothing here") == BinaryAnswer::kUnparseable);
}

TEST_CASE("pope examples") {
  const auto perfect = pope_score(from_counts(4, 0, 0, 6));
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);

  const auto s = pope_score(from_counts(3, 1, 1, 5));
  CHECK(s.precision == 0.75);
  CHECK(s.recall == 0.75);
  CHECK(s.f1 == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(s.accuracy == 0.8);

  const auto all_no = pope_score(from_counts(0, 0, 5, 5));
  CHECK(all_no.accuracy == 0.5);
  CHECK(all_no.recall == 0.0);
  CHECK(all_no.precision == 0.0);
  CHECK(all_no.precision_undefined);
  CHECK(all_no.f1 == 0.0);
  CHECK(all_no.f1_undefined);
  CHECK_FALSE(all_no.recall_undefined);

  CHECK_THROWS_AS(pope_score({}), Error);
}

TEST_CASE("unparseable answers are errors") {
  auto p = from_counts(2, 0, 0, 2);
  p.push_back(pred(true, BinaryAnswer::kUnparseable));
  p.push_back(pred(false, BinaryAnswer::kUnparseable));
  const auto s = pope_score(p);
  CHECK(s.accuracy == doctest::Approx(4.0 / 6.0));
  CHECK(s.recall == doctest::Approx(2.0 / 3.0));
  CHECK(s.precision == 1.0);
  CHECK(s.unparseable_rate == doctest::Approx(2.0 / 6.0));
}

TEST_CASE("property: pope matches confusion arithmetic and is order invariant") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PopePrediction> p;
    oracle::Confusion c;
    const std::size_t n = 1 + uniform_below(rng, 60);
    for (std::size_t i = 0; i < n; ++i) {
      const bool gt = uniform_below(rng, 2);
      const auto a = static_cast<BinaryAnswer>(uniform_below(rng, 3));
      p.push_back(pred(gt, a));
      if (a == BinaryAnswer::kYes) ++(gt ? c.tp : c.fp);
      else if (a == BinaryAnswer::kNo) ++(gt ? c.fn : c.tn);
      else ++(gt ? c.unp_pos : c.unp_neg);
    }
    const auto s = pope_score(p);
    const auto e = oracle::pope(c);
    CHECK(s.accuracy == e.acc);
    CHECK(s.precision == e.prec);
    CHECK(s.recall == e.rec);
    CHECK(s.f1 == e.f1);
    std::reverse(p.begin(), p.end());
    const auto r = pope_score(p);
    CHECK(r.f1 == s.f1);
    CHECK(r.accuracy == s.accuracy);
  }
}

TEST_CASE("stratified pope") {
  std::vector<PopePrediction> p = {pred(true, BinaryAnswer::kYes, PopeStratum::kRandom),
                                   pred(false, BinaryAnswer::kYes, PopeStratum::kPopular),
                                   pred(false, BinaryAnswer::kNo, PopeStratum::kPopular)};
  const auto by = pope_score_stratified(p);
  CHECK(by.size() == 3);
  CHECK(by.at("all").total == 3);
  CHECK(by.at("random").accuracy == 1.0);
  CHECK(by.at("popular").accuracy == 0.5);
  CHECK_FALSE(by.contains("adversarial"));
}

TEST_CASE("extract_objects") {
  SynonymMap dogs;
  dogs.add("dog", {"dog"});
  CHECK(extract_objects("a dog and a dog", dogs) == std::set<std::string>{"dog"});
  SynonymMap m;
  m.add("fire hydrant", {"fire hydrant"});
  m.add("car", {"car"});
  CHECK(extract_objects("A fire hydrant, near a car!", m) == std::set<std::string>{"fire hydrant", "car"});
  CHECK(extract_objects("", m).empty());
  // the bigram consumes its words
  SynonymMap h;
  h.add("fire hydrant", {});
  h.add("hydrant", {});
  CHECK(extract_objects("a fire hydrant", h) == std::set<std::string>{"fire hydrant"});
  CHECK(extract_objects("Two puppies, one Puppy", animals()) == std::set<std::string>{"dog"});
}

TEST_CASE("property: unigram extraction ignores word order") {
  const auto m = animals();
  const std::vector<std::string> words = {"dog", "the", "cats", "car", "a", "kitten", "tree", "puppy"};
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> w = words;
    for (std::size_t i = w.size() - 1; i > 0; --i) std::swap(w[i], w[uniform_below(rng, i + 1)]);
    std::string caption;
    for (const auto& x : w) caption += x + " ";
    CHECK(extract_objects(caption, m) == std::set<std::string>{"dog", "cat", "car"});
  }
}

TEST_CASE("synonym map rejects conflicts") {
  SynonymMap m;
  m.add("dog", {"puppy"});
  CHECK_THROWS_AS(m.add("cat", {"puppy"}), Error);
  CHECK_THROWS_AS(m.add("bus", {"a big bus"}), Error);
  CHECK(m.lookup("puppy") == std::optional<std::string>("dog"));
}

TEST_CASE("chair examples") {
  const auto m = animals();
  const std::vector<CaptionResult> corpus = {{"A dog and a cat.", {"img1", {"cat"}}}, {"A car.", {"img2", {"car"}}}};
  const auto s = chair_score(corpus, m);
  CHECK(s.chair_s == 0.5);
  CHECK(s.chair_i == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(s.object_precision == doctest::Approx(2.0 / 3.0));
  CHECK(s.object_recall == 1.0);
  CHECK(s.object_f1 == doctest::Approx(0.8));

  const auto clean = chair_score({{"a cat", {"i", {"cat", "dog"}}}}, m);
  CHECK(clean.chair_s == 0.0);
  CHECK(clean.chair_i == 0.0);

  const auto all_bad = chair_score({{"a cat and a car", {"i", {"dog"}}}}, m);
  CHECK(all_bad.chair_i == 1.0);
  CHECK(all_bad.object_precision == 0.0);
  CHECK(all_bad.object_f1 == 0.0);

  const auto silent = chair_score({{"nothing to see", {"i", {"dog"}}}}, m);
  CHECK(silent.zero_mentions);
  CHECK(silent.chair_i == 0.0);

  CHECK_THROWS_AS(chair_score({}, m), Error);
  CHECK_THROWS_AS(chair_score({{"a cat", {"i", {"unicorn"}}}}, m), Error);
}

TEST_CASE("property: chair matches the double loop and clean captions never raise CHAIR_S") {
  Rng rng(13);
  const std::vector<std::string> vocab = {"dog", "cat", "car", "bus", "tree", "cup", "sofa", "boat", "kite", "lamp"};
  for (int trial = 0; trial < 30; ++trial) {
    SynonymMap m;
    for (const auto& v : vocab) m.add(v, {v + "s"});
    std::vector<CaptionResult> corpus;
    std::vector<std::pair<std::set<std::string>, std::set<std::string>>> plain;
    const std::size_t n = 1 + uniform_below(rng, 20);
    for (std::size_t i = 0; i < n; ++i) {
      std::set<std::string> truth, said;
      std::string caption = "we see";
      for (const auto& v : vocab) {
        if (uniform_below(rng, 3) == 0) truth.insert(v);
        if (uniform_below(rng, 4) == 0) {
          said.insert(v);
          caption += uniform_below(rng, 2) ? " a " + v : " two " + v + "s";
        }
      }
      corpus.push_back({caption, {"img" + std::to_string(i), truth}});
      plain.push_back({said, truth});
    }
    const auto s = chair_score(corpus, m);
    const auto e = oracle::chair(plain);
    CHECK(s.chair_s == e.chair_s);
    CHECK(s.chair_i == e.chair_i);
    CHECK(s.mentions == e.mentions);
    CHECK(s.hallucinated_mentions == e.hallucinated);
    CHECK(s.chair_s >= 0.0);
    CHECK(s.chair_s <= 1.0);
    corpus.push_back({"a dog", {"extra", {"dog"}}});
    CHECK(chair_score(corpus, m).chair_s <= s.chair_s);
  }
}

TEST_CASE("loaders") {
  const auto pope = write_file("pope.jsonl",
                               "{\"id\": 1, \"image\": \"a.png\", \"object\": \"dog\", \"ground_truth\": \"yes\", "
                               "\"stratum\": \"popular\"}\n\n"
                               "{\"image\": \"b.png\", \"object\": \"cat\", \"ground_truth\": false}\n");
  const auto items = load_pope_dataset(pope);
  REQUIRE(items.size() == 2);
  CHECK(items[0].id == "1");
  CHECK(items[0].stratum == PopeStratum::kPopular);
  CHECK(items[1].id == "3");
  CHECK_FALSE(items[1].ground_truth);

  const auto bad = write_file("bad.jsonl", "{\"image\": \"a\", \"object\": \"x\", \"ground_truth\": \"yes\"}\n{oops\n");
  try {
    load_pope_dataset(bad);
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kMalformedRecord);
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  const auto stratum = write_file("stratum.jsonl",
                                  "{\"image\": \"a\", \"object\": \"x\", \"ground_truth\": \"yes\", \"stratum\": \"odd\"}\n");
  CHECK_THROWS_AS(load_pope_dataset(stratum), Error);

  const auto empty = write_file("empty.jsonl", "\n\n");
  try {
    load_answers(empty);
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kEmptyInput);
  }
  CHECK_THROWS_AS(load_answers(write_file("dup.jsonl", "{\"id\":1,\"answer\":\"yes\"}\n{\"id\":1,\"answer\":\"no\"}\n")),
                  Error);

  const auto syn = load_synonyms(write_file("syn.jsonl", "{\"canonical\": \"Fire Hydrant\", \"surface_forms\": [\"hydrant\"]}\n"));
  CHECK(syn.lookup("hydrant") == std::optional<std::string>("fire hydrant"));
  const auto ann = load_annotations(write_file("ann.jsonl", "{\"image\": \"a\", \"objects\": [\"Fire Hydrant\"]}\n"));
  CHECK(ann[0].objects == std::set<std::string>{"fire hydrant"});
  const auto caps = load_captions(write_file("caps.jsonl", "{\"image\": \"a\", \"caption\": \"hi\"}\n"));
  CHECK(caps.at("a") == "hi");

  try {
    load_captions("/nonexistent/caps.jsonl");
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kIo);
  }
}
