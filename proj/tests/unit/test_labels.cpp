#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <conflab/labels.hpp>
#include <conflab/rng.hpp>

using namespace conflab;

TEST_CASE("build_group filters strictly above threshold and force-includes the anchor") {
  SECTION("all scores below tau -> anchor alone") {
    const std::vector<double> s = {0.1, 0.2, 0.3};
    const auto g = build_group(s, 0, 0.9);
    CHECK(g.members == std::vector<int>{0});
  }
  SECTION("cat/dog style: one score above tau") {
    std::vector<double> s(10, 0.1);
    const int cat = 3, dog = 5;
    s[dog] = 0.9;  // cat's own score 0.1 is below tau: force-include applies
    const auto g = build_group(s, cat, 0.5);
    CHECK(g.members == std::vector<int>{cat, dog});
  }
  SECTION("three above tau -> group of four with anchor") {
    const std::vector<double> s = {0.2, 0.8, 0.9, 0.7, 0.1};
    const auto g = build_group(s, 0, 0.5);
    CHECK(g.members == std::vector<int>{0, 1, 2, 3});
  }
  SECTION("boundary is strict: score == tau excluded") {
    const std::vector<double> s = {0.9, 0.5};
    const auto g = build_group(s, 0, 0.5);
    CHECK(g.members == std::vector<int>{0});
  }
  CHECK_THROWS_AS(build_group(std::vector<double>{0.1}, 2, 0.5), ValidationError);
}

TEST_CASE("group_to_label softmax over members, zeros elsewhere") {
  SECTION("singleton group is one-hot") {
    const std::vector<double> s = {-3.0, 0.0, 0.0};
    const auto label = group_to_label(build_group(s, 0, 5.0));
    CHECK(label == std::vector<double>{1.0, 0.0, 0.0});
  }
  SECTION("cat/dog raw scores 1.0 / 0.5946 give 0.6 / 0.4") {
    std::vector<double> s = {1.0, 0.5946, -9.0};
    const auto label = group_to_label(build_group(s, 0, 0.0));
    CHECK(label[0] == Catch::Approx(0.5999843739523079).epsilon(1e-12));
    CHECK(label[1] == Catch::Approx(0.4000156260476922).epsilon(1e-12));
    CHECK(label[2] == 0.0);
    CHECK(std::abs(label[0] - 0.600) < 1e-3);
    CHECK(std::abs(label[1] - 0.400) < 1e-3);
  }
  SECTION("equal scores -> uniform over members") {
    const std::vector<double> s = {0.7, 0.7, 0.7, -1.0};
    const auto label = group_to_label(build_group(s, 1, 0.5));
    CHECK(label[0] == Catch::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(label[1] == Catch::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(label[2] == Catch::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(label[3] == 0.0);
  }
}

TEST_CASE("produced labels sum to 1, nonnegative, support equals group") {
  Rng rng = make_rng(21, "label-prop");
  std::normal_distribution<double> gauss(0.0, 2.0);
  std::uniform_int_distribution<int> cls(0, 9);
  std::uniform_real_distribution<double> tau_dist(-1.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> s(10);
    for (double& v : s) v = gauss(rng);
    const int anchor = cls(rng);
    const auto group = build_group(s, anchor, tau_dist(rng));
    const auto label = group_to_label(group);
    double sum = 0.0;
    std::vector<int> support;
    for (int i = 0; i < 10; ++i) {
      REQUIRE(label[i] >= 0.0);
      sum += label[i];
      if (label[i] != 0.0) support.push_back(i);
    }
    REQUIRE(std::abs(sum - 1.0) <= 1e-9);
    REQUIRE(support == group.members);
  }
}

TEST_CASE("manual_label validates sum and range") {
  const auto noisy = manual_label(10, {{9, 0.6}, {1, 0.4}}, false);
  CHECK(noisy.scores[9] == 0.6);
  CHECK(noisy.scores[1] == 0.4);
  CHECK_FALSE(noisy.trusted);
  const auto trusted = manual_label(10, {{3, 0.95}, {5, 0.05}}, true);
  CHECK(trusted.scores[3] == 0.95);
  CHECK(trusted.trusted);
  CHECK_THROWS_AS(manual_label(10, {{3, 0.7}, {5, 0.4}}, false), ValidationError);   // sum 1.1
  CHECK_THROWS_AS(manual_label(10, {{3, 1.2}, {5, -0.2}}, false), ValidationError);  // range
  CHECK_THROWS_AS(manual_label(10, {{11, 1.0}}, false), ValidationError);
  CHECK_THROWS_AS(manual_label(10, {{3, 0.5}, {3, 0.5}}, false), ValidationError);
}

TEST_CASE("soft_label spreads epsilon uniformly") {
  SECTION("eps 0 is one-hot") {
    const auto l = soft_label(10, 2, 0.0, false);
    CHECK(l.scores[2] == 1.0);
  }
  SECTION("10 classes eps 0.1") {
    const auto l = soft_label(10, 0, 0.1, false);
    CHECK(l.scores[0] == Catch::Approx(0.9).epsilon(1e-12));
    for (int i = 1; i < 10; ++i) {
      CHECK(l.scores[i] == Catch::Approx(0.011111111111111112).epsilon(1e-12));
    }
  }
  SECTION("2 classes eps 0.5") {
    const auto l = soft_label(2, 0, 0.5, false);
    CHECK(l.scores[0] == 0.5);
    CHECK(l.scores[1] == 0.5);
  }
  CHECK_THROWS_AS(soft_label(10, 2, 1.0, false), ValidationError);
}

TEST_CASE("labels_from_predictions mean/std thresholding") {
  const std::vector<std::string> names = {"a", "b", "c"};
  auto two_rows_each = [&](std::vector<double> c0) {
    // class 0's mean prediction is exactly c0; classes 1/2 are sharply self-confident
    Matrix preds(6, 3);
    std::vector<int> ids = {0, 0, 1, 1, 2, 2};
    for (int r = 0; r < 2; ++r) {
      for (int j = 0; j < 3; ++j) preds(r, j) = c0[j];
    }
    for (int r = 2; r < 4; ++r) {
      preds(r, 0) = 0.02; preds(r, 1) = 0.96; preds(r, 2) = 0.02;
    }
    for (int r = 4; r < 6; ++r) {
      preds(r, 0) = 0.02; preds(r, 1) = 0.02; preds(r, 2) = 0.96;
    }
    return labels_from_predictions(preds, ids, names);
  };

  SECTION("[0.6,0.35,0.05]: tau ~ 0.5582, only the anchor clears it -> one-hot") {
    // oracle: mean 1/3, population std 0.224846 -> tau 0.558179
    const auto book = two_rows_each({0.6, 0.35, 0.05});
    CHECK(book.noisy[0].scores == std::vector<double>{1.0, 0.0, 0.0});
  }
  SECTION("[0.5,0.45,0.05]: tau ~ 0.5347 exceeds even the anchor's own score") {
    // oracle: mean 1/3, population std 0.201384 -> tau 0.534717; the anchor
    // enters only through force-inclusion
    const auto book = two_rows_each({0.5, 0.45, 0.05});
    CHECK(book.noisy[0].scores == std::vector<double>{1.0, 0.0, 0.0});
  }
  SECTION("exactly one-hot predictions everywhere -> hard labels for every class") {
    Matrix preds(6, 3);
    std::vector<int> ids = {0, 0, 1, 1, 2, 2};
    for (int r = 0; r < 6; ++r) preds(r, ids[r]) = 1.0;
    const auto book = labels_from_predictions(preds, ids, names);
    for (int c = 0; c < 3; ++c) {
      for (int j = 0; j < 3; ++j) CHECK(book.noisy[c].scores[j] == (c == j ? 1.0 : 0.0));
    }
  }
  SECTION("confusable pair shares mass") {
    Matrix preds(6, 3);
    std::vector<int> ids = {0, 0, 1, 1, 2, 2};
    auto set_row = [&](int r, double x, double y, double z) {
      preds(r, 0) = x; preds(r, 1) = y; preds(r, 2) = z;
    };
    set_row(0, 0.55, 0.40, 0.05);
    set_row(1, 0.55, 0.40, 0.05);
    set_row(2, 0.40, 0.55, 0.05);
    set_row(3, 0.40, 0.55, 0.05);
    set_row(4, 0.05, 0.05, 0.90);
    set_row(5, 0.05, 0.05, 0.90);
    const auto book = labels_from_predictions(preds, ids, names);
    // mean [0.55,0.40,0.05]: tau = 1/3 + 0.2095.. = 0.543 -> {0,1} both above? 0.55 > tau, 0.40 < tau
    CHECK(book.noisy[0].scores[0] > 0.0);
    CHECK(book.noisy[0].scores[2] == 0.0);
    // noisy and trusted variants share scores, flags differ
    CHECK(book.noisy[0].scores == book.trusted[0].scores);
    CHECK_FALSE(book.noisy[0].trusted);
    CHECK(book.trusted[0].trusted);
  }
  SECTION("a class with fewer than two predictions is rejected") {
    Matrix preds(5, 3);
    std::vector<int> ids = {0, 0, 1, 1, 2};
    for (int r = 0; r < 5; ++r) preds(r, ids[r]) = 1.0;
    CHECK_THROWS_AS(labels_from_predictions(preds, ids, names), ValidationError);
  }
}

TEST_CASE("hard_book and book_from_pairs") {
  const std::vector<std::string> names = {"w", "x", "y", "z"};
  const auto hb = hard_book(names);
  CHECK(hb.noisy[2].scores == std::vector<double>{0.0, 0.0, 1.0, 0.0});
  CHECK(hb.trusted[2].scores == std::vector<double>{0.0, 0.0, 1.0, 0.0});

  const auto pb = book_from_pairs(names, {{0, 1}, {2, 3}});
  CHECK(pb.noisy[0].scores == std::vector<double>{0.6, 0.4, 0.0, 0.0});
  CHECK(pb.noisy[1].scores == std::vector<double>{0.4, 0.6, 0.0, 0.0});
  // the partner weight is the exact complement (1.0 - 0.95), so the scores
  // sum to exactly 1.0; note 1.0 - 0.95 != the literal 0.05 in binary64
  CHECK(pb.trusted[3].scores == std::vector<double>{0.0, 0.0, 1.0 - 0.95, 0.95});

  // unpaired classes stay one-hot
  const auto partial = book_from_pairs({"a", "b", "c"}, {{0, 1}});
  CHECK(partial.noisy[2].scores == std::vector<double>{0.0, 0.0, 1.0});

  CHECK_THROWS_AS(book_from_pairs(names, {{0, 1}, {1, 2}}), ValidationError);
  CHECK_THROWS_AS(book_from_pairs(names, {{0, 0}}), ValidationError);
}

TEST_CASE("label book JSON round-trips exactly with 18 significant digits") {
  const std::vector<std::string> names = {"cat", "dog", "frog"};
  LabelBook book = book_from_pairs(names, {{0, 1}});
  const std::string json = label_book_to_json(book);
  CHECK(json.find("5.99999999999999978e-01") != std::string::npos);  // the double 0.6, exactly
  CHECK(json.find("9.49999999999999956e-01") != std::string::npos);  // the double 0.95, exactly

  const LabelBook parsed = label_book_from_json(json);
  CHECK(parsed.classes == book.classes);
  for (int i = 0; i < 3; ++i) {
    CHECK(parsed.noisy[i].scores == book.noisy[i].scores);
    CHECK(parsed.trusted[i].scores == book.trusted[i].scores);
  }

  const auto dir = std::filesystem::temp_directory_path() / "conflab_label_test";
  std::filesystem::create_directories(dir);
  write_label_book(book, dir / "book.json");
  const LabelBook from_file = read_label_book(dir / "book.json");
  CHECK(from_file.noisy[0].scores == book.noisy[0].scores);
  CHECK_FALSE(std::filesystem::exists(dir / "book.json.partial"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("label book JSON rejects malformed input") {
  CHECK_THROWS_AS(label_book_from_json("not json"), FormatError);
  CHECK_THROWS_AS(label_book_from_json("{}"), FormatError);
  CHECK_THROWS_AS(label_book_from_json(R"({"classes":["a"],"noisy":{},"trusted":{}})"),
                  FormatError);
  // probabilities that do not sum to 1
  CHECK_THROWS_AS(label_book_from_json(
                      R"({"classes":["a","b"],
                          "noisy":{"a":{"a":0.7,"b":0.7},"b":{"b":1.0}},
                          "trusted":{"a":{"a":1.0},"b":{"b":1.0}}})"),
                  FormatError);
  // unknown class in an entry
  CHECK_THROWS_AS(label_book_from_json(
                      R"({"classes":["a","b"],
                          "noisy":{"a":{"zebra":1.0},"b":{"b":1.0}},
                          "trusted":{"a":{"a":1.0},"b":{"b":1.0}}})"),
                  FormatError);
}
