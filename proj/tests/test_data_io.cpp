#include <doctest.h>

#include "mvb/data_io.hpp"
#include "mvb/random.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace mvb;

namespace {

Dataset parse(const std::string& text, LoadOptions opts = {}) {
  std::istringstream in(text);
  return parse_dataset(in, opts, "inline");
}

// Pairwise-count U statistic over every relabelling of the pooled sample.
double enumeration_p_value(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::size_t n = pooled.size();
  const std::size_t na = a.size();
  auto u_of = [&](std::uint32_t mask) {
    double u = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(mask & (1u << i))) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (mask & (1u << j)) continue;
        u += pooled[i] > pooled[j] ? 1.0 : pooled[i] == pooled[j] ? 0.5 : 0.0;
      }
    }
    return u;
  };
  const double centre = static_cast<double>(na * (n - na)) / 2.0;
  const double observed = std::abs(u_of((1u << na) - 1) - centre);
  int extreme = 0;
  int total = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != na) continue;
    ++total;
    if (std::abs(u_of(mask) - centre) >= observed - 1e-9) ++extreme;
  }
  return static_cast<double>(extreme) / total;
}

std::filesystem::path write_vowel_like(std::uint64_t seed) {
  const auto path = std::filesystem::temp_directory_path() / ("mvb_vowel_" + std::to_string(seed) + ".csv");
  std::ofstream out(path);
  out << "f1,f2,f3,f4,f5,f6,f7,f8,f9,f10,class\n";
  Rng rng(seed);
  for (int r = 0; r < 990; ++r) {
    for (int f = 0; f < 10; ++f) out << rng.normal() + (r % 11) << ',';
    out << (r % 11) << '\n';
  }
  return path;
}

}  // namespace

TEST_CASE("delimited: header plus two rows") {
  const Dataset d = parse("a,b,label\n1,2,x\n3,4,y\n");
  CHECK(d.features.rows() == 2);
  CHECK(d.features.cols() == 2);
  CHECK(d.num_classes == 2);
  CHECK(d.labels(0) == 0);
  CHECK(d.labels(1) == 1);
  CHECK(d.features(1, 0) == 3.0);
}

TEST_CASE("delimited: label column by name, index, and numeric order") {
  LoadOptions by_name;
  by_name.label_column = "y";
  const Dataset a = parse("y,f\n10,0.5\n9,0.25\n2,1\n", by_name);
  CHECK(a.features.cols() == 1);
  CHECK(a.class_names == std::vector<std::string>{"2", "9", "10"});
  CHECK(a.labels(0) == 2);
  CHECK(a.features(1, 0) == 0.25);

  LoadOptions by_index;
  by_index.label_column = "1";
  by_index.header = false;
  const Dataset b = parse("10,0.5\n9,0.25\n", by_index);
  CHECK(b.labels(0) == 1);

  LoadOptions tab;
  tab.format = DataFormat::Tsv;
  CHECK(parse("a\tb\tc\n1\t2\t3\n", tab).features(0, 1) == 2.0);
}

TEST_CASE("delimited: errors name the line") {
  try {
    parse("a,b,c\n1,2,3\n1,2\n");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("inline:3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse("a,b,c\n1,nan,3\n"), IoError);
  CHECK_THROWS_AS(parse("a,b,c\n1,oops,3\n"), IoError);
  LoadOptions missing;
  missing.label_column = "target";
  CHECK_THROWS_AS(parse("a,b\n1,2\n", missing), IoError);
  CHECK_THROWS_AS(parse("a,b\n"), IoError);
}

TEST_CASE("sparse: leading label, 1-based indices, zeros elsewhere") {
  LoadOptions opts;
  opts.format = DataFormat::Sparse;
  const Dataset d = parse("2 1:0.5 7:1.0\n1 3:2\n", opts);
  REQUIRE(d.features.cols() == 7);
  CHECK(d.class_names[d.labels(0)] == "2");
  CHECK(d.features(0, 0) == 0.5);
  CHECK(d.features(0, 6) == 1.0);
  CHECK(d.features.row(0).sum() == 1.5);
  CHECK(d.features(1, 2) == 2.0);
  CHECK_THROWS_AS(parse("1 0:3\n", opts), IoError);
  CHECK_THROWS_AS(parse("1 3\n", opts), IoError);
}

TEST_CASE("vowel-shaped file and its split") {
  const auto path = write_vowel_like(5);
  const Dataset d = load_dataset(path.string(), {});
  CHECK(d.features.rows() == 990);
  CHECK(d.features.cols() == 10);
  CHECK(d.num_classes == 11);
  CHECK(d.class_names.back() == "10");
  CHECK(d.name.rfind("mvb_vowel_", 0) == 0);

  TrialSpec spec{99, 891, 20, 3, false};
  std::set<std::vector<Eigen::Index>> labeled_sets;
  for (int t = 0; t < spec.trials; ++t) {
    const TrialSplit s = split_trial(d, spec, t);
    CHECK(s.labeled.features.rows() == 99);
    CHECK(s.unlabeled.features.rows() == 891);
    std::vector<Eigen::Index> rows = s.labeled_rows;
    std::sort(rows.begin(), rows.end());
    labeled_sets.insert(rows);
    std::set<Eigen::Index> all(s.labeled_rows.begin(), s.labeled_rows.end());
    all.insert(s.unlabeled_rows.begin(), s.unlabeled_rows.end());
    CHECK(all.size() == 990);
  }
  CHECK(labeled_sets.size() == 20);
  std::filesystem::remove(path);
}

TEST_CASE("split: determinism, hidden labels, full labeled set") {
  const Dataset d = make_gaussian_blobs(60, 2, 3, 3.0, 1);
  TrialSpec spec{12, 30, 5, 77, false};
  const TrialSplit a = split_trial(d, spec, 2);
  const TrialSplit b = split_trial(d, spec, 2);
  CHECK(a.labeled_rows == b.labeled_rows);
  CHECK(a.unlabeled_rows == b.unlabeled_rows);
  CHECK(a.labeled.features == b.labeled.features);
  CHECK(split_trial(d, spec, 3).labeled_rows != a.labeled_rows);
  for (std::size_t i = 0; i < a.unlabeled_rows.size(); ++i) {
    CHECK((*a.unlabeled.hidden_labels)(static_cast<Eigen::Index>(i)) == d.labels(a.unlabeled_rows[i]));
  }

  TrialSpec all{60, 0, 1, 0, false};
  const TrialSplit full = split_trial(d, all, 0);
  CHECK(full.unlabeled.features.rows() == 0);
  CHECK(full.labeled.features.rows() == 60);

  TrialSpec strat{6, 10, 1, 9, true};
  const TrialSplit s = split_trial(d, strat, 0);
  std::vector<int> per_class(3, 0);
  for (Eigen::Index i = 0; i < s.labeled.labels.size(); ++i) ++per_class[static_cast<std::size_t>(s.labeled.labels(i))];
  CHECK(per_class == std::vector<int>{2, 2, 2});

  CHECK_THROWS_AS(split_trial(d, TrialSpec{50, 20, 1, 0, false}, 0), InvalidInput);
  CHECK_THROWS_AS(split_trial(d, TrialSpec{2, 20, 1, 0, false}, 0), InvalidInput);
}

TEST_CASE("split: a single-class pool exhausts the resampling budget") {
  Dataset d = make_gaussian_blobs(20, 2, 2, 1.0, 3);
  d.labels.setZero();
  CHECK_THROWS_AS(split_trial(d, TrialSpec{4, 5, 1, 0, false}, 0), InvalidInput);
}

TEST_CASE("mann-whitney: spec examples") {
  const MannWhitneyResult r = mann_whitney({1, 2, 3}, {4, 5, 6});
  CHECK(r.exact);
  CHECK(r.p_value == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(r.u == 0.0);
  CHECK(mann_whitney({4, 5, 6}, {1, 2, 3}).p_value == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(mann_whitney({1, 2, 3, 4}, {1, 2, 3, 4}).p_value == 1.0);

  std::vector<double> big(20, 0.8);
  CHECK_FALSE(mann_whitney(big, big).exact);
  CHECK(mann_whitney(big, big).p_value == 1.0);
  std::vector<double> lo, hi;
  for (int i = 0; i < 20; ++i) {
    lo.push_back(0.5 + 0.001 * i);
    hi.push_back(0.9 + 0.001 * i);
  }
  CHECK(mann_whitney(lo, hi).p_value < 1e-6);
  CHECK(mann_whitney(lo, hi).p_value == doctest::Approx(mann_whitney(hi, lo).p_value).epsilon(1e-14));
  CHECK_THROWS_AS(mann_whitney({}, {1.0}), InvalidInput);
}

TEST_CASE("mann-whitney: exact mode equals enumeration for small integer samples") {
  // Every sample pair with sizes 1..3 over values {0,1,2}, then random
  // tie-heavy samples up to size 6.
  std::vector<std::vector<double>> small{{}};
  for (int len = 1; len <= 3; ++len) {
    std::vector<std::vector<double>> next;
    for (const auto& s : small) {
      if (static_cast<int>(s.size()) != len - 1) continue;
      for (double v : {0.0, 1.0, 2.0}) {
        auto t = s;
        t.push_back(v);
        next.push_back(t);
      }
    }
    small.insert(small.end(), next.begin(), next.end());
  }
  int checked = 0;
  for (const auto& a : small) {
    for (const auto& b : small) {
      if (a.empty() || b.empty()) continue;
      const MannWhitneyResult r = mann_whitney(a, b);
      REQUIRE(r.exact);
      CHECK(r.p_value == doctest::Approx(enumeration_p_value(a, b)).epsilon(1e-12));
      ++checked;
    }
  }
  CHECK(checked == 39 * 39);

  Rng rng(2024);
  for (int iter = 0; iter < 1500; ++iter) {
    std::vector<double> a(1 + rng.below(6)), b(1 + rng.below(6));
    const auto range = 2 + rng.below(8);
    for (double& x : a) x = static_cast<double>(rng.below(range));
    for (double& x : b) x = static_cast<double>(rng.below(range));
    CHECK(mann_whitney(a, b).p_value == doctest::Approx(enumeration_p_value(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("vote table parsing") {
  std::istringstream in("v1,v2,v3,label\n0.5,0.3,0.2,1\n0,1,0,2\n");
  const VoteTable t = parse_vote_table(in);
  CHECK(t.votes.rows() == 2);
  CHECK_FALSE(t.posteriors.has_value());
  REQUIRE(t.labels.has_value());
  CHECK((*t.labels)(1) == 1);

  std::istringstream bad("v1,v2,label\n0.5,0.5,3\n");
  CHECK_THROWS_AS(parse_vote_table(bad), IoError);
  std::istringstream extra("v1,v2,z\n0.5,0.5,1\n");
  CHECK_THROWS_AS(parse_vote_table(extra), IoError);
}

TEST_CASE("fixture vote table on disk") {
  const VoteTable t = load_vote_table(MVB_DATA_DIR "/fixa.csv");
  CHECK(t.votes.rows() == 4);
  CHECK(t.votes.cols() == 3);
  REQUIRE(t.posteriors.has_value());
  CHECK((*t.posteriors).rowwise().sum().isOnes(1e-12));
}

TEST_CASE("experiment: degenerate spec, determinism and output formats") {
  const Dataset d = make_gaussian_blobs(90, 3, 3, 2.5, 4);
  ExperimentConfig cfg;
  cfg.self_learning.forest.tree_count = 15;
  cfg.record_histories = true;

  ExperimentConfig single = cfg;
  single.methods = {Method::Supervised};
  const ExperimentReport empty = run_experiment(d, TrialSpec{90, 0, 3, 1, false}, single);
  CHECK(empty.notes.size() == 1);
  CHECK(empty.methods[0].accuracy.empty());

  const TrialSpec spec{12, 60, 3, 5, false};
  const ExperimentReport a = run_experiment(d, spec, cfg);
  const ExperimentReport b = run_experiment(d, spec, cfg);
  REQUIRE(a.methods.size() == 4);
  for (std::size_t m = 0; m < 4; ++m) {
    CHECK(a.methods[m].accuracy == b.methods[m].accuracy);
    CHECK(a.methods[m].accuracy.size() == 3);
    for (double acc : a.methods[m].accuracy) CHECK((acc >= 0.0 && acc <= 1.0));
  }
  CHECK(report_json(a, cfg) == report_json(b, cfg));
  CHECK(a.methods[0].histories.empty());
  CHECK(a.methods[3].histories.size() == 3);

  std::ostringstream csv;
  write_report_csv(csv, a);
  CHECK(csv.str().rfind("method,mean,std,p_vs_best,significant\nrf,", 0) == 0);

  const auto j = nlohmann::json::parse(report_json(a, cfg));
  CHECK(j["methods"][0]["acc_u"].size() == 3);
  CHECK(j["spec"]["l"] == 12);
  CHECK_FALSE(j["methods"][0].contains("published"));

  Dataset pen = d;
  pen.name = "pendigits";
  const ExperimentReport p = run_experiment(pen, TrialSpec{12, 60, 1, 5, false}, single);
  const auto pj = nlohmann::json::parse(report_json(p, single));
  CHECK(pj["methods"][0]["published"]["mean"] == 0.863);
}

TEST_CASE("method and format names") {
  CHECK(parse_method("msla") == Method::Msla);
  CHECK(to_string(parse_method("rf")) == "rf");
  CHECK_THROWS_AS(parse_method("svm"), InvalidInput);
  CHECK(parse_data_format("libsvm") == DataFormat::Sparse);
  CHECK_THROWS_AS(parse_data_format("xml"), InvalidInput);
}
