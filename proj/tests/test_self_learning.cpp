#include <doctest.h>

#include "mvb/self_learning.hpp"
#include "mvb/trans_bounds.hpp"
#include "support.hpp"

#include <numeric>
#include <set>
#include <sstream>

using namespace mvb;
using mvb::testing::fixa_posteriors;
using mvb::testing::fixa_votes;

namespace {

// From tests/oracles/fixa_lp_oracle.py (dense-grid evaluation of the closed form).
constexpr double kFixaCbeHalf = 0.31666666666666665;
constexpr double kFixaErrorBound = 0.6011904761904762;

ThresholdVector fill(Eigen::Index k, double v) { return ThresholdVector::Constant(k, v); }

// Closed-form bound straight from the raw rows, no level profile.
double brute_bound(const PosteriorMatrix& post, const VoteMatrix& votes, Eigen::Index i, Eigen::Index j,
                   double theta) {
  const Labels pred = predict_bayes(votes);
  const double ui = post.col(i).sum();
  double budget = 0.0;
  std::vector<double> gammas{1.0};
  if (theta > 0.0) gammas.push_back(theta);
  bool any = false;
  for (Eigen::Index r = 0; r < votes.rows(); ++r) {
    if (pred(r) == j) budget += post(r, i) * votes(r, j);
    if (votes(r, j) >= theta) {
      any = true;
      if (votes(r, j) > 0.0) gammas.push_back(votes(r, j));
    }
  }
  budget /= ui;
  if (!any || (theta == 0.0 && budget == 0.0)) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (double g : gammas) {
    double mass = 0.0, vote_mass = 0.0;
    for (Eigen::Index r = 0; r < votes.rows(); ++r) {
      const double v = votes(r, j);
      if (v >= theta && v < g) {
        mass += post(r, i);
        vote_mass += post(r, i) * v;
      }
    }
    best = std::min(best, mass / ui + std::max(budget - vote_mass / ui, 0.0) / g);
  }
  return std::clamp(best, 0.0, 1.0);
}

// Class-j objective of the threshold search, evaluated from raw rows.
double brute_share(const PosteriorMatrix& post, const VoteMatrix& votes, Eigen::Index j, double theta) {
  const Labels pred = predict_bayes(votes);
  const double u = static_cast<double>(votes.rows());
  double share = 0.0;
  for (Eigen::Index i = 0; i < votes.cols(); ++i) {
    const double ui = post.col(i).sum();
    if (i == j || ui <= 0.0) continue;
    share += ui / u * brute_bound(post, votes, i, j, theta);
  }
  double passing = 0.0;
  for (Eigen::Index r = 0; r < votes.rows(); ++r) passing += pred(r) == j && votes(r, j) >= theta;
  return share / (passing / u);
}

std::vector<double> brute_candidates(const VoteMatrix& votes, Eigen::Index j, int resolution) {
  const Labels pred = predict_bayes(votes);
  std::vector<double> own;
  for (Eigen::Index r = 0; r < votes.rows(); ++r) {
    if (pred(r) == j) own.push_back(votes(r, j));
  }
  std::sort(own.begin(), own.end());
  std::set<double> c;
  for (int q = 0; q < resolution; ++q) c.insert(own[q * (own.size() - 1) / (resolution - 1)]);
  return {c.begin(), c.end()};
}

struct Blobs {
  LabeledSet labeled;
  UnlabeledSet unlabeled;
};

Blobs two_blobs(std::uint64_t seed, int per_class_labeled, int unlabeled, double separation) {
  Rng rng(seed);
  auto draw = [&](int cls, Matrix<double>& m, int r) {
    for (Eigen::Index f = 0; f < m.cols(); ++f) m(r, f) = (cls == 0 ? -separation : separation) / 2 + rng.normal();
  };
  Blobs b;
  const int l = 2 * per_class_labeled;
  b.labeled.features.resize(l, 3);
  b.labeled.labels.resize(l);
  for (int r = 0; r < l; ++r) {
    b.labeled.labels(r) = r % 2;
    draw(r % 2, b.labeled.features, r);
  }
  b.unlabeled.features.resize(unlabeled, 3);
  Labels hidden(unlabeled);
  for (int r = 0; r < unlabeled; ++r) {
    hidden(r) = static_cast<int>(rng.below(2));
    draw(hidden(r), b.unlabeled.features, r);
  }
  b.unlabeled.hidden_labels = hidden;
  return b;
}

SelfLearnConfig quick(Policy policy, std::uint64_t seed = 1) {
  SelfLearnConfig cfg;
  cfg.policy = policy;
  cfg.forest.tree_count = 40;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("conditional Bayes error") {
  const auto post = fixa_posteriors();
  const auto votes = fixa_votes();
  CHECK(conditional_bayes_error(post, votes, fill(3, 0.5)) == doctest::Approx(kFixaCbeHalf).epsilon(1e-12));
  CHECK(conditional_bayes_error(post, votes, fill(3, 1e-9)) == doctest::Approx(kFixaErrorBound).epsilon(1e-12));
  CHECK(conditional_bayes_error(post, votes, fill(3, 1e-9)) ==
        doctest::Approx(error_rate_bound(post, votes, fill(3, 0.0))).epsilon(1e-15));
  CHECK(std::isinf(conditional_bayes_error(post, votes, fill(3, 1.0))));
}

TEST_CASE("pseudo-label selection") {
  const auto votes = fixa_votes();
  const PseudoLabels half = select_pseudo(votes, fill(3, 0.5));
  CHECK(half.rows == std::vector<Eigen::Index>{0, 1, 3});
  CHECK(half.labels == std::vector<int>{0, 1, 2});
  CHECK(select_pseudo(votes, fill(3, 1.0)).rows.empty());
  CHECK(select_pseudo(votes, fill(3, 1e-12)).rows.size() == 4);
}

TEST_CASE("percentile interpolates linearly") {
  CHECK(percentile({3, 1, 2, 4}, 0.0) == 1.0);
  CHECK(percentile({3, 1, 2, 4}, 1.0) == 4.0);
  CHECK(percentile({3, 1, 2, 4}, 0.5) == 2.5);
  CHECK(percentile({3, 1, 2, 4}, -0.2) == 1.0);
  CHECK_THROWS_AS(percentile({}, 0.5), InvalidInput);
}

TEST_CASE("threshold search on separated one-hot votes selects everything") {
  VoteMatrix hot(6, 3);
  hot << 1, 0, 0, 0, 1, 0, 0, 0, 1, 1, 0, 0, 0, 1, 0, 0, 0, 1;
  const ThresholdVector theta = find_theta_star(hot, hot, 20);
  CHECK(theta == fill(3, 1.0));
  CHECK(select_pseudo(hot, theta).rows.size() == 6);
}

TEST_CASE("unpredicted classes get theta = 1") {
  VoteMatrix v(3, 3);
  v << 0.6, 0.3, 0.1, 0.7, 0.2, 0.1, 0.2, 0.5, 0.3;
  CHECK(find_theta_star(PosteriorMatrix::Constant(3, 3, 1.0 / 3), v, 5)(2) == 1.0);
}

TEST_CASE("errors below 0.6 push the threshold above them") {
  Rng rng(3);
  const int n = 60;
  VoteMatrix v(n, 2);
  Labels truth(n);
  for (int r = 0; r < n; ++r) {
    const double top = 0.5 + 0.5 * (r + 0.5) / n;  // distinct, spread over (0.5, 1)
    v(r, 0) = top;
    v(r, 1) = 1.0 - top;
    truth(r) = top < 0.6 ? 1 : 0;
  }
  const PosteriorMatrix oracle = one_hot(truth, 2);
  const ThresholdVector theta = find_theta_star(oracle, v, 20);
  CHECK(theta(0) >= 0.6);

  // Exhaustive sweep over the same candidates with the raw-row objective.
  double best = std::numeric_limits<double>::infinity();
  double arg = 0.0;
  for (double c : brute_candidates(v, 0, 20)) {
    const double value = brute_share(oracle, v, 0, c);
    if (value <= best) {
      best = value;
      arg = c;
    }
  }
  CHECK(theta(0) == arg);
}

TEST_CASE("threshold search is optimal on its grid and order-invariant") {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const auto inst = mvb::testing::random_instance(500 + seed);
    if (inst.votes.rows() < 2) continue;
    const int resolution = 2 + static_cast<int>(seed % 9);
    const ThresholdVector theta = find_theta_star(inst.post, inst.votes, resolution);
    const Labels pred = predict_bayes(inst.votes);
    for (Eigen::Index j = 0; j < inst.votes.cols(); ++j) {
      if ((pred.array() == j).count() == 0) {
        CHECK(theta(j) == 1.0);
        continue;
      }
      const double chosen = brute_share(inst.post, inst.votes, j, theta(j));
      for (double c : brute_candidates(inst.votes, j, resolution)) {
        CHECK(chosen <= brute_share(inst.post, inst.votes, j, c) * (1 + 1e-9) + 1e-12);
      }
    }

    std::vector<Eigen::Index> perm(static_cast<std::size_t>(inst.votes.rows()));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    Rng rng(seed);
    rng.shuffle(perm);
    PosteriorMatrix post2(inst.post.rows(), inst.post.cols());
    VoteMatrix votes2(inst.votes.rows(), inst.votes.cols());
    for (std::size_t r = 0; r < perm.size(); ++r) {
      post2.row(static_cast<Eigen::Index>(r)) = inst.post.row(perm[r]);
      votes2.row(static_cast<Eigen::Index>(r)) = inst.votes.row(perm[r]);
    }
    CHECK(find_theta_star(post2, votes2, resolution) == theta);
  }
}

TEST_CASE("no unlabeled data returns the supervised forest") {
  Blobs b = two_blobs(1, 3, 0, 4.0);
  const SelfLearnResult r = run_self_learning(b.labeled, b.unlabeled, 2, quick(Policy::Msla));
  CHECK(r.history.empty());
  CHECK(r.forest.trees().size() == 40);
}

TEST_CASE("degenerate labeled sets are rejected") {
  Blobs b = two_blobs(1, 3, 10, 4.0);
  b.labeled.labels.setZero();
  CHECK_THROWS_AS(run_self_learning(b.labeled, b.unlabeled, 2, quick(Policy::Msla)), InvalidInput);
  SelfLearnConfig bad = quick(Policy::Fsla);
  bad.theta_fixed = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
}

TEST_CASE("MSLA on separated blobs") {
  Blobs b = two_blobs(7, 2, 200, 6.0);
  const Labels& truth = *b.unlabeled.hidden_labels;
  const SelfLearnResult sup = run_self_learning(b.labeled, UnlabeledSet{}, 2, quick(Policy::Msla));
  const double supervised_acc =
      accuracy(predict_bayes(forest_votes(sup.forest, b.unlabeled.features)), truth);
  const SelfLearnResult r = run_self_learning(b.labeled, b.unlabeled, 2, quick(Policy::Msla));
  CHECK(!r.history.empty());
  CHECK(accuracy(r.unlabeled_predictions, truth) >= supervised_acc);
  CHECK(*r.history.back().pseudo_accuracy == 1.0);
}

TEST_CASE("pseudo-labeled sets are disjoint and terminate") {
  Blobs b = two_blobs(8, 3, 150, 2.0);
  for (Policy policy : {Policy::Msla, Policy::Fsla, Policy::Csla}) {
    CAPTURE(to_string(policy));
    const SelfLearnResult r = run_self_learning(b.labeled, b.unlabeled, 2, quick(policy, 3));
    std::set<Eigen::Index> all;
    std::size_t total = 0;
    for (std::size_t t = 0; t < r.selections.size(); ++t) {
      CHECK(!r.selections[t].empty());
      CHECK(r.history[t].selected == static_cast<int>(r.selections[t].size()));
      total += r.selections[t].size();
      all.insert(r.selections[t].begin(), r.selections[t].end());
    }
    CHECK(all.size() == total);
    CHECK(total <= 150);
    CHECK(r.history.size() <= 150);
    if (policy == Policy::Fsla) CHECK(r.history.size() <= 10);
    for (const auto& rec : r.history) CHECK(rec.theta.size() == 2);
  }
}

TEST_CASE("CSLA with delta 1/3 runs three iterations") {
  Blobs b = two_blobs(9, 3, 120, 1.0);
  SelfLearnConfig cfg = quick(Policy::Csla, 5);
  cfg.forest.tree_count = 97;  // many distinct vote values
  const SelfLearnResult r = run_self_learning(b.labeled, b.unlabeled, 2, cfg);
  CHECK(r.history.size() == 3);
  std::size_t total = 0;
  for (const auto& s : r.selections) total += s.size();
  CHECK(total == 120);
}

TEST_CASE("self-learning is deterministic") {
  Blobs b = two_blobs(10, 3, 80, 2.0);
  const SelfLearnResult a = run_self_learning(b.labeled, b.unlabeled, 2, quick(Policy::Msla, 11));
  const SelfLearnResult c = run_self_learning(b.labeled, b.unlabeled, 2, quick(Policy::Msla, 11));
  CHECK(a.forest.to_text() == c.forest.to_text());
  CHECK(a.selections == c.selections);
}

TEST_CASE("history CSV") {
  IterationRecord r;
  r.iteration = 1;
  r.theta = fill(2, 0.75);
  r.selected = 4;
  r.bound = 0.125;
  r.pseudo_accuracy = 1.0;
  IterationRecord s = r;
  s.iteration = 2;
  s.pseudo_accuracy.reset();
  std::ostringstream out;
  write_history_csv(out, {r, s}, 2);
  CHECK(out.str() ==
        "iteration,theta_1,theta_2,selected,bound,pseudo_accuracy\n"
        "1,0.75,0.75,4,0.125,1\n"
        "2,0.75,0.75,4,0.125,\n");
}
