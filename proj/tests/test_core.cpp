#include <doctest.h>

#include "mvb/core.hpp"
#include "support.hpp"

using namespace mvb;
using mvb::testing::fixa_votes;

TEST_CASE("predict_bayes picks the row argmax") {
  VoteMatrix one_hot_row(1, 3);
  one_hot_row << 0, 0, 1;
  CHECK(predict_bayes(one_hot_row)(0) == 2);

  const Labels fixa = predict_bayes(fixa_votes());
  CHECK(fixa(0) == 0);
  CHECK(fixa(1) == 1);
  CHECK(fixa(2) == 1);
  CHECK(fixa(3) == 2);
}

TEST_CASE("ties go to the lowest class") {
  VoteMatrix tied(1, 2);
  tied << 0.5, 0.5;
  CHECK(predict_bayes(tied)(0) == 0);
}

TEST_CASE("margins") {
  VoteMatrix hot(1, 3);
  hot << 0, 1, 0;
  CHECK(margins(hot, 1)(0) == doctest::Approx(1.0));

  VoteMatrix flat = VoteMatrix::Constant(1, 4, 0.25);
  CHECK(margins(flat, 3)(0) == 0.0);

  CHECK(margins(fixa_votes(), 0)(2) == doctest::Approx(-0.05).epsilon(1e-12));
  CHECK_THROWS_AS(margins(fixa_votes(), 3), InvalidInput);
  CHECK_THROWS_AS(margins(fixa_votes(), -1), InvalidInput);
}

TEST_CASE("margin sign follows the prediction") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const VoteMatrix v = mvb::testing::random_stochastic(rng, 20, 4, trial % 2 == 0);
    const Labels pred = predict_bayes(v);
    const Matrix<double> table = margin_table(v);
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      CHECK(table(r, pred(r)) >= 0.0);
      for (Eigen::Index c = 0; c < v.cols(); ++c) {
        if (c != pred(r)) CHECK(table(r, c) <= 0.0);
      }
    }
  }
}

TEST_CASE("predict_bayes is invariant under increasing rescaling") {
  Rng rng(12);
  const VoteMatrix v = mvb::testing::random_stochastic(rng, 40, 5);
  const VoteMatrix squashed = v.array().sqrt().matrix();
  const VoteMatrix stretched = (v.array() * 3.0 + 0.1).exp().matrix();
  CHECK(predict_bayes(v) == predict_bayes(squashed));
  CHECK(predict_bayes(v) == predict_bayes(stretched));
}

TEST_CASE("posterior sources") {
  const VoteMatrix votes = fixa_votes();

  const PosteriorMatrix uniform = posterior_source(PosteriorMode::Uniform, VoteMatrix::Constant(2, 4, 0.25));
  CHECK(uniform.isApprox(PosteriorMatrix::Constant(2, 4, 0.25)));

  CHECK(posterior_source(PosteriorMode::Supervised, votes) == votes);

  Labels hidden(4);
  hidden << 1, 0, 2, 1;
  const PosteriorMatrix oracle = posterior_source(PosteriorMode::Oracle, votes, hidden);
  CHECK(oracle(0, 1) == 1.0);
  CHECK(oracle.row(0).sum() == 1.0);
  for (Eigen::Index r = 0; r < 4; ++r) CHECK(oracle.row(r).sum() == doctest::Approx(1.0));

  CHECK_THROWS_AS(posterior_source(PosteriorMode::Oracle, votes), InvalidInput);
}

TEST_CASE("posterior mode names round-trip") {
  for (auto mode : {PosteriorMode::Uniform, PosteriorMode::Supervised, PosteriorMode::Oracle}) {
    CHECK(parse_posterior_mode(to_string(mode)) == mode);
  }
  CHECK_THROWS_AS(parse_posterior_mode("bayes"), InvalidInput);
}

TEST_CASE("row-stochastic validation") {
  std::vector<std::string> warnings;
  set_warning_handler([&](std::string_view m) { warnings.emplace_back(m); });

  Matrix<double> drift(1, 2);
  drift << 0.5, 0.5 + 1e-6;
  const Matrix<double> fixed = validated_row_stochastic(drift, "votes");
  CHECK(fixed.row(0).sum() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(warnings.size() == 1);

  Matrix<double> fine(1, 2);
  fine << 0.3, 0.7;
  CHECK(validated_row_stochastic(fine, "votes") == fine);
  CHECK(warnings.size() == 1);

  Matrix<double> negative(1, 2);
  negative << -0.1, 1.1;
  CHECK_THROWS_AS(validated_row_stochastic(negative, "votes"), InvalidInput);
  CHECK_THROWS_AS(validated_row_stochastic(Matrix<double>::Ones(2, 1), "votes"), InvalidInput);
  CHECK_THROWS_AS(validated_row_stochastic(Matrix<double>::Zero(1, 3), "votes"), InvalidInput);

  set_warning_handler(nullptr);
}

TEST_CASE("accuracy") {
  Labels a(4), b(4);
  a << 0, 1, 2, 1;
  b << 0, 1, 1, 1;
  CHECK(accuracy(a, b) == 0.75);
  CHECK_THROWS_AS(accuracy(a, Labels(3)), InvalidInput);
}
