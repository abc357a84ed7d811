#ifndef MVB_TESTS_SUPPORT_HPP
#define MVB_TESTS_SUPPORT_HPP

#include "mvb/core.hpp"
#include "mvb/random.hpp"

namespace mvb::testing {

inline VoteMatrix fixa_votes() {
  VoteMatrix v(4, 3);
  v << 0.6, 0.3, 0.1,
       0.2, 0.5, 0.3,
       0.4, 0.45, 0.15,
       0.1, 0.2, 0.7;
  return v;
}

inline PosteriorMatrix fixa_posteriors() {
  PosteriorMatrix p(4, 3);
  p << 1, 0, 0,
       0, 1, 0,
       1, 0, 0,
       0, 0.5, 0.5;
  return p;
}

/// Random row-stochastic n x k matrix. With `coarse`, entries are multiples of
/// 1/steps so that many vote levels coincide, as they do for small forests.
inline Matrix<double> random_stochastic(Rng& rng, Eigen::Index n, Eigen::Index k, bool coarse = false,
                                        int steps = 10) {
  Matrix<double> m(n, k);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (coarse) {
      m.row(r).setZero();
      for (int s = 0; s < steps; ++s) m(r, static_cast<Eigen::Index>(rng.below(k))) += 1.0;
      m.row(r) /= static_cast<double>(steps);
    } else {
      for (Eigen::Index c = 0; c < k; ++c) m(r, c) = -std::log(1.0 - rng.uniform());
      m.row(r) /= m.row(r).sum();
    }
  }
  return m;
}

/// Posterior rows that are one-hot with probability 1/2, otherwise random.
inline Matrix<double> random_posteriors(Rng& rng, Eigen::Index n, Eigen::Index k) {
  Matrix<double> m = random_stochastic(rng, n, k);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (rng.below(2) == 0) {
      m.row(r).setZero();
      m(r, static_cast<Eigen::Index>(rng.below(k))) = 1.0;
    }
  }
  return m;
}

struct Instance {
  PosteriorMatrix post;
  VoteMatrix votes;
};

inline Instance random_instance(std::uint64_t seed) {
  Rng rng(seed);
  const auto n = static_cast<Eigen::Index>(1 + rng.below(50));
  const auto k = static_cast<Eigen::Index>(2 + rng.below(4));
  const bool coarse = rng.below(2) == 0;
  Instance inst;
  inst.votes = random_stochastic(rng, n, k, coarse);
  inst.post = random_posteriors(rng, n, k);
  return inst;
}

// Column-stochastic with a dominant diagonal in every row and column.
inline Matrix<double> random_mislabeling(Rng& rng, Eigen::Index k) {
  for (;;) {
    Matrix<double> p(k, k);
    for (Eigen::Index c = 0; c < k; ++c) {
      const double keep = 0.55 + 0.4 * rng.uniform();
      Eigen::VectorXd noise(k);
      for (Eigen::Index j = 0; j < k; ++j) noise(j) = j == c ? 0.0 : rng.uniform();
      noise *= (1.0 - keep) / noise.sum();
      p.col(c) = noise;
      p(c, c) = keep;
    }
    bool dominant = true;
    for (Eigen::Index c = 0; c < k; ++c) {
      for (Eigen::Index j = 0; j < k; ++j) dominant = dominant && (j == c || p(c, c) > p(c, j));
    }
    if (dominant) return p;
  }
}

// Votes that lean toward the true label so the margin mean is positive.
inline Matrix<double> leaning_votes(Rng& rng, const Labels& truth, Eigen::Index k, double lean) {
  Matrix<double> v = random_stochastic(rng, truth.size(), k);
  for (Eigen::Index r = 0; r < truth.size(); ++r) {
    v.row(r) *= 1.0 - lean;
    v(r, truth(r)) += lean;
  }
  return v;
}

inline Labels random_labels(Rng& rng, Eigen::Index n, Eigen::Index k) {
  Labels y(n);
  for (Eigen::Index r = 0; r < n; ++r) y(r) = static_cast<int>(rng.below(k));
  return y;
}

}  // namespace mvb::testing

#endif  // MVB_TESTS_SUPPORT_HPP
