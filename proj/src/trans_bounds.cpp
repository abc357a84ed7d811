#include "mvb/trans_bounds.hpp"

#include "mvb/parallel.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace mvb {

namespace {

void check_inputs(const PosteriorMatrix& post, const VoteMatrix& votes, const char* where) {
  if (post.rows() != votes.rows() || post.cols() != votes.cols()) {
    throw InvalidInput(std::string(where) + ": posterior and vote matrices differ in shape");
  }
  if (votes.cols() < 2) throw InvalidInput(std::string(where) + ": need at least 2 classes");
}

void check_pair(Eigen::Index i, Eigen::Index j, Eigen::Index k, const char* where) {
  if (i < 0 || i >= k || j < 0 || j >= k) throw InvalidInput(std::string(where) + ": class index out of range");
  if (i == j) throw InvalidInput(std::string(where) + ": requires i != j");
}

void check_theta(const ThresholdVector& theta, Eigen::Index k) {
  if (theta.size() != k) throw InvalidInput("threshold vector has wrong length");
  for (Eigen::Index c = 0; c < k; ++c) {
    if (!(theta(c) >= 0.0 && theta(c) <= 1.0)) throw InvalidInput("threshold components must lie in [0, 1]");
  }
}

bool passes(double vote, double theta) { return vote >= theta; }

}  // namespace

VoteLevelProfile vote_level_profile(const PosteriorMatrix& post, const VoteMatrix& votes, Eigen::Index column) {
  check_inputs(post, votes, "vote_level_profile");
  const Eigen::Index n = votes.rows();
  const Eigen::Index k = votes.cols();
  if (column < 0 || column >= k) throw InvalidInput("vote_level_profile: class index out of range");
  const Labels predicted = predict_bayes(votes);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return votes(a, column) < votes(b, column); });

  std::vector<Eigen::Index> level_of(static_cast<std::size_t>(n));
  std::vector<double> levels;
  for (Eigen::Index r : order) {
    const double v = votes(r, column);
    if (levels.empty() || v - levels.back() > kLevelTolerance) levels.push_back(v);
    level_of[static_cast<std::size_t>(r)] = static_cast<Eigen::Index>(levels.size()) - 1;
  }

  VoteLevelProfile p;
  p.column = column;
  const auto levels_n = static_cast<Eigen::Index>(levels.size());
  p.levels = Eigen::Map<const Eigen::VectorXd>(levels.data(), levels_n);
  p.caps = Matrix<double>::Zero(levels_n, k);
  p.errors = Matrix<double>::Zero(levels_n, k);
  p.vote_mass = Matrix<double>::Zero(levels_n, k);
  p.gibbs_budget = Eigen::VectorXd::Zero(k);
  p.class_mass = post.colwise().sum().transpose();

  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::Index t = level_of[static_cast<std::size_t>(r)];
    const double v = votes(r, column);
    const bool predicted_here = predicted(r) == column;
    for (Eigen::Index i = 0; i < k; ++i) {
      const double mass = post(r, i);
      p.caps(t, i) += mass;
      p.vote_mass(t, i) += mass * v;
      if (predicted_here) {
        p.errors(t, i) += mass;
        p.gibbs_budget(i) += mass * v;
      }
    }
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    const double u_i = p.class_mass(i);
    if (u_i > 0.0) {
      p.caps.col(i) /= u_i;
      p.errors.col(i) /= u_i;
      p.vote_mass.col(i) /= u_i;
      p.gibbs_budget(i) /= u_i;
    } else {
      p.caps.col(i).setZero();
      p.errors.col(i).setZero();
      p.vote_mass.col(i).setZero();
      p.gibbs_budget(i) = 0.0;
    }
  }
  return p;
}

double exact_joint_conditional_risk(const PosteriorMatrix& post, const VoteMatrix& votes, Eigen::Index i,
                                    Eigen::Index j, double theta_j) {
  check_inputs(post, votes, "exact_joint_conditional_risk");
  check_pair(i, j, votes.cols(), "exact_joint_conditional_risk");
  const double u_i = post.col(i).sum();
  if (!(u_i > 0.0)) throw InvalidInput("exact_joint_conditional_risk: class " + std::to_string(i + 1) + " has no mass");
  const Labels predicted = predict_bayes(votes);
  double mass = 0.0;
  for (Eigen::Index r = 0; r < votes.rows(); ++r) {
    if (predicted(r) == j && passes(votes(r, j), theta_j)) mass += post(r, i);
  }
  return mass / u_i;
}

double gibbs_conditional_risk(const PosteriorMatrix& post, const VoteMatrix& votes, Eigen::Index i, Eigen::Index j) {
  check_inputs(post, votes, "gibbs_conditional_risk");
  check_pair(i, j, votes.cols(), "gibbs_conditional_risk");
  const double u_i = post.col(i).sum();
  if (!(u_i > 0.0)) throw InvalidInput("gibbs_conditional_risk: class " + std::to_string(i + 1) + " has no mass");
  return post.col(i).dot(votes.col(j)) / u_i;
}

double conditional_bound(const VoteLevelProfile& profile, Eigen::Index i, double theta_j) {
  const Eigen::Index k = profile.class_mass.size();
  check_pair(i, profile.column, k, "conditional_bound");
  if (!(profile.class_mass(i) > 0.0)) {
    throw InvalidInput("conditional_bound: class " + std::to_string(i + 1) + " has no posterior mass");
  }
  const double budget = profile.gibbs_budget(i);
  const Eigen::Index levels = profile.levels.size();
  // No vote reaches theta_j: nothing can be selected.
  if (levels == 0 || profile.levels(levels - 1) + kLevelTolerance < theta_j) return 0.0;
  // gamma = theta_j is a candidate with an empty interval; at theta_j = 0 the
  // floor term is only finite when the budget is zero.
  double best = std::numeric_limits<double>::infinity();
  if (theta_j > 0.0) {
    best = budget / theta_j;
  } else if (budget <= 0.0) {
    return 0.0;
  }

  double below = 0.0;       // class-i mass with theta_j <= v < gamma
  double vote_below = 0.0;  // the same mass weighted by its votes
  for (Eigen::Index t = 0; t < levels; ++t) {
    const double gamma = profile.levels(t);
    if (gamma + kLevelTolerance < theta_j) continue;
    if (gamma > 0.0) {
      best = std::min(best, below + std::max(budget - vote_below, 0.0) / gamma);
    }
    below += profile.caps(t, i);
    vote_below += profile.vote_mass(t, i);
  }
  if (profile.levels(levels - 1) < 1.0) {
    best = std::min(best, below + std::max(budget - vote_below, 0.0));
  }
  return std::clamp(best, 0.0, 1.0);
}

double conditional_bound(const PosteriorMatrix& post, const VoteMatrix& votes, Eigen::Index i, Eigen::Index j,
                         double theta_j) {
  check_pair(i, j, votes.cols(), "conditional_bound");
  return conditional_bound(vote_level_profile(post, votes, j), i, theta_j);
}

Matrix<double> bound_matrix(const PosteriorMatrix& post, const VoteMatrix& votes, const ThresholdVector& theta) {
  check_inputs(post, votes, "bound_matrix");
  const Eigen::Index k = votes.cols();
  check_theta(theta, k);
  Matrix<double> u = Matrix<double>::Zero(k, k);
  parallel_for(static_cast<std::size_t>(k), [&](std::size_t jj) {
    const auto j = static_cast<Eigen::Index>(jj);
    const VoteLevelProfile profile = vote_level_profile(post, votes, j);
    for (Eigen::Index i = 0; i < k; ++i) {
      if (i == j || !(profile.class_mass(i) > 0.0)) continue;
      u(i, j) = conditional_bound(profile, i, theta(j));
    }
  });
  return u;
}

Matrix<double> joint_confusion(const PosteriorMatrix& post, const VoteMatrix& votes, const ThresholdVector& theta) {
  check_inputs(post, votes, "joint_confusion");
  const Eigen::Index k = votes.cols();
  check_theta(theta, k);
  const Labels predicted = predict_bayes(votes);
  Matrix<double> c = Matrix<double>::Zero(k, k);
  for (Eigen::Index r = 0; r < votes.rows(); ++r) {
    const Eigen::Index j = predicted(r);
    if (!passes(votes(r, j), theta(j))) continue;
    for (Eigen::Index i = 0; i < k; ++i) {
      if (i != j) c(i, j) += post(r, i);
    }
  }
  const Eigen::VectorXd mass = post.colwise().sum().transpose();
  for (Eigen::Index i = 0; i < k; ++i) {
    if (mass(i) > 0.0) {
      c.row(i) /= mass(i);
    } else {
      c.row(i).setZero();
    }
  }
  return c;
}

double joint_error_rate(const PosteriorMatrix& post, const VoteMatrix& votes, const ThresholdVector& theta) {
  check_inputs(post, votes, "joint_error_rate");
  check_theta(theta, votes.cols());
  if (votes.rows() == 0) return 0.0;
  const Labels predicted = predict_bayes(votes);
  double err = 0.0;
  for (Eigen::Index r = 0; r < votes.rows(); ++r) {
    const Eigen::Index j = predicted(r);
    if (passes(votes(r, j), theta(j))) err += post.row(r).sum() - post(r, j);
  }
  return err / static_cast<double>(votes.rows());
}

Eigen::VectorXd class_proportions(const PosteriorMatrix& post) {
  if (post.rows() == 0) return Eigen::VectorXd::Zero(post.cols());
  return post.colwise().sum().transpose() / static_cast<double>(post.rows());
}

double error_rate_bound(const PosteriorMatrix& post, const VoteMatrix& votes, const ThresholdVector& theta) {
  const Matrix<double> u = bound_matrix(post, votes, theta);
  return (u.transpose() * class_proportions(post)).lpNorm<1>();
}

double spectral_norm(const Matrix<double>& a, const PowerIterationOptions& options) {
  if (a.size() == 0 || a.isZero(0.0)) return 0.0;
  const Matrix<double> gram = a.transpose() * a;
  Eigen::VectorXd x = Eigen::VectorXd::Ones(a.cols());
  if ((gram * x).isZero(0.0)) {
    // Ones is orthogonal to the row space; start from the heaviest column.
    Eigen::Index col = 0;
    gram.diagonal().maxCoeff(&col);
    x.setZero();
    x(col) = 1.0;
  }
  x.normalize();
  double eigenvalue = x.dot(gram * x);
  for (int it = 0; it < options.max_iterations; ++it) {
    Eigen::VectorXd y = gram * x;
    const double norm = y.norm();
    if (norm == 0.0) break;
    x = y / norm;
    const double next = x.dot(gram * x);
    const bool converged = std::abs(next - eigenvalue) <= options.tolerance * std::max(1.0, next);
    eigenvalue = next;
    if (converged) break;
  }
  return std::sqrt(std::max(eigenvalue, 0.0));
}

double confusion_norm_bound(const PosteriorMatrix& post, const VoteMatrix& votes, const ThresholdVector& theta) {
  return spectral_norm(bound_matrix(post, votes, theta));
}

double lp_oracle_bound(const Eigen::VectorXd& levels, const Eigen::VectorXd& caps, Eigen::Index cutoff,
                       double budget) {
  if (levels.size() != caps.size()) throw InvalidInput("lp_oracle_bound: levels and caps differ in length");
  for (Eigen::Index t = 0; t < levels.size(); ++t) {
    if (!(levels(t) > 0.0) || levels(t) > 1.0) throw InvalidInput("lp_oracle_bound: levels must lie in (0, 1]");
    if (t > 0 && !(levels(t) > levels(t - 1))) throw InvalidInput("lp_oracle_bound: levels must be strictly ascending");
    if (caps(t) < 0.0) throw InvalidInput("lp_oracle_bound: caps must be nonnegative");
  }
  if (budget < 0.0) throw InvalidInput("lp_oracle_bound: budget must be nonnegative");
  if (cutoff < 0) throw InvalidInput("lp_oracle_bound: cutoff must be nonnegative");
  double remaining = budget;
  double total = 0.0;
  for (Eigen::Index t = cutoff; t < levels.size(); ++t) {
    const double q = std::min(caps(t), std::max(remaining / levels(t), 0.0));
    total += q;
    remaining -= q * levels(t);
  }
  return total;
}

TightnessReport tightness_gap(const PosteriorMatrix& post, const VoteMatrix& votes, Eigen::Index i, Eigen::Index j,
                              double tau) {
  check_inputs(post, votes, "tightness_gap");
  check_pair(i, j, votes.cols(), "tightness_gap");
  if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidInput("tightness_gap: tau must lie in [0, 1]");
  const VoteLevelProfile profile = vote_level_profile(post, votes, j);
  if (!(profile.class_mass(i) > 0.0)) throw InvalidInput("tightness_gap: class has no posterior mass");

  TightnessReport rep;
  std::vector<Eigen::Index> admissible;
  for (Eigen::Index t = 0; t < profile.levels.size(); ++t) {
    if (profile.errors(t, i) > tau) admissible.push_back(t);
  }
  rep.gamma_star = admissible.empty() ? 1.0 : profile.levels(admissible.back());

  const Labels predicted = predict_bayes(votes);
  const double u_i = profile.class_mass(i);
  double tail = 0.0;
  for (Eigen::Index r = 0; r < votes.rows(); ++r) {
    if (predicted(r) == j && votes(r, j) > rep.gamma_star + (admissible.empty() ? 0.0 : kLevelTolerance)) {
      tail += post(r, i) * votes(r, j);
    }
  }
  rep.tail_vote = tail / u_i;

  // C must satisfy  sum_{pred=j, v<gamma} P_i >= C sum_{v<gamma} P_i  for every admissible gamma.
  double c = 1.0;
  double err_below = 0.0;
  double mass_below = 0.0;
  std::size_t next = 0;
  for (Eigen::Index t = 0; t < profile.levels.size() && next < admissible.size(); ++t) {
    if (t == admissible[next]) {
      if (mass_below > 0.0) c = std::min(c, err_below / mass_below);
      ++next;
    }
    err_below += profile.errors(t, i);
    mass_below += profile.caps(t, i);
  }
  rep.c_max = std::clamp(c, 0.0, 1.0);

  rep.risk = profile.errors.col(i).sum();
  rep.gap_bound = rep.c_max > 0.0
                      ? (1.0 - rep.c_max) / rep.c_max * rep.risk + rep.tail_vote * (1.0 / rep.gamma_star - 1.0)
                      : std::numeric_limits<double>::infinity();
  rep.actual_gap = conditional_bound(profile, i, 0.0) - rep.risk;
  return rep;
}

}  // namespace mvb
