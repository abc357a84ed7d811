#include "mvb/self_learning.hpp"

#include "mvb/parallel.hpp"
#include "mvb/random.hpp"
#include "mvb/trans_bounds.hpp"

#include <algorithm>
#include <limits>
#include <ostream>

namespace mvb {

namespace {

constexpr double kTieTolerance = 1e-12;

Matrix<double> gather_rows(const Matrix<double>& m, const std::vector<Eigen::Index>& rows) {
  Matrix<double> out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(rows[r]);
  return out;
}

std::uint64_t iteration_seed(std::uint64_t seed, int iteration) {
  return iteration == 0 ? seed : splitmix64(seed + static_cast<std::uint64_t>(iteration));
}

bool ties_or_beats(double value, double best) {
  if (value < best) return true;
  if (std::isinf(value) || std::isinf(best)) return false;
  return std::abs(value - best) <= kTieTolerance * std::max(std::abs(value), std::abs(best));
}

}  // namespace

Policy parse_policy(std::string_view name) {
  if (name == "msla") return Policy::Msla;
  if (name == "fsla") return Policy::Fsla;
  if (name == "csla") return Policy::Csla;
  throw InvalidInput("unknown policy '" + std::string(name) + "' (msla|fsla|csla)");
}

std::string_view to_string(Policy policy) {
  switch (policy) {
    case Policy::Msla:
      return "msla";
    case Policy::Fsla:
      return "fsla";
    case Policy::Csla:
      return "csla";
  }
  return "unknown";
}

void SelfLearnConfig::validate() const {
  if (!(theta_fixed > 0.0 && theta_fixed <= 1.0)) throw InvalidInput("theta_fixed must lie in (0, 1]");
  if (!(delta > 0.0 && delta <= 1.0)) throw InvalidInput("delta must lie in (0, 1]");
  if (grid_resolution < 2) throw InvalidInput("grid resolution must be >= 2");
  if (max_iterations < 1) throw InvalidInput("max_iterations must be >= 1");
}

double conditional_bayes_error(const PosteriorMatrix& post, const VoteMatrix& votes, const ThresholdVector& theta) {
  if (votes.rows() == 0) return std::numeric_limits<double>::infinity();
  const Labels predicted = predict_bayes(votes);
  Eigen::Index passing = 0;
  for (Eigen::Index r = 0; r < votes.rows(); ++r) {
    if (votes(r, predicted(r)) >= theta(predicted(r))) ++passing;
  }
  if (passing == 0) return std::numeric_limits<double>::infinity();
  const double fraction = static_cast<double>(passing) / static_cast<double>(votes.rows());
  return error_rate_bound(post, votes, theta) / fraction;
}

ThresholdVector find_theta_star(const PosteriorMatrix& post, const VoteMatrix& votes, int resolution) {
  if (resolution < 2) throw InvalidInput("find_theta_star: resolution must be >= 2");
  if (votes.rows() == 0) throw InvalidInput("find_theta_star: empty unlabeled set");
  if (post.rows() != votes.rows() || post.cols() != votes.cols()) {
    throw InvalidInput("find_theta_star: posterior and vote matrices differ in shape");
  }
  const Eigen::Index k = votes.cols();
  const double u = static_cast<double>(votes.rows());
  const Labels predicted = predict_bayes(votes);
  const Eigen::VectorXd proportions = class_proportions(post);

  ThresholdVector theta = ThresholdVector::Ones(k);
  parallel_for(static_cast<std::size_t>(k), [&](std::size_t jj) {
    const auto j = static_cast<Eigen::Index>(jj);
    std::vector<double> own;
    for (Eigen::Index r = 0; r < votes.rows(); ++r) {
      if (predicted(r) == j) own.push_back(votes(r, j));
    }
    if (own.empty()) return;
    std::sort(own.begin(), own.end());

    const auto m = static_cast<std::uint64_t>(own.size());
    const auto steps = static_cast<std::uint64_t>(resolution - 1);
    std::vector<double> candidates;
    for (std::uint64_t q = 0; q <= steps; ++q) {
      const double c = own[static_cast<std::size_t>(q * (m - 1) / steps)];
      if (candidates.empty() || c != candidates.back()) candidates.push_back(c);
    }

    const VoteLevelProfile profile = vote_level_profile(post, votes, j);
    double best = std::numeric_limits<double>::infinity();
    double best_theta = candidates.front();
    for (double c : candidates) {
      double share = 0.0;
      for (Eigen::Index i = 0; i < k; ++i) {
        if (i == j || !(profile.class_mass(i) > 0.0)) continue;
        share += proportions(i) * conditional_bound(profile, i, c);
      }
      const auto passing = static_cast<double>(own.end() - std::lower_bound(own.begin(), own.end(), c));
      const double value = share / (passing / u);
      if (ties_or_beats(value, best)) {
        best = value;
        best_theta = c;
      }
    }
    theta(j) = best_theta;
  });
  return theta;
}

PseudoLabels select_pseudo(const VoteMatrix& votes, const ThresholdVector& theta) {
  if (theta.size() != votes.cols()) throw InvalidInput("select_pseudo: threshold vector has wrong length");
  const Labels predicted = predict_bayes(votes);
  PseudoLabels out;
  for (Eigen::Index r = 0; r < votes.rows(); ++r) {
    const int c = predicted(r);
    if (votes(r, c) >= theta(c)) {
      out.rows.push_back(r);
      out.labels.push_back(c);
    }
  }
  return out;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw InvalidInput("percentile of an empty sample");
  p = std::clamp(p, 0.0, 1.0);
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

SelfLearnResult run_self_learning(const LabeledSet& labeled, const UnlabeledSet& unlabeled, int num_classes,
                                  const SelfLearnConfig& config) {
  config.validate();
  const Eigen::Index l = labeled.features.rows();
  if (l == 0) throw InvalidInput("run_self_learning: empty labeled set");
  {
    std::vector<bool> seen(static_cast<std::size_t>(num_classes), false);
    for (Eigen::Index r = 0; r < l; ++r) {
      if (labeled.labels(r) < 0 || labeled.labels(r) >= num_classes) {
        throw InvalidInput("run_self_learning: label out of range");
      }
      seen[static_cast<std::size_t>(labeled.labels(r))] = true;
    }
    if (std::count(seen.begin(), seen.end(), true) < 2) {
      throw InvalidInput("run_self_learning: degenerate labeled set (fewer than 2 classes)");
    }
  }
  const Eigen::Index u = unlabeled.features.rows();
  if (u > 0 && unlabeled.features.cols() != labeled.features.cols()) {
    throw InvalidInput("run_self_learning: labeled and unlabeled feature dimensions differ");
  }
  const bool have_truth = unlabeled.hidden_labels.has_value() && unlabeled.hidden_labels->size() == u;

  ForestConfig forest_config = config.forest;
  forest_config.seed = iteration_seed(config.seed, 0);
  SelfLearnResult result;
  result.forest = train_forest(labeled, forest_config, num_classes);
  if (u == 0) {
    result.unlabeled_predictions = Labels(0);
    return result;
  }

  const VoteMatrix supervised = forest_votes(result.forest, unlabeled.features);
  const PosteriorMatrix posteriors = posterior_source(config.posterior_mode, supervised, unlabeled.hidden_labels);

  std::vector<Eigen::Index> remaining(static_cast<std::size_t>(u));
  for (Eigen::Index r = 0; r < u; ++r) remaining[static_cast<std::size_t>(r)] = r;
  std::vector<Eigen::Index> pseudo_rows;
  std::vector<int> pseudo_labels;
  Eigen::Index pseudo_correct = 0;

  VoteMatrix votes = supervised;
  for (int iteration = 1;; ++iteration) {
    const PosteriorMatrix post = gather_rows(posteriors, remaining);
    ThresholdVector theta;
    switch (config.policy) {
      case Policy::Msla:
        theta = find_theta_star(post, votes, config.grid_resolution);
        break;
      case Policy::Fsla:
        theta = ThresholdVector::Constant(num_classes, config.theta_fixed);
        break;
      case Policy::Csla: {
        const Labels predicted = predict_bayes(votes);
        std::vector<double> top(static_cast<std::size_t>(votes.rows()));
        for (Eigen::Index r = 0; r < votes.rows(); ++r) top[static_cast<std::size_t>(r)] = votes(r, predicted(r));
        const double p = 1.0 - static_cast<double>(iteration) * config.delta;
        theta = ThresholdVector::Constant(num_classes, percentile(std::move(top), p));
        break;
      }
    }

    const PseudoLabels chosen = select_pseudo(votes, theta);
    if (chosen.rows.empty()) break;

    IterationRecord record;
    record.iteration = iteration;
    record.theta = theta;
    record.selected = static_cast<int>(chosen.rows.size());
    record.bound = conditional_bayes_error(post, votes, theta);

    std::vector<Eigen::Index> selection;
    std::vector<bool> taken(remaining.size(), false);
    for (std::size_t s = 0; s < chosen.rows.size(); ++s) {
      const auto local = static_cast<std::size_t>(chosen.rows[s]);
      const Eigen::Index row = remaining[local];
      taken[local] = true;
      selection.push_back(row);
      pseudo_rows.push_back(row);
      pseudo_labels.push_back(chosen.labels[s]);
      if (have_truth && (*unlabeled.hidden_labels)(row) == chosen.labels[s]) ++pseudo_correct;
    }
    if (have_truth) {
      record.pseudo_accuracy = static_cast<double>(pseudo_correct) / static_cast<double>(pseudo_rows.size());
    }
    std::vector<Eigen::Index> rest;
    for (std::size_t r = 0; r < remaining.size(); ++r) {
      if (!taken[r]) rest.push_back(remaining[r]);
    }
    remaining = std::move(rest);
    result.history.push_back(std::move(record));
    result.selections.push_back(std::move(selection));

    // Retrain on labeled plus pseudo-labeled rows with the balancing weights.
    const auto p = static_cast<Eigen::Index>(pseudo_rows.size());
    LabeledSet train;
    train.features.resize(l + p, labeled.features.cols());
    train.labels.resize(l + p);
    train.features.topRows(l) = labeled.features;
    train.labels.head(l) = labeled.labels;
    for (Eigen::Index s = 0; s < p; ++s) {
      train.features.row(l + s) = unlabeled.features.row(pseudo_rows[static_cast<std::size_t>(s)]);
      train.labels(l + s) = pseudo_labels[static_cast<std::size_t>(s)];
    }
    Eigen::VectorXd weights(l + p);
    weights.head(l).setConstant(static_cast<double>(l + p) / static_cast<double>(l));
    weights.tail(p).setConstant(static_cast<double>(l + p) / static_cast<double>(p));
    forest_config.seed = iteration_seed(config.seed, iteration);
    result.forest = train_forest(train, weights, forest_config, num_classes);

    if (remaining.empty()) break;
    if (config.policy == Policy::Fsla && iteration >= config.max_iterations) break;
    votes = forest_votes(result.forest, gather_rows(unlabeled.features, remaining));
  }

  result.unlabeled_predictions = predict_bayes(forest_votes(result.forest, unlabeled.features));
  return result;
}

void write_history_csv(std::ostream& out, const std::vector<IterationRecord>& history, Eigen::Index num_classes) {
  out << "iteration";
  for (Eigen::Index c = 1; c <= num_classes; ++c) out << ",theta_" << c;
  out << ",selected,bound,pseudo_accuracy\n";
  const auto old_precision = out.precision(17);
  for (const IterationRecord& r : history) {
    out << r.iteration;
    for (Eigen::Index c = 0; c < num_classes; ++c) out << ',' << r.theta(c);
    out << ',' << r.selected << ',' << r.bound << ',';
    if (r.pseudo_accuracy) out << *r.pseudo_accuracy;
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace mvb
