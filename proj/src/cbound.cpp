#include "mvb/cbound.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace mvb {

namespace {

void check_shapes(const PosteriorMatrix& post, const VoteMatrix& votes, const char* where) {
  if (post.rows() != votes.rows() || post.cols() != votes.cols()) {
    throw InvalidInput(std::string(where) + ": posterior and vote matrices differ in shape");
  }
  if (votes.rows() == 0) throw InvalidInput(std::string(where) + ": no examples");
}

// Per-example weighted terms of the moments: sum_c P(c|x) M(x,c)^k.
struct ExampleMargins {
  Eigen::VectorXd first;
  Eigen::VectorXd second;
};

ExampleMargins example_margins(const PosteriorMatrix& post, const VoteMatrix& votes) {
  const Matrix<double> m = margin_table(votes);
  return {(post.array() * m.array()).rowwise().sum().matrix(),
          (post.array() * m.array().square()).rowwise().sum().matrix()};
}

struct Weights {
  Eigen::VectorXd weight;  // 1 / (delta + lambda)
  Eigen::VectorXd ratio;   // (alpha + lambda) / (delta + lambda)
};

Weights weights_from(const Eigen::VectorXd& alpha, const Eigen::VectorXd& delta, double lambda, const char* name) {
  Weights w{Eigen::VectorXd(alpha.size()), Eigen::VectorXd(alpha.size())};
  for (Eigen::Index r = 0; r < alpha.size(); ++r) {
    const double denom = delta(r) + lambda;
    if (!(denom > 0.0)) {
      throw InapplicableBound(std::string(name) + ": delta + lambda = " + std::to_string(denom) + " <= 0 at example " +
                              std::to_string(r + 1) + "; increase lambda");
    }
    w.weight(r) = 1.0 / denom;
    w.ratio(r) = (alpha(r) + lambda) / denom;
  }
  return w;
}

}  // namespace

void validate_mislabel_matrix(const MislabelMatrix& p) {
  if (p.rows() != p.cols() || p.rows() < 2) throw InvalidInput("mislabeling matrix must be square with K >= 2");
  if (!p.allFinite() || p.minCoeff() < 0.0 || p.maxCoeff() > 1.0) {
    throw InvalidInput("mislabeling matrix entries must lie in [0, 1]");
  }
  for (Eigen::Index c = 0; c < p.cols(); ++c) {
    if (std::abs(p.col(c).sum() - 1.0) > kRowSumTolerance) {
      throw InvalidInput("mislabeling matrix column " + std::to_string(c + 1) + " does not sum to 1");
    }
  }
}

MarginMoments margin_moments(const PosteriorMatrix& post, const VoteMatrix& votes, const Eigen::VectorXd& weights) {
  check_shapes(post, votes, "margin_moments");
  const ExampleMargins em = example_margins(post, votes);
  const double n = static_cast<double>(votes.rows());
  // Unit weights go through the same reduction, so CBIL with identity
  // mislabeling reproduces the plain C-bound bit for bit.
  const Eigen::VectorXd w = weights.size() == 0 ? Eigen::VectorXd::Ones(votes.rows()) : weights;
  if (w.size() != votes.rows()) throw InvalidInput("margin_moments: weight count does not match rows");
  return {w.dot(em.first) / n, w.dot(em.second) / n};
}

double cbound(const PosteriorMatrix& post, const VoteMatrix& votes) {
  const MarginMoments m = margin_moments(post, votes);
  if (!(m.mu1 > 0.0)) {
    throw InapplicableBound("C-bound requires a positive margin mean (mu1 = " + std::to_string(m.mu1) + ")");
  }
  return 1.0 - m.mu1 * m.mu1 / m.mu2;
}

PosteriorMatrix apply_mislabeling(const MislabelMatrix& p, const PosteriorMatrix& post) {
  validate_mislabel_matrix(p);
  if (post.cols() != p.cols()) throw InvalidInput("apply_mislabeling: class counts differ");
  return post * p.transpose();
}

Correction correction(const MislabelMatrix& p, Eigen::Index predicted) {
  if (predicted < 0 || predicted >= p.rows()) throw InvalidInput("correction: class index out of range");
  double other = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    if (j != predicted) other = std::max(other, p(predicted, j));
  }
  const double alpha = p(predicted, predicted);
  return {alpha, alpha - other};
}

double per_example_true_risk_bound(const MislabelMatrix& p, double r_hat, Eigen::Index predicted, double lambda) {
  validate_mislabel_matrix(p);
  if (lambda < 0.0) throw InvalidInput("lambda must be >= 0");
  const Correction c = correction(p, predicted);
  const double denom = lambda + c.delta;
  if (!(denom > 0.0)) throw InapplicableBound("delta + lambda <= 0; increase lambda");
  return std::clamp(r_hat / denom - (1.0 - lambda - c.alpha) / denom, 0.0, 1.0);
}

CbilResult cbil(const VoteMatrix& votes, const PosteriorMatrix& imperfect_post, const MislabelMatrix& p,
                double lambda) {
  check_shapes(imperfect_post, votes, "cbil");
  validate_mislabel_matrix(p);
  if (p.cols() != votes.cols()) throw InvalidInput("cbil: mislabeling matrix size does not match class count");
  if (lambda < 0.0) throw InvalidInput("lambda must be >= 0");
  const Labels predicted = predict_bayes(votes);
  Eigen::VectorXd alpha(votes.rows()), delta(votes.rows());
  for (Eigen::Index r = 0; r < votes.rows(); ++r) {
    const Correction c = correction(p, predicted(r));
    alpha(r) = c.alpha;
    delta(r) = c.delta;
  }
  const Weights w = weights_from(alpha, delta, lambda, "cbil");
  const MarginMoments m = margin_moments(imperfect_post, votes, w.weight);
  if (!(m.mu1 > 0.0)) {
    throw InapplicableBound("CBIL requires a positive weighted margin mean (mu1 = " + std::to_string(m.mu1) + ")");
  }
  CbilResult out;
  out.mu1 = m.mu1;
  out.mu2 = m.mu2;
  out.psi = w.ratio.mean();
  out.raw = out.psi - m.mu1 * m.mu1 / m.mu2;
  out.value = std::clamp(out.raw, 0.0, 1.0);
  return out;
}

MislabelMatrix estimate_mislabeling(const Labels& true_labels, const Labels& assigned_labels, Eigen::Index k) {
  if (true_labels.size() != assigned_labels.size()) throw InvalidInput("estimate_mislabeling: length mismatch");
  if (true_labels.size() == 0) throw InvalidInput("estimate_mislabeling: no labels");
  if (k < 2) throw InvalidInput("estimate_mislabeling: need K >= 2");
  MislabelMatrix counts = MislabelMatrix::Zero(k, k);
  for (Eigen::Index r = 0; r < true_labels.size(); ++r) {
    const int t = true_labels(r);
    const int a = assigned_labels(r);
    if (t < 0 || t >= k || a < 0 || a >= k) throw InvalidInput("estimate_mislabeling: label out of range");
    counts(a, t) += 1.0;
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    const double total = counts.col(c).sum();
    if (total > 0.0) {
      counts.col(c) /= total;
    } else {
      warn("estimate_mislabeling: class " + std::to_string(c + 1) + " has no examples; using identity column");
      counts.col(c).setZero();
      counts(c, c) = 1.0;
    }
  }
  return counts;
}

double pac_r(double count, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw InvalidInput("epsilon must lie in (0, 1]");
  if (count < 0.0) throw InvalidInput("pac_r: negative count");
  if (count == 0.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(std::log(2.0 * std::sqrt(count) / epsilon) / (2.0 * count));
}

PacBayesResult pac_bayes_cbound(const VoteMatrix& votes, const PosteriorMatrix& post, const MislabelMatrix& p_hat,
                                const Eigen::VectorXd& class_counts, double kl, double epsilon, double lambda) {
  check_shapes(post, votes, "pac_bayes_cbound");
  validate_mislabel_matrix(p_hat);
  const Eigen::Index k = votes.cols();
  if (p_hat.cols() != k || class_counts.size() != k) {
    throw InvalidInput("pac_bayes_cbound: class counts / mislabeling matrix do not match K");
  }
  if (kl < 0.0) throw InvalidInput("pac_bayes_cbound: KL divergence must be >= 0");
  if (lambda < 0.0) throw InvalidInput("lambda must be >= 0");
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw InvalidInput("epsilon must lie in (0, 1]");

  Eigen::VectorXd r(k);
  for (Eigen::Index c = 0; c < k; ++c) r(c) = pac_r(class_counts(c), epsilon);

  const Labels predicted = predict_bayes(votes);
  Eigen::VectorXd alpha(votes.rows()), delta(votes.rows());
  for (Eigen::Index x = 0; x < votes.rows(); ++x) {
    const Eigen::Index c = predicted(x);
    Eigen::Index rarest = c == 0 ? 1 : 0;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (j != c && class_counts(j) < class_counts(rarest)) rarest = j;
    }
    const Correction est = correction(p_hat, c);
    alpha(x) = est.alpha + r(c);
    delta(x) = est.delta - r(c) - r(rarest);
  }
  const Weights w = weights_from(alpha, delta, lambda, "pac_bayes_cbound");

  const ExampleMargins em = example_margins(post, votes);
  const Eigen::VectorXd first = w.weight.cwiseProduct(em.first);
  const Eigen::VectorXd second = w.weight.cwiseProduct(em.second);
  const double u = static_cast<double>(votes.rows());
  const double log_term = std::log(2.0 * std::sqrt(u) / epsilon);

  PacBayesResult out;
  out.b1 = first.cwiseAbs().maxCoeff();
  out.b2 = second.cwiseAbs().maxCoeff();
  out.b3 = w.ratio.cwiseAbs().maxCoeff();
  out.mu1 = first.mean() - out.b1 * std::sqrt(2.0 / u * (kl + log_term));
  out.mu2 = second.mean() + out.b2 * std::sqrt(2.0 / u * (2.0 * kl + log_term));
  out.psi = w.ratio.mean() + out.b3 * std::sqrt(2.0 / u * log_term);
  if (!(out.mu1 > 0.0)) {
    out.vacuous = true;
    out.raw = out.psi;
    out.value = 1.0;
    return out;
  }
  out.raw = out.psi - out.mu1 * out.mu1 / out.mu2;
  out.value = std::clamp(out.raw, 0.0, 1.0);
  return out;
}

std::string to_json(const BoundReport& report) {
  nlohmann::ordered_json j;
  j["bound_name"] = report.bound_name;
  j["value"] = report.value;
  j["mu1"] = report.mu1;
  j["mu2"] = report.mu2;
  j["psi"] = report.psi;
  j["lambda"] = report.lambda;
  j["epsilon"] = report.epsilon;
  j["applicable"] = report.applicable;
  return j.dump();
}

}  // namespace mvb
