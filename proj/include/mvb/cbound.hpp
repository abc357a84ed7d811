#ifndef MVB_CBOUND_HPP
#define MVB_CBOUND_HPP

#include "mvb/core.hpp"

#include <string>

namespace mvb {

/// p(j, c) = P(imperfect label = j | true label = c); columns sum to one.
using MislabelMatrix = Matrix<double>;

/// Throws InvalidInput unless `p` is square, has entries in [0, 1] and
/// columns summing to one within kRowSumTolerance.
void validate_mislabel_matrix(const MislabelMatrix& p);

struct MarginMoments {
  double mu1 = 0.0;
  double mu2 = 0.0;
};

/// Posterior-weighted margin moments averaged over examples:
///   mu_k = (1/n) sum_x w(x) sum_c P(c|x) M(x,c)^k.
/// An empty weight vector means w = 1.
MarginMoments margin_moments(const PosteriorMatrix& post, const VoteMatrix& votes,
                             const Eigen::VectorXd& weights = Eigen::VectorXd());

/// 1 - mu1^2 / mu2. Throws InapplicableBound when mu1 <= 0.
double cbound(const PosteriorMatrix& post, const VoteMatrix& votes);

/// Row-wise P(imperfect = j | x) = sum_c p(j, c) P(c | x).
PosteriorMatrix apply_mislabeling(const MislabelMatrix& p, const PosteriorMatrix& post);

/// alpha = p(c, c) and delta = p(c, c) - max_{j != c} p(c, j) for a predicted class c.
struct Correction {
  double alpha = 1.0;
  double delta = 1.0;
};
Correction correction(const MislabelMatrix& p, Eigen::Index predicted);

/// Bound on the true per-example risk given the imperfect-label risk r_hat:
///   r_hat / (lambda + delta) - (1 - lambda - alpha) / (lambda + delta), clamped to [0, 1].
double per_example_true_risk_bound(const MislabelMatrix& p, double r_hat, Eigen::Index predicted, double lambda);

struct CbilResult {
  double value = 0.0;  ///< clamped to [0, 1]
  double raw = 0.0;    ///< psi - mu1^2 / mu2 before clamping
  double mu1 = 0.0;
  double mu2 = 0.0;
  double psi = 0.0;
};

/// C-bound with imperfect labels. Each example is weighted by 1/(delta + lambda)
/// inside both margin moments and psi is the mean of (alpha + lambda)/(delta + lambda),
/// with alpha and delta taken at the majority-vote class.
CbilResult cbil(const VoteMatrix& votes, const PosteriorMatrix& imperfect_post, const MislabelMatrix& p,
                double lambda);

/// Column-normalized confusion counts. Classes absent from `true_labels` get
/// an identity column and a warning. Labels are 0-based.
MislabelMatrix estimate_mislabeling(const Labels& true_labels, const Labels& assigned_labels, Eigen::Index k);

/// sqrt(ln(2 sqrt(count) / eps) / (2 count)); +inf for count = 0.
double pac_r(double count, double epsilon);

struct PacBayesResult : CbilResult {
  double b1 = 0.0;
  double b2 = 0.0;
  double b3 = 0.0;
  bool vacuous = false;  ///< penalized mu1 was not positive; value is 1
};

/// Penalized CBIL. `class_counts` holds the number of labeled examples per
/// true class used to estimate `p_hat`. B1..B3 are sample maxima.
PacBayesResult pac_bayes_cbound(const VoteMatrix& votes, const PosteriorMatrix& post, const MislabelMatrix& p_hat,
                                const Eigen::VectorXd& class_counts, double kl, double epsilon, double lambda = 0.0);

struct BoundReport {
  std::string bound_name;
  double value = 0.0;
  double mu1 = 0.0;
  double mu2 = 0.0;
  double psi = 1.0;
  double lambda = 0.0;
  double epsilon = 0.0;
  bool applicable = true;
};

/// JSON object with keys bound_name, value, mu1, mu2, psi, lambda, epsilon, applicable.
std::string to_json(const BoundReport& report);

}  // namespace mvb

#endif  // MVB_CBOUND_HPP
