#ifndef MVB_TRANS_BOUNDS_HPP
#define MVB_TRANS_BOUNDS_HPP

#include "mvb/core.hpp"

namespace mvb {

/// Votes closer than this are treated as one vote level.
constexpr double kLevelTolerance = 1e-12;

/// Distribution of the votes v(x, j) for one column j over the unlabeled set,
/// split by true-class mass. All per-class quantities are normalized by the
/// class mass u_i = sum_x P(Y=i|x); columns of classes with u_i = 0 are zero.
struct VoteLevelProfile {
  Eigen::Index column = 0;       ///< the class j whose votes are profiled
  Eigen::VectorXd levels;        ///< N ascending unique votes
  Matrix<double> caps;           ///< N x K, class-i mass at each level
  Matrix<double> errors;         ///< N x K, class-i mass at each level among examples predicted j
  Matrix<double> vote_mass;      ///< N x K, class-i mass times vote at each level
  Eigen::VectorXd gibbs_budget;  ///< K_{i,j}: class-i vote mass among examples predicted j
  Eigen::VectorXd class_mass;    ///< u_i, unnormalized
};

VoteLevelProfile vote_level_profile(const PosteriorMatrix& post, const VoteMatrix& votes, Eigen::Index column);

/// Mass of class i predicted j with vote v(x, j) >= theta_j, over u_i.
double exact_joint_conditional_risk(const PosteriorMatrix& post, const VoteMatrix& votes, Eigen::Index i,
                                    Eigen::Index j, double theta_j);

/// Unrestricted Gibbs conditional risk (1/u_i) sum_x P(Y=i|x) v(x, j).
double gibbs_conditional_risk(const PosteriorMatrix& post, const VoteMatrix& votes, Eigen::Index i, Eigen::Index j);

/// Upper bound on the joint conditional risk of (i, j) at threshold theta_j:
///   inf_gamma  I(theta_j <= v < gamma) + (1/gamma) [K_ij - M(theta_j, gamma)]_+
/// where I and M are the class-i mass and vote mass of votes in [theta_j, gamma).
/// The infimum is attained on the positive vote levels, theta_j or 1. The
/// value is 0 when no vote reaches theta_j, and also at theta_j = 0 with
/// K_ij = 0 (the empty interval at gamma = 0 then costs nothing).
double conditional_bound(const VoteLevelProfile& profile, Eigen::Index i, double theta_j);
double conditional_bound(const PosteriorMatrix& post, const VoteMatrix& votes, Eigen::Index i, Eigen::Index j,
                         double theta_j);

/// K x K matrix of conditional bounds, zero diagonal, zero rows for classes
/// without posterior mass.
Matrix<double> bound_matrix(const PosteriorMatrix& post, const VoteMatrix& votes, const ThresholdVector& theta);

/// Exact joint confusion matrix with the same conventions as bound_matrix.
Matrix<double> joint_confusion(const PosteriorMatrix& post, const VoteMatrix& votes, const ThresholdVector& theta);

/// Joint error rate computed directly per example: posterior mass off the
/// predicted class, counted only where the predicted-class vote passes theta.
double joint_error_rate(const PosteriorMatrix& post, const VoteMatrix& votes, const ThresholdVector& theta);

/// Class proportions p_i = u_i / u.
Eigen::VectorXd class_proportions(const PosteriorMatrix& post);

/// || U_theta^T p ||_1.
double error_rate_bound(const PosteriorMatrix& post, const VoteMatrix& votes, const ThresholdVector& theta);

struct PowerIterationOptions {
  double tolerance = 1e-10;
  int max_iterations = 10000;
};

/// Largest singular value by power iteration on A^T A.
double spectral_norm(const Matrix<double>& a, const PowerIterationOptions& options = {});

/// Spectral norm of U_theta.
double confusion_norm_bound(const PosteriorMatrix& post, const VoteMatrix& votes, const ThresholdVector& theta);

/// Greedy solution of  max sum_{t>cutoff} q_t  s.t. 0 <= q_t <= caps_t,
/// sum_t q_t levels_t <= budget. Levels must be strictly ascending in (0, 1].
double lp_oracle_bound(const Eigen::VectorXd& levels, const Eigen::VectorXd& caps, Eigen::Index cutoff,
                       double budget);

struct TightnessReport {
  double gamma_star = 1.0;   ///< highest level whose error mass exceeds tau (1 if none)
  double tail_vote = 0.0;    ///< r_ij: error vote mass strictly above gamma_star
  double c_max = 1.0;        ///< largest admissible lower-bound constant
  double risk = 0.0;         ///< R_U(B_Q, i, j)
  double gap_bound = 0.0;    ///< +inf when c_max = 0
  double actual_gap = 0.0;   ///< [U_0]_ij - R_U(B_Q, i, j)
};

TightnessReport tightness_gap(const PosteriorMatrix& post, const VoteMatrix& votes, Eigen::Index i, Eigen::Index j,
                              double tau);

}  // namespace mvb

#endif  // MVB_TRANS_BOUNDS_HPP
