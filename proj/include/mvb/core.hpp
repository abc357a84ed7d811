#ifndef MVB_CORE_HPP
#define MVB_CORE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mvb {

// Rows are examples, columns are classes. Classes are 0-based in memory and
// 1-based in every external format.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using VoteMatrix = Matrix<double>;
using PosteriorMatrix = Matrix<double>;
using ThresholdVector = Vector<double>;
using Labels = Eigen::VectorXi;

/// Input that violates a documented precondition.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A bound whose applicability condition fails (non-positive margin mean,
/// non-positive mislabeling gap, ...).
class InapplicableBound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr double kRowSumTolerance = 1e-9;

/// Sink for non-fatal diagnostics. Defaults to stderr.
void set_warning_handler(std::function<void(std::string_view)> handler);
void warn(std::string_view message);

/// Feature rows with optional labels. Unlabeled sets may carry hidden labels
/// that are only ever used for oracle evaluation.
struct LabeledSet {
  Matrix<double> features;
  Labels labels;
};

struct UnlabeledSet {
  Matrix<double> features;
  std::optional<Labels> hidden_labels;
};

/// Checks shape, range and row sums. Rows whose sums drift beyond the
/// tolerance are renormalized (with a warning) instead of rejected.
Matrix<double> validated_row_stochastic(const Matrix<double>& m, std::string_view what);

/// Argmax per row; ties go to the lowest class index.
template <typename Derived>
Labels predict_bayes(const Eigen::MatrixBase<Derived>& votes) {
  Labels out(votes.rows());
  for (Eigen::Index r = 0; r < votes.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < votes.cols(); ++c) {
      if (votes(r, c) > votes(r, best)) best = c;
    }
    out(r) = static_cast<int>(best);
  }
  return out;
}

/// Vote for `cls` minus the largest vote among the other classes.
template <typename Derived>
typename Derived::Scalar margin(const Eigen::MatrixBase<Derived>& row, Eigen::Index cls) {
  using Scalar = typename Derived::Scalar;
  Scalar other = -std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index c = 0; c < row.size(); ++c) {
    if (c != cls && row(c) > other) other = row(c);
  }
  return row(cls) - other;
}

template <typename Derived>
Vector<typename Derived::Scalar> margins(const Eigen::MatrixBase<Derived>& votes, Eigen::Index cls) {
  if (cls < 0 || cls >= votes.cols()) {
    throw InvalidInput("margins: class index " + std::to_string(cls + 1) + " out of range 1.." +
                       std::to_string(votes.cols()));
  }
  Vector<typename Derived::Scalar> out(votes.rows());
  for (Eigen::Index r = 0; r < votes.rows(); ++r) out(r) = margin(votes.row(r), cls);
  return out;
}

/// Full n x K margin table M(x, c).
template <typename Derived>
Matrix<typename Derived::Scalar> margin_table(const Eigen::MatrixBase<Derived>& votes) {
  Matrix<typename Derived::Scalar> out(votes.rows(), votes.cols());
  for (Eigen::Index r = 0; r < votes.rows(); ++r) {
    for (Eigen::Index c = 0; c < votes.cols(); ++c) out(r, c) = margin(votes.row(r), c);
  }
  return out;
}

enum class PosteriorMode { Uniform, Supervised, Oracle };

PosteriorMode parse_posterior_mode(std::string_view name);
std::string_view to_string(PosteriorMode mode);

/// Builds the posterior table used for bound evaluation.
/// Uniform gives 1/K everywhere, Supervised copies the supervised votes and
/// Oracle puts a one-hot row at each hidden label.
PosteriorMatrix posterior_source(PosteriorMode mode, const VoteMatrix& supervised_votes,
                                 const std::optional<Labels>& hidden_labels = std::nullopt);

Matrix<double> one_hot(const Labels& labels, Eigen::Index num_classes);

double accuracy(const Labels& predicted, const Labels& truth);

}  // namespace mvb

#endif  // MVB_CORE_HPP
