#include "mvb/core.hpp"

#include <iostream>
#include <mutex>

namespace mvb {

namespace {

std::mutex& handler_mutex() {
  static std::mutex m;
  return m;
}

std::function<void(std::string_view)>& handler() {
  static std::function<void(std::string_view)> h = [](std::string_view msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return h;
}

}  // namespace

void set_warning_handler(std::function<void(std::string_view)> h) {
  std::lock_guard lock(handler_mutex());
  handler() = std::move(h);
}

void warn(std::string_view message) {
  std::lock_guard lock(handler_mutex());
  if (handler()) handler()(message);
}

Matrix<double> validated_row_stochastic(const Matrix<double>& m, std::string_view what) {
  if (m.cols() < 2) {
    throw InvalidInput(std::string(what) + ": need at least 2 classes, got " + std::to_string(m.cols()));
  }
  Matrix<double> out = m;
  Eigen::Index renormalized = 0;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      const double v = out(r, c);
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        throw InvalidInput(std::string(what) + ": entry (" + std::to_string(r + 1) + "," + std::to_string(c + 1) +
                           ") = " + std::to_string(v) + " outside [0,1]");
      }
    }
    const double sum = out.row(r).sum();
    if (sum <= 0.0) {
      throw InvalidInput(std::string(what) + ": row " + std::to_string(r + 1) + " sums to zero");
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      out.row(r) /= sum;
      ++renormalized;
    }
  }
  if (renormalized > 0) {
    warn(std::string(what) + ": renormalized " + std::to_string(renormalized) + " row(s) off by more than 1e-9");
  }
  return out;
}

PosteriorMode parse_posterior_mode(std::string_view name) {
  if (name == "uniform") return PosteriorMode::Uniform;
  if (name == "supervised") return PosteriorMode::Supervised;
  if (name == "oracle") return PosteriorMode::Oracle;
  throw InvalidInput("unknown posterior mode '" + std::string(name) + "' (uniform|supervised|oracle)");
}

std::string_view to_string(PosteriorMode mode) {
  switch (mode) {
    case PosteriorMode::Uniform:
      return "uniform";
    case PosteriorMode::Supervised:
      return "supervised";
    case PosteriorMode::Oracle:
      return "oracle";
  }
  return "unknown";
}

Matrix<double> one_hot(const Labels& labels, Eigen::Index num_classes) {
  Matrix<double> out = Matrix<double>::Zero(labels.size(), num_classes);
  for (Eigen::Index r = 0; r < labels.size(); ++r) {
    if (labels(r) < 0 || labels(r) >= num_classes) {
      throw InvalidInput("label " + std::to_string(labels(r) + 1) + " out of range 1.." + std::to_string(num_classes));
    }
    out(r, labels(r)) = 1.0;
  }
  return out;
}

PosteriorMatrix posterior_source(PosteriorMode mode, const VoteMatrix& supervised_votes,
                                 const std::optional<Labels>& hidden_labels) {
  const Eigen::Index n = supervised_votes.rows();
  const Eigen::Index k = supervised_votes.cols();
  switch (mode) {
    case PosteriorMode::Uniform:
      return PosteriorMatrix::Constant(n, k, 1.0 / static_cast<double>(k));
    case PosteriorMode::Supervised:
      return supervised_votes;
    case PosteriorMode::Oracle:
      if (!hidden_labels) throw InvalidInput("oracle posteriors require hidden labels");
      if (hidden_labels->size() != n) throw InvalidInput("oracle posteriors: label count does not match vote rows");
      return one_hot(*hidden_labels, k);
  }
  throw InvalidInput("unknown posterior mode");
}

double accuracy(const Labels& predicted, const Labels& truth) {
  if (predicted.size() != truth.size()) throw InvalidInput("accuracy: size mismatch");
  if (truth.size() == 0) return 0.0;
  return static_cast<double>((predicted.array() == truth.array()).count()) / static_cast<double>(truth.size());
}

}  // namespace mvb
