#ifndef MVB_DATA_IO_HPP
#define MVB_DATA_IO_HPP

#include "mvb/core.hpp"
#include "mvb/forest.hpp"
#include "mvb/self_learning.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mvb {

struct Dataset {
  std::string name;
  Matrix<double> features;
  Labels labels;  ///< 0-based
  int num_classes = 0;
  std::vector<std::string> class_names;  ///< original label text, in remapped order
};

enum class DataFormat { Csv, Tsv, Sparse };

DataFormat parse_data_format(std::string_view name);

struct LoadOptions {
  DataFormat format = DataFormat::Csv;
  /// Delimited formats: header name or 1-based column index. Empty means the
  /// last column.
  std::string label_column;
  bool header = true;
};

/// Reads a delimited or sparse (label idx:val ...) file. Labels are remapped
/// to 0..K-1 in sorted order of the originals (numeric order when every
/// label is a number). Malformed rows raise IoError naming the line.
Dataset load_dataset(const std::string& path, const LoadOptions& options);
Dataset parse_dataset(std::istream& in, const LoadOptions& options, const std::string& name = "stream");

/// A vote table: columns v1..vK, optionally p1..pK (posteriors) and label
/// (1-based). Used to evaluate bounds on votes produced elsewhere.
struct VoteTable {
  VoteMatrix votes;
  std::optional<PosteriorMatrix> posteriors;
  std::optional<Labels> labels;  ///< 0-based
};
VoteTable load_vote_table(const std::string& path);
VoteTable parse_vote_table(std::istream& in, const std::string& name = "stream");

/// Gaussian blobs with centres drawn from N(0, separation^2 I) and unit
/// within-class noise; labels cycle through the classes.
Dataset make_gaussian_blobs(Eigen::Index n, Eigen::Index d, int k, double separation, std::uint64_t seed);

struct TrialSpec {
  Eigen::Index l = 0;
  Eigen::Index u = 0;
  int trials = 20;
  std::uint64_t seed = 0;
  bool stratified = false;

  void validate(const Dataset& data) const;
};

struct TrialSplit {
  LabeledSet labeled;
  UnlabeledSet unlabeled;  ///< carries hidden labels
  std::vector<Eigen::Index> labeled_rows;
  std::vector<Eigen::Index> unlabeled_rows;
};

/// Deterministic in (spec.seed, trial). Uniform draws are repeated, up to
/// 100 attempts, until the labeled part holds at least two classes.
TrialSplit split_trial(const Dataset& data, const TrialSpec& spec, int trial);

struct MannWhitneyResult {
  double u = 0.0;  ///< U statistic of the first sample
  double p_value = 1.0;
  bool exact = false;
};

/// Two-sided rank-sum test with midranks for ties. Exact enumeration when
/// both samples have at most 8 values, otherwise a tie-corrected normal
/// approximation with continuity correction.
MannWhitneyResult mann_whitney(const std::vector<double>& a, const std::vector<double>& b);

enum class Method { Supervised, Fsla, Csla, Msla };
Method parse_method(std::string_view name);
std::string_view to_string(Method method);

struct ExperimentConfig {
  std::vector<Method> methods{Method::Supervised, Method::Fsla, Method::Csla, Method::Msla};
  SelfLearnConfig self_learning;  ///< policy is set per method; seed per trial
  bool record_histories = false;
};

struct MethodSummary {
  Method method = Method::Supervised;
  std::vector<double> accuracy;  ///< ACC-U per trial
  std::vector<double> seconds;   ///< wall time per trial (not serialized)
  std::vector<std::vector<IterationRecord>> histories;
  double mean = 0.0;
  double std_dev = 0.0;
  double p_vs_best = 1.0;
  bool significant = false;  ///< significantly worse than the best method at p < 0.01
};

struct ExperimentReport {
  std::string dataset;
  TrialSpec spec;
  std::vector<MethodSummary> methods;
  std::vector<std::string> notes;
};

/// Seed shared by every method in one trial.
std::uint64_t trial_seed(std::uint64_t base, int trial);

ExperimentReport run_experiment(const Dataset& data, const TrialSpec& spec, const ExperimentConfig& config);

/// CSV columns method, mean, std, p_vs_best, significant.
void write_report_csv(std::ostream& out, const ExperimentReport& report);

/// Per-trial arrays, summary statistics and, for known datasets, the
/// published reference values.
std::string report_json(const ExperimentReport& report, const ExperimentConfig& config);

}  // namespace mvb

#endif  // MVB_DATA_IO_HPP
