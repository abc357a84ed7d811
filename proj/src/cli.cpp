#include "mvb/cli.hpp"

#include "mvb/cbound.hpp"
#include "mvb/data_io.hpp"
#include "mvb/parallel.hpp"
#include "mvb/self_learning.hpp"
#include "mvb/trans_bounds.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <ostream>
#include <sstream>

namespace mvb::cli {

namespace {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

struct RunConfig {
  std::string command;

  std::string dataset;
  std::string format = "csv";
  std::string label_column;
  bool no_header = false;

  Eigen::Index l = 0;   // 0: a tenth of the data, at least K
  Eigen::Index u = -1;  // -1: everything not labeled
  int trial = 0;
  int trials = 20;
  std::uint64_t seed = 0;
  bool stratified = false;

  int trees = 200;
  int max_depth = 0;
  int features_per_split = 0;
  unsigned jobs = 0;

  double theta_fixed = 0.7;
  int max_iterations = 10;
  double delta = 1.0 / 3.0;
  int resolution = 20;
  std::string posterior = "supervised";

  std::string theta = "0";
  double lambda = 0.0;
  double epsilon = 0.05;
  double kl = 0.0;
  std::string mislabeling = "oracle";
  double rho = 100.0;
  std::vector<double> lambdas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

  std::vector<std::string> methods{"rf", "fsla", "csla", "msla"};
  bool histories = false;

  std::string out_dir;
};

// Fields that feed a given command; the reproducibility header lists only these.
ordered_json config_json(const RunConfig& c, const Dataset* data) {
  ordered_json j;
  j["command"] = c.command;
  if (!c.dataset.empty()) {
    j["dataset"] = {{"path", c.dataset}, {"format", c.format}, {"label_column", c.label_column},
                    {"header", !c.no_header}};
    if (data) {
      j["dataset"]["name"] = data->name;
      j["dataset"]["n"] = data->features.rows();
      j["dataset"]["d"] = data->features.cols();
      j["dataset"]["K"] = data->num_classes;
    }
  }
  const bool splits = data != nullptr;
  if (splits) {
    j["split"] = {{"l", c.l}, {"u", c.u}, {"seed", c.seed}, {"stratified", c.stratified}};
    if (c.command == "experiment" || c.command == "lambda-sweep") {
      j["split"]["trials"] = c.trials;
    } else {
      j["split"]["trial"] = c.trial;
      j["split"]["trial_seed"] = trial_seed(c.seed, c.trial);
    }
    j["forest"] = {{"tree_count", c.trees},
                   {"max_depth", c.max_depth},
                   {"min_samples_split", 2},
                   {"features_per_split", c.features_per_split},
                   {"bootstrap", true}};
  }
  const std::string& cmd = c.command;
  const bool learns = cmd == "msla" || cmd == "fsla" || cmd == "csla" || cmd == "experiment" || cmd == "cbil" ||
                      cmd == "pacbayes" || cmd == "lambda-sweep";
  if (learns) {
    ordered_json p;
    const bool all = cmd == "experiment";
    if (all || cmd == "fsla") {
      p["theta_fixed"] = c.theta_fixed;
      p["max_iterations"] = c.max_iterations;
    }
    if (all || cmd == "csla") p["delta"] = c.delta;
    if (cmd != "fsla" && cmd != "csla") p["resolution"] = c.resolution;
    p["posterior"] = c.posterior;
    j["self_learning"] = std::move(p);
  }
  if (cmd == "bound") {
    j["bound"] = {{"theta", c.theta}, {"posterior", c.posterior}, {"resolution", c.resolution}};
  }
  if (cmd == "cbound") j["bound"] = {{"posterior", c.posterior}};
  if (cmd == "cbil" || cmd == "pacbayes" || cmd == "lambda-sweep") {
    ordered_json b{{"mislabeling", c.mislabeling}, {"rho", c.rho}};
    if (cmd == "lambda-sweep") {
      b["lambdas"] = c.lambdas;
    } else {
      b["lambda"] = c.lambda;
    }
    if (cmd == "pacbayes") {
      b["epsilon"] = c.epsilon;
      b["kl"] = c.kl;
    }
    j["bound"] = std::move(b);
  }
  if (cmd == "experiment") {
    j["methods"] = c.methods;
    j["histories"] = c.histories;
  }
  return j;
}

fs::path output_dir(const RunConfig& c) {
  if (!c.out_dir.empty()) return c.out_dir;
  if (const char* env = std::getenv(kOutDirVariable); env && *env) return env;
  return ".";
}

void write_file(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

ordered_json number_or_null(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

ordered_json matrix_json(const Matrix<double>& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(number_or_null(m(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

ordered_json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

ordered_json history_json(const std::vector<IterationRecord>& history) {
  ordered_json out = ordered_json::array();
  for (const IterationRecord& r : history) {
    ordered_json rec{{"iteration", r.iteration}, {"theta", vector_json(r.theta)}, {"selected", r.selected},
                     {"bound", number_or_null(r.bound)}};
    if (r.pseudo_accuracy) rec["pseudo_accuracy"] = *r.pseudo_accuracy;
    out.push_back(std::move(rec));
  }
  return out;
}

bool is_vote_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    return line.compare(first, 3, "v1,") == 0;
  }
  return false;
}

Dataset load(RunConfig& c) {
  if (c.dataset.empty()) throw InvalidInput("--dataset is required");
  LoadOptions opts;
  opts.format = parse_data_format(c.format);
  opts.label_column = c.label_column;
  opts.header = !c.no_header;
  Dataset data = load_dataset(c.dataset, opts);
  const Eigen::Index n = data.features.rows();
  if (c.l == 0) c.l = std::min<Eigen::Index>(n, std::max<Eigen::Index>(data.num_classes, n / 10));
  if (c.u < 0) c.u = n - c.l;
  return data;
}

TrialSpec spec_of(const RunConfig& c) { return TrialSpec{c.l, c.u, c.trials, c.seed, c.stratified}; }

ForestConfig forest_of(const RunConfig& c) {
  ForestConfig f;
  f.tree_count = c.trees;
  f.max_depth = c.max_depth;
  f.features_per_split = c.features_per_split;
  return f;
}

SelfLearnConfig self_learning_of(const RunConfig& c, Policy policy, int trial) {
  SelfLearnConfig s;
  s.policy = policy;
  s.theta_fixed = c.theta_fixed;
  s.max_iterations = c.max_iterations;
  s.delta = c.delta;
  s.grid_resolution = c.resolution;
  s.posterior_mode = parse_posterior_mode(c.posterior);
  s.forest = forest_of(c);
  s.seed = trial_seed(c.seed, trial);
  s.validate();
  return s;
}

ThresholdVector parse_theta(const std::string& text, Eigen::Index k) {
  std::vector<double> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InvalidInput("--theta: '" + item + "' is not a number (use auto, one value, or K comma-separated values)");
    }
  }
  if (values.size() == 1) return ThresholdVector::Constant(k, values[0]);
  if (static_cast<Eigen::Index>(values.size()) != k) {
    throw InvalidInput("--theta: expected 1 or " + std::to_string(k) + " values, got " + std::to_string(values.size()));
  }
  ThresholdVector theta = Eigen::Map<const ThresholdVector>(values.data(), k);
  if ((theta.array() < 0.0).any() || (theta.array() > 1.0).any()) throw InvalidInput("--theta: values must lie in [0, 1]");
  return theta;
}

// --- train ---------------------------------------------------------------

int run_train(RunConfig& c, std::ostream& out) {
  const Dataset data = load(c);
  const TrialSplit split = split_trial(data, spec_of(c), c.trial);
  ForestConfig fc = forest_of(c);
  fc.seed = trial_seed(c.seed, c.trial);
  const Forest forest = train_forest(split.labeled, fc, data.num_classes);
  const VoteMatrix votes = forest_votes(forest, split.unlabeled.features);

  const fs::path dir = output_dir(c);
  write_file(dir / "forest.json", forest.to_text());

  std::ostringstream table;
  table.precision(17);
  for (int k = 1; k <= data.num_classes; ++k) table << 'v' << k << ',';
  table << "label\n";
  for (Eigen::Index r = 0; r < votes.rows(); ++r) {
    for (Eigen::Index k = 0; k < votes.cols(); ++k) table << votes(r, k) << ',';
    table << (*split.unlabeled.hidden_labels)(r) + 1 << '\n';
  }
  write_file(dir / "votes.csv", table.str());

  ordered_json j;
  j["config"] = config_json(c, &data);
  const double acc = votes.rows() > 0 ? accuracy(predict_bayes(votes), *split.unlabeled.hidden_labels)
                                      : std::numeric_limits<double>::quiet_NaN();
  j["acc_u"] = number_or_null(acc);
  j["trees"] = forest.trees().size();
  j["artifacts"] = {"forest.json", "votes.csv"};
  write_file(dir / "train.json", dump(j));
  out << "train: " << forest.trees().size() << " trees on l=" << c.l << ", ACC-U " << acc << '\n';
  return kOk;
}

// --- bound ---------------------------------------------------------------

struct BoundInputs {
  VoteMatrix votes;
  PosteriorMatrix post;
  std::optional<Labels> truth;
};

BoundInputs bound_inputs(RunConfig& c, std::optional<Dataset>& data) {
  const PosteriorMode mode = parse_posterior_mode(c.posterior);
  BoundInputs in;
  if (is_vote_table(c.dataset)) {
    VoteTable t = load_vote_table(c.dataset);
    in.votes = t.votes;
    in.truth = t.labels;
    if (mode == PosteriorMode::Oracle && t.posteriors) {
      in.post = *t.posteriors;
    } else {
      if (mode == PosteriorMode::Oracle && !t.labels) {
        throw InvalidInput("--posterior oracle needs p1..pK or label columns in the vote table");
      }
      in.post = posterior_source(mode, in.votes, t.labels);
    }
    return in;
  }
  data = load(c);
  const TrialSplit split = split_trial(*data, spec_of(c), c.trial);
  ForestConfig fc = forest_of(c);
  fc.seed = trial_seed(c.seed, c.trial);
  const Forest forest = train_forest(split.labeled, fc, data->num_classes);
  in.votes = forest_votes(forest, split.unlabeled.features);
  in.truth = split.unlabeled.hidden_labels;
  in.post = posterior_source(mode, in.votes, in.truth);
  return in;
}

int run_bound(RunConfig& c, std::ostream& out) {
  if (c.dataset.empty()) throw InvalidInput("--dataset is required (feature file or v1..vK vote table)");
  std::optional<Dataset> data;
  const BoundInputs in = bound_inputs(c, data);
  if (in.votes.rows() == 0) throw InvalidInput("bound: the unlabeled set is empty");
  const ThresholdVector theta =
      c.theta == "auto" ? find_theta_star(in.post, in.votes, c.resolution) : parse_theta(c.theta, in.votes.cols());

  const double error_bound = error_rate_bound(in.post, in.votes, theta);
  ordered_json j;
  j["config"] = config_json(c, data ? &*data : nullptr);
  j["theta"] = vector_json(theta);
  j["bound_matrix"] = matrix_json(bound_matrix(in.post, in.votes, theta));
  j["error_rate_bound"] = error_bound;
  j["confusion_norm_bound"] = confusion_norm_bound(in.post, in.votes, theta);
  j["joint_error_rate"] = joint_error_rate(in.post, in.votes, theta);
  j["conditional_bayes_error"] = number_or_null(conditional_bayes_error(in.post, in.votes, theta));
  if (in.truth) {
    j["true_joint_error_rate"] =
        joint_error_rate(one_hot(*in.truth, in.votes.cols()), in.votes, theta);
  }
  write_file(output_dir(c) / "bound.json", dump(j));
  out.precision(17);
  out << "error-rate bound: " << error_bound << '\n';
  return kOk;
}

// --- self-learning -------------------------------------------------------

int run_policy(RunConfig& c, Policy policy, std::ostream& out) {
  const Dataset data = load(c);
  const TrialSplit split = split_trial(data, spec_of(c), c.trial);
  const SelfLearnConfig cfg = self_learning_of(c, policy, c.trial);
  const SelfLearnResult r = run_self_learning(split.labeled, split.unlabeled, data.num_classes, cfg);
  const double acc = split.unlabeled.features.rows() > 0
                         ? accuracy(r.unlabeled_predictions, *split.unlabeled.hidden_labels)
                         : std::numeric_limits<double>::quiet_NaN();

  const std::string name(to_string(policy));
  const fs::path dir = output_dir(c);
  ordered_json j;
  j["config"] = config_json(c, &data);
  j["acc_u"] = number_or_null(acc);
  j["history"] = history_json(r.history);
  write_file(dir / (name + ".json"), dump(j));
  std::ostringstream csv;
  write_history_csv(csv, r.history, data.num_classes);
  write_file(dir / (name + "_history.csv"), csv.str());

  std::size_t pseudo = 0;
  for (const auto& s : r.selections) pseudo += s.size();
  out << name << ": " << r.history.size() << " iterations, " << pseudo << " pseudo-labels, ACC-U " << acc << '\n';
  return kOk;
}

// --- C-bound family ------------------------------------------------------

// Unlabeled examples labeled by the final MSLA classifier, most confident
// first, truncated to the top rho percent.
struct PseudoSample {
  VoteMatrix votes;
  Labels assigned;
  Labels truth;
};

PseudoSample pseudo_sample(const Dataset& data, const RunConfig& c, int trial) {
  const TrialSplit split = split_trial(data, spec_of(c), trial);
  if (split.unlabeled.features.rows() == 0) throw InvalidInput("the unlabeled set is empty");
  const SelfLearnResult r =
      run_self_learning(split.labeled, split.unlabeled, data.num_classes, self_learning_of(c, Policy::Msla, trial));
  const VoteMatrix votes = forest_votes(r.forest, split.unlabeled.features);
  const Labels pred = predict_bayes(votes);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(votes.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return votes(a, pred(a)) > votes(b, pred(b)); });
  const auto keep = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(std::floor(c.rho / 100.0 * static_cast<double>(votes.rows()) + 1e-9)));

  PseudoSample s;
  s.votes.resize(keep, votes.cols());
  s.assigned.resize(keep);
  s.truth.resize(keep);
  for (Eigen::Index i = 0; i < keep; ++i) {
    const Eigen::Index row = order[static_cast<std::size_t>(i)];
    s.votes.row(i) = votes.row(row);
    s.assigned(i) = pred(row);
    s.truth(i) = (*split.unlabeled.hidden_labels)(row);
  }
  return s;
}

MislabelMatrix mislabeling_of(const RunConfig& c, const PseudoSample& s, Eigen::Index k) {
  if (c.mislabeling == "oracle") return estimate_mislabeling(s.truth, s.assigned, k);
  if (c.mislabeling == "identity") return MislabelMatrix::Identity(k, k);
  throw InvalidInput("--mislabeling must be oracle or identity");
}

void check_rho(const RunConfig& c) {
  if (!(c.rho > 0.0 && c.rho <= 100.0)) throw InvalidInput("--rho must lie in (0, 100]");
}

void add_reference(ordered_json& j, const PseudoSample& s, Eigen::Index k) {
  j["examples"] = s.votes.rows();
  j["pseudo_label_accuracy"] = accuracy(s.assigned, s.truth);
  try {
    j["oracle_cbound"] = cbound(one_hot(s.truth, k), s.votes);
  } catch (const InapplicableBound&) {
    j["oracle_cbound"] = nullptr;
  }
}

int run_cbound(RunConfig& c, std::ostream& out) {
  std::optional<Dataset> data;
  const BoundInputs in = bound_inputs(c, data);
  BoundReport report;
  report.bound_name = "cbound";
  int code = kOk;
  std::string detail;
  try {
    const MarginMoments m = margin_moments(in.post, in.votes);
    report.mu1 = m.mu1;
    report.mu2 = m.mu2;
    report.value = cbound(in.post, in.votes);
  } catch (const InapplicableBound& e) {
    report.applicable = false;
    report.value = 1.0;
    detail = e.what();
    code = kInapplicable;
  }
  ordered_json j;
  j["config"] = config_json(c, data ? &*data : nullptr);
  j["report"] = ordered_json::parse(to_json(report));
  if (in.truth) j["true_risk"] = 1.0 - accuracy(predict_bayes(in.votes), *in.truth);
  write_file(output_dir(c) / "cbound.json", dump(j));
  if (code != kOk) throw InapplicableBound(detail);
  out << "C-bound: " << report.value << " (mu1 " << report.mu1 << ", mu2 " << report.mu2 << ")\n";
  return kOk;
}

int run_cbil_family(RunConfig& c, bool pac, std::ostream& out) {
  check_rho(c);
  const Dataset data = load(c);
  const PseudoSample s = pseudo_sample(data, c, c.trial);
  const Eigen::Index k = data.num_classes;
  const MislabelMatrix p = mislabeling_of(c, s, k);
  const PosteriorMatrix imperfect = one_hot(s.assigned, k);

  BoundReport report;
  report.bound_name = pac ? "pacbayes_cbound" : "cbil";
  report.lambda = c.lambda;
  report.epsilon = pac ? c.epsilon : 0.0;
  ordered_json extra;
  std::string detail;
  try {
    if (pac) {
      Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
      for (Eigen::Index i = 0; i < s.truth.size(); ++i) counts(s.truth(i)) += 1.0;
      const PacBayesResult r = pac_bayes_cbound(s.votes, imperfect, p, counts, c.kl, c.epsilon, c.lambda);
      report.value = r.value;
      report.mu1 = r.mu1;
      report.mu2 = r.mu2;
      report.psi = r.psi;
      extra = {{"b1", r.b1}, {"b2", r.b2}, {"b3", r.b3}, {"vacuous", r.vacuous}};
    } else {
      const CbilResult r = cbil(s.votes, imperfect, p, c.lambda);
      report.value = r.value;
      report.mu1 = r.mu1;
      report.mu2 = r.mu2;
      report.psi = r.psi;
      extra = {{"raw", r.raw}};
    }
  } catch (const InapplicableBound& e) {
    report.applicable = false;
    report.value = 1.0;
    detail = e.what();
  }

  ordered_json j;
  j["config"] = config_json(c, &data);
  j["report"] = ordered_json::parse(to_json(report));
  if (!extra.is_null()) j["details"] = std::move(extra);
  j["mislabeling_matrix"] = matrix_json(p);
  add_reference(j, s, k);
  j["true_risk"] = 1.0 - accuracy(s.assigned, s.truth);
  write_file(output_dir(c) / (std::string(pac ? "pacbayes" : "cbil") + ".json"), dump(j));
  if (!report.applicable) throw InapplicableBound(detail);
  out << report.bound_name << ": " << report.value << " on " << s.votes.rows() << " pseudo-labeled examples (lambda "
      << c.lambda << ")\n";
  return kOk;
}

int run_lambda_sweep(RunConfig& c, std::ostream& out) {
  check_rho(c);
  if (c.lambdas.empty()) throw InvalidInput("--lambdas needs at least one value");
  for (double lam : c.lambdas) {
    if (!(lam >= 0.0)) throw InvalidInput("--lambdas values must be >= 0");
  }
  const Dataset data = load(c);
  spec_of(c).validate(data);
  const Eigen::Index k = data.num_classes;

  std::ostringstream csv;
  csv.precision(17);
  csv << "trial,lambda,value,applicable\n";
  ordered_json trials = ordered_json::array();
  int applicable = 0;
  int total = 0;
  for (int t = 0; t < c.trials; ++t) {
    const PseudoSample s = pseudo_sample(data, c, t);
    const MislabelMatrix p = mislabeling_of(c, s, k);
    const PosteriorMatrix imperfect = one_hot(s.assigned, k);
    ordered_json values = ordered_json::array();
    for (double lam : c.lambdas) {
      ++total;
      double value = 1.0;
      bool ok = true;
      try {
        value = cbil(s.votes, imperfect, p, lam).value;
        ++applicable;
      } catch (const InapplicableBound&) {
        ok = false;
      }
      csv << t << ',' << lam << ',' << value << ',' << (ok ? "true" : "false") << '\n';
      values.push_back(ok ? ordered_json(value) : ordered_json(nullptr));
    }
    ordered_json row{{"trial", t}, {"cbil", std::move(values)}};
    add_reference(row, s, k);
    trials.push_back(std::move(row));
  }
  ordered_json j;
  j["config"] = config_json(c, &data);
  j["lambdas"] = c.lambdas;
  j["trials"] = std::move(trials);
  const fs::path dir = output_dir(c);
  write_file(dir / "lambda_sweep.json", dump(j));
  write_file(dir / "lambda_sweep.csv", csv.str());
  out << "lambda-sweep: " << c.trials << " trials x " << c.lambdas.size() << " lambdas, " << applicable << '/' << total
      << " applicable\n";
  return kOk;
}

// --- experiment ----------------------------------------------------------

int run_experiment_command(RunConfig& c, std::ostream& out) {
  const Dataset data = load(c);
  ExperimentConfig cfg;
  cfg.methods.clear();
  for (const std::string& m : c.methods) cfg.methods.push_back(parse_method(m));
  cfg.self_learning = self_learning_of(c, Policy::Msla, 0);
  cfg.record_histories = c.histories;
  const ExperimentReport report = run_experiment(data, spec_of(c), cfg);

  ordered_json j;
  j["config"] = config_json(c, &data);
  const ordered_json body = ordered_json::parse(report_json(report, cfg));
  j["methods"] = body["methods"];
  j["notes"] = body["notes"];
  const fs::path dir = output_dir(c);
  write_file(dir / "experiment.json", dump(j));
  std::ostringstream csv;
  write_report_csv(csv, report);
  write_file(dir / "experiment.csv", csv.str());

  out << "experiment: " << data.name << " l=" << c.l << " u=" << c.u << " trials=" << c.trials;
  for (const MethodSummary& s : report.methods) out << ' ' << to_string(s.method) << '=' << s.mean;
  out << '\n';
  return kOk;
}

// --- option wiring -------------------------------------------------------

void dataset_options(CLI::App* app, RunConfig& c) {
  app->add_option("--dataset", c.dataset, "Input file");
  app->add_option("--format", c.format, "csv, tsv or sparse")->check(CLI::IsMember({"csv", "tsv", "sparse", "libsvm"}));
  app->add_option("--label-column", c.label_column, "Label column name or 1-based index (default: last)");
  app->add_flag("--no-header", c.no_header, "Delimited file has no header row");
}

void split_options(CLI::App* app, RunConfig& c, bool many_trials) {
  app->add_option("--l", c.l, "Labeled examples (default: n/10, at least K)")->check(CLI::NonNegativeNumber);
  app->add_option("--u", c.u, "Unlabeled examples (default: the rest)")->check(CLI::NonNegativeNumber);
  if (many_trials) {
    app->add_option("--trials", c.trials, "Number of random splits")->check(CLI::PositiveNumber);
  } else {
    app->add_option("--trial", c.trial, "Split index")->check(CLI::NonNegativeNumber);
  }
  app->add_option("--seed", c.seed, "Base seed");
  app->add_flag("--stratified", c.stratified, "Stratify the labeled draw by class");
}

void forest_options(CLI::App* app, RunConfig& c) {
  app->add_option("--trees", c.trees, "Trees per forest")->check(CLI::PositiveNumber);
  app->add_option("--max-depth", c.max_depth, "Depth cap (0: unlimited)")->check(CLI::NonNegativeNumber);
  app->add_option("--features-per-split", c.features_per_split, "Features tried per split (0: ceil(sqrt(d)))")
      ->check(CLI::NonNegativeNumber);
}

void policy_options(CLI::App* app, RunConfig& c, bool fsla, bool csla, bool msla) {
  if (fsla) {
    app->add_option("--theta-fixed", c.theta_fixed, "FSLA threshold")->check(CLI::Range(0.0, 1.0));
    app->add_option("--max-iterations", c.max_iterations, "FSLA iteration cap")->check(CLI::PositiveNumber);
  }
  if (csla) app->add_option("--delta", c.delta, "CSLA percentile step")->check(CLI::Range(0.0, 1.0));
  if (msla) app->add_option("--resolution", c.resolution, "Threshold candidates per class")->check(CLI::PositiveNumber);
  app->add_option("--posterior", c.posterior, "uniform, supervised or oracle")
      ->check(CLI::IsMember({"uniform", "supervised", "oracle"}));
}

void imperfect_label_options(CLI::App* app, RunConfig& c, bool sweep) {
  app->add_option("--mislabeling", c.mislabeling, "oracle (from hidden labels) or identity")
      ->check(CLI::IsMember({"oracle", "identity"}));
  app->add_option("--rho", c.rho, "Percent of most confident pseudo-labels kept");
  if (sweep) {
    app->add_option("--lambdas", c.lambdas, "Relaxation values")->delimiter(',');
  } else {
    app->add_option("--lambda", c.lambda, "Relaxation")->check(CLI::NonNegativeNumber);
  }
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig c;
  CLI::App app{"Transductive majority-vote bounds, self-learning and C-bounds", "mvb"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--jobs", c.jobs, "Worker thread cap (0: hardware)")->check(CLI::NonNegativeNumber);
  app.add_option("--out", c.out_dir, std::string("Output directory (default: $") + kOutDirVariable + " or .)");

  std::vector<std::pair<CLI::App*, std::function<int()>>> commands;
  auto command = [&](const std::string& name, const std::string& help, std::function<int()> body) {
    CLI::App* sub = app.add_subcommand(name, help);
    commands.emplace_back(sub, std::move(body));
    return sub;
  };

  CLI::App* train = command("train", "Train a forest on one split; write forest.json, votes.csv, train.json",
                            [&] { return run_train(c, out); });
  dataset_options(train, c);
  split_options(train, c, false);
  forest_options(train, c);

  CLI::App* bound = command("bound", "Transductive bound matrix and error-rate bound (bound.json)",
                            [&] { return run_bound(c, out); });
  dataset_options(bound, c);
  split_options(bound, c, false);
  forest_options(bound, c);
  bound->add_option("--theta", c.theta, "auto, one value, or K comma-separated values");
  bound->add_option("--resolution", c.resolution, "Candidates per class for --theta auto")->check(CLI::PositiveNumber);
  bound->add_option("--posterior", c.posterior, "uniform, supervised or oracle")
      ->check(CLI::IsMember({"uniform", "supervised", "oracle"}));

  for (const auto& [name, policy] : {std::pair{"msla", Policy::Msla}, {"fsla", Policy::Fsla}, {"csla", Policy::Csla}}) {
    const Policy p = policy;
    CLI::App* sub = command(name, std::string("Self-learning with the ") + name + " threshold policy",
                            [&c, &out, p] { return run_policy(c, p, out); });
    dataset_options(sub, c);
    split_options(sub, c, false);
    forest_options(sub, c);
    policy_options(sub, c, p == Policy::Fsla, p == Policy::Csla, p == Policy::Msla);
  }

  CLI::App* cb = command("cbound", "C-bound of the supervised forest on the unlabeled set (cbound.json)",
                         [&] { return run_cbound(c, out); });
  dataset_options(cb, c);
  split_options(cb, c, false);
  forest_options(cb, c);
  cb->add_option("--posterior", c.posterior, "uniform, supervised or oracle")
      ->check(CLI::IsMember({"uniform", "supervised", "oracle"}));

  CLI::App* cbil_cmd = command("cbil", "C-bound with imperfect (MSLA pseudo) labels (cbil.json)",
                               [&] { return run_cbil_family(c, false, out); });
  CLI::App* pac = command("pacbayes", "PAC-Bayes penalized C-bound with imperfect labels (pacbayes.json)",
                          [&] { return run_cbil_family(c, true, out); });
  CLI::App* sweep = command("lambda-sweep", "CBIL over a grid of relaxation values per trial (lambda_sweep.*)",
                            [&] { return run_lambda_sweep(c, out); });
  for (CLI::App* sub : {cbil_cmd, pac, sweep}) {
    dataset_options(sub, c);
    split_options(sub, c, sub == sweep);
    forest_options(sub, c);
    policy_options(sub, c, false, false, true);
    imperfect_label_options(sub, c, sub == sweep);
  }
  pac->add_option("--epsilon", c.epsilon, "Confidence parameter")->check(CLI::Range(0.0, 1.0));
  pac->add_option("--kl", c.kl, "KL(Q||P) of the voting weights (0 for uniform weights)")
      ->check(CLI::NonNegativeNumber);

  CLI::App* exp = command("experiment", "Repeated random splits comparing methods (experiment.json, .csv)",
                          [&] { return run_experiment_command(c, out); });
  dataset_options(exp, c);
  split_options(exp, c, true);
  forest_options(exp, c);
  policy_options(exp, c, true, true, true);
  exp->add_option("--methods", c.methods, "Comma-separated subset of rf,fsla,csla,msla")->delimiter(',');
  exp->add_flag("--histories", c.histories, "Record per-iteration traces");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
      return kOk;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  set_warning_handler([&err](std::string_view msg) { err << "warning: " << msg << '\n'; });
  struct HandlerReset {
    ~HandlerReset() { set_warning_handler(nullptr); }
  } reset_handler;
  max_jobs().store(c.jobs);
  try {
    for (auto& [sub, body] : commands) {
      if (sub->parsed()) {
        c.command = sub->get_name();
        if (!(c.epsilon > 0.0 && c.epsilon <= 1.0)) throw InvalidInput("--epsilon must lie in (0, 1]");
        return body();
      }
    }
  } catch (const InapplicableBound& e) {
    err << "inapplicable: " << e.what() << '\n';
    return kInapplicable;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const InvalidInput& e) {
    err << "invalid input: " << e.what() << '\n';
    return kUsage;
  }
  err << app.help();
  return kUsage;
}

}  // namespace mvb::cli
