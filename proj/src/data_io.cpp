#include "mvb/data_io.hpp"

#include "mvb/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

namespace mvb {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(const std::string& line, char delimiter) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, delimiter)) out.push_back(trim(field));
  if (!line.empty() && line.back() == delimiter) out.emplace_back();
  return out;
}

std::optional<double> to_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

[[noreturn]] void malformed(const std::string& name, std::size_t line, const std::string& what) {
  throw IoError(name + ":" + std::to_string(line) + ": " + what);
}

bool skippable(const std::string& line) {
  const std::string t = trim(line);
  return t.empty() || t.front() == '#';
}

// Maps raw label strings to 0..K-1 in sorted order (numeric when possible).
void remap_labels(Dataset& data, const std::vector<std::string>& raw) {
  std::vector<std::string> unique(raw.begin(), raw.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  const bool numeric = std::all_of(unique.begin(), unique.end(), [](const std::string& s) { return to_number(s); });
  if (numeric) {
    std::stable_sort(unique.begin(), unique.end(),
                     [](const std::string& a, const std::string& b) { return *to_number(a) < *to_number(b); });
  }
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < unique.size(); ++i) index[unique[i]] = static_cast<int>(i);
  data.labels.resize(static_cast<Eigen::Index>(raw.size()));
  for (std::size_t r = 0; r < raw.size(); ++r) data.labels(static_cast<Eigen::Index>(r)) = index.at(raw[r]);
  data.num_classes = static_cast<int>(unique.size());
  data.class_names = std::move(unique);
}

Dataset parse_delimited(std::istream& in, const LoadOptions& options, const std::string& name) {
  const char delimiter = options.format == DataFormat::Tsv ? '\t' : ',';
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  std::size_t columns = 0;
  std::optional<std::size_t> label_col;

  auto resolve_label = [&](std::size_t width) {
    if (options.label_column.empty()) return width - 1;
    if (!header.empty()) {
      const auto it = std::find(header.begin(), header.end(), options.label_column);
      if (it != header.end()) return static_cast<std::size_t>(it - header.begin());
    }
    const auto idx = to_number(options.label_column);
    if (!idx || *idx < 1 || *idx > static_cast<double>(width) || std::floor(*idx) != *idx) {
      throw IoError(name + ": missing label column '" + options.label_column + "'");
    }
    return static_cast<std::size_t>(*idx) - 1;
  };

  if (options.header) {
    while (std::getline(in, line)) {
      ++line_no;
      if (skippable(line)) continue;
      header = split(line, delimiter);
      columns = header.size();
      label_col = resolve_label(columns);
      break;
    }
  }

  std::vector<std::vector<double>> rows;
  std::vector<std::string> raw_labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (skippable(line)) continue;
    const std::vector<std::string> fields = split(line, delimiter);
    if (columns == 0) {
      columns = fields.size();
      label_col = resolve_label(columns);
    }
    if (fields.size() != columns) {
      malformed(name, line_no, "expected " + std::to_string(columns) + " fields, found " + std::to_string(fields.size()));
    }
    if (columns < 2) malformed(name, line_no, "need at least one feature and a label");
    std::vector<double> row;
    row.reserve(columns - 1);
    for (std::size_t c = 0; c < columns; ++c) {
      if (c == *label_col) continue;
      const auto v = to_number(fields[c]);
      if (!v || !std::isfinite(*v)) malformed(name, line_no, "non-numeric feature '" + fields[c] + "'");
      row.push_back(*v);
    }
    if (fields[*label_col].empty()) malformed(name, line_no, "empty label");
    raw_labels.push_back(fields[*label_col]);
    rows.push_back(std::move(row));
  }

  Dataset data;
  data.name = name;
  const auto d = static_cast<Eigen::Index>(columns > 0 ? columns - 1 : 0);
  data.features.resize(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (Eigen::Index c = 0; c < d; ++c) data.features(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
  }
  remap_labels(data, raw_labels);
  return data;
}

Dataset parse_sparse(std::istream& in, const std::string& name) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::vector<std::pair<Eigen::Index, double>>> rows;
  std::vector<std::string> raw_labels;
  Eigen::Index d = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (skippable(line)) continue;
    std::istringstream tokens(line);
    std::string label;
    tokens >> label;
    if (!to_number(label)) malformed(name, line_no, "label '" + label + "' is not numeric");
    std::vector<std::pair<Eigen::Index, double>> entries;
    std::string token;
    while (tokens >> token) {
      const auto colon = token.find(':');
      if (colon == std::string::npos) malformed(name, line_no, "expected index:value, found '" + token + "'");
      const auto idx = to_number(token.substr(0, colon));
      const auto val = to_number(token.substr(colon + 1));
      if (!idx || *idx < 1 || std::floor(*idx) != *idx) malformed(name, line_no, "bad feature index in '" + token + "'");
      if (!val || !std::isfinite(*val)) malformed(name, line_no, "bad feature value in '" + token + "'");
      const auto col = static_cast<Eigen::Index>(*idx);
      d = std::max(d, col);
      entries.emplace_back(col - 1, *val);
    }
    raw_labels.push_back(label);
    rows.push_back(std::move(entries));
  }
  Dataset data;
  data.name = name;
  data.features = Matrix<double>::Zero(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (const auto& [col, val] : rows[r]) data.features(static_cast<Eigen::Index>(r), col) = val;
  }
  remap_labels(data, raw_labels);
  return data;
}

std::string stem(const std::string& path) {
  const auto slash = path.find_last_of("/\\");
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  const auto dot = base.find_last_of('.');
  return dot == std::string::npos || dot == 0 ? base : base.substr(0, dot);
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

struct Reference {
  double mean;
  double std_dev;
};

// Published ACC-U anchors (mean, std over 20 trials) keyed by dataset and method.
std::optional<Reference> published(const std::string& dataset, Method method) {
  std::string key = dataset;
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
  if (key != "pendigits") return std::nullopt;
  switch (method) {
    case Method::Supervised:
      return Reference{0.863, 0.022};
    case Method::Fsla:
      return Reference{0.839, 0.036};
    case Method::Csla:
      return Reference{0.871, 0.029};
    case Method::Msla:
      return Reference{0.884, 0.022};
  }
  return std::nullopt;
}

}  // namespace

DataFormat parse_data_format(std::string_view name) {
  if (name == "csv") return DataFormat::Csv;
  if (name == "tsv") return DataFormat::Tsv;
  if (name == "sparse" || name == "libsvm") return DataFormat::Sparse;
  throw InvalidInput("unknown data format '" + std::string(name) + "' (csv|tsv|sparse)");
}

Dataset parse_dataset(std::istream& in, const LoadOptions& options, const std::string& name) {
  Dataset data = options.format == DataFormat::Sparse ? parse_sparse(in, name) : parse_delimited(in, options, name);
  if (data.features.rows() == 0) throw IoError(name + ": no data rows");
  return data;
}

Dataset load_dataset(const std::string& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  Dataset data = parse_dataset(in, options, path);
  data.name = stem(path);
  return data;
}

VoteTable parse_vote_table(std::istream& in, const std::string& name) {
  LoadOptions opts;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (skippable(line)) continue;
    header = split(line, ',');
    break;
  }
  if (header.empty()) throw IoError(name + ": empty vote table");
  std::vector<int> vote_cols, post_cols;
  std::optional<std::size_t> label_col;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (h == "label") {
      label_col = c;
    } else if (h.size() > 1 && (h[0] == 'v' || h[0] == 'p') && to_number(h.substr(1))) {
      const auto idx = static_cast<std::size_t>(*to_number(h.substr(1)));
      auto& cols = h[0] == 'v' ? vote_cols : post_cols;
      if (cols.size() < idx) cols.resize(idx, -1);
      cols[idx - 1] = static_cast<int>(c);
    } else {
      throw IoError(name + ":" + std::to_string(line_no) + ": unknown column '" + h + "' (expected v1..vK, p1..pK, label)");
    }
  }
  const auto k = static_cast<Eigen::Index>(vote_cols.size());
  if (k < 2 || std::count(vote_cols.begin(), vote_cols.end(), -1) > 0) {
    throw IoError(name + ": vote columns must be v1..vK with K >= 2");
  }
  if (!post_cols.empty() &&
      (static_cast<Eigen::Index>(post_cols.size()) != k || std::count(post_cols.begin(), post_cols.end(), -1) > 0)) {
    throw IoError(name + ": posterior columns must be p1..pK matching the votes");
  }

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (skippable(line)) continue;
    const auto fields = split(line, ',');
    if (fields.size() != header.size()) {
      malformed(name, line_no, "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()));
    }
    std::vector<double> row(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const auto v = to_number(fields[c]);
      if (!v || !std::isfinite(*v)) malformed(name, line_no, "non-numeric value '" + fields[c] + "'");
      row[c] = *v;
    }
    if (label_col) {
      const double y = row[*label_col];
      if (y < 1 || y > static_cast<double>(k) || std::floor(y) != y) malformed(name, line_no, "label out of range 1..K");
      labels.push_back(static_cast<int>(y) - 1);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(name + ": no data rows");
  const auto n = static_cast<Eigen::Index>(rows.size());
  VoteTable table;
  table.votes.resize(n, k);
  if (!post_cols.empty()) table.posteriors = PosteriorMatrix(n, k);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < k; ++c) {
      table.votes(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(vote_cols[static_cast<std::size_t>(c)])];
      if (table.posteriors) {
        (*table.posteriors)(r, c) =
            rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(post_cols[static_cast<std::size_t>(c)])];
      }
    }
  }
  try {
    table.votes = validated_row_stochastic(table.votes, "votes");
    if (table.posteriors) table.posteriors = validated_row_stochastic(*table.posteriors, "posteriors");
  } catch (const InvalidInput& e) {
    throw IoError(name + ": " + e.what());
  }
  if (label_col) table.labels = Eigen::Map<const Labels>(labels.data(), n);
  return table;
}

VoteTable load_vote_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return parse_vote_table(in, path);
}

Dataset make_gaussian_blobs(Eigen::Index n, Eigen::Index d, int k, double separation, std::uint64_t seed) {
  if (n < 1 || d < 1 || k < 2) throw InvalidInput("make_gaussian_blobs: need n >= 1, d >= 1, K >= 2");
  Rng rng(seed);
  Matrix<double> centres(k, d);
  for (Eigen::Index c = 0; c < k; ++c) {
    for (Eigen::Index f = 0; f < d; ++f) centres(c, f) = separation * rng.normal();
  }
  Dataset data;
  data.name = "blobs";
  data.num_classes = k;
  data.features.resize(n, d);
  data.labels.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto c = static_cast<int>(r % k);
    data.labels(r) = c;
    for (Eigen::Index f = 0; f < d; ++f) data.features(r, f) = centres(c, f) + rng.normal();
  }
  for (int c = 1; c <= k; ++c) data.class_names.push_back(std::to_string(c));
  return data;
}

void TrialSpec::validate(const Dataset& data) const {
  if (l < 1) throw InvalidInput("trial spec: l must be >= 1");
  if (u < 0) throw InvalidInput("trial spec: u must be >= 0");
  if (l + u > data.features.rows()) {
    throw InvalidInput("trial spec: l + u = " + std::to_string(l + u) + " exceeds n = " +
                       std::to_string(data.features.rows()));
  }
  if (l < data.num_classes) {
    throw InvalidInput("trial spec: l = " + std::to_string(l) + " is smaller than K = " +
                       std::to_string(data.num_classes));
  }
  if (trials < 1) throw InvalidInput("trial spec: need at least one trial");
}

TrialSplit split_trial(const Dataset& data, const TrialSpec& spec, int trial) {
  spec.validate(data);
  const Eigen::Index n = data.features.rows();
  Rng rng(trial_seed(spec.seed, trial));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::vector<Eigen::Index> labeled;

  for (int attempt = 0; attempt < 100; ++attempt) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    rng.shuffle(order);
    labeled.clear();
    if (spec.stratified) {
      // Proportional allocation with at least one example per class, then
      // the first rows of each class in the shuffled order.
      std::vector<std::vector<Eigen::Index>> by_class(static_cast<std::size_t>(data.num_classes));
      for (Eigen::Index r : order) by_class[static_cast<std::size_t>(data.labels(r))].push_back(r);
      std::vector<Eigen::Index> quota(by_class.size(), 0);
      Eigen::Index assigned = 0;
      for (std::size_t c = 0; c < by_class.size(); ++c) {
        if (by_class[c].empty()) continue;
        quota[c] = std::max<Eigen::Index>(1, spec.l * static_cast<Eigen::Index>(by_class[c].size()) / n);
        assigned += quota[c];
      }
      for (std::size_t c = 0; assigned < spec.l; c = (c + 1) % by_class.size()) {
        if (quota[c] < static_cast<Eigen::Index>(by_class[c].size())) {
          ++quota[c];
          ++assigned;
        }
      }
      for (std::size_t c = 0; assigned > spec.l; c = (c + 1) % by_class.size()) {
        if (quota[c] > 1) {
          --quota[c];
          --assigned;
        }
      }
      std::vector<bool> used(static_cast<std::size_t>(n), false);
      for (std::size_t c = 0; c < by_class.size(); ++c) {
        for (Eigen::Index q = 0; q < quota[c]; ++q) {
          labeled.push_back(by_class[c][static_cast<std::size_t>(q)]);
          used[static_cast<std::size_t>(by_class[c][static_cast<std::size_t>(q)])] = true;
        }
      }
      std::vector<Eigen::Index> rest;
      for (Eigen::Index r : order) {
        if (!used[static_cast<std::size_t>(r)]) rest.push_back(r);
      }
      std::sort(labeled.begin(), labeled.end(), [&](Eigen::Index a, Eigen::Index b) {
        return std::find(order.begin(), order.end(), a) < std::find(order.begin(), order.end(), b);
      });
      order = labeled;
      order.insert(order.end(), rest.begin(), rest.end());
    } else {
      labeled.assign(order.begin(), order.begin() + spec.l);
    }
    std::vector<bool> seen(static_cast<std::size_t>(data.num_classes), false);
    for (Eigen::Index r : labeled) seen[static_cast<std::size_t>(data.labels(r))] = true;
    if (std::count(seen.begin(), seen.end(), true) >= 2) {
      TrialSplit split;
      split.labeled_rows = labeled;
      split.unlabeled_rows.assign(order.begin() + spec.l, order.begin() + spec.l + spec.u);
      split.labeled.features.resize(spec.l, data.features.cols());
      split.labeled.labels.resize(spec.l);
      for (Eigen::Index i = 0; i < spec.l; ++i) {
        split.labeled.features.row(i) = data.features.row(split.labeled_rows[static_cast<std::size_t>(i)]);
        split.labeled.labels(i) = data.labels(split.labeled_rows[static_cast<std::size_t>(i)]);
      }
      split.unlabeled.features.resize(spec.u, data.features.cols());
      Labels hidden(spec.u);
      for (Eigen::Index i = 0; i < spec.u; ++i) {
        split.unlabeled.features.row(i) = data.features.row(split.unlabeled_rows[static_cast<std::size_t>(i)]);
        hidden(i) = data.labels(split.unlabeled_rows[static_cast<std::size_t>(i)]);
      }
      split.unlabeled.hidden_labels = hidden;
      return split;
    }
  }
  throw InvalidInput("split_trial: 100 draws never produced a labeled set with two classes");
}

MannWhitneyResult mann_whitney(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw InvalidInput("mann_whitney: both samples must be nonempty");
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  const std::size_t n = na + nb;

  // Midranks of the pooled sample.
  std::vector<std::pair<double, std::size_t>> pooled;
  pooled.reserve(n);
  for (std::size_t i = 0; i < na; ++i) pooled.emplace_back(a[i], i);
  for (std::size_t i = 0; i < nb; ++i) pooled.emplace_back(b[i], na + i);
  std::sort(pooled.begin(), pooled.end());
  std::vector<double> rank(n);
  double tie_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && pooled[j + 1].first == pooled[i].first) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[pooled[t].second] = mid;
    const auto tied = static_cast<double>(j - i + 1);
    tie_sum += tied * tied * tied - tied;
    i = j + 1;
  }

  const double offset = static_cast<double>(na * (na + 1)) / 2.0;
  double rank_a = 0.0;
  for (std::size_t i = 0; i < na; ++i) rank_a += rank[i];
  MannWhitneyResult out;
  out.u = rank_a - offset;
  const double mean = static_cast<double>(na * nb) / 2.0;
  const double observed = std::abs(out.u - mean);

  if (na <= 8 && nb <= 8) {
    // Every way of assigning na of the pooled midranks to the first sample.
    out.exact = true;
    std::uint64_t total = 0;
    std::uint64_t extreme = 0;
    const std::uint32_t full = 1u << n;
    for (std::uint32_t mask = 0; mask < full; ++mask) {
      if (static_cast<std::size_t>(std::popcount(mask)) != na) continue;
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (mask & (1u << i)) s += rank[i];
      }
      ++total;
      if (std::abs(s - offset - mean) >= observed - 1e-9) ++extreme;
    }
    out.p_value = std::min(1.0, static_cast<double>(extreme) / static_cast<double>(total));
    return out;
  }

  const double dn = static_cast<double>(n);
  const double variance =
      static_cast<double>(na * nb) / 12.0 * ((dn + 1.0) - tie_sum / (dn * (dn - 1.0)));
  if (!(variance > 0.0)) {
    out.p_value = 1.0;
    return out;
  }
  const double z = std::max(0.0, observed - 0.5) / std::sqrt(variance);
  out.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return out;
}

Method parse_method(std::string_view name) {
  if (name == "rf" || name == "supervised") return Method::Supervised;
  if (name == "fsla") return Method::Fsla;
  if (name == "csla") return Method::Csla;
  if (name == "msla") return Method::Msla;
  throw InvalidInput("unknown method '" + std::string(name) + "' (rf|fsla|csla|msla)");
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::Supervised:
      return "rf";
    case Method::Fsla:
      return "fsla";
    case Method::Csla:
      return "csla";
    case Method::Msla:
      return "msla";
  }
  return "unknown";
}

std::uint64_t trial_seed(std::uint64_t base, int trial) {
  return splitmix64(base ^ (0x51ED2701ULL * static_cast<std::uint64_t>(trial + 1)));
}

ExperimentReport run_experiment(const Dataset& data, const TrialSpec& spec, const ExperimentConfig& config) {
  spec.validate(data);
  if (config.methods.empty()) throw InvalidInput("run_experiment: no methods requested");
  ExperimentReport report;
  report.dataset = data.name;
  report.spec = spec;
  for (Method m : config.methods) {
    MethodSummary s;
    s.method = m;
    report.methods.push_back(std::move(s));
  }
  if (spec.u == 0) {
    report.notes.push_back("degenerate spec: u = 0, ACC-U is undefined");
    for (auto& s : report.methods) {
      s.mean = std::numeric_limits<double>::quiet_NaN();
      s.std_dev = std::numeric_limits<double>::quiet_NaN();
    }
    return report;
  }

  for (int trial = 0; trial < spec.trials; ++trial) {
    const TrialSplit split = split_trial(data, spec, trial);
    const Labels& truth = *split.unlabeled.hidden_labels;
    for (MethodSummary& s : report.methods) {
      const auto start = std::chrono::steady_clock::now();
      SelfLearnConfig cfg = config.self_learning;
      cfg.seed = trial_seed(spec.seed, trial);
      double acc = 0.0;
      if (s.method == Method::Supervised) {
        ForestConfig fc = cfg.forest;
        fc.seed = cfg.seed;
        const Forest f = train_forest(split.labeled, fc, data.num_classes);
        acc = accuracy(predict_bayes(forest_votes(f, split.unlabeled.features)), truth);
      } else {
        cfg.policy = s.method == Method::Fsla ? Policy::Fsla : s.method == Method::Csla ? Policy::Csla : Policy::Msla;
        SelfLearnResult r = run_self_learning(split.labeled, split.unlabeled, data.num_classes, cfg);
        acc = accuracy(r.unlabeled_predictions, truth);
        if (config.record_histories) s.histories.push_back(std::move(r.history));
      }
      s.accuracy.push_back(acc);
      s.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
  }

  std::size_t best = 0;
  for (std::size_t m = 0; m < report.methods.size(); ++m) {
    MethodSummary& s = report.methods[m];
    s.mean = std::accumulate(s.accuracy.begin(), s.accuracy.end(), 0.0) / static_cast<double>(s.accuracy.size());
    s.std_dev = sample_std(s.accuracy, s.mean);
    if (s.mean > report.methods[best].mean) best = m;
  }
  for (std::size_t m = 0; m < report.methods.size(); ++m) {
    MethodSummary& s = report.methods[m];
    if (m == best) continue;
    s.p_vs_best = mann_whitney(s.accuracy, report.methods[best].accuracy).p_value;
    s.significant = s.p_vs_best < 0.01;
  }
  return report;
}

void write_report_csv(std::ostream& out, const ExperimentReport& report) {
  out << "method,mean,std,p_vs_best,significant\n";
  const auto old_precision = out.precision(17);
  for (const MethodSummary& s : report.methods) {
    out << to_string(s.method) << ',' << s.mean << ',' << s.std_dev << ',' << s.p_vs_best << ','
        << (s.significant ? "true" : "false") << '\n';
  }
  out.precision(old_precision);
}

std::string report_json(const ExperimentReport& report, const ExperimentConfig& config) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["dataset"] = report.dataset;
  j["spec"] = {{"l", report.spec.l},
               {"u", report.spec.u},
               {"trials", report.spec.trials},
               {"seed", report.spec.seed},
               {"stratified", report.spec.stratified}};
  const ForestConfig& fc = config.self_learning.forest;
  j["config"] = {{"forest",
                  {{"tree_count", fc.tree_count},
                   {"max_depth", fc.max_depth},
                   {"min_samples_split", fc.min_samples_split},
                   {"features_per_split", fc.features_per_split},
                   {"bootstrap", fc.bootstrap}}},
                 {"theta_fixed", config.self_learning.theta_fixed},
                 {"fsla_max_iterations", config.self_learning.max_iterations},
                 {"delta", config.self_learning.delta},
                 {"grid_resolution", config.self_learning.grid_resolution},
                 {"posterior", std::string(to_string(config.self_learning.posterior_mode))}};
  ordered_json methods = ordered_json::array();
  for (const MethodSummary& s : report.methods) {
    ordered_json m;
    m["method"] = std::string(to_string(s.method));
    m["acc_u"] = s.accuracy;
    m["mean"] = std::isfinite(s.mean) ? ordered_json(s.mean) : ordered_json(nullptr);
    m["std"] = std::isfinite(s.std_dev) ? ordered_json(s.std_dev) : ordered_json(nullptr);
    m["p_vs_best"] = s.p_vs_best;
    m["significant"] = s.significant;
    if (const auto ref = published(report.dataset, s.method)) {
      m["published"] = {{"mean", ref->mean}, {"std", ref->std_dev}};
    }
    if (!s.histories.empty()) {
      ordered_json traces = ordered_json::array();
      for (const auto& history : s.histories) {
        ordered_json trace = ordered_json::array();
        for (const IterationRecord& r : history) {
          ordered_json rec;
          rec["iteration"] = r.iteration;
          rec["theta"] = std::vector<double>(r.theta.data(), r.theta.data() + r.theta.size());
          rec["selected"] = r.selected;
          rec["bound"] = std::isfinite(r.bound) ? ordered_json(r.bound) : ordered_json(nullptr);
          if (r.pseudo_accuracy) rec["pseudo_accuracy"] = *r.pseudo_accuracy;
          trace.push_back(std::move(rec));
        }
        traces.push_back(std::move(trace));
      }
      m["histories"] = std::move(traces);
    }
    methods.push_back(std::move(m));
  }
  j["methods"] = std::move(methods);
  j["notes"] = report.notes;
  return j.dump(2);
}

}  // namespace mvb
