#include "censura/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "censura/error.hpp"
#include "censura/log.hpp"
#include "csv_util.hpp"

namespace censura {

Censoring censoring_from_int(int mask) {
  if (mask < -1 || mask > 1) throw std::invalid_argument("censoring mask must be -1, 0 or 1, got " + std::to_string(mask));
  return static_cast<Censoring>(mask);
}

char relation_token(Censoring c) noexcept {
  switch (c) {
    case Censoring::left: return '<';
    case Censoring::right: return '>';
    case Censoring::observed: break;
  }
  return '=';
}

std::optional<Censoring> censoring_from_token(std::string_view token) noexcept {
  token = detail::trim(token);
  if (token == "=") return Censoring::observed;
  if (token == "<") return Censoring::left;
  if (token == ">") return Censoring::right;
  return std::nullopt;
}

std::optional<Date> parse_iso_date(std::string_view text) noexcept {
  text = detail::trim(text);
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  auto y = detail::parse_int<int>(text.substr(0, 4));
  auto m = detail::parse_int<unsigned>(text.substr(5, 2));
  auto d = detail::parse_int<unsigned>(text.substr(8, 2));
  if (!y || !m || !d) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{*y}, std::chrono::month{*m}, std::chrono::day{*d}};
  if (!ymd.ok()) return std::nullopt;
  return Date{ymd};
}

std::string format_iso_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

// ---------------------------------------------------------------------------

CensoredDataset::CensoredDataset(Eigen::MatrixXd features, std::vector<double> labels, std::vector<Censoring> masks,
                                 std::vector<Date> dates, std::vector<std::string> ids)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      masks_(std::move(masks)),
      dates_(std::move(dates)),
      ids_(std::move(ids)) {
  const auto n = labels_.size();
  if (static_cast<std::size_t>(features_.rows()) != n || masks_.size() != n || dates_.size() != n ||
      ids_.size() != n) {
    throw std::invalid_argument("CensoredDataset: features, labels, masks, dates and ids must have equal length");
  }
  for (auto m : masks_) censoring_from_int(static_cast<int>(m));
  if (!features_.allFinite()) throw std::invalid_argument("CensoredDataset: non-finite feature value");
  for (double y : labels_) {
    if (!std::isfinite(y)) throw std::invalid_argument("CensoredDataset: non-finite label");
  }
}

std::size_t CensoredDataset::n_censored() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(masks_.begin(), masks_.end(), [](Censoring m) { return m != Censoring::observed; }));
}

CensoredDataset CensoredDataset::subset(std::span<const std::size_t> rows) const {
  Eigen::MatrixXd f(static_cast<Eigen::Index>(rows.size()), features_.cols());
  std::vector<double> y;
  std::vector<Censoring> m;
  std::vector<Date> d;
  std::vector<std::string> id;
  y.reserve(rows.size());
  m.reserve(rows.size());
  d.reserve(rows.size());
  id.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto r = rows[k];
    if (r >= size()) throw std::out_of_range("CensoredDataset::subset: row index out of range");
    f.row(static_cast<Eigen::Index>(k)) = features_.row(static_cast<Eigen::Index>(r));
    y.push_back(labels_[r]);
    m.push_back(masks_[r]);
    d.push_back(dates_[r]);
    id.push_back(ids_[r]);
  }
  return CensoredDataset(std::move(f), std::move(y), std::move(m), std::move(d), std::move(id));
}

std::string CensoredDataset::content_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  const std::uint64_t shape[2] = {static_cast<std::uint64_t>(features_.rows()),
                                  static_cast<std::uint64_t>(features_.cols())};
  feed(shape, sizeof shape);
  for (Eigen::Index i = 0; i < features_.rows(); ++i)
    for (Eigen::Index j = 0; j < features_.cols(); ++j) {
      const double v = features_(i, j);
      feed(&v, sizeof v);
    }
  feed(labels_.data(), labels_.size() * sizeof(double));
  for (auto m : masks_) {
    const int v = to_int(m);
    feed(&v, sizeof v);
  }
  for (auto d : dates_) {
    const auto v = d.time_since_epoch().count();
    feed(&v, sizeof v);
  }
  for (const auto& s : ids_) feed(s.data(), s.size() + 1);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

bool operator==(const CensoredDataset& a, const CensoredDataset& b) {
  return a.features_.rows() == b.features_.rows() && a.features_.cols() == b.features_.cols() &&
         a.features_ == b.features_ && a.labels_ == b.labels_ && a.masks_ == b.masks_ && a.dates_ == b.dates_ &&
         a.ids_ == b.ids_;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

struct SparseEntry {
  std::size_t index;
  double value;
};

std::vector<SparseEntry> parse_sparse(std::string_view text, const std::string& path, std::size_t line) {
  std::vector<SparseEntry> out;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) {
    const auto colon = tok.find(':');
    if (colon == std::string::npos) throw LoadError(path, line, "sparse entry '" + tok + "' is not index:value");
    auto idx = detail::parse_int<std::size_t>(std::string_view(tok).substr(0, colon));
    auto val = detail::parse_double(std::string_view(tok).substr(colon + 1));
    if (!idx || !val) throw LoadError(path, line, "unparseable sparse entry '" + tok + "'");
    out.push_back({*idx, *val});
  }
  return out;
}

}  // namespace

CensoredDataset load_csv(const std::filesystem::path& path, const ColumnSchema& schema) {
  const std::string pstr = path.string();
  std::ifstream in(path);
  if (!in) throw LoadError(pstr, 0, "cannot open file");

  std::string raw;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, raw)) {
    ++line_no;
    if (!detail::trim(raw).empty()) {
      header = detail::split_csv_line(raw);
      break;
    }
  }
  if (header.empty()) throw LoadError(pstr, line_no, "missing header row");
  for (auto& h : header) h = std::string(detail::trim(h));

  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw LoadError(pstr, line_no, "missing required column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto c_id = column(schema.id_column);
  const auto c_date = column(schema.date_column);
  const auto c_value = column(schema.value_column);
  const auto c_rel = column(schema.relation_column);

  // Dense columns: prefix + integer, sorted by the integer; must be 0..d-1.
  std::vector<std::pair<std::size_t, std::size_t>> dense;  // (feature index, column)
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto& h = header[c];
    if (h.size() > schema.dense_prefix.size() && h.starts_with(schema.dense_prefix)) {
      if (auto k = detail::parse_int<std::size_t>(std::string_view(h).substr(schema.dense_prefix.size())))
        dense.emplace_back(*k, c);
    }
  }
  std::sort(dense.begin(), dense.end());
  for (std::size_t k = 0; k < dense.size(); ++k) {
    if (dense[k].first != k) throw LoadError(pstr, line_no, "dense feature columns must be numbered 0..d-1");
  }
  std::optional<std::size_t> c_sparse;
  if (dense.empty()) {
    auto it = std::find(header.begin(), header.end(), schema.sparse_column);
    if (it == header.end()) throw LoadError(pstr, line_no, "no dense feature columns and no sparse column");
    c_sparse = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<std::vector<double>> dense_rows;
  std::vector<std::vector<SparseEntry>> sparse_rows;
  std::vector<double> labels;
  std::vector<Censoring> masks;
  std::vector<Date> dates;
  std::vector<std::string> ids;
  std::size_t max_sparse_index = 0;
  bool any_sparse = false;

  while (std::getline(in, raw)) {
    ++line_no;
    if (detail::trim(raw).empty()) continue;
    auto fields = detail::split_csv_line(raw);
    if (fields.size() != header.size()) {
      throw LoadError(pstr, line_no,
                      "ragged row: expected " + std::to_string(header.size()) + " fields, got " +
                          std::to_string(fields.size()));
    }
    auto date = parse_iso_date(fields[c_date]);
    if (!date) throw LoadError(pstr, line_no, "unparseable date '" + fields[c_date] + "'");
    auto value = detail::parse_double(fields[c_value]);
    if (!value || !std::isfinite(*value)) throw LoadError(pstr, line_no, "unparseable value '" + fields[c_value] + "'");
    auto rel = censoring_from_token(fields[c_rel]);
    if (!rel) throw LoadError(pstr, line_no, "unknown relation token '" + fields[c_rel] + "'");

    double y = *value;
    Censoring m = *rel;
    switch (schema.transform) {
      case LabelTransform::none: break;
      case LabelTransform::log10:
        if (!(y > 0.0)) throw LoadError(pstr, line_no, "log10 transform needs a positive value");
        y = std::log10(y);
        break;
      case LabelTransform::neg_log10_molar:
        if (!(y > 0.0)) throw LoadError(pstr, line_no, "neg_log10_molar transform needs a positive value");
        y = -std::log10(y * schema.molar_scale);
        m = static_cast<Censoring>(-to_int(m));
        break;
    }

    if (c_sparse) {
      auto entries = parse_sparse(fields[*c_sparse], pstr, line_no);
      for (const auto& e : entries) {
        if (!std::isfinite(e.value)) throw LoadError(pstr, line_no, "non-finite sparse value");
        max_sparse_index = std::max(max_sparse_index, e.index);
        any_sparse = true;
      }
      sparse_rows.push_back(std::move(entries));
    } else {
      std::vector<double> row(dense.size());
      for (std::size_t k = 0; k < dense.size(); ++k) {
        auto v = detail::parse_double(fields[dense[k].second]);
        if (!v || !std::isfinite(*v))
          throw LoadError(pstr, line_no, "unparseable feature '" + fields[dense[k].second] + "'");
        row[k] = *v;
      }
      dense_rows.push_back(std::move(row));
    }
    labels.push_back(y);
    masks.push_back(m);
    dates.push_back(*date);
    ids.push_back(std::string(detail::trim(fields[c_id])));
  }

  const auto n = static_cast<Eigen::Index>(labels.size());
  Eigen::MatrixXd features;
  if (c_sparse) {
    std::size_t dim = schema.sparse_dim.value_or(any_sparse ? max_sparse_index + 1 : 1);
    if (any_sparse && max_sparse_index >= dim)
      throw LoadError(pstr, line_no, "sparse index " + std::to_string(max_sparse_index) + " exceeds sparse_dim");
    features = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < n; ++i)
      for (const auto& e : sparse_rows[static_cast<std::size_t>(i)])
        features(i, static_cast<Eigen::Index>(e.index)) = e.value;
  } else {
    features.resize(n, static_cast<Eigen::Index>(dense.size()));
    for (Eigen::Index i = 0; i < n; ++i)
      for (std::size_t k = 0; k < dense.size(); ++k)
        features(i, static_cast<Eigen::Index>(k)) = dense_rows[static_cast<std::size_t>(i)][k];
  }
  return CensoredDataset(std::move(features), std::move(labels), std::move(masks), std::move(dates), std::move(ids));
}

void write_csv(const std::filesystem::path& path, const CensoredDataset& ds) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "id,date,value,relation";
  for (std::size_t j = 0; j < ds.dim(); ++j) out << ",f" << j;
  out << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << detail::quote_csv(ds.ids()[i]) << ',' << format_iso_date(ds.dates()[i]) << ','
        << detail::format_double(ds.labels()[i]) << ',' << relation_token(ds.masks()[i]);
    for (std::size_t j = 0; j < ds.dim(); ++j)
      out << ',' << detail::format_double(ds.features()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    out << '\n';
  }
  if (!out) throw Error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Aggregation

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double sample_stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Chooses the modal (threshold, direction) pair among censored measurements.
// Ties prefer the less informative bound; a tie across directions is decided
// by which direction has more measurements, then by "<".
std::pair<double, Censoring> modal_threshold(std::span<const double> values, std::span<const Censoring> masks,
                                             bool& mixed_tie) {
  std::map<std::pair<int, double>, std::size_t> counts;
  std::size_t n_left = 0;
  std::size_t n_right = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    ++counts[{to_int(masks[i]), values[i]}];
    (masks[i] == Censoring::left ? n_left : n_right)++;
  }
  std::size_t best = 0;
  for (const auto& [key, c] : counts) best = std::max(best, c);

  std::optional<double> left_pick;
  std::optional<double> right_pick;
  for (const auto& [key, c] : counts) {
    if (c != best) continue;
    const auto [dir, z] = key;
    if (dir < 0) left_pick = left_pick ? std::max(*left_pick, z) : z;
    else right_pick = right_pick ? std::min(*right_pick, z) : z;
  }
  mixed_tie = left_pick && right_pick;
  if (left_pick && right_pick) {
    if (n_right > n_left) return {*right_pick, Censoring::right};
    return {*left_pick, Censoring::left};
  }
  if (left_pick) return {*left_pick, Censoring::left};
  return {*right_pick, Censoring::right};
}

}  // namespace

AggregatedDataset aggregate_duplicates(const CensoredDataset& ds) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto [it, inserted] = groups.try_emplace(ds.ids()[i]);
    if (inserted) order.push_back(ds.ids()[i]);
    it->second.push_back(i);
  }

  DuplicateStats stats;
  Eigen::MatrixXd features(static_cast<Eigen::Index>(order.size()), ds.features().cols());
  std::vector<double> labels;
  std::vector<Censoring> masks;
  std::vector<Date> dates;
  std::vector<std::string> ids;

  for (std::size_t g = 0; g < order.size(); ++g) {
    const auto& rows = groups.at(order[g]);
    if (rows.size() > 1) ++stats.groups_merged;
    features.row(static_cast<Eigen::Index>(g)) = ds.features().row(static_cast<Eigen::Index>(rows.front()));

    Date earliest = ds.dates()[rows.front()];
    std::vector<double> observed;
    std::vector<double> cens_values;
    std::vector<Censoring> cens_masks;
    for (auto r : rows) {
      earliest = std::min(earliest, ds.dates()[r]);
      if (ds.masks()[r] == Censoring::observed) {
        observed.push_back(ds.labels()[r]);
      } else {
        cens_values.push_back(ds.labels()[r]);
        cens_masks.push_back(ds.masks()[r]);
      }
    }

    if (!observed.empty()) {
      labels.push_back(median(observed));
      masks.push_back(Censoring::observed);
      if (observed.size() >= 3) {
        const double sd = sample_stddev(observed);
        if (sd > 0.0) stats.spreads.push_back({order[g], observed.size(), sd});
      }
    } else {
      bool mixed = false;
      auto [z, m] = modal_threshold(cens_values, cens_masks, mixed);
      if (mixed) {
        stats.mixed_direction_ties.push_back(order[g]);
        log::warning("id '" + order[g] + "': modal censored threshold tied across '<' and '>'");
      }
      labels.push_back(z);
      masks.push_back(m);
    }
    dates.push_back(earliest);
    ids.push_back(order[g]);
  }
  return {CensoredDataset(std::move(features), std::move(labels), std::move(masks), std::move(dates), std::move(ids)),
          std::move(stats)};
}

ControlExtraction extract_control(const CensoredDataset& ds, std::string_view control_id) {
  std::vector<std::size_t> keep;
  std::vector<double> control_values;
  bool found = false;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.ids()[i] == control_id) {
      found = true;
      if (ds.masks()[i] == Censoring::observed) control_values.push_back(ds.labels()[i]);
    } else {
      keep.push_back(i);
    }
  }
  if (!found) throw NotFoundError("control compound '" + std::string(control_id) + "' not present");
  if (control_values.size() < 2) {
    throw std::invalid_argument("control compound '" + std::string(control_id) +
                                "' needs at least two observed measurements");
  }
  return {ds.subset(keep), sample_stddev(control_values)};
}

CensoredDataset observed_subset(const CensoredDataset& ds) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.masks()[i] == Censoring::observed) keep.push_back(i);
  return ds.subset(keep);
}

// ---------------------------------------------------------------------------
// Temporal split

std::vector<std::size_t> TemporalSettings::train_rows(int setting) const {
  if (setting < 1 || setting > 3) throw std::invalid_argument("setting must be 1, 2 or 3");
  std::vector<std::size_t> out;
  for (int f : settings[static_cast<std::size_t>(setting - 1)].train_folds) {
    const auto& fold = folds[static_cast<std::size_t>(f - 1)];
    out.insert(out.end(), fold.begin(), fold.end());
  }
  return out;
}

const std::vector<std::size_t>& TemporalSettings::validation_rows(int setting) const {
  if (setting < 1 || setting > 3) throw std::invalid_argument("setting must be 1, 2 or 3");
  return folds[static_cast<std::size_t>(settings[static_cast<std::size_t>(setting - 1)].validation_fold - 1)];
}

const std::vector<std::size_t>& TemporalSettings::test_rows(int setting) const {
  if (setting < 1 || setting > 3) throw std::invalid_argument("setting must be 1, 2 or 3");
  return folds[static_cast<std::size_t>(settings[static_cast<std::size_t>(setting - 1)].test_fold - 1)];
}

TemporalSettings temporal_split(const CensoredDataset& ds) {
  const std::size_t n_obs = ds.n_observed();
  if (n_obs < 5) throw SplitError("temporal split needs at least 5 observed labels, got " + std::to_string(n_obs));

  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ds.dates()[a] < ds.dates()[b]; });

  // Runs of equal dates: end position (exclusive) in `order` and cumulative
  // observed count at that end.
  std::vector<std::size_t> run_end;
  std::vector<std::size_t> run_cum_obs;
  std::size_t cum = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (ds.masks()[order[k]] == Censoring::observed) ++cum;
    const bool last = k + 1 == order.size() || ds.dates()[order[k + 1]] != ds.dates()[order[k]];
    if (last) {
      run_end.push_back(k + 1);
      run_cum_obs.push_back(cum);
    }
  }
  const std::size_t runs = run_end.size();
  if (runs < 5) throw SplitError("temporal split needs at least 5 distinct dates, got " + std::to_string(runs));

  // Boundary j means "cut after run j", j in [0, runs-2]. Each boundary is the
  // candidate closest to its ideal observed count, ties broken by total row
  // count and then by position.
  std::array<std::size_t, 4> cut{};
  std::size_t lo = 0;
  for (std::size_t k = 1; k <= 4; ++k) {
    const double target_obs = static_cast<double>(k * n_obs) / 5.0;
    const double target_rows = static_cast<double>(k * ds.size()) / 5.0;
    const std::size_t hi = runs - 2 - (4 - k);
    std::size_t best = lo;
    double best_obs = std::numeric_limits<double>::infinity();
    double best_rows = best_obs;
    for (std::size_t j = lo; j <= hi; ++j) {
      const double d_obs = std::abs(static_cast<double>(run_cum_obs[j]) - target_obs);
      const double d_rows = std::abs(static_cast<double>(run_end[j]) - target_rows);
      if (d_obs < best_obs || (d_obs == best_obs && d_rows < best_rows)) {
        best = j;
        best_obs = d_obs;
        best_rows = d_rows;
      }
    }
    cut[k - 1] = best;
    lo = best + 1;
  }

  TemporalSettings split;
  std::size_t start = 0;
  for (std::size_t f = 0; f < 5; ++f) {
    const std::size_t end = f < 4 ? run_end[cut[f]] : order.size();
    split.folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                          order.begin() + static_cast<std::ptrdiff_t>(end));
    start = end;
  }
  split.settings = {TemporalSetting{{1}, 2, 3}, TemporalSetting{{1, 2}, 3, 4}, TemporalSetting{{1, 2, 3}, 4, 5}};
  return split;
}

SplitData materialize_setting(const CensoredDataset& ds, const TemporalSettings& split, int setting) {
  const auto train = split.train_rows(setting);
  return {ds.subset(train), ds.subset(split.validation_rows(setting)), ds.subset(split.test_rows(setting))};
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd hash_featurize(std::span<const std::string> tokens, std::size_t dim) {
  if (dim < 8) throw std::invalid_argument("hash_featurize: dim must be at least 8");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(tokens.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& s = tokens[i];
    if (s.empty()) {
      log::warning("hash_featurize: empty string at row " + std::to_string(i) + " maps to the zero vector");
      continue;
    }
    for (std::size_t n = 2; n <= 3; ++n) {
      if (s.size() < n) continue;
      for (std::size_t p = 0; p + n <= s.size(); ++p) {
        std::uint64_t h = 0xcbf29ce484222325ULL ^ n;
        for (std::size_t q = p; q < p + n; ++q) {
          h ^= static_cast<unsigned char>(s[q]);
          h *= 0x100000001b3ULL;
        }
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(h % dim)) = 1.0;
      }
    }
  }
  return out;
}

}  // namespace censura
