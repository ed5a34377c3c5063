#include "censura/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "censura/error.hpp"
#include "censura/numerics.hpp"
#include "csv_util.hpp"

namespace censura {

using nlohmann::json;

namespace {

void check_inputs(std::span<const UncertainPrediction> preds, const BatchTargets& targets, std::string_view what) {
  targets.validate();
  if (preds.empty()) throw std::invalid_argument(std::string(what) + ": no predictions");
  if (preds.size() != targets.size())
    throw std::invalid_argument(std::string(what) + ": prediction/target length mismatch");
}

double squared_error(const UncertainPrediction& p, const BatchTargets& t, std::size_t i) {
  const double e = censored_error(p.mean, t.labels[i], t.masks[i]);
  return e * e;
}

}  // namespace

std::string_view to_string(VarianceSource s) noexcept {
  return s == VarianceSource::aleatoric ? "aleatoric" : "epistemic";
}

VarianceSource variance_source_from_string(std::string_view s) {
  if (s == "aleatoric") return VarianceSource::aleatoric;
  if (s == "epistemic") return VarianceSource::epistemic;
  throw std::invalid_argument("unknown variance source: " + std::string(s));
}

double predictive_variance(const UncertainPrediction& p, VarianceSource source, std::string_view model_name) {
  const auto& channel = source == VarianceSource::aleatoric ? p.aleatoric_variance : p.epistemic_variance;
  if (!channel) {
    std::string msg = "prediction has no " + std::string(to_string(source)) + " variance";
    if (!model_name.empty()) msg += " (model " + std::string(model_name) + ")";
    throw std::invalid_argument(msg);
  }
  if (!std::isfinite(*channel) || *channel < 0.0) throw std::invalid_argument("predicted variance must be finite and >= 0");
  return source == VarianceSource::epistemic ? *channel + kVarianceFloor : *channel;
}

VarianceSource default_variance_source(const UncertainPrediction& p) {
  if (p.aleatoric_variance) return VarianceSource::aleatoric;
  if (p.epistemic_variance) return VarianceSource::epistemic;
  throw std::invalid_argument("prediction carries no variance");
}

double eval_mse(std::span<const UncertainPrediction> preds, const BatchTargets& targets) {
  check_inputs(preds, targets, "eval_mse");
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) sum += squared_error(preds[i], targets, i);
  return sum / static_cast<double>(preds.size());
}

double eval_nll(std::span<const UncertainPrediction> preds, const BatchTargets& targets, VarianceSource source,
                std::string_view model_name) {
  check_inputs(preds, targets, "eval_nll");
  std::vector<GaussianParams> params;
  params.reserve(preds.size());
  for (const auto& p : preds) params.emplace_back(p.mean, predictive_variance(p, source, model_name));
  return censored_nll(params, targets, true).value;
}

std::vector<EnceBin> ence_bins(std::span<const UncertainPrediction> preds, const BatchTargets& targets,
                               VarianceSource source, std::size_t n_bins) {
  check_inputs(preds, targets, "eval_ence");
  const std::size_t m = preds.size();
  if (n_bins < 1 || n_bins > m) throw std::invalid_argument("eval_ence: need 1 <= n_bins <= number of points");

  std::vector<std::pair<double, double>> points(m);  // (variance, squared error)
  for (std::size_t i = 0; i < m; ++i)
    points[i] = {predictive_variance(preds[i], source), squared_error(preds[i], targets, i)};
  std::sort(points.begin(), points.end());

  std::vector<EnceBin> bins(n_bins);
  const std::size_t base = m / n_bins;
  const std::size_t extra = m % n_bins;
  std::size_t start = 0;
  for (std::size_t b = 0; b < n_bins; ++b) {
    const std::size_t count = base + (b < extra ? 1 : 0);
    double se = 0.0;
    double var = 0.0;
    for (std::size_t k = start; k < start + count; ++k) {
      var += points[k].first;
      se += points[k].second;
    }
    bins[b] = {count, std::sqrt(se / static_cast<double>(count)), std::sqrt(var / static_cast<double>(count))};
    start += count;
  }
  return bins;
}

double ence_from_bins(std::span<const EnceBin> bins) {
  if (bins.empty()) throw std::invalid_argument("ence: no bins");
  double sum = 0.0;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    if (!(bins[b].rmv > 0.0))
      throw NumericError("ence: bin " + std::to_string(b + 1) + " has zero root-mean-variance");
    sum += std::abs(bins[b].rmse - bins[b].rmv) / bins[b].rmv;
  }
  return sum / static_cast<double>(bins.size());
}

double eval_ence(std::span<const UncertainPrediction> preds, const BatchTargets& targets, VarianceSource source,
                 std::size_t n_bins) {
  return ence_from_bins(ence_bins(preds, targets, source, n_bins));
}

double CalibrationCurve::max_deviation() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < expected.size(); ++i) worst = std::max(worst, std::abs(observed[i] - expected[i]));
  return worst;
}

std::vector<double> default_calibration_grid() {
  std::vector<double> grid;
  for (int k = 0; k <= 20; ++k) grid.push_back(k / 20.0);
  return grid;
}

CalibrationCurve calibration_curve(std::span<const UncertainPrediction> preds, const BatchTargets& targets,
                                   VarianceSource source, std::span<const double> grid) {
  check_inputs(preds, targets, "calibration_curve");
  if (grid.empty()) throw std::invalid_argument("calibration_curve: empty grid");
  for (double p : grid)
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("calibration_curve: grid values must lie in [0, 1]");

  // |error| / sd per point, sorted, so each grid value is one binary search.
  std::vector<double> scaled(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double e = std::abs(censored_error(preds[i].mean, targets.labels[i], targets.masks[i]));
    const double sd = std::sqrt(predictive_variance(preds[i], source));
    scaled[i] = e == 0.0 ? 0.0 : (sd > 0.0 ? e / sd : std::numeric_limits<double>::infinity());
  }
  std::sort(scaled.begin(), scaled.end());

  CalibrationCurve curve;
  const auto m = static_cast<double>(preds.size());
  for (double p : grid) {
    double inside = 0.0;
    if (p >= 1.0) {
      inside = m;
    } else {
      const double z = p <= 0.0 ? 0.0 : inverse_normal_cdf(0.5 * (1.0 + p));
      inside = static_cast<double>(std::upper_bound(scaled.begin(), scaled.end(), z) - scaled.begin());
    }
    curve.expected.push_back(p);
    curve.observed.push_back(inside / m);
  }
  return curve;
}

double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("inverse_normal_cdf: p must lie in (0, 1)");
  // Acklam's rational approximation.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x = 0.0;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement; the residual is taken on the smaller tail for accuracy.
  const double e = x <= 0.0 ? std_normal_cdf(x) - p : (1.0 - p) - std_normal_cdf(-x);
  const double u = e * std::exp(0.5 * x * x - std_normal_log_pdf(0.0));
  return x - u / (1.0 + 0.5 * x * u);
}

const std::vector<double>& RepeatScores::metric(std::string_view name) const {
  if (name == "mse") return mse;
  if (name == "nll") return nll;
  if (name == "ence") return ence;
  throw std::invalid_argument("unknown metric: " + std::string(name));
}

EvaluationReport evaluate(std::span<const UncertainPrediction> preds, const BatchTargets& targets,
                          const EvaluationOptions& options) {
  check_inputs(preds, targets, "evaluate");
  EvaluationReport r;
  r.model_name = options.model_name;
  r.source = options.source.value_or(default_variance_source(preds.front()));
  r.mse = eval_mse(preds, targets);
  r.nll = eval_nll(preds, targets, r.source, options.model_name);
  r.bins = ence_bins(preds, targets, r.source, std::min(options.n_bins, preds.size()));
  r.ence = ence_from_bins(r.bins);
  r.calibration = calibration_curve(preds, targets, r.source, options.grid);
  r.n_points = preds.size();
  r.n_censored = static_cast<std::size_t>(
      std::count_if(targets.masks.begin(), targets.masks.end(), [](Censoring c) { return c != Censoring::observed; }));
  r.repeats = {{r.mse}, {r.nll}, {r.ence}};
  return r;
}

void to_json(json& j, const EvaluationReport& r) {
  json bins = json::array();
  for (std::size_t b = 0; b < r.bins.size(); ++b)
    bins.push_back({{"bin", b + 1}, {"count", r.bins[b].count}, {"rmse", r.bins[b].rmse}, {"rmv", r.bins[b].rmv}});
  j = {{"model", r.model_name},
       {"variance_source", std::string(to_string(r.source))},
       {"mse", r.mse},
       {"nll", r.nll},
       {"ence", r.ence},
       {"calibration", {{"expected", r.calibration.expected}, {"observed", r.calibration.observed}}},
       {"calibration_max_deviation", r.calibration.max_deviation()},
       {"ence_bins", std::move(bins)},
       {"n_points", r.n_points},
       {"n_censored", r.n_censored},
       {"repeats", {{"mse", r.repeats.mse}, {"nll", r.repeats.nll}, {"ence", r.repeats.ence}}},
       {"context", r.context}};
}

void from_json(const json& j, EvaluationReport& r) {
  r.model_name = j.value("model", std::string());
  r.source = variance_source_from_string(j.value("variance_source", std::string("aleatoric")));
  r.mse = j.at("mse").get<double>();
  r.nll = j.at("nll").get<double>();
  r.ence = j.at("ence").get<double>();
  r.calibration.expected = j.at("calibration").at("expected").get<std::vector<double>>();
  r.calibration.observed = j.at("calibration").at("observed").get<std::vector<double>>();
  r.bins.clear();
  for (const auto& b : j.value("ence_bins", json::array()))
    r.bins.push_back({b.at("count").get<std::size_t>(), b.at("rmse").get<double>(), b.at("rmv").get<double>()});
  r.n_points = j.at("n_points").get<std::size_t>();
  r.n_censored = j.at("n_censored").get<std::size_t>();
  if (j.contains("repeats")) {
    const auto& rep = j.at("repeats");
    r.repeats.mse = rep.value("mse", std::vector<double>{});
    r.repeats.nll = rep.value("nll", std::vector<double>{});
    r.repeats.ence = rep.value("ence", std::vector<double>{});
  } else {
    r.repeats = {{r.mse}, {r.nll}, {r.ence}};
  }
  r.context = j.value("context", json::object());
}

void write_calibration_csv(const std::filesystem::path& path, const CalibrationCurve& curve) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "expected,observed\n";
  for (std::size_t i = 0; i < curve.expected.size(); ++i)
    out << detail::format_double(curve.expected[i]) << ',' << detail::format_double(curve.observed[i]) << '\n';
}

void write_ence_csv(const std::filesystem::path& path, std::span<const EnceBin> bins) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "bin,rmse,rmv\n";
  for (std::size_t b = 0; b < bins.size(); ++b)
    out << b + 1 << ',' << detail::format_double(bins[b].rmse) << ',' << detail::format_double(bins[b].rmv) << '\n';
}

void write_predictions_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                           std::span<const UncertainPrediction> preds) {
  if (ids.size() != preds.size()) throw std::invalid_argument("write_predictions_csv: id/prediction length mismatch");
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "id,mean,aleatoric,epistemic\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    out << detail::quote_csv(ids[i]) << ',' << detail::format_double(preds[i].mean) << ',';
    if (preds[i].aleatoric_variance) out << detail::format_double(*preds[i].aleatoric_variance);
    out << ',';
    if (preds[i].epistemic_variance) out << detail::format_double(*preds[i].epistemic_variance);
    out << '\n';
  }
}

PredictionTable read_predictions_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path.string());
  PredictionTable table;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw LoadError(path.string(), 1, "missing header");
  ++line_no;
  const auto header = detail::split_csv_line(detail::trim(line));
  if (header != std::vector<std::string>{"id", "mean", "aleatoric", "epistemic"})
    throw LoadError(path.string(), 1, "expected header id,mean,aleatoric,epistemic");
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv_line(detail::trim(line));
    if (f.size() != 4) throw LoadError(path.string(), line_no, "expected 4 fields");
    UncertainPrediction p;
    const auto mean = detail::parse_double(f[1]);
    if (!mean) throw LoadError(path.string(), line_no, "bad mean");
    p.mean = *mean;
    for (int c = 2; c <= 3; ++c) {
      if (detail::trim(f[static_cast<std::size_t>(c)]).empty()) continue;
      const auto v = detail::parse_double(f[static_cast<std::size_t>(c)]);
      if (!v || *v < 0.0) throw LoadError(path.string(), line_no, "bad variance");
      (c == 2 ? p.aleatoric_variance : p.epistemic_variance) = *v;
    }
    table.ids.push_back(f[0]);
    table.predictions.push_back(p);
  }
  return table;
}

}  // namespace censura
