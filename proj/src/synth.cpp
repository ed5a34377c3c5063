#include "censura/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "censura/error.hpp"
#include "censura/numerics.hpp"
#include "censura/random.hpp"
#include "csv_util.hpp"

namespace censura {

using nlohmann::json;

namespace {

constexpr double kSigmaMin = 1e-3;
constexpr std::size_t kPilotMin = 100000;

struct Teacher {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::VectorXd w2;
};

Teacher make_teacher(const MeanFunction& f, std::size_t dim) {
  CounterRng rng(derive_seed(f.teacher_seed, "teacher"));
  const auto h = static_cast<Eigen::Index>(f.teacher_hidden);
  const auto d = static_cast<Eigen::Index>(dim);
  Teacher t{Eigen::MatrixXd(h, d), Eigen::VectorXd(h), Eigen::VectorXd(h)};
  for (Eigen::Index i = 0; i < h; ++i)
    for (Eigen::Index j = 0; j < d; ++j) t.w1(i, j) = rng.normal() / std::sqrt(static_cast<double>(d));
  for (Eigen::Index i = 0; i < h; ++i) t.b1(i) = 0.5 * rng.normal();
  for (Eigen::Index i = 0; i < h; ++i) t.w2(i) = rng.normal() / std::sqrt(static_cast<double>(h));
  return t;
}

double mean_at(const SynthSpec& spec, const Teacher* teacher, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  const auto& f = spec.mean;
  const auto d = static_cast<double>(spec.feature_dim);
  switch (f.kind) {
    case MeanKind::linear: {
      double v = f.bias;
      for (Eigen::Index j = 0; j < x.size(); ++j)
        v += (f.weights.empty() ? 2.0 / d : f.weights[static_cast<std::size_t>(j)]) * x(j);
      return v;
    }
    case MeanKind::sine_mixture: {
      double s = 0.0;
      for (Eigen::Index j = 0; j < x.size(); ++j) s += std::sin(std::numbers::pi * static_cast<double>(j + 1) * x(j));
      return f.bias + f.amplitude * s / std::sqrt(d);
    }
    case MeanKind::mlp_teacher: {
      const Eigen::VectorXd hidden = (teacher->w1 * x.transpose() + teacher->b1).array().tanh();
      return f.bias + f.amplitude * teacher->w2.dot(hidden);
    }
  }
  return f.bias;
}

double fold_shift(const SynthSpec& spec, std::size_t i, std::size_t n) {
  if (spec.drift == 0.0) return 0.0;
  return spec.drift * static_cast<double>(std::min<std::size_t>(4, 5 * i / n));
}

// Draws n rows of (features, mean, sigma, y*) from the given seed.
struct Draw {
  Eigen::MatrixXd x;
  std::vector<double> mean, sigma, y;
};

Draw draw_rows(const SynthSpec& spec, const Teacher* teacher, std::size_t n, std::uint64_t seed) {
  CounterRng rx(derive_seed(seed, "features"));
  CounterRng re(derive_seed(seed, "noise"));
  Draw d;
  d.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec.feature_dim));
  d.mean.resize(n);
  d.sigma.resize(n);
  d.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < d.x.cols(); ++j) d.x(r, j) = rx.uniform(spec.feature_low, spec.feature_high);
    d.mean[i] = mean_at(spec, teacher, d.x.row(r)) + fold_shift(spec, i, n);
    d.sigma[i] = synth_sigma(spec, d.x.row(r));
    d.y[i] = d.mean[i] + d.sigma[i] * re.normal();
  }
  return d;
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

const char* mean_name(MeanKind k) {
  switch (k) {
    case MeanKind::linear: return "linear";
    case MeanKind::sine_mixture: return "sine_mixture";
    case MeanKind::mlp_teacher: return "mlp_teacher";
  }
  return "linear";
}

const char* censor_name(CensorKind k) {
  switch (k) {
    case CensorKind::none: return "none";
    case CensorKind::fixed_left: return "fixed_left";
    case CensorKind::quantile_left: return "quantile_left";
    case CensorKind::mixed: return "mixed";
  }
  return "none";
}

}  // namespace

void SynthSpec::validate() const {
  if (n_points == 0) throw ConfigError("synth: n_points must be positive");
  if (feature_dim == 0) throw ConfigError("synth: feature_dim must be positive");
  if (!(feature_low < feature_high)) throw ConfigError("synth: feature_low must be below feature_high");
  if (mean.kind == MeanKind::linear && !mean.weights.empty() && mean.weights.size() != feature_dim)
    throw ConfigError("synth: linear weights must have feature_dim entries");
  if (mean.kind == MeanKind::mlp_teacher && mean.teacher_hidden < 1)
    throw ConfigError("synth: teacher_hidden must be positive");
  if (noise.kind == NoiseKind::constant && !(noise.sigma >= kSigmaMin))
    throw ConfigError("synth: sigma must be at least 1e-3");
  if (noise.kind == NoiseKind::logistic &&
      !(std::min(noise.a, noise.a + noise.b) >= kSigmaMin && std::isfinite(noise.c)))
    throw ConfigError("synth: a and a + b must be at least 1e-3");
  auto quantile_ok = [](double q) { return q >= 0.0 && q < 1.0; };
  if (censor.kind == CensorKind::quantile_left && !quantile_ok(censor.q_left))
    throw ConfigError("synth: q must lie in [0, 1)");
  if (censor.kind == CensorKind::mixed &&
      !(quantile_ok(censor.q_left) && quantile_ok(censor.q_right) && censor.q_left + censor.q_right < 1.0))
    throw ConfigError("synth: mixed quantiles must lie in [0, 1) and sum below 1");
  if (!std::isfinite(drift)) throw ConfigError("synth: drift must be finite");
  if (!parse_iso_date(start_date)) throw ConfigError("synth: start_date must be YYYY-MM-DD");
}

double synth_mean(const SynthSpec& spec, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  if (spec.mean.kind == MeanKind::mlp_teacher) {
    const Teacher t = make_teacher(spec.mean, spec.feature_dim);
    return mean_at(spec, &t, x);
  }
  return mean_at(spec, nullptr, x);
}

double synth_sigma(const SynthSpec& spec, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  const auto& n = spec.noise;
  if (n.kind == NoiseKind::constant) return n.sigma;
  return n.a + n.b * logistic(n.c * x(0));
}

SynthResult generate(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t n = spec.n_points;
  Teacher teacher;
  if (spec.mean.kind == MeanKind::mlp_teacher) teacher = make_teacher(spec.mean, spec.feature_dim);
  const Draw d = draw_rows(spec, &teacher, n, seed);

  double left = -std::numeric_limits<double>::infinity();
  double right = std::numeric_limits<double>::infinity();
  const auto& rule = spec.censor;
  if (rule.kind == CensorKind::fixed_left && std::isfinite(rule.threshold)) {
    left = rule.threshold;
  } else if (rule.kind == CensorKind::quantile_left || rule.kind == CensorKind::mixed) {
    const std::size_t pilot_n = std::max(n, kPilotMin);
    const Draw pilot = draw_rows(spec, &teacher, pilot_n, derive_seed(seed, "pilot"));
    if (rule.q_left > 0.0) left = quantile(pilot.y, rule.q_left);
    if (rule.kind == CensorKind::mixed && rule.q_right > 0.0) right = quantile(pilot.y, 1.0 - rule.q_right);
  }

  GroundTruth gt{d.y, d.mean, d.sigma, std::vector<double>(n, std::numeric_limits<double>::quiet_NaN())};
  std::vector<double> labels(n);
  std::vector<Censoring> masks(n, Censoring::observed);
  std::vector<Date> dates(n);
  std::vector<std::string> ids(n);
  const Date start = *parse_iso_date(spec.start_date);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = d.y[i];
    if (d.y[i] < left) {
      labels[i] = left;
      masks[i] = Censoring::left;
      gt.threshold[i] = left;
    } else if (d.y[i] > right) {
      labels[i] = right;
      masks[i] = Censoring::right;
      gt.threshold[i] = right;
    }
    dates[i] = start + std::chrono::days(static_cast<long>(i));
    std::string num = std::to_string(i + 1);
    ids[i] = "syn" + std::string(num.size() < 6 ? 6 - num.size() : 0, '0') + num;
  }
  return {CensoredDataset(d.x, std::move(labels), std::move(masks), std::move(dates), std::move(ids)), std::move(gt)};
}

std::vector<UncertainPrediction> oracle_predictions(const GroundTruth& gt) {
  std::vector<UncertainPrediction> out;
  out.reserve(gt.true_mean.size());
  for (std::size_t i = 0; i < gt.true_mean.size(); ++i)
    out.push_back({gt.true_mean[i], std::max(gt.true_sigma[i] * gt.true_sigma[i], kVarianceFloor), 0.0});
  return out;
}

CensoredDataset uncensored_view(const CensoredDataset& data, const GroundTruth& gt) {
  if (gt.y_star.size() != data.size()) throw std::invalid_argument("uncensored_view: ground truth length mismatch");
  const auto ids = data.ids();
  const auto dates = data.dates();
  return CensoredDataset(data.features(), gt.y_star, std::vector<Censoring>(data.size(), Censoring::observed),
                         std::vector<Date>(dates.begin(), dates.end()),
                         std::vector<std::string>(ids.begin(), ids.end()));
}

GroundTruth subset(const GroundTruth& gt, std::span<const std::size_t> rows) {
  GroundTruth out;
  for (auto r : rows) {
    out.y_star.push_back(gt.y_star.at(r));
    out.true_mean.push_back(gt.true_mean.at(r));
    out.true_sigma.push_back(gt.true_sigma.at(r));
    out.threshold.push_back(gt.threshold.at(r));
  }
  return out;
}

void write_ground_truth_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                            const GroundTruth& gt) {
  if (ids.size() != gt.y_star.size()) throw std::invalid_argument("write_ground_truth_csv: length mismatch");
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "id,y_star,true_mean,true_sigma\n";
  for (std::size_t i = 0; i < ids.size(); ++i)
    out << detail::quote_csv(ids[i]) << ',' << detail::format_double(gt.y_star[i]) << ','
        << detail::format_double(gt.true_mean[i]) << ',' << detail::format_double(gt.true_sigma[i]) << '\n';
}

GroundTruthTable read_ground_truth_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path.string());
  GroundTruthTable t;
  std::string line;
  if (!std::getline(in, line) ||
      detail::split_csv_line(detail::trim(line)) != std::vector<std::string>{"id", "y_star", "true_mean", "true_sigma"})
    throw LoadError(path.string(), 1, "expected header id,y_star,true_mean,true_sigma");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv_line(detail::trim(line));
    if (f.size() != 4) throw LoadError(path.string(), line_no, "expected 4 fields");
    const auto y = detail::parse_double(f[1]);
    const auto m = detail::parse_double(f[2]);
    const auto s = detail::parse_double(f[3]);
    if (!y || !m || !s) throw LoadError(path.string(), line_no, "bad number");
    t.ids.push_back(f[0]);
    t.truth.y_star.push_back(*y);
    t.truth.true_mean.push_back(*m);
    t.truth.true_sigma.push_back(*s);
    t.truth.threshold.push_back(std::numeric_limits<double>::quiet_NaN());
  }
  return t;
}

void to_json(json& j, const SynthSpec& s) {
  json mean = {{"kind", mean_name(s.mean.kind)}, {"bias", s.mean.bias}, {"amplitude", s.mean.amplitude},
               {"teacher_seed", s.mean.teacher_seed}, {"teacher_hidden", s.mean.teacher_hidden}};
  if (!s.mean.weights.empty()) mean["weights"] = s.mean.weights;
  json noise = s.noise.kind == NoiseKind::constant
                   ? json{{"kind", "constant"}, {"sigma", s.noise.sigma}}
                   : json{{"kind", "logistic"}, {"a", s.noise.a}, {"b", s.noise.b}, {"c", s.noise.c}};
  json censor = {{"kind", censor_name(s.censor.kind)}};
  switch (s.censor.kind) {
    case CensorKind::none: break;
    case CensorKind::fixed_left:
      censor["threshold"] = std::isfinite(s.censor.threshold) ? json(s.censor.threshold) : json(nullptr);
      break;
    case CensorKind::quantile_left: censor["q"] = s.censor.q_left; break;
    case CensorKind::mixed:
      censor["q_left"] = s.censor.q_left;
      censor["q_right"] = s.censor.q_right;
      break;
  }
  j = {{"n_points", s.n_points}, {"feature_dim", s.feature_dim}, {"feature_low", s.feature_low},
       {"feature_high", s.feature_high}, {"mean", mean}, {"noise", noise}, {"censor", censor},
       {"drift", s.drift}, {"start_date", s.start_date}};
}

void from_json(const json& j, SynthSpec& s) {
  SynthSpec d;
  s.n_points = j.value("n_points", d.n_points);
  s.feature_dim = j.value("feature_dim", d.feature_dim);
  s.feature_low = j.value("feature_low", d.feature_low);
  s.feature_high = j.value("feature_high", d.feature_high);
  s.drift = j.value("drift", d.drift);
  s.start_date = j.value("start_date", d.start_date);

  s.mean = d.mean;
  if (j.contains("mean")) {
    const auto& m = j.at("mean");
    const std::string kind = m.value("kind", std::string("linear"));
    if (kind == "linear") s.mean.kind = MeanKind::linear;
    else if (kind == "sine_mixture") s.mean.kind = MeanKind::sine_mixture;
    else if (kind == "mlp_teacher") s.mean.kind = MeanKind::mlp_teacher;
    else throw ConfigError("synth: unknown mean kind " + kind);
    s.mean.weights = m.value("weights", std::vector<double>{});
    s.mean.bias = m.value("bias", d.mean.bias);
    s.mean.amplitude = m.value("amplitude", d.mean.amplitude);
    s.mean.teacher_seed = m.value("teacher_seed", d.mean.teacher_seed);
    s.mean.teacher_hidden = m.value("teacher_hidden", d.mean.teacher_hidden);
  }

  s.noise = d.noise;
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    const std::string kind = n.value("kind", std::string("constant"));
    if (kind == "constant") s.noise.kind = NoiseKind::constant;
    else if (kind == "logistic") s.noise.kind = NoiseKind::logistic;
    else throw ConfigError("synth: unknown noise kind " + kind);
    s.noise.sigma = n.value("sigma", d.noise.sigma);
    s.noise.a = n.value("a", d.noise.a);
    s.noise.b = n.value("b", d.noise.b);
    s.noise.c = n.value("c", d.noise.c);
  }

  s.censor = d.censor;
  if (j.contains("censor")) {
    const auto& c = j.at("censor");
    const std::string kind = c.value("kind", std::string("none"));
    if (kind == "none") {
      s.censor.kind = CensorKind::none;
    } else if (kind == "fixed_left") {
      s.censor.kind = CensorKind::fixed_left;
      const auto& t = c.at("threshold");
      s.censor.threshold = t.is_null() ? std::numeric_limits<double>::infinity() : t.get<double>();
    } else if (kind == "quantile_left") {
      s.censor.kind = CensorKind::quantile_left;
      s.censor.q_left = c.at("q").get<double>();
    } else if (kind == "mixed") {
      s.censor.kind = CensorKind::mixed;
      s.censor.q_left = c.at("q_left").get<double>();
      s.censor.q_right = c.at("q_right").get<double>();
    } else {
      throw ConfigError("synth: unknown censor kind " + kind);
    }
  }
}

}  // namespace censura
