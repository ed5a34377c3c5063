#include "censura/models.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "censura/error.hpp"
#include "censura/log.hpp"
#include "censura/losses.hpp"
#include "censura/network_io.hpp"
#include "censura/parallel.hpp"
#include "censura/random.hpp"

namespace censura {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<ModelKind, std::string_view>, 7> kKindNames{{
    {ModelKind::random_forest, "random_forest"},
    {ModelKind::ensemble, "ensemble"},
    {ModelKind::mc_dropout, "mc_dropout"},
    {ModelKind::bayes_by_backprop, "bayes_by_backprop"},
    {ModelKind::gaussian, "gaussian"},
    {ModelKind::gaussian_ensemble, "gaussian_ensemble"},
    {ModelKind::evidential, "evidential"},
}};

// Population mean and variance by two passes, with one refinement of the mean
// so identical members give exactly zero variance. K = 1 gives variance 0.
std::pair<double, double> mean_and_variance(std::span<const double> v) {
  const auto n = static_cast<double>(v.size());
  double sum = 0.0;
  for (double x : v) sum += x;
  double mean = sum / n;
  double residual = 0.0;
  for (double x : v) residual += x - mean;
  mean += residual / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, ss / static_cast<double>(v.size())};
}

constexpr std::size_t kPredictChunk = 1024;

// Table 2 grid for the forest baseline.
constexpr std::array<std::size_t, 5> kForestEstimators{50, 100, 250, 500, 1000};
constexpr std::array<double, 5> kForestLeaf{2, 10, 0.25, 0.5, 0.75};
constexpr std::array<double, 6> kForestSplit{1, 25, 50, 100, 250, 500};

double forest_mse(const RandomForest& forest, const CensoredDataset& data) {
  const Eigen::MatrixXd per_tree = forest.tree_predictions(data.features());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < per_tree.rows(); ++i) {
    const double r = data.labels()[static_cast<std::size_t>(i)] - per_tree.row(i).mean();
    sum += r * r;
  }
  return sum / static_cast<double>(per_tree.rows());
}

ForestHyper search_forest(const CensoredDataset& train, const CensoredDataset& validation, std::uint64_t seed) {
  const CensoredDataset& monitor = validation.empty() ? train : validation;
  ForestHyper best;
  double best_mse = std::numeric_limits<double>::infinity();
  for (auto n : kForestEstimators)
    for (double leaf : kForestLeaf)
      for (double split : kForestSplit) {
        const ForestHyper h{n, {leaf}, {split}};
        const double mse = forest_mse(forest_fit(h, train.features(), train.labels(), seed), monitor);
        if (mse < best_mse) {
          best_mse = mse;
          best = h;
        }
      }
  return best;
}

}  // namespace

std::string_view to_string(ModelKind k) noexcept {
  for (const auto& [kind, name] : kKindNames)
    if (kind == k) return name;
  return "unknown";
}

ModelKind model_from_string(std::string_view s) {
  for (const auto& [kind, name] : kKindNames)
    if (name == s) return kind;
  throw std::invalid_argument("unknown model kind: " + std::string(s));
}

const std::vector<ModelKind>& all_model_kinds() {
  static const std::vector<ModelKind> kinds = [] {
    std::vector<ModelKind> v;
    for (const auto& entry : kKindNames) v.push_back(entry.first);
    return v;
  }();
  return kinds;
}

HeadKind model_head(ModelKind k) {
  switch (k) {
    case ModelKind::ensemble:
    case ModelKind::mc_dropout:
    case ModelKind::bayes_by_backprop:
      return HeadKind::scalar;
    case ModelKind::gaussian:
    case ModelKind::gaussian_ensemble:
      return HeadKind::gaussian;
    case ModelKind::evidential:
      return HeadKind::evidential;
    case ModelKind::random_forest:
      break;
  }
  throw std::invalid_argument("random_forest has no network head");
}

LossKind model_loss(ModelKind k) {
  switch (k) {
    case ModelKind::ensemble:
    case ModelKind::mc_dropout:
      return LossKind::censored_mse;
    case ModelKind::bayes_by_backprop:
      return LossKind::bbb;
    case ModelKind::gaussian:
    case ModelKind::gaussian_ensemble:
      return LossKind::censored_nll;
    case ModelKind::evidential:
      return LossKind::evidential;
    case ModelKind::random_forest:
      break;
  }
  throw std::invalid_argument("random_forest has no network loss");
}

bool model_uses_censored_labels(ModelKind k) noexcept {
  return k != ModelKind::random_forest && k != ModelKind::evidential;
}

LossSpec ModelSettings::loss() const {
  LossSpec l;
  l.kind = model_loss(kind);
  l.evidential_lambda = evidential_lambda;
  l.prior_std = prior_std;
  l.kl_weight = kl_weight;
  return l;
}

NetworkSpec ModelSettings::resolved_network(int input_dim) const {
  NetworkSpec s = network;
  s.input_dim = input_dim;
  s.head = model_head(kind);
  s.variational = kind == ModelKind::bayes_by_backprop;
  return s;
}

int ModelSettings::member_count() const noexcept {
  switch (kind) {
    case ModelKind::random_forest:
      return 0;
    case ModelKind::ensemble:
      return ensemble_members;
    case ModelKind::gaussian_ensemble:
      return gaussian_ensemble_members;
    default:
      return 1;
  }
}

void ModelSettings::validate() const {
  if (kind == ModelKind::ensemble && ensemble_members < 2)
    throw std::invalid_argument("ensemble needs at least 2 members");
  if (kind == ModelKind::gaussian_ensemble && gaussian_ensemble_members < 2)
    throw std::invalid_argument("gaussian_ensemble needs at least 2 members");
  if ((kind == ModelKind::mc_dropout || kind == ModelKind::bayes_by_backprop) && mc_samples < 2)
    throw std::invalid_argument("mc_samples must be at least 2");
  if (search_epochs < 1) throw std::invalid_argument("search_epochs must be positive");
  if (kind == ModelKind::random_forest) {
    if (forest.n_estimators == 0) throw std::invalid_argument("n_estimators must be positive");
    return;
  }
  train.validate();
  check_compatible(resolved_network(std::max(network.input_dim, 1)), loss());
}

std::size_t TrainedModel::input_dim() const noexcept {
  return kind == ModelKind::random_forest ? forest.input_dim : static_cast<std::size_t>(network.input_dim);
}

std::pair<double, double> ensemble_aggregate(std::span<const double> member_predictions) {
  if (member_predictions.size() < 2) throw std::invalid_argument("ensemble_aggregate needs at least 2 members");
  return mean_and_variance(member_predictions);
}

UncertainPrediction gaussian_ensemble_aggregate(std::span<const GaussianParams> members) {
  if (members.size() < 2) throw std::invalid_argument("gaussian_ensemble_aggregate needs at least 2 members");
  std::vector<double> means;
  means.reserve(members.size());
  double variance_sum = 0.0;
  for (const auto& m : members) {
    means.push_back(m.mean());
    variance_sum += m.variance();
  }
  const auto [mean, spread] = mean_and_variance(means);
  return {mean, variance_sum / static_cast<double>(members.size()), spread};
}

TrainedModel train_model(const ModelSettings& settings, const CensoredDataset& train,
                         const CensoredDataset& validation, bool use_censored, std::uint64_t seed) {
  settings.validate();
  if (train.empty()) throw std::invalid_argument("train_model: empty training set");

  const bool censored_aware = model_uses_censored_labels(settings.kind);
  if (use_censored && !censored_aware && train.n_censored() > 0)
    log::warning(std::string(to_string(settings.kind)) + " trains on observed labels only; use_censored ignored");
  const bool keep_censored = use_censored && censored_aware;
  const CensoredDataset tr = keep_censored ? train : observed_subset(train);
  const CensoredDataset va = keep_censored || validation.empty() ? validation : observed_subset(validation);
  if (tr.empty())
    throw TrainingError(std::string(to_string(settings.kind)) + ": no observed labels in the training set");

  TrainedModel model;
  model.kind = settings.kind;
  model.settings = settings;
  model.metadata = {train.content_hash(), seed,     use_censored, tr.size(), va.size(), tr.n_censored(),
                    derive_seed(seed, "sampling")};

  if (settings.kind == ModelKind::random_forest) {
    ForestHyper hyper = settings.forest;
    if (settings.grid_search) hyper = search_forest(tr, va, derive_seed(seed, "search"));
    model.settings.forest = hyper;
    model.forest = forest_fit(hyper, tr.features(), tr.labels(), derive_seed(seed, "forest"));
    return model;
  }

  const LossSpec loss = settings.loss();
  NetworkSpec spec = settings.resolved_network(static_cast<int>(tr.dim()));
  TrainConfig config = settings.train;
  if (settings.grid_search) {
    TrainConfig search_config = config;
    search_config.seed = derive_seed(seed, "search");
    const GridResult g = grid_search(settings.grid, spec, search_config, loss, tr, va, settings.search_epochs);
    spec = g.spec;
    config.learning_rate = g.config.learning_rate;
    config.scheduler_factor = g.config.scheduler_factor;
    model.settings.network = spec;
    model.settings.train = config;
  }
  model.network = spec;
  model.train_config = config;

  const auto k = static_cast<std::size_t>(settings.member_count());
  model.member_seeds.resize(k);
  for (std::size_t i = 0; i < k; ++i) model.member_seeds[i] = derive_seed(seed, "member", i);
  std::vector<FitResult> fits(k);
  parallel_for(k, [&](std::size_t i) {
    TrainConfig c = config;
    c.seed = model.member_seeds[i];
    fits[i] = fit(spec, c, loss, tr, va);
  });
  for (auto& f : fits) {
    model.members.push_back(std::move(f.state));
    model.logs.push_back(std::move(f.log));
  }
  return model;
}

std::vector<UncertainPrediction> predict(const TrainedModel& model, const Eigen::MatrixXd& features,
                                         std::optional<std::uint64_t> sampling_seed) {
  if (static_cast<std::size_t>(features.cols()) != model.input_dim())
    throw std::invalid_argument("predict: feature width " + std::to_string(features.cols()) +
                                " does not match the trained width " + std::to_string(model.input_dim()));
  const auto m = static_cast<std::size_t>(features.rows());
  std::vector<UncertainPrediction> out(m);
  if (m == 0) return out;

  if (model.kind == ModelKind::random_forest) {
    const Eigen::MatrixXd per_tree = model.forest.tree_predictions(features);
    std::vector<double> row(static_cast<std::size_t>(per_tree.cols()));
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t t = 0; t < row.size(); ++t) row[t] = per_tree(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t));
      const auto [mean, var] = mean_and_variance(row);
      out[i] = {mean, std::nullopt, var};
    }
    return out;
  }

  if (model.members.empty()) throw std::invalid_argument("predict: model has no trained members");
  const NetworkSpec& spec = model.network;
  CounterRng unused(0);

  switch (model.kind) {
    case ModelKind::gaussian: {
      const Eigen::MatrixXd o = forward(model.members.front(), spec, features, Mode::eval, unused);
      for (std::size_t i = 0; i < m; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        out[i] = {o(r, 0), std::max(o(r, 1), kVarianceFloor), std::nullopt};
      }
      return out;
    }
    case ModelKind::evidential: {
      const Eigen::MatrixXd o = forward(model.members.front(), spec, features, Mode::eval, unused);
      for (std::size_t i = 0; i < m; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const UncertaintyPair u = evidential_uncertainties({o(r, 0), o(r, 1), o(r, 2), o(r, 3)});
        out[i] = {o(r, 0), std::max(u.aleatoric, kVarianceFloor), u.epistemic};
      }
      return out;
    }
    case ModelKind::ensemble:
    case ModelKind::gaussian_ensemble: {
      const std::size_t k = model.members.size();
      std::vector<Eigen::MatrixXd> outs(k);
      parallel_for(k, [&](std::size_t j) {
        CounterRng none(0);
        outs[j] = forward(model.members[j], spec, features, Mode::eval, none);
      });
      std::vector<double> means(k);
      std::vector<GaussianParams> params;
      params.reserve(k);
      for (std::size_t i = 0; i < m; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        if (model.kind == ModelKind::ensemble) {
          for (std::size_t j = 0; j < k; ++j) means[j] = outs[j](r, 0);
          const auto [mean, var] = mean_and_variance(means);
          out[i] = {mean, std::nullopt, var};
        } else {
          params.clear();
          for (std::size_t j = 0; j < k; ++j) params.emplace_back(outs[j](r, 0), outs[j](r, 1));
          out[i] = k >= 2 ? gaussian_ensemble_aggregate(params)
                          : UncertainPrediction{params[0].mean(), params[0].variance(), 0.0};
        }
      }
      return out;
    }
    case ModelKind::mc_dropout:
    case ModelKind::bayes_by_backprop: {
      const std::uint64_t seed = sampling_seed.value_or(model.metadata.sampling_seed);
      const auto samples = static_cast<std::size_t>(model.settings.mc_samples);
      const std::size_t chunks = (m + kPredictChunk - 1) / kPredictChunk;
      parallel_for(chunks, [&](std::size_t c) {
        const std::size_t start = c * kPredictChunk;
        const std::size_t rows = std::min(m, start + kPredictChunk) - start;
        const Eigen::MatrixXd x = features.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(rows));
        Eigen::MatrixXd draws(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(samples));
        for (std::size_t s = 0; s < samples; ++s) {
          CounterRng rng(derive_seed(seed, {s, c}));
          draws.col(static_cast<Eigen::Index>(s)) = forward(model.members.front(), spec, x, Mode::mc_dropout, rng).col(0);
        }
        std::vector<double> row(samples);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t s = 0; s < samples; ++s)
            row[s] = draws(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s));
          const auto [mean, var] = mean_and_variance(row);
          out[start + i] = {mean, std::nullopt, var};
        }
      });
      return out;
    }
    case ModelKind::random_forest:
      break;
  }
  throw std::logic_error("predict: unhandled model kind");
}

void to_json(json& j, const HyperGrid& g) {
  j = {{"learning_rates", g.learning_rates}, {"scheduler_factors", g.scheduler_factors},
       {"hidden_layers", g.hidden_layers},   {"hidden_dims", g.hidden_dims},
       {"decreasing_dims", g.decreasing_dims}, {"dropout_rates", g.dropout_rates}};
}

void from_json(const json& j, HyperGrid& g) {
  HyperGrid d;
  g.learning_rates = j.value("learning_rates", d.learning_rates);
  g.scheduler_factors = j.value("scheduler_factors", d.scheduler_factors);
  g.hidden_layers = j.value("hidden_layers", d.hidden_layers);
  g.hidden_dims = j.value("hidden_dims", d.hidden_dims);
  g.decreasing_dims = j.value("decreasing_dims", d.decreasing_dims);
  g.dropout_rates = j.value("dropout_rates", d.dropout_rates);
}

void to_json(json& j, const ModelSettings& s) {
  j = {{"kind", std::string(to_string(s.kind))},
       {"ensemble_members", s.ensemble_members},
       {"gaussian_ensemble_members", s.gaussian_ensemble_members},
       {"mc_samples", s.mc_samples},
       {"forest", s.forest},
       {"network", s.network},
       {"train", s.train},
       {"evidential_lambda", s.evidential_lambda},
       {"prior_std", s.prior_std},
       {"kl_weight", s.kl_weight ? json(*s.kl_weight) : json(nullptr)},
       {"grid_search", s.grid_search},
       {"grid", s.grid},
       {"search_epochs", s.search_epochs}};
}

void from_json(const json& j, ModelSettings& s) {
  ModelSettings d;
  s.kind = model_from_string(j.at("kind").get<std::string>());
  s.ensemble_members = j.value("ensemble_members", d.ensemble_members);
  s.gaussian_ensemble_members = j.value("gaussian_ensemble_members", d.gaussian_ensemble_members);
  s.mc_samples = j.value("mc_samples", d.mc_samples);
  s.forest = j.contains("forest") ? j.at("forest").get<ForestHyper>() : d.forest;
  s.network = j.contains("network") ? j.at("network").get<NetworkSpec>() : d.network;
  s.train = j.contains("train") ? j.at("train").get<TrainConfig>() : d.train;
  s.evidential_lambda = j.value("evidential_lambda", d.evidential_lambda);
  s.prior_std = j.value("prior_std", d.prior_std);
  if (j.contains("kl_weight") && !j.at("kl_weight").is_null()) s.kl_weight = j.at("kl_weight").get<double>();
  else s.kl_weight.reset();
  s.grid_search = j.value("grid_search", d.grid_search);
  s.grid = j.contains("grid") ? j.at("grid").get<HyperGrid>() : d.grid;
  s.search_epochs = j.value("search_epochs", d.search_epochs);
}

void to_json(json& j, const TrainingMetadata& m) {
  j = {{"dataset_hash", m.dataset_hash}, {"seed", m.seed},
       {"use_censored", m.use_censored}, {"n_train", m.n_train},
       {"n_validation", m.n_validation}, {"n_train_censored", m.n_train_censored},
       {"sampling_seed", m.sampling_seed}};
}

void from_json(const json& j, TrainingMetadata& m) {
  m.dataset_hash = j.at("dataset_hash").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.use_censored = j.at("use_censored").get<bool>();
  m.n_train = j.at("n_train").get<std::size_t>();
  m.n_validation = j.at("n_validation").get<std::size_t>();
  m.n_train_censored = j.value("n_train_censored", std::size_t{0});
  m.sampling_seed = j.at("sampling_seed").get<std::uint64_t>();
}

void to_json(json& j, const TrainedModel& m) {
  j = {{"format", "censura-model"},
       {"version", 1},
       {"kind", std::string(to_string(m.kind))},
       {"settings", m.settings},
       {"metadata", m.metadata}};
  if (m.kind == ModelKind::random_forest) {
    j["forest"] = m.forest;
  } else {
    j["network"] = m.network;
    j["train_config"] = m.train_config;
    j["member_seeds"] = m.member_seeds;
    j["members"] = m.members;
  }
}

void from_json(const json& j, TrainedModel& m) {
  if (j.value("format", std::string()) != "censura-model") throw ConfigError("not a censura model artifact");
  if (j.value("version", 0) != 1) throw ConfigError("unsupported model artifact version");
  m = TrainedModel{};
  m.kind = model_from_string(j.at("kind").get<std::string>());
  m.settings = j.at("settings").get<ModelSettings>();
  m.metadata = j.at("metadata").get<TrainingMetadata>();
  if (m.kind == ModelKind::random_forest) {
    m.forest = j.at("forest").get<RandomForest>();
  } else {
    m.network = j.at("network").get<NetworkSpec>();
    m.train_config = j.at("train_config").get<TrainConfig>();
    m.member_seeds = j.at("member_seeds").get<std::vector<std::uint64_t>>();
    m.members = j.at("members").get<std::vector<NetworkState>>();
    if (m.members.empty()) throw ConfigError("model artifact has no members");
  }
}

void save_model(const std::filesystem::path& path, const TrainedModel& m) { write_json_file(path, m); }

TrainedModel load_model(const std::filesystem::path& path) {
  try {
    return read_json_file(path).get<TrainedModel>();
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": malformed model artifact: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace censura
