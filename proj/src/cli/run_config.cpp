#include "censura/cli/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <string_view>

#include "censura/error.hpp"
#include "censura/log.hpp"
#include "censura/network_io.hpp"

namespace censura::cli {

using nlohmann::json;

namespace {

LabelTransform transform_from_string(const std::string& s) {
  if (s == "none") return LabelTransform::none;
  if (s == "log10") return LabelTransform::log10;
  if (s == "neg_log10_molar") return LabelTransform::neg_log10_molar;
  throw ConfigError("unknown label transform: " + s);
}

const char* transform_name(LabelTransform t) {
  switch (t) {
    case LabelTransform::none: return "none";
    case LabelTransform::log10: return "log10";
    case LabelTransform::neg_log10_molar: return "neg_log10_molar";
  }
  return "none";
}

ColumnSchema parse_schema(const json& j) {
  ColumnSchema s;
  s.id_column = j.value("id_column", s.id_column);
  s.date_column = j.value("date_column", s.date_column);
  s.value_column = j.value("value_column", s.value_column);
  s.relation_column = j.value("relation_column", s.relation_column);
  s.dense_prefix = j.value("dense_prefix", s.dense_prefix);
  s.sparse_column = j.value("sparse_column", s.sparse_column);
  if (j.contains("sparse_dim") && !j.at("sparse_dim").is_null()) s.sparse_dim = j.at("sparse_dim").get<std::size_t>();
  s.transform = transform_from_string(j.value("transform", std::string("none")));
  s.molar_scale = j.value("molar_scale", s.molar_scale);
  return s;
}

// Rejects keys outside the known set so typos do not silently fall back to
// defaults.
void check_keys(const json& j, std::initializer_list<std::string_view> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: " + where + " must be an object");
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("config: unknown key \"" + key + "\" in " + where);
}

void check_synth_keys(const json& j) {
  check_keys(j, {"n_points", "feature_dim", "feature_low", "feature_high", "mean", "noise", "censor", "drift",
                 "start_date", "seed"},
             "data.synth");
  if (j.contains("mean"))
    check_keys(j.at("mean"), {"kind", "weights", "bias", "amplitude", "teacher_seed", "teacher_hidden"},
               "data.synth.mean");
  if (j.contains("noise")) check_keys(j.at("noise"), {"kind", "sigma", "a", "b", "c"}, "data.synth.noise");
  if (j.contains("censor"))
    check_keys(j.at("censor"), {"kind", "threshold", "q", "q_left", "q_right"}, "data.synth.censor");
}

void check_model_keys(const json& m) {
  check_keys(m, {"kind", "ensemble_members", "gaussian_ensemble_members", "mc_samples", "forest", "network", "train",
                 "evidential_lambda", "prior_std", "kl_weight", "grid_search", "grid", "search_epochs"},
             "models[]");
  if (m.contains("forest"))
    check_keys(m.at("forest"), {"n_estimators", "min_samples_leaf", "min_samples_split"}, "models[].forest");
  if (m.contains("network"))
    check_keys(m.at("network"),
               {"input_dim", "hidden_layers", "hidden_dim", "decreasing_dim", "dropout_rate", "head", "variational"},
               "models[].network");
  if (m.contains("train"))
    check_keys(m.at("train"),
               {"learning_rate", "scheduler_factor", "scheduler_patience", "weight_decay", "decoupled_weight_decay",
                "max_epochs", "batch_size", "early_stop_patience", "seed", "rho_init"},
               "models[].train");
  if (m.contains("grid"))
    check_keys(m.at("grid"),
               {"learning_rates", "scheduler_factors", "hidden_layers", "hidden_dims", "decreasing_dims",
                "dropout_rates"},
               "models[].grid");
}

void check_config_keys(const json& j) {
  check_keys(j, {"data", "models", "use_censored", "repeats", "seed", "settings", "output_dir", "evaluation",
                 "write_predictions"},
             "the top level");
  if (j.contains("data")) {
    const json& data = j.at("data");
    check_keys(data, {"csv", "schema", "aggregate_duplicates", "control_id", "synth"}, "data");
    if (data.contains("schema"))
      check_keys(data.at("schema"),
                 {"id_column", "date_column", "value_column", "relation_column", "dense_prefix", "sparse_column",
                  "sparse_dim", "transform", "molar_scale"},
                 "data.schema");
    if (data.contains("synth")) check_synth_keys(data.at("synth"));
  }
  if (j.contains("models") && j.at("models").is_array())
    for (const auto& m : j.at("models"))
      if (!m.is_string()) check_model_keys(m);
  if (j.contains("evaluation"))
    check_keys(j.at("evaluation"), {"bins", "variance_source", "one_sided", "alpha"}, "evaluation");
}

json schema_json(const ColumnSchema& s) {
  return {{"id_column", s.id_column},
          {"date_column", s.date_column},
          {"value_column", s.value_column},
          {"relation_column", s.relation_column},
          {"dense_prefix", s.dense_prefix},
          {"sparse_column", s.sparse_column},
          {"sparse_dim", s.sparse_dim ? json(*s.sparse_dim) : json(nullptr)},
          {"transform", transform_name(s.transform)},
          {"molar_scale", s.molar_scale}};
}

}  // namespace

ModelSettings RunConfig::model(ModelKind kind) const {
  for (const auto& m : models)
    if (m.kind == kind) return m;
  ModelSettings s;
  s.kind = kind;
  return s;
}

void RunConfig::validate() const {
  if (csv.has_value() == synth.has_value()) throw ConfigError("config: give exactly one of data.csv or data.synth");
  if (csv && !std::filesystem::exists(*csv)) throw ConfigError("config: data file not found: " + csv->string());
  if (synth) synth->validate();
  if (repeats < 1) throw ConfigError("config: repeats must be at least 1");
  if (use_censored.empty()) throw ConfigError("config: use_censored lists no arms");
  if (settings.empty()) throw ConfigError("config: no settings selected");
  for (int s : settings)
    if (s < 1 || s > 3) throw ConfigError("config: settings must be 1, 2 or 3");
  if (bins < 1) throw ConfigError("config: bins must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("config: alpha must lie in (0, 1)");
  for (const auto& m : models) {
    try {
      m.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: model ") + std::string(to_string(m.kind)) + ": " + e.what());
    }
  }
}

RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir) {
  RunConfig c;
  try {
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    check_config_keys(j);
    const json data = j.value("data", json::object());
    if (data.contains("csv")) {
      std::filesystem::path p = data.at("csv").get<std::string>();
      c.csv = p.is_absolute() ? p : base_dir / p;
    }
    if (data.contains("schema")) c.schema = parse_schema(data.at("schema"));
    c.aggregate_duplicates = data.value("aggregate_duplicates", false);
    if (data.contains("control_id") && !data.at("control_id").is_null())
      c.control_id = data.at("control_id").get<std::string>();
    if (data.contains("synth")) {
      c.synth = data.at("synth").get<SynthSpec>();
      c.synth_seed = data.at("synth").value("seed", std::uint64_t{0});
    }

    if (j.contains("models"))
      for (const auto& m : j.at("models")) {
        if (m.is_string()) {
          ModelSettings s;
          s.kind = model_from_string(m.get<std::string>());
          c.models.push_back(s);
        } else {
          c.models.push_back(m.get<ModelSettings>());
        }
      }
    if (j.contains("use_censored")) c.use_censored = j.at("use_censored").get<std::vector<bool>>();
    c.repeats = j.value("repeats", c.repeats);
    c.seed = j.value("seed", c.seed);
    if (j.contains("settings")) c.settings = j.at("settings").get<std::vector<int>>();
    if (j.contains("output_dir")) {
      std::filesystem::path p = j.at("output_dir").get<std::string>();
      c.output_dir = p.is_absolute() ? p : base_dir / p;
    } else {
      c.output_dir = base_dir / c.output_dir;
    }
    const json ev = j.value("evaluation", json::object());
    c.bins = ev.value("bins", c.bins);
    if (ev.contains("variance_source") && !ev.at("variance_source").is_null())
      c.variance_source = variance_source_from_string(ev.at("variance_source").get<std::string>());
    c.one_sided = ev.value("one_sided", c.one_sided);
    c.alpha = ev.value("alpha", c.alpha);
    c.write_predictions = j.value("write_predictions", c.write_predictions);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  const json j = read_json_file(path);
  return parse_run_config(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

json to_json(const RunConfig& c) {
  json data = json::object();
  if (c.csv) {
    data["csv"] = c.csv->string();
    data["schema"] = schema_json(c.schema);
    data["aggregate_duplicates"] = c.aggregate_duplicates;
    data["control_id"] = c.control_id ? json(*c.control_id) : json(nullptr);
  }
  if (c.synth) {
    json s = *c.synth;
    s["seed"] = c.synth_seed;
    data["synth"] = s;
  }
  return {{"data", data},
          {"models", c.models},
          {"use_censored", c.use_censored},
          {"repeats", c.repeats},
          {"seed", c.seed},
          {"settings", c.settings},
          {"output_dir", c.output_dir.string()},
          {"evaluation",
           {{"bins", c.bins},
            {"variance_source", c.variance_source ? json(std::string(to_string(*c.variance_source))) : json(nullptr)},
            {"one_sided", c.one_sided},
            {"alpha", c.alpha}}},
          {"write_predictions", c.write_predictions}};
}

LoadedData load_data(const RunConfig& c) {
  LoadedData out;
  if (c.synth) {
    SynthResult r = generate(*c.synth, c.synth_seed);
    out.data = std::move(r.data);
    out.truth = std::move(r.truth);
    return out;
  }
  CensoredDataset ds = load_csv(*c.csv, c.schema);
  if (c.control_id) {
    ControlExtraction ctl = extract_control(ds, *c.control_id);
    ds = std::move(ctl.data);
    out.control_stddev = ctl.control_stddev;
  }
  if (c.aggregate_duplicates) {
    AggregatedDataset agg = aggregate_duplicates(ds);
    if (agg.stats.groups_merged > 0)
      log::info("merged " + std::to_string(agg.stats.groups_merged) + " duplicate groups");
    ds = std::move(agg.data);
  }
  out.data = std::move(ds);
  return out;
}

}  // namespace censura::cli
