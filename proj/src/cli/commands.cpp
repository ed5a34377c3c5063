#include "censura/cli/commands.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>

#include "censura/cli/run_config.hpp"
#include "censura/error.hpp"
#include "censura/log.hpp"
#include "censura/network_io.hpp"
#include "censura/random.hpp"
#include "censura/synth.hpp"
#include "../csv_util.hpp"

namespace censura::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::string arm_name(bool censored) { return censored ? "censored" : "observed"; }

std::string stem_for(ModelKind kind, int setting, bool censored) {
  return std::string(to_string(kind)) + "_s" + std::to_string(setting) + "_" + (censored ? "on" : "off");
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::vector<ModelKind> configured_kinds(const RunConfig& c) {
  std::vector<ModelKind> kinds;
  for (const auto& m : c.models) kinds.push_back(m.kind);
  if (kinds.empty()) kinds.push_back(ModelKind::gaussian);
  return kinds;
}

}  // namespace

int report_exception(std::ostream& err) {
  try {
    throw;
  } catch (const ConfigError& e) {
    err << "censura: configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const LoadError& e) {
    err << "censura: input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NotFoundError& e) {
    err << "censura: not found: " << e.what() << '\n';
    return kExitConfig;
  } catch (const SplitError& e) {
    err << "censura: split error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const TrainingError& e) {
    err << "censura: training error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "censura: numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const SearchError& e) {
    err << "censura: numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    err << "censura: invalid argument: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "censura: error: " << e.what() << '\n';
    return kExitFailure;
  }
}

void cmd_split(const SplitOptions& o, std::ostream& msg) {
  const CensoredDataset ds = load_csv(o.input);
  const TemporalSettings split = temporal_split(ds);
  ensure_dir(o.out);

  json folds = json::array();
  for (std::size_t f = 0; f < split.folds.size(); ++f) {
    const auto& rows = split.folds[f];
    std::size_t observed = 0;
    for (auto r : rows) observed += ds.masks()[r] == Censoring::observed ? 1 : 0;
    json ids = json::array();
    for (auto r : rows) ids.push_back(ds.ids()[r]);
    folds.push_back({{"fold", f + 1},
                     {"n_rows", rows.size()},
                     {"n_observed", observed},
                     {"n_censored", rows.size() - observed},
                     {"first_date", rows.empty() ? "" : format_iso_date(ds.dates()[rows.front()])},
                     {"last_date", rows.empty() ? "" : format_iso_date(ds.dates()[rows.back()])},
                     {"ids", std::move(ids)}});
  }
  json settings = json::array();
  for (int s = 1; s <= 3; ++s) {
    const auto& st = split.settings[static_cast<std::size_t>(s - 1)];
    const SplitData sd = materialize_setting(ds, split, s);
    const std::string prefix = "setting" + std::to_string(s) + "_";
    write_csv(o.out / (prefix + "train.csv"), sd.train);
    write_csv(o.out / (prefix + "validation.csv"), sd.validation);
    write_csv(o.out / (prefix + "test.csv"), sd.test);
    settings.push_back({{"setting", s},
                        {"train_folds", st.train_folds},
                        {"validation_fold", st.validation_fold},
                        {"test_fold", st.test_fold},
                        {"n_train", sd.train.size()},
                        {"n_validation", sd.validation.size()},
                        {"n_test", sd.test.size()}});
  }
  write_json_file(o.out / "split.json", {{"input", o.input.string()},
                                          {"dataset_hash", ds.content_hash()},
                                          {"n_rows", ds.size()},
                                          {"n_censored", ds.n_censored()},
                                          {"folds", std::move(folds)},
                                          {"settings", std::move(settings)}});
  msg << "split " << ds.size() << " rows into 5 folds under " << o.out.string() << '\n';
}

void cmd_synth(const SynthOptions& o, std::ostream& msg) {
  SynthSpec spec;
  try {
    spec = read_json_file(o.spec).get<SynthSpec>();
  } catch (const json::exception& e) {
    throw ConfigError(o.spec.string() + ": " + e.what());
  }
  const SynthResult r = generate(spec, o.seed);
  ensure_dir(o.out);
  write_csv(o.out / "data.csv", r.data);
  write_ground_truth_csv(o.out / "ground_truth.csv", r.data.ids(), r.truth);
  json resolved = spec;
  resolved["seed"] = o.seed;
  write_json_file(o.out / "spec.json", resolved);
  msg << "generated " << r.data.size() << " rows (" << r.data.n_censored() << " censored) under " << o.out.string()
      << '\n';
}

TrainOutputs cmd_train(const TrainOptions& o, std::ostream& msg) {
  if (o.setting < 1 || o.setting > 3) throw ConfigError("--setting must be 1, 2 or 3");
  const RunConfig cfg = load_run_config(o.config);
  const LoadedData loaded = load_data(cfg);
  const TemporalSettings split = temporal_split(loaded.data);
  const SplitData sd = materialize_setting(loaded.data, split, o.setting);
  const std::uint64_t seed = o.seed.value_or(cfg.seed);
  const ModelSettings settings = cfg.model(o.model);

  const TrainedModel model = train_model(settings, sd.train, sd.validation, o.censored, seed);

  const fs::path dir = o.out.value_or(cfg.output_dir);
  ensure_dir(dir);
  const std::string stem = stem_for(o.model, o.setting, o.censored);
  TrainOutputs out{dir / (stem + ".model.json"), dir / (stem + ".log.json"),
                   dir / ("setting" + std::to_string(o.setting) + "_test.csv")};
  save_model(out.model, model);
  write_json_file(out.log, {{"model", std::string(to_string(o.model))},
                            {"setting", o.setting},
                            {"use_censored", o.censored},
                            {"seed", seed},
                            {"member_seeds", model.member_seeds},
                            {"config", to_json(cfg)},
                            {"members", model.logs}});
  write_csv(out.test_csv, sd.test);
  msg << "trained " << to_string(o.model) << " on setting " << o.setting << " (" << sd.train.size()
      << " rows, censored " << (o.censored ? "on" : "off") << "): " << out.model.string() << '\n';
  return out;
}

EvaluationReport cmd_evaluate(const EvaluateOptions& o, std::ostream& msg) {
  if (o.model.has_value() == o.predictions.has_value())
    throw ConfigError("evaluate: give exactly one of --model or --predictions");
  const CensoredDataset test = load_csv(o.test);
  std::vector<UncertainPrediction> preds;
  std::string name;
  json context = {{"test", o.test.string()}, {"test_hash", test.content_hash()}, {"bins", o.bins}};

  if (o.model) {
    const TrainedModel model = load_model(*o.model);
    preds = predict(model, test.features(), o.sampling_seed);
    name = std::string(to_string(model.kind));
    context["model"] = o.model->string();
    context["metadata"] = model.metadata;
    context["sampling_seed"] = o.sampling_seed.value_or(model.metadata.sampling_seed);
  } else {
    const PredictionTable table = read_predictions_csv(*o.predictions);
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < table.ids.size(); ++i) index.emplace(table.ids[i], i);
    preds.reserve(test.size());
    for (const auto& id : test.ids()) {
      const auto it = index.find(id);
      if (it == index.end()) throw ConfigError("evaluate: no prediction for id " + id);
      preds.push_back(table.predictions[it->second]);
    }
    name = o.predictions->stem().string();
    context["predictions"] = o.predictions->string();
  }

  EvaluationOptions eo;
  eo.source = o.source;
  eo.n_bins = o.bins;
  eo.model_name = name;
  EvaluationReport report = evaluate(preds, {test.labels(), test.masks()}, eo);
  report.context = std::move(context);

  ensure_dir(o.out);
  write_json_file(o.out / "report.json", report);
  write_calibration_csv(o.out / "calibration.csv", report.calibration);
  write_ence_csv(o.out / "ence_bins.csv", report.bins);
  msg << std::setprecision(6) << name << ": mse " << report.mse << ", nll " << report.nll << ", ence " << report.ence
      << " (" << report.n_points << " points, " << report.n_censored << " censored)\n";
  return report;
}

json cmd_ablate(const AblateOptions& o, std::ostream& msg) {
  const RunConfig cfg = load_run_config(o.config);
  const LoadedData loaded = load_data(cfg);
  const TemporalSettings split = temporal_split(loaded.data);
  const fs::path dir = o.out.value_or(cfg.output_dir);
  ensure_dir(dir / "reports");
  if (cfg.write_predictions) ensure_dir(dir / "predictions");

  json results = json::array();
  std::ofstream table(dir / "ablation.csv");
  if (!table) throw Error("cannot write " + (dir / "ablation.csv").string());
  table << "model,setting,delta_nll,p_value,verdict,repeats\n";

  for (int setting : cfg.settings) {
    const SplitData sd = materialize_setting(loaded.data, split, setting);
    std::optional<CensoredDataset> truth_test;
    double noise_floor = 0.0;
    if (loaded.truth) {
      const GroundTruth gt = subset(*loaded.truth, split.test_rows(setting));
      truth_test = uncensored_view(sd.test, gt);
      for (double s : gt.true_sigma) noise_floor += s * s;
      noise_floor /= static_cast<double>(gt.true_sigma.size());
    }

    for (ModelKind kind : configured_kinds(cfg)) {
      const ModelSettings settings = cfg.model(kind);
      json row = {{"model", std::string(to_string(kind))}, {"setting", setting}};
      if (truth_test) row["noise_floor"] = noise_floor;
      std::map<bool, std::vector<double>> nll_by_arm;

      for (bool arm : cfg.use_censored) {
        std::vector<EvaluationReport> reps;
        std::vector<double> truth_mse;
        for (int r = 0; r < cfg.repeats; ++r) {
          const std::uint64_t seed = derive_seed(cfg.seed, "repeat", static_cast<std::uint64_t>(r));
          const TrainedModel model = train_model(settings, sd.train, sd.validation, arm, seed);
          const auto preds = predict(model, sd.test.features());
          EvaluationOptions eo;
          eo.source = cfg.variance_source;
          eo.n_bins = cfg.bins;
          eo.model_name = std::string(to_string(kind));
          reps.push_back(evaluate(preds, {sd.test.labels(), sd.test.masks()}, eo));
          if (truth_test)
            truth_mse.push_back(eval_mse(preds, {truth_test->labels(), truth_test->masks()}));
          if (cfg.write_predictions)
            write_predictions_csv(dir / "predictions" /
                                      (stem_for(kind, setting, arm) + "_r" + std::to_string(r) + ".csv"),
                                  sd.test.ids(), preds);
          msg << to_string(kind) << " setting " << setting << " " << arm_name(arm) << " repeat " << r + 1 << "/"
              << cfg.repeats << ": nll " << reps.back().nll << ", mse " << reps.back().mse << '\n';
        }

        // Arm report: metric means over repeats, the mean calibration curve and
        // the ENCE bins of the first repeat; raw per-repeat scores alongside.
        EvaluationReport arm_report = reps.front();
        arm_report.model_name = std::string(to_string(kind)) + "_s" + std::to_string(setting) + "_" + arm_name(arm);
        arm_report.repeats = {};
        for (const auto& rep : reps) {
          arm_report.repeats.mse.push_back(rep.mse);
          arm_report.repeats.nll.push_back(rep.nll);
          arm_report.repeats.ence.push_back(rep.ence);
        }
        arm_report.mse = mean_of(arm_report.repeats.mse);
        arm_report.nll = mean_of(arm_report.repeats.nll);
        arm_report.ence = mean_of(arm_report.repeats.ence);
        for (std::size_t g = 0; g < arm_report.calibration.observed.size(); ++g) {
          double sum = 0.0;
          for (const auto& rep : reps) sum += rep.calibration.observed[g];
          arm_report.calibration.observed[g] = sum / static_cast<double>(reps.size());
        }
        arm_report.context = {{"config", to_json(cfg)}, {"setting", setting}, {"use_censored", arm}};
        if (truth_test) arm_report.context["truth_mse"] = truth_mse;
        write_json_file(dir / "reports" / (arm_report.model_name + ".json"), arm_report);

        json arm_json = {{"nll", arm_report.repeats.nll}, {"mse", arm_report.repeats.mse},
                         {"ence", arm_report.repeats.ence}};
        if (truth_test) arm_json["truth_mse"] = truth_mse;
        row[arm_name(arm)] = std::move(arm_json);
        nll_by_arm[arm] = arm_report.repeats.nll;
      }

      if (nll_by_arm.count(true) && nll_by_arm.count(false) && cfg.repeats >= 2) {
        const AblationResult a = ablation_delta_nll(nll_by_arm[false], nll_by_arm[true], cfg.one_sided, cfg.alpha);
        row["delta_nll"] = a.delta;
        row["p_value"] = a.p_value;
        row["verdict"] = std::string(to_string(a.verdict));
        table << to_string(kind) << ',' << setting << ',' << detail::format_double(a.delta) << ','
              << detail::format_double(a.p_value) << ',' << to_string(a.verdict) << ',' << cfg.repeats << '\n';
        msg << to_string(kind) << " setting " << setting << ": delta nll " << a.delta << ", p " << a.p_value << ", "
            << to_string(a.verdict) << '\n';
      } else {
        row["verdict"] = nullptr;
      }
      results.push_back(std::move(row));
    }
  }

  json doc = {{"config", to_json(cfg)},
              {"test", cfg.one_sided ? "one_sided" : "two_sided"},
              {"alpha", cfg.alpha},
              {"results", std::move(results)}};
  write_json_file(dir / "ablation.json", doc);
  return doc;
}

std::vector<fs::path> expand_glob(const std::string& pattern) {
  const fs::path p(pattern);
  const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
  const std::string name = p.filename().string();
  if (dir.string().find_first_of("*?[") != std::string::npos)
    throw ConfigError("glob wildcards are only supported in the file name: " + pattern);
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (fnmatch(name.c_str(), entry.path().filename().string().c_str(), 0) == 0) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<RankedModel> cmd_compare(const CompareOptions& o, std::ostream& msg) {
  if (o.metric != "mse" && o.metric != "nll" && o.metric != "ence")
    throw ConfigError("--metric must be mse, nll or ence");
  const auto files = expand_glob(o.reports_glob);
  if (files.empty()) throw ConfigError("no reports match " + o.reports_glob);

  std::vector<ModelScores> models;
  for (const auto& f : files) {
    EvaluationReport r;
    try {
      r = read_json_file(f).get<EvaluationReport>();
    } catch (const json::exception& e) {
      throw ConfigError(f.string() + ": not an evaluation report: " + e.what());
    }
    const std::string name = r.model_name.empty() ? f.stem().string() : r.model_name;
    auto it = std::find_if(models.begin(), models.end(), [&](const ModelScores& m) { return m.name == name; });
    if (it == models.end()) {
      models.push_back({name, {}});
      it = std::prev(models.end());
    }
    const auto& scores = r.repeats.metric(o.metric);
    it->scores.insert(it->scores.end(), scores.begin(), scores.end());
  }

  const auto ranked = compare_models(models, true, o.alpha);
  msg << std::left << std::setw(4) << "rank" << std::setw(32) << "model" << std::setw(14) << o.metric
      << std::setw(12) << "p" << "star\n";
  for (std::size_t i = 0; i < ranked.size(); ++i)
    msg << std::setw(4) << i + 1 << std::setw(32) << ranked[i].name << std::setw(14) << ranked[i].mean
        << std::setw(12) << ranked[i].p_value << (ranked[i].starred ? "*" : "") << '\n';

  if (o.out) {
    ensure_dir(*o.out);
    json rows = json::array();
    std::ofstream csv(*o.out / "comparison.csv");
    csv << "rank,model,mean,p_value,starred\n";
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      const auto& r = ranked[i];
      rows.push_back({{"rank", i + 1}, {"model", r.name}, {"mean", r.mean}, {"p_value", r.p_value}, {"starred", r.starred}});
      csv << i + 1 << ',' << detail::quote_csv(r.name) << ',' << detail::format_double(r.mean) << ','
          << detail::format_double(r.p_value) << ',' << (r.starred ? 1 : 0) << '\n';
    }
    json files_json = json::array();
    for (const auto& f : files) files_json.push_back(f.string());
    write_json_file(*o.out / "comparison.json",
                    {{"metric", o.metric}, {"alpha", o.alpha}, {"reports", files_json}, {"ranking", rows}});
  }
  return ranked;
}

}  // namespace censura::cli
