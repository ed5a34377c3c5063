#include "censura/network_io.hpp"

#include <fstream>

#include "censura/error.hpp"

namespace censura {

using nlohmann::json;

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows) throw ConfigError("matrix row count mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& r = data.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(r.size()) != cols) throw ConfigError("matrix column count mismatch");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = r.at(static_cast<std::size_t>(k)).get<double>();
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j.at(i).get<double>();
  return v;
}

}  // namespace

void to_json(json& j, const NetworkSpec& s) {
  j = {{"input_dim", s.input_dim},       {"hidden_layers", s.hidden_layers}, {"hidden_dim", s.hidden_dim},
       {"decreasing_dim", s.decreasing_dim}, {"dropout_rate", s.dropout_rate},
       {"head", std::string(to_string(s.head))}, {"variational", s.variational}};
}

void from_json(const json& j, NetworkSpec& s) {
  NetworkSpec d;
  s.input_dim = j.value("input_dim", d.input_dim);
  s.hidden_layers = j.value("hidden_layers", d.hidden_layers);
  s.hidden_dim = j.value("hidden_dim", d.hidden_dim);
  s.decreasing_dim = j.value("decreasing_dim", d.decreasing_dim);
  s.dropout_rate = j.value("dropout_rate", d.dropout_rate);
  s.head = head_from_string(j.value("head", std::string("scalar")));
  s.variational = j.value("variational", d.variational);
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate},
       {"scheduler_factor", c.scheduler_factor},
       {"scheduler_patience", c.scheduler_patience},
       {"weight_decay", c.weight_decay},
       {"decoupled_weight_decay", c.decoupled_weight_decay},
       {"max_epochs", c.max_epochs},
       {"batch_size", c.batch_size},
       {"early_stop_patience", c.early_stop_patience},
       {"seed", c.seed},
       {"rho_init", c.rho_init}};
}

void from_json(const json& j, TrainConfig& c) {
  TrainConfig d;
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.scheduler_factor = j.value("scheduler_factor", d.scheduler_factor);
  c.scheduler_patience = j.value("scheduler_patience", d.scheduler_patience);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.decoupled_weight_decay = j.value("decoupled_weight_decay", d.decoupled_weight_decay);
  c.max_epochs = j.value("max_epochs", d.max_epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.early_stop_patience = j.value("early_stop_patience", d.early_stop_patience);
  c.seed = j.value("seed", d.seed);
  c.rho_init = j.value("rho_init", d.rho_init);
}

void to_json(json& j, const LossSpec& l) {
  j = {{"kind", std::string(to_string(l.kind))}, {"evidential_lambda", l.evidential_lambda}, {"prior_std", l.prior_std}};
  j["kl_weight"] = l.kl_weight ? json(*l.kl_weight) : json(nullptr);
}

void from_json(const json& j, LossSpec& l) {
  l.kind = loss_from_string(j.at("kind").get<std::string>());
  l.evidential_lambda = j.value("evidential_lambda", 1.0);
  l.prior_std = j.value("prior_std", 1.0);
  if (j.contains("kl_weight") && !j.at("kl_weight").is_null()) l.kl_weight = j.at("kl_weight").get<double>();
  else l.kl_weight.reset();
}

void to_json(json& j, const NetworkState& s) {
  json layers = json::array();
  for (const auto& l : s.layers) {
    json o = {{"weight", matrix_to_json(l.weight)}, {"bias", vector_to_json(l.bias)}};
    if (l.weight_rho.size() > 0) {
      o["weight_rho"] = matrix_to_json(l.weight_rho);
      o["bias_rho"] = vector_to_json(l.bias_rho);
    }
    layers.push_back(std::move(o));
  }
  j = {{"layers", std::move(layers)}};
}

void from_json(const json& j, NetworkState& s) {
  s.layers.clear();
  for (const auto& o : j.at("layers")) {
    DenseLayer l;
    l.weight = matrix_from_json(o.at("weight"));
    l.bias = vector_from_json(o.at("bias"));
    if (o.contains("weight_rho")) {
      l.weight_rho = matrix_from_json(o.at("weight_rho"));
      l.bias_rho = vector_from_json(o.at("bias_rho"));
    }
    s.layers.push_back(std::move(l));
  }
}

void to_json(json& j, const TrainingLog& log) {
  json epochs = json::array();
  for (const auto& e : log.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"validation_loss", e.validation_loss},
                      {"learning_rate", e.learning_rate}});
  j = {{"best_epoch", log.best_epoch},
       {"best_validation_loss", log.best_validation_loss},
       {"stopped_early", log.stopped_early},
       {"epochs", std::move(epochs)}};
}

void from_json(const json& j, TrainingLog& log) {
  log.best_epoch = j.at("best_epoch").get<int>();
  log.best_validation_loss = j.at("best_validation_loss").get<double>();
  log.stopped_early = j.at("stopped_early").get<bool>();
  log.epochs.clear();
  for (const auto& e : j.at("epochs"))
    log.epochs.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(),
                          e.at("validation_loss").get<double>(), e.at("learning_rate").get<double>()});
}

void to_json(json& j, const Checkpoint& c) {
  j = {{"format", "censura-checkpoint"}, {"version", 1},      {"spec", c.spec}, {"config", c.config},
       {"loss", c.loss},                 {"seed", c.seed},    {"state", c.state}};
}

void from_json(const json& j, Checkpoint& c) {
  if (j.value("format", std::string()) != "censura-checkpoint") throw ConfigError("not a censura checkpoint");
  c.spec = j.at("spec").get<NetworkSpec>();
  c.config = j.at("config").get<TrainConfig>();
  c.loss = j.at("loss").get<LossSpec>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.state = j.at("state").get<NetworkState>();
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) { write_json_file(path, json(c)); }

Checkpoint load_checkpoint(const std::filesystem::path& path) { return read_json_file(path).get<Checkpoint>(); }

}  // namespace censura
