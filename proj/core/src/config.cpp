#include "mohn/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mohn/error.hpp"

namespace mohn {

namespace {

using nlohmann::json;

json to_json(const TrainConfig& cfg) {
  json j;
  j["learning_rate"] = cfg.learning_rate;
  j["sgd_momentum"] = cfg.sgd_momentum;
  j["weight_decay"] = cfg.weight_decay;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["queue_capacity"] = cfg.queue_capacity;
  j["momentum_coefficient"] = cfg.momentum_coefficient;
  j["seed"] = cfg.seed;
  j["eval_interval"] = cfg.eval_interval;
  j["checkpoint_interval"] = cfg.checkpoint_interval;
  j["output_dir"] = cfg.output_dir;

  j["loss"]["temperature"] = cfg.loss.temperature;
  j["loss"]["view_weight"] = cfg.loss.view_weight;
  j["loss"]["hard_fraction"] = cfg.loss.hard_fraction;
  j["loss"]["basis"] = cfg.loss.basis == SelectionBasis::query ? "query" : "key";

  j["encoder"]["layer_dims"] = cfg.encoder.layer_dims;
  j["encoder"]["activation"] =
      cfg.encoder.activation == Activation::relu ? "relu" : "tanh";

  j["data"]["kind"] = cfg.data.kind;
  j["data"]["path"] = cfg.data.path;
  j["data"]["holdout_fraction"] = cfg.data.holdout_fraction;

  j["augment"]["crop_scale_range"] = cfg.augment.crop_scale_range;
  j["augment"]["crop_aspect_range"] = cfg.augment.crop_aspect_range;
  j["augment"]["jitter_brightness"] = cfg.augment.jitter_brightness;
  j["augment"]["jitter_contrast"] = cfg.augment.jitter_contrast;
  j["augment"]["jitter_saturation"] = cfg.augment.jitter_saturation;
  j["augment"]["jitter_hue"] = cfg.augment.jitter_hue;
  j["augment"]["jitter_prob"] = cfg.augment.jitter_prob;
  j["augment"]["grayscale_prob"] = cfg.augment.grayscale_prob;
  j["augment"]["blur_prob"] = cfg.augment.blur_prob;
  j["augment"]["blur_sigma_range"] = cfg.augment.blur_sigma_range;
  j["augment"]["flip_prob"] = cfg.augment.flip_prob;
  j["augment"]["vector_noise_sigma"] = cfg.augment.vector_noise_sigma;
  j["augment"]["vector_dropout_prob"] = cfg.augment.vector_dropout_prob;

  j["knn"]["neighbors"] = cfg.knn.neighbors;
  j["knn"]["temperature"] = cfg.knn.temperature;
  return j;
}

std::string joined(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

// Copies user values over the defaults, rejecting keys the schema lacks.
void merge_checked(json& base, const json& user, const std::string& prefix) {
  if (!user.is_object())
    throw Error(ErrorKind::config_invalid,
                (prefix.empty() ? std::string("config root") : prefix) +
                    " must be a JSON object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = joined(prefix, key);
    if (!base.contains(key))
      throw Error(ErrorKind::config_invalid, "unknown config key: " + path);
    if (base[key].is_object())
      merge_checked(base[key], value, path);
    else
      base[key] = value;
  }
}

void apply_override(json& root, const ConfigOverride& kv) {
  json* node = &root;
  std::stringstream parts(kv.first);
  std::string part;
  while (std::getline(parts, part, '.')) {
    if (!node->is_object() || !node->contains(part))
      throw Error(ErrorKind::config_invalid, "unknown config key: " + kv.first);
    node = &(*node)[part];
  }
  if (node->is_object())
    throw Error(ErrorKind::config_invalid,
                "cannot override a whole section: " + kv.first);
  if (node->is_string()) {
    *node = kv.second;
    return;
  }
  const json parsed = json::parse(kv.second, nullptr, false);
  if (parsed.is_discarded())
    throw Error(ErrorKind::config_invalid,
                "cannot parse value for " + kv.first + ": '" + kv.second + "'");
  *node = parsed;
}

double get_number(const json& j, const std::string& path) {
  if (!j.is_number())
    throw Error(ErrorKind::config_invalid, path + " must be a number");
  return j.get<double>();
}

std::size_t get_count(const json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<std::size_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0)
    return static_cast<std::size_t>(j.get<std::int64_t>());
  throw Error(ErrorKind::config_invalid,
              path + " must be a non-negative integer");
}

std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string())
    throw Error(ErrorKind::config_invalid, path + " must be a string");
  return j.get<std::string>();
}

std::array<double, 2> get_range(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw Error(ErrorKind::config_invalid,
                path + " must be a [lo, hi] number pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

TrainConfig from_json(const json& j) {
  TrainConfig cfg;
  cfg.learning_rate = get_number(j["learning_rate"], "learning_rate");
  cfg.sgd_momentum = get_number(j["sgd_momentum"], "sgd_momentum");
  cfg.weight_decay = get_number(j["weight_decay"], "weight_decay");
  cfg.epochs = get_count(j["epochs"], "epochs");
  cfg.batch_size = get_count(j["batch_size"], "batch_size");
  cfg.queue_capacity = get_count(j["queue_capacity"], "queue_capacity");
  cfg.momentum_coefficient =
      get_number(j["momentum_coefficient"], "momentum_coefficient");
  cfg.seed = static_cast<std::uint64_t>(get_count(j["seed"], "seed"));
  cfg.eval_interval = get_count(j["eval_interval"], "eval_interval");
  cfg.checkpoint_interval =
      get_count(j["checkpoint_interval"], "checkpoint_interval");
  cfg.output_dir = get_string(j["output_dir"], "output_dir");

  const json& loss = j["loss"];
  cfg.loss.temperature = get_number(loss["temperature"], "loss.temperature");
  cfg.loss.view_weight = get_number(loss["view_weight"], "loss.view_weight");
  cfg.loss.hard_fraction =
      get_number(loss["hard_fraction"], "loss.hard_fraction");
  const std::string basis = get_string(loss["basis"], "loss.basis");
  if (basis == "query")
    cfg.loss.basis = SelectionBasis::query;
  else if (basis == "key")
    cfg.loss.basis = SelectionBasis::key;
  else
    throw Error(ErrorKind::config_invalid,
                "loss.basis must be 'query' or 'key', got '" + basis + "'");

  const json& enc = j["encoder"];
  if (!enc["layer_dims"].is_array())
    throw Error(ErrorKind::config_invalid,
                "encoder.layer_dims must be an array");
  cfg.encoder.layer_dims.clear();
  for (const auto& d : enc["layer_dims"])
    cfg.encoder.layer_dims.push_back(get_count(d, "encoder.layer_dims"));
  const std::string act = get_string(enc["activation"], "encoder.activation");
  if (act == "relu")
    cfg.encoder.activation = Activation::relu;
  else if (act == "tanh")
    cfg.encoder.activation = Activation::tanh;
  else
    throw Error(ErrorKind::config_invalid,
                "encoder.activation must be 'relu' or 'tanh', got '" + act + "'");

  const json& data = j["data"];
  cfg.data.kind = get_string(data["kind"], "data.kind");
  cfg.data.path = get_string(data["path"], "data.path");
  cfg.data.holdout_fraction =
      get_number(data["holdout_fraction"], "data.holdout_fraction");

  const json& aug = j["augment"];
  cfg.augment.crop_scale_range =
      get_range(aug["crop_scale_range"], "augment.crop_scale_range");
  cfg.augment.crop_aspect_range =
      get_range(aug["crop_aspect_range"], "augment.crop_aspect_range");
  cfg.augment.jitter_brightness =
      get_number(aug["jitter_brightness"], "augment.jitter_brightness");
  cfg.augment.jitter_contrast =
      get_number(aug["jitter_contrast"], "augment.jitter_contrast");
  cfg.augment.jitter_saturation =
      get_number(aug["jitter_saturation"], "augment.jitter_saturation");
  cfg.augment.jitter_hue = get_number(aug["jitter_hue"], "augment.jitter_hue");
  cfg.augment.jitter_prob =
      get_number(aug["jitter_prob"], "augment.jitter_prob");
  cfg.augment.grayscale_prob =
      get_number(aug["grayscale_prob"], "augment.grayscale_prob");
  cfg.augment.blur_prob = get_number(aug["blur_prob"], "augment.blur_prob");
  cfg.augment.blur_sigma_range =
      get_range(aug["blur_sigma_range"], "augment.blur_sigma_range");
  cfg.augment.flip_prob = get_number(aug["flip_prob"], "augment.flip_prob");
  cfg.augment.vector_noise_sigma =
      get_number(aug["vector_noise_sigma"], "augment.vector_noise_sigma");
  cfg.augment.vector_dropout_prob =
      get_number(aug["vector_dropout_prob"], "augment.vector_dropout_prob");

  const json& knn = j["knn"];
  cfg.knn.neighbors = get_count(knn["neighbors"], "knn.neighbors");
  cfg.knn.temperature = get_number(knn["temperature"], "knn.temperature");
  return cfg;
}

void collect_keys(const json& j, const std::string& prefix,
                  std::vector<std::string>& out) {
  for (const auto& [key, value] : j.items()) {
    const std::string path = joined(prefix, key);
    if (value.is_object())
      collect_keys(value, path, out);
    else
      out.push_back(path);
  }
}

}  // namespace

TrainConfig parse_train_config_text(const std::string& text,
                                    const std::vector<ConfigOverride>& overrides) {
  json user = json::parse(text, nullptr, false);
  if (user.is_discarded())
    throw Error(ErrorKind::config_invalid, "config is not valid JSON");
  json merged = to_json(TrainConfig{});
  merge_checked(merged, user, "");
  for (const auto& kv : overrides) apply_override(merged, kv);
  TrainConfig cfg = from_json(merged);
  validate(cfg);
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path,
                              const std::vector<ConfigOverride>& overrides) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::missing_file, "cannot open config: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  if (in.bad())
    throw Error(ErrorKind::io_failure, "read failed: " + path.string());
  return parse_train_config_text(buffer.str(), overrides);
}

std::string serialize_train_config(const TrainConfig& cfg) {
  return to_json(cfg).dump(2);
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0))
    throw Error(ErrorKind::config_invalid, "learning_rate must be positive");
  if (!(cfg.sgd_momentum >= 0.0 && cfg.sgd_momentum < 1.0))
    throw Error(ErrorKind::config_invalid, "sgd_momentum must lie in [0, 1)");
  if (!(cfg.weight_decay >= 0.0))
    throw Error(ErrorKind::config_invalid, "weight_decay must be >= 0");
  if (cfg.batch_size < 1)
    throw Error(ErrorKind::config_invalid, "batch_size must be >= 1");
  if (cfg.queue_capacity < 1)
    throw Error(ErrorKind::config_invalid, "queue_capacity must be >= 1");
  if (cfg.queue_capacity % cfg.batch_size != 0)
    throw Error(ErrorKind::config_invalid,
                "queue_capacity must be a multiple of batch_size");
  if (!(cfg.momentum_coefficient >= 0.0 && cfg.momentum_coefficient <= 1.0))
    throw Error(ErrorKind::config_invalid,
                "momentum_coefficient must lie in [0, 1]");
  if (cfg.output_dir.empty())
    throw Error(ErrorKind::config_invalid, "output_dir must not be empty");
  if (cfg.data.kind != "csv" && cfg.data.kind != "cifar10" &&
      cfg.data.kind != "cifar100")
    throw Error(ErrorKind::config_invalid,
                "data.kind must be one of csv, cifar10, cifar100");
  if (cfg.data.path.empty())
    throw Error(ErrorKind::config_invalid, "data.path must not be empty");
  if (cfg.data.kind == "csv" &&
      !(cfg.data.holdout_fraction > 0.0 && cfg.data.holdout_fraction < 1.0))
    throw Error(ErrorKind::config_invalid,
                "data.holdout_fraction must lie in (0, 1)");
  validate(cfg.loss);
  validate(cfg.encoder);
  validate(cfg.augment);
  validate(cfg.knn);
}

bool same_run_identity(const TrainConfig& a, const TrainConfig& b) {
  json ja = to_json(a);
  json jb = to_json(b);
  for (const char* key :
       {"output_dir", "epochs", "eval_interval", "checkpoint_interval"}) {
    ja.erase(key);
    jb.erase(key);
  }
  return ja == jb;
}

std::vector<std::string> config_override_keys() {
  std::vector<std::string> keys;
  collect_keys(to_json(TrainConfig{}), "", keys);
  std::sort(keys.begin(), keys.end());
  return keys;
}

}  // namespace mohn
