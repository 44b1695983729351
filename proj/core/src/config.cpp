#include "bce3s/config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

extern char** environ;

namespace bce3s {
namespace {

using nlohmann::json;

json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), "config '" + path + "'");
}

// Tracks which keys a section consumed so leftovers can be rejected.
class Section {
 public:
  Section(const json& node, std::string name) : node_(node), name_(std::move(name)) {
    if (!node_.is_object()) throw ConfigError("section '" + name_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    consumed_.insert(key);
    if (!node_.contains(key)) return;
    try {
      out = node_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("key '" + name_ + "." + key + "' has the wrong type");
    }
  }

  void get_string_mapped(const char* key, const std::function<void(const std::string&)>& apply) {
    consumed_.insert(key);
    if (!node_.contains(key)) return;
    std::string s;
    try {
      s = node_.at(key).get<std::string>();
    } catch (const json::exception&) {
      throw ConfigError("key '" + name_ + "." + key + "' must be a string");
    }
    try {
      apply(s);
    } catch (const std::exception& e) {
      throw ConfigError("key '" + name_ + "." + key + "': " + e.what());
    }
  }

  void reject_unknown() const {
    for (const auto& [key, value] : node_.items()) {
      if (!consumed_.count(key))
        throw ConfigError("unknown key '" + name_ + "." + key + "'");
    }
  }

 private:
  const json& node_;
  std::string name_;
  std::set<std::string> consumed_;
};

void parse_data_section(const json& node, LongTailSpec& spec) {
  Section s(node, "data");
  s.get("K", spec.num_classes);
  s.get("n1", spec.n1);
  s.get("imbalance_factor", spec.imbalance_factor);
  s.get("input_dim", spec.input_dim);
  s.get("noise_sigma", spec.noise_sigma);
  s.get("test_per_class", spec.test_per_class);
  s.get("seed", spec.seed);
  s.get_string_mapped("class_geometry", [&](const std::string& v) {
    spec.class_geometry = class_geometry_from_string(v);
  });
  s.reject_unknown();
}

void parse_loss_section(const json& node, LossConfig& loss) {
  Section s(node, "loss");
  s.get_string_mapped("family",
                      [&](const std::string& v) { loss.family = loss_family_from_string(v); });
  s.get("lambda_ss", loss.lambda_ss);
  s.get("lambda_cc", loss.lambda_cc);
  s.get("tau", loss.tau);
  s.get("r", loss.r);
  s.get("beta", loss.beta);
  s.get("include_cc_positive", loss.include_cc_positive);
  s.get_string_mapped("normalization", [&](const std::string& v) {
    loss.normalization = normalization_from_string(v);
  });
  s.reject_unknown();
}

void parse_train_section(const json& node, TrainConfig& train) {
  Section s(node, "train");
  s.get("epochs_stage1", train.epochs_stage1);
  s.get("epochs_stage2", train.epochs_stage2);
  s.get("lr0", train.lr0);
  s.get("momentum", train.momentum);
  s.get("weight_decay", train.weight_decay);
  s.get("batch_size", train.batch_size);
  s.get("seed", train.seed);
  s.get("encoder_hidden", train.encoder_hidden);
  s.get("feature_dim", train.feature_dim);
  s.get("projection_dim", train.projection_dim);
  s.get("projector_hidden", train.projector_hidden);
  s.get("metric_cadence", train.metric_cadence);
  s.get_string_mapped("nonlinearity", [&](const std::string& v) {
    train.nonlinearity = nonlinearity_from_string(v);
  });
  s.reject_unknown();
}

ExperimentConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config root must be an object");
  ExperimentConfig cfg;
  const std::set<std::string> known = {"data", "loss", "train", "out_dir", "dataset_dir"};
  for (const auto& [key, value] : doc.items()) {
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "'");
  }
  if (doc.contains("data")) parse_data_section(doc.at("data"), cfg.data);
  if (doc.contains("loss")) parse_loss_section(doc.at("loss"), cfg.train.loss);
  if (doc.contains("train")) parse_train_section(doc.at("train"), cfg.train);
  if (doc.contains("out_dir")) {
    if (!doc.at("out_dir").is_string()) throw ConfigError("out_dir must be a string");
    cfg.out_dir = doc.at("out_dir").get<std::string>();
  }
  if (doc.contains("dataset_dir")) {
    if (!doc.at("dataset_dir").is_string()) throw ConfigError("dataset_dir must be a string");
    cfg.dataset_dir = doc.at("dataset_dir").get<std::string>();
  }
  if (cfg.dataset_dir.empty()) cfg.dataset_dir = cfg.out_dir;
  cfg.validate();
  return cfg;
}

// BCE3S_loss__lambda_ss=0.5 -> doc["loss"]["lambda_ss"] = 0.5
void apply_env(json& doc) {
  constexpr const char* kPrefix = "BCE3S_";
  for (char** env = environ; *env != nullptr; ++env) {
    const std::string entry(*env);
    if (entry.rfind(kPrefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string key = entry.substr(std::string(kPrefix).size(), eq - std::string(kPrefix).size());
    const std::string value = entry.substr(eq + 1);

    std::vector<std::string> path;
    std::size_t start = 0;
    while (true) {
      const auto sep = key.find("__", start);
      if (sep == std::string::npos) {
        path.push_back(key.substr(start));
        break;
      }
      path.push_back(key.substr(start, sep - start));
      start = sep + 2;
    }

    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::exception&) {
      parsed = value;  // plain string
    }

    json* node = &doc;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) node = &((*node)[path[i]]);
    (*node)[path.back()] = parsed;
  }
}

}  // namespace

std::string ExperimentConfig::train_dump_path() const {
  return dataset_dir + "/train.ltr";
}

std::string ExperimentConfig::test_dump_path() const { return dataset_dir + "/test.ltr"; }

void ExperimentConfig::validate() const {
  data.validate();
  train.validate();
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
  if (train.loss.lambda_cc > 0.0 && !normalizes_classifier(train.loss.normalization))
    throw ConfigError("lambda_cc > 0 requires classifier (or both) normalization");
}

ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         bool apply_env_overrides) {
  json doc = parse_json_text(json_text, "config");
  if (apply_env_overrides) apply_env(doc);
  try {
    return config_from_json(doc);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig load_experiment_config(const std::string& path, bool apply_env_overrides) {
  json doc = load_json_file(path);
  if (apply_env_overrides) apply_env(doc);
  try {
    return config_from_json(doc);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

AblationGrid load_ablation_grid(const std::string& path, bool apply_env_overrides) {
  json doc = load_json_file(path);
  if (!doc.is_object()) throw ConfigError("grid root must be an object");
  for (const auto& [key, value] : doc.items()) {
    if (key != "base" && key != "seeds" && key != "variants")
      throw ConfigError("unknown key '" + key + "' in grid config");
  }
  if (!doc.contains("base")) throw ConfigError("grid config needs a 'base' section");
  if (!doc.contains("variants") || !doc.at("variants").is_array() ||
      doc.at("variants").empty())
    throw ConfigError("grid config needs a nonempty 'variants' array");

  json base = doc.at("base");
  if (apply_env_overrides) apply_env(base);

  AblationGrid grid;
  grid.base_json = base.dump();
  try {
    grid.base = config_from_json(base);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  if (doc.contains("seeds")) {
    try {
      grid.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
    } catch (const json::exception&) {
      throw ConfigError("'seeds' must be an array of unsigned integers");
    }
  }
  if (grid.seeds.empty()) grid.seeds = {1};

  std::set<std::string> names;
  for (const auto& v : doc.at("variants")) {
    if (!v.is_object()) throw ConfigError("each variant must be an object");
    AblationVariant variant;
    json patch = json::object();
    for (const auto& [key, value] : v.items()) {
      if (key == "name") {
        if (!value.is_string()) throw ConfigError("variant name must be a string");
        variant.name = value.get<std::string>();
      } else if (key == "loss" || key == "train") {
        patch[key] = value;
      } else {
        throw ConfigError("unknown key '" + key + "' in variant (allowed: name, loss, train)");
      }
    }
    if (variant.name.empty()) throw ConfigError("every variant needs a name");
    if (!names.insert(variant.name).second)
      throw ConfigError("duplicate variant name '" + variant.name + "'");
    variant.patch_json = patch.dump();
    grid.variants.push_back(std::move(variant));
  }
  return grid;
}

ExperimentConfig apply_variant(const AblationGrid& grid, const AblationVariant& variant,
                               std::uint64_t seed) {
  json doc = parse_json_text(grid.base_json, "grid base");
  const json patch = parse_json_text(variant.patch_json, "variant patch");
  doc.merge_patch(patch);
  doc["train"]["seed"] = seed;
  try {
    ExperimentConfig cfg = config_from_json(doc);
    return cfg;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace bce3s
