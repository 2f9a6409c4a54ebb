#include <fstream>

#include "vala/cli/cli.hpp"
#include "vala/numerics/errors.hpp"
#include "vala/numerics/json_util.hpp"

namespace vala::cli {

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json train = vala::to_json(c.train);
  train.erase("alpha");
  train.erase("beta");
  return {{"version", kRunConfigVersion},
          {"synth", vala::to_json(c.synth)},
          {"model", vala::to_json(c.model)},
          {"train", train},
          {"loss", {{"alpha", c.train.alpha}, {"beta", c.train.beta}}},
          {"ablation", vala::to_json(c.ablation)}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, {"version", "synth", "model", "train", "loss", "ablation"}, "config");
  if (!j.contains("version")) throw ConfigError("config: missing 'version'");
  if (!j.at("version").is_number_integer() || j.at("version").get<int>() != kRunConfigVersion) {
    throw ConfigError("config: unsupported version " + j.at("version").dump() + " (expected " +
                      std::to_string(kRunConfigVersion) + ")");
  }
  RunConfig c;
  if (j.contains("synth")) c.synth = synth_config_from_json(j.at("synth"));
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) {
    const auto& t = j.at("train");
    for (const char* key : {"alpha", "beta"}) {
      if (t.is_object() && t.contains(key)) {
        throw ConfigError(std::string("train: unknown key '") + key + "' (loss weights go under loss)");
      }
    }
    c.train = train_config_from_json(t);
  }
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    reject_unknown_keys(l, {"alpha", "beta"}, "loss");
    read_key(l, "alpha", c.train.alpha, "loss");
    read_key(l, "beta", c.train.beta, "loss");
    c.train.validate();
  }
  if (j.contains("ablation")) c.ablation = ablation_config_from_json(j.at("ablation"));
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace vala::cli
