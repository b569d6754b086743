#include "coach/config_json.hpp"

#include "coach/errors.hpp"

namespace coach {

using nlohmann::json;

json run_config_to_json(const RunConfig& cfg) {
  const HyperParams& hp = cfg.hp;
  const OracleConfig& o = cfg.oracle;
  return {{"task", task_name(cfg.task)},
          {"algo", algo_name(cfg.algo)},
          {"source", feedback_source_name(cfg.source)},
          {"seed", cfg.seed},
          {"hyperparams",
           {{"delay", hp.delay},
            {"learning_rate", hp.learning_rate},
            {"trace_decay", hp.trace_decay},
            {"window_size", hp.window_size},
            {"minibatch_size", hp.minibatch_size},
            {"entropy_coef", hp.entropy_coef},
            {"ratio_clamp", hp.ratio_clamp}}},
          {"oracle",
           {{"mode", oracle_mode_name(o.mode)},
            {"gamma", o.gamma},
            {"feedback_prob", o.feedback_prob},
            {"error_rate", o.error_rate},
            {"diminishing_returns", o.diminishing_returns}}}};
}

RunConfig take_run_config(json& obj, const std::string& default_source) {
  std::string task = "goal_nav", algo = "deep", source = default_source;
  take_field(obj, "task", task);
  take_field(obj, "algo", algo);
  take_field(obj, "source", source);
  RunConfig cfg = default_run_config(parse_task(task));
  cfg.algo = parse_algo(algo);
  cfg.source = parse_feedback_source(source);
  take_field(obj, "seed", cfg.seed);
  if (auto it = obj.find("hyperparams"); it != obj.end()) {
    json hp = *it;
    if (!hp.is_object()) throw InputError("hyperparams must be an object");
    take_field(hp, "delay", cfg.hp.delay);
    take_field(hp, "learning_rate", cfg.hp.learning_rate);
    take_field(hp, "trace_decay", cfg.hp.trace_decay);
    take_field(hp, "window_size", cfg.hp.window_size);
    take_field(hp, "minibatch_size", cfg.hp.minibatch_size);
    take_field(hp, "entropy_coef", cfg.hp.entropy_coef);
    take_field(hp, "ratio_clamp", cfg.hp.ratio_clamp);
    reject_unknown_fields(hp, "hyperparams");
    obj.erase(it);
  }
  if (auto it = obj.find("oracle"); it != obj.end()) {
    json o = *it;
    if (!o.is_object()) throw InputError("oracle must be an object");
    std::string mode = oracle_mode_name(cfg.oracle.mode);
    take_field(o, "mode", mode);
    cfg.oracle.mode = parse_oracle_mode(mode);
    take_field(o, "gamma", cfg.oracle.gamma);
    take_field(o, "feedback_prob", cfg.oracle.feedback_prob);
    take_field(o, "error_rate", cfg.oracle.error_rate);
    take_field(o, "diminishing_returns", cfg.oracle.diminishing_returns);
    reject_unknown_fields(o, "oracle");
    obj.erase(it);
  }
  cfg.hp.validate();
  cfg.oracle.validate();
  return cfg;
}

void reject_unknown_fields(const json& obj, const std::string& where) {
  if (!obj.empty()) throw InputError(where + ": unknown field '" + obj.begin().key() + "'");
}

json parse_json_object(const std::string& text, const std::string& what) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(what + " is not valid JSON: " + e.what());
  }
  if (!root.is_object()) throw InputError(what + " must be a JSON object");
  return root;
}

}  // namespace coach
