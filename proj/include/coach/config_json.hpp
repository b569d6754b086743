#pragma once

#include <string>

#include "coach/errors.hpp"
#include "coach/run.hpp"
#include "json.hpp"

namespace coach {

/// JSON field names shared by run.json files and session configs:
/// task, algo, source, seed, hyperparams{...}, oracle{...}.
nlohmann::json run_config_to_json(const RunConfig& cfg);

/// Reads and erases the RunConfig fields from `obj`, leaving any other
/// fields for the caller. Missing fields keep their defaults; wrong types
/// and unknown nested fields throw InputError.
RunConfig take_run_config(nlohmann::json& obj, const std::string& default_source = "oracle");

/// Throws InputError naming the first leftover field in `obj`.
void reject_unknown_fields(const nlohmann::json& obj, const std::string& where);

template <typename T>
void take_field(nlohmann::json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end()) {
    try {
      out = it->get<T>();
    } catch (const nlohmann::json::exception&) {
      throw InputError(std::string("config field '") + key + "' has the wrong type");
    }
    obj.erase(it);
  }
}

/// Parses a JSON document that must be an object; throws InputError otherwise.
nlohmann::json parse_json_object(const std::string& text, const std::string& what);

}  // namespace coach
