#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>

#include <json.hpp>

#include "lte4g/dense.hpp"
#include "lte4g/error.hpp"
#include "lte4g/tape.hpp"

namespace lte4g {

/// Named matrices. JSON numbers are written in shortest round-trip form, so a reload is
/// bit-exact.
using Checkpoint = std::map<std::string, DenseMat>;

inline nlohmann::ordered_json checkpoint_to_json(std::span<const Parameter* const> params) {
  nlohmann::ordered_json j;
  j["format"] = "lte4g-checkpoint";
  j["version"] = 1;
  auto& arr = j["parameters"] = nlohmann::ordered_json::array();
  for (const Parameter* p : params)
    arr.push_back({{"name", p->name},
                   {"rows", p->value.rows()},
                   {"cols", p->value.cols()},
                   {"data", p->value.storage()}});
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  Checkpoint ck;
  try {
    LTE4G_REQUIRE(j.at("format") == "lte4g-checkpoint", ValidationError, "checkpoint: unknown format");
    for (const auto& e : j.at("parameters")) {
      const auto name = e.at("name").get<std::string>();
      DenseMat m(e.at("rows").get<std::size_t>(), e.at("cols").get<std::size_t>(),
                 e.at("data").get<std::vector<double>>());
      LTE4G_REQUIRE(ck.emplace(name, std::move(m)).second, ValidationError,
                    "checkpoint: duplicate parameter '" + name + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint JSON: ") + e.what());
  } catch (const ShapeError& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, std::span<const Parameter* const> params) {
  std::ofstream out(path);
  LTE4G_REQUIRE(out.good(), ValidationError, "cannot write " + path.string());
  out << checkpoint_to_json(params).dump() << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  LTE4G_REQUIRE(in.good(), ValidationError, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

/// Copies stored values into `params` by name; every parameter must be present with a
/// matching shape.
inline void restore(const Checkpoint& ck, std::span<Parameter* const> params) {
  for (Parameter* p : params) {
    auto it = ck.find(p->name);
    LTE4G_REQUIRE(it != ck.end(), ValidationError, "checkpoint: missing parameter '" + p->name + "'");
    LTE4G_REQUIRE(it->second.same_shape(p->value), ValidationError,
                  "checkpoint: parameter '" + p->name + "' has shape " + it->second.shape_str() +
                      ", expected " + p->value.shape_str());
    p->value = it->second;
  }
}

}  // namespace lte4g
