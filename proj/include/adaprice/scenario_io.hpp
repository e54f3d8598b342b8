#pragma once

// Scenario files (JSON).
//
//   {
//     "horizon": T,
//     "users": [ user, ... ],
//     "system_cost": cost,
//     "schedule": {"kind": "harmonic"|"constant", "c": c}
//               | {"kind": "geometric", "c": c, "ratio": r},
//     "initial_price": {"values": [p_1..p_T]} | {"flat": v} | {"uniform": {"lo": a, "hi": b}},
//     "max_iterations": K, "tolerance": tol, "seed": s
//   }
//
//   user := {"id"?: str, "type": "quadratic", "setpoint": [..T],
//            "weight": matrix, "bounds"?: {"lo": [..T], "hi": [..T]}}
//         | {"id"?: str, "type": "water_heater", "tank_capacity": c, "heat_rate": h,
//            "standing_loss": l, "draw_size": d, "discomfort_weight": w,
//            "state_levels": L, "demand": [0/1 ..T] | {"bernoulli": q | [q_1..q_T]}}
//   cost := {"type": "quadratic", "B": matrix, "base_load"?: [..T]}
//         | {"type": "norm_squared", "lambda": l}
//         | {"type": "lse_peak", "lambda": l, "alpha": a}
//   matrix := {"diag": [..T]} | {"full": [[..T] ..T]} | {"scalar": b}   (b times I)
//
// Missing ids default to "u<index>". Bernoulli demand for user i is drawn
// from seed mix(seed + i); a uniform initial price is drawn from the seed.

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adaprice/scenario.hpp"

namespace adaprice {

using Json = nlohmann::json;

namespace io_detail {

[[noreturn]] inline void schema_fail(const std::string& path, const std::string& msg) {
  throw Error(ErrorKind::schema, path, msg);
}

inline const Json& require(const Json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) schema_fail(path, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) schema_fail(path.empty() ? key : path + "." + key, "missing required key '" + key + "'");
  return *it;
}

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

inline double number(const Json& v, const std::string& path) {
  if (!v.is_number()) schema_fail(path, "expected a number");
  return v.get<double>();
}

inline std::int64_t integer(const Json& v, const std::string& path) {
  if (!v.is_number_integer()) schema_fail(path, "expected an integer");
  return v.get<std::int64_t>();
}

inline Vec vector(const Json& v, const std::string& path, Index expected) {
  if (!v.is_array()) schema_fail(path, "expected an array");
  if (static_cast<Index>(v.size()) != expected)
    schema_fail(path, "expected " + std::to_string(expected) + " entries, found " + std::to_string(v.size()));
  Vec out(expected);
  for (Index t = 0; t < expected; ++t) out[t] = number(v[static_cast<std::size_t>(t)], path + "[" + std::to_string(t) + "]");
  return out;
}

struct MatrixSpec {
  Mat full;
  bool diagonal = false;
};

inline MatrixSpec matrix(const Json& v, const std::string& path, Index horizon) {
  if (!v.is_object() || v.size() != 1) schema_fail(path, "expected exactly one of 'diag', 'full', 'scalar'");
  MatrixSpec m;
  if (v.contains("diag")) {
    m.full = vector(v["diag"], path + ".diag", horizon).asDiagonal();
    m.diagonal = true;
  } else if (v.contains("scalar")) {
    m.full = Vec::Constant(horizon, number(v["scalar"], path + ".scalar")).asDiagonal();
    m.diagonal = true;
  } else if (v.contains("full")) {
    const Json& rows = v["full"];
    if (!rows.is_array() || static_cast<Index>(rows.size()) != horizon)
      schema_fail(path + ".full", "expected " + std::to_string(horizon) + " rows");
    m.full.resize(horizon, horizon);
    for (Index r = 0; r < horizon; ++r)
      m.full.row(r) = vector(rows[static_cast<std::size_t>(r)], path + ".full[" + std::to_string(r) + "]", horizon);
  } else {
    schema_fail(path, "expected exactly one of 'diag', 'full', 'scalar'");
  }
  return m;
}

/// Runs a model constructor, re-labelling its validation errors as schema
/// errors located at `path`.
template <class F>
auto build(const std::string& path, F&& make) {
  try {
    return make();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::schema) throw;
    schema_fail(e.where().empty() ? path : join(path, e.where()), e.message());
  }
}

inline UserModel parse_user(const Json& u, const std::string& path, Index horizon, std::size_t index,
                            std::uint64_t seed) {
  if (!u.is_object()) schema_fail(path, "expected an object");
  std::string id = "u" + std::to_string(index);
  if (u.contains("id")) {
    if (!u["id"].is_string()) schema_fail(path + ".id", "expected a string");
    id = u["id"].get<std::string>();
  }
  const Json& type = require(u, "type", path);
  if (!type.is_string()) schema_fail(path + ".type", "expected a string");
  const std::string kind = type.get<std::string>();

  if (kind == "quadratic") {
    Vec setpoint = vector(require(u, "setpoint", path), path + ".setpoint", horizon);
    MatrixSpec w = matrix(require(u, "weight", path), path + ".weight", horizon);
    std::optional<BoxBounds> bounds;
    if (u.contains("bounds")) {
      const Json& b = u["bounds"];
      bounds = BoxBounds{vector(require(b, "lo", path + ".bounds"), path + ".bounds.lo", horizon),
                         vector(require(b, "hi", path + ".bounds"), path + ".bounds.hi", horizon)};
    }
    return build(path, [&] {
      QuadraticUser q = w.diagonal ? QuadraticUser::diagonal(setpoint, w.full.diagonal(), bounds)
                                   : (bounds ? throw Error(ErrorKind::unsupported, "bounds",
                                                           "box bounds require a diagonal weight")
                                             : QuadraticUser::dense(setpoint, w.full));
      return UserModel(id, std::move(q));
    });
  }

  if (kind == "water_heater") {
    WaterHeaterParams p;
    p.tank_capacity = number(require(u, "tank_capacity", path), path + ".tank_capacity");
    p.heat_rate = number(require(u, "heat_rate", path), path + ".heat_rate");
    p.standing_loss = number(require(u, "standing_loss", path), path + ".standing_loss");
    p.draw_size = number(require(u, "draw_size", path), path + ".draw_size");
    p.discomfort_weight = number(require(u, "discomfort_weight", path), path + ".discomfort_weight");
    p.state_levels = static_cast<int>(integer(require(u, "state_levels", path), path + ".state_levels"));
    const Json& demand = require(u, "demand", path);
    if (demand.is_array()) {
      if (static_cast<Index>(demand.size()) != horizon)
        schema_fail(path + ".demand", "expected " + std::to_string(horizon) + " entries");
      for (std::size_t t = 0; t < demand.size(); ++t)
        p.demand.push_back(static_cast<int>(integer(demand[t], path + ".demand[" + std::to_string(t) + "]")));
    } else {
      const Json& q = require(demand, "bernoulli", path + ".demand");
      std::vector<double> probs;
      if (q.is_array()) {
        const Vec v = vector(q, path + ".demand.bernoulli", horizon);
        probs.assign(v.data(), v.data() + v.size());
      } else {
        probs.assign(static_cast<std::size_t>(horizon), number(q, path + ".demand.bernoulli"));
      }
      p.demand = build(path + ".demand", [&] { return sample_demand(probs, seed + index); });
    }
    return build(path, [&] { return UserModel(id, WaterHeaterUser(std::move(p))); });
  }

  schema_fail(path + ".type", "unknown user type '" + kind + "'");
}

inline SystemCost parse_system_cost(const Json& c, const std::string& path, Index horizon) {
  const Json& type = require(c, "type", path);
  if (!type.is_string()) schema_fail(path + ".type", "expected a string");
  const std::string kind = type.get<std::string>();
  if (kind == "quadratic") {
    MatrixSpec b = matrix(require(c, "B", path), path + ".B", horizon);
    std::optional<Vec> base;
    if (c.contains("base_load")) base = vector(c["base_load"], path + ".base_load", horizon);
    return build(path, [&] { return SystemCost(QuadraticSystemCost(b.full, base)); });
  }
  if (kind == "norm_squared") {
    const double lambda = number(require(c, "lambda", path), path + ".lambda");
    return build(path, [&] { return SystemCost(ScaledNormSquaredCost(horizon, lambda)); });
  }
  if (kind == "lse_peak") {
    const double lambda = number(require(c, "lambda", path), path + ".lambda");
    const double alpha = number(require(c, "alpha", path), path + ".alpha");
    return build(path, [&] { return SystemCost(LSEPeakCost(horizon, lambda, alpha)); });
  }
  schema_fail(path + ".type", "unknown system cost type '" + kind + "'");
}

inline StepSchedule parse_schedule(const Json& s, const std::string& path) {
  const Json& kind_json = require(s, "kind", path);
  if (!kind_json.is_string()) schema_fail(path + ".kind", "expected a string");
  const std::string kind = kind_json.get<std::string>();
  const double c = number(require(s, "c", path), path + ".c");
  if (kind == "harmonic") return build(path, [&] { return StepSchedule::harmonic(c); });
  if (kind == "constant") return build(path, [&] { return StepSchedule::constant(c); });
  if (kind == "geometric") {
    const double ratio = number(require(s, "ratio", path), path + ".ratio");
    return build(path, [&] { return StepSchedule::geometric(c, ratio); });
  }
  schema_fail(path + ".kind", "unknown schedule kind '" + kind + "'");
}

inline PriceVector parse_initial_price(const Json& p, const std::string& path, Index horizon, std::uint64_t seed) {
  if (!p.is_object() || p.size() != 1) schema_fail(path, "expected exactly one of 'values', 'flat', 'uniform'");
  if (p.contains("values")) return build(path, [&] { return PriceVector(vector(p["values"], path + ".values", horizon)); });
  if (p.contains("flat")) {
    const double v = number(p["flat"], path + ".flat");
    return build(path, [&] { return PriceVector::constant(horizon, v); });
  }
  if (p.contains("uniform")) {
    const Json& u = p["uniform"];
    const double lo = number(require(u, "lo", path + ".uniform"), path + ".uniform.lo");
    const double hi = number(require(u, "hi", path + ".uniform"), path + ".uniform.hi");
    return build(path, [&] { return uniform_random_price(horizon, lo, hi, seed); });
  }
  schema_fail(path, "expected exactly one of 'values', 'flat', 'uniform'");
}

}  // namespace io_detail

inline Scenario parse_scenario(const Json& doc) {
  using namespace io_detail;
  if (!doc.is_object()) schema_fail("", "scenario must be a JSON object");
  const std::int64_t horizon_raw = integer(require(doc, "horizon", ""), "horizon");
  if (horizon_raw < 1) schema_fail("horizon", "must be >= 1");
  const auto horizon = static_cast<Index>(horizon_raw);
  const Json& users_json = require(doc, "users", "");
  const Json& cost_json = require(doc, "system_cost", "");
  const Json& schedule_json = require(doc, "schedule", "");
  const Json& price_json = require(doc, "initial_price", "");
  const std::int64_t max_iterations = integer(require(doc, "max_iterations", ""), "max_iterations");
  const double tolerance = number(require(doc, "tolerance", ""), "tolerance");
  const Json& seed_json = require(doc, "seed", "");
  if (!seed_json.is_number_unsigned() && !(seed_json.is_number_integer() && seed_json.get<std::int64_t>() >= 0))
    schema_fail("seed", "expected a non-negative integer");
  const auto seed = seed_json.get<std::uint64_t>();

  if (!users_json.is_array() || users_json.empty()) schema_fail("users", "expected a non-empty array");
  std::vector<UserModel> users;
  users.reserve(users_json.size());
  for (std::size_t i = 0; i < users_json.size(); ++i)
    users.push_back(parse_user(users_json[i], "users[" + std::to_string(i) + "]", horizon, i, seed));

  SystemCost g = parse_system_cost(cost_json, "system_cost", horizon);
  StepSchedule schedule = parse_schedule(schedule_json, "schedule");
  PriceVector p0 = parse_initial_price(price_json, "initial_price", horizon, seed);

  return build("", [&] {
    return Scenario(horizon, std::move(users), std::move(g), schedule, std::move(p0), max_iterations, tolerance, seed);
  });
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::schema, path, "cannot open scenario file");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::schema, path, std::string("invalid JSON: ") + e.what());
  }
}

inline Scenario load_scenario(const std::string& path) { return parse_scenario(read_json_file(path)); }

/// Resolves a dotted path such as "system_cost.alpha" or "users.2.setpoint.0"
/// to a numeric leaf; throws a schema error when it does not address one.
inline Json& scalar_at(Json& doc, const std::string& dotted) {
  if (dotted.empty()) throw Error(ErrorKind::schema, dotted, "empty parameter path");
  Json* node = &doc;
  std::stringstream ss(dotted);
  std::string token;
  while (std::getline(ss, token, '.')) {
    if (node->is_object()) {
      auto it = node->find(token);
      if (it == node->end()) throw Error(ErrorKind::schema, dotted, "no key '" + token + "'");
      node = &*it;
    } else if (node->is_array()) {
      std::size_t idx = 0;
      try {
        std::size_t used = 0;
        idx = std::stoul(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
      } catch (const std::exception&) {
        throw Error(ErrorKind::schema, dotted, "'" + token + "' is not an array index");
      }
      if (idx >= node->size()) throw Error(ErrorKind::schema, dotted, "index " + token + " out of range");
      node = &(*node)[idx];
    } else {
      throw Error(ErrorKind::schema, dotted, "'" + token + "' descends into a scalar");
    }
  }
  if (!node->is_number()) throw Error(ErrorKind::schema, dotted, "path does not address a numeric field");
  return *node;
}

}  // namespace adaprice
