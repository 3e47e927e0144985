#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "cdisent/core/error.hpp"
#include "cdisent/scm/scm.hpp"

namespace cdisent::scm {

// SCM spec file:
// {
//   "variables": [{"name": "C", "cardinality": 2, "role": "confounder"}, ...],
//   "edges": [["C", "Z1"], ...],           // parent order = order of appearance
//   "cpts": {"C": [0.5, 0.5], "Z1": [[...], [...]], ...}
// }
// CPTs nest one array level per parent (first parent outermost).

namespace detail {

inline nlohmann::json nest_cpt(const DiscreteSCM& scm, std::size_t v) {
  const auto& ps = scm.parents(v);
  const auto& cpt = scm.cpt(v);
  const std::size_t k = scm.var(v).card;
  // Build recursively over parent dimensions.
  std::function<nlohmann::json(std::size_t, std::size_t)> build = [&](std::size_t depth, std::size_t row) {
    if (depth == ps.size()) {
      nlohmann::json leaf = nlohmann::json::array();
      for (std::size_t j = 0; j < k; ++j) leaf.push_back(cpt[row * k + j]);
      return leaf;
    }
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i = 0; i < scm.var(ps[depth]).card; ++i)
      arr.push_back(build(depth + 1, row * scm.var(ps[depth]).card + i));
    return arr;
  };
  return build(0, 0);
}

inline void flatten_cpt(const nlohmann::json& j, std::size_t depth, const std::vector<std::size_t>& dims,
                        std::vector<double>& out, const std::string& name) {
  if (!j.is_array() || j.size() != dims[depth])
    throw FormatError("SCM json: CPT of '" + name + "' has wrong nesting or extent at depth " +
                      std::to_string(depth));
  for (const auto& e : j) {
    if (depth + 1 == dims.size()) {
      if (!e.is_number()) throw FormatError("SCM json: non-numeric CPT entry for '" + name + "'");
      out.push_back(e.get<double>());
    } else {
      flatten_cpt(e, depth + 1, dims, out, name);
    }
  }
}

}  // namespace detail

inline nlohmann::json to_json(const DiscreteSCM& scm) {
  nlohmann::json j;
  j["variables"] = nlohmann::json::array();
  j["edges"] = nlohmann::json::array();
  j["cpts"] = nlohmann::json::object();
  for (std::size_t v = 0; v < scm.size(); ++v) {
    const auto& var = scm.var(v);
    j["variables"].push_back({{"name", var.name}, {"cardinality", var.card}, {"role", to_string(var.role)}});
  }
  for (std::size_t v = 0; v < scm.size(); ++v)
    for (std::size_t p : scm.parents(v)) j["edges"].push_back({scm.var(p).name, scm.var(v).name});
  for (std::size_t v = 0; v < scm.size(); ++v) j["cpts"][scm.var(v).name] = detail::nest_cpt(scm, v);
  return j;
}

inline DiscreteSCM from_json(const nlohmann::json& j) {
  try {
    std::vector<Variable> vars;
    for (const auto& v : j.at("variables"))
      vars.push_back({v.at("name").get<std::string>(), v.at("cardinality").get<std::size_t>(),
                      parse_role(v.value("role", std::string("other")))});
    auto index = [&](const std::string& name) {
      for (std::size_t i = 0; i < vars.size(); ++i)
        if (vars[i].name == name) return i;
      throw FormatError("SCM json: edge references unknown variable '" + name + "'");
    };
    std::vector<std::vector<std::size_t>> parents(vars.size());
    for (const auto& e : j.value("edges", nlohmann::json::array())) {
      if (!e.is_array() || e.size() != 2) throw FormatError("SCM json: edges must be [parent, child] pairs");
      parents[index(e[1].get<std::string>())].push_back(index(e[0].get<std::string>()));
    }
    std::vector<std::vector<double>> cpts(vars.size());
    const auto& jc = j.at("cpts");
    for (std::size_t v = 0; v < vars.size(); ++v) {
      if (!jc.contains(vars[v].name)) throw FormatError("SCM json: missing CPT for '" + vars[v].name + "'");
      std::vector<std::size_t> dims;
      for (std::size_t p : parents[v]) dims.push_back(vars[p].card);
      dims.push_back(vars[v].card);
      detail::flatten_cpt(jc.at(vars[v].name), 0, dims, cpts[v], vars[v].name);
    }
    return DiscreteSCM(std::move(vars), std::move(parents), std::move(cpts));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("SCM json: ") + e.what());
  }
}

inline void write_scm(const DiscreteSCM& scm, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << to_json(scm).dump(2) << '\n';
}

inline DiscreteSCM read_scm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
  return from_json(j);
}

}  // namespace cdisent::scm
