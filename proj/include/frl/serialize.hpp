#pragma once

// JSON text form of a Bayesian network.

#include <string>
#include <vector>

#include "json.hpp"

#include "frl/errors.hpp"
#include "frl/factor.hpp"
#include "frl/model.hpp"

namespace frl {

inline constexpr const char* kNetworkFormat = "frl-bn";
inline constexpr int kNetworkFormatVersion = 1;

/// CPT values are listed row-major over the canonical (id-sorted) scope.
inline nlohmann::json network_to_json(const BayesianNetwork& bn) {
    nlohmann::json j;
    j["format"] = kNetworkFormat;
    j["version"] = kNetworkFormatVersion;
    j["variables"] = nlohmann::json::array();
    for (const auto& v : bn.variables())
        j["variables"].push_back({{"id", v.id.value}, {"name", v.name}, {"role", to_string(v.role)}, {"states", v.states}});
    j["cpts"] = nlohmann::json::array();
    for (const auto& c : bn.cpts()) {
        std::vector<std::uint32_t> parents, scope;
        for (VarId p : c.parents()) parents.push_back(p.value);
        for (VarId s : c.table().scope()) scope.push_back(s.value);
        j["cpts"].push_back(
            {{"child", c.child().value}, {"parents", parents}, {"scope", scope}, {"values", c.table().values()}});
    }
    return j;
}

inline BayesianNetwork network_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != kNetworkFormat) throw ModelError("not a network document");
        if (j.at("version").get<int>() != kNetworkFormatVersion)
            throw ModelError("unsupported network format version " + std::to_string(j.at("version").get<int>()));
        std::vector<DiscreteVariable> vars;
        for (const auto& v : j.at("variables"))
            vars.push_back({VarId(v.at("id").get<std::uint32_t>()), v.at("name").get<std::string>(),
                            v.at("states").get<std::vector<std::string>>(),
                            role_from_string(v.at("role").get<std::string>())});
        auto card_of = [&](std::uint32_t id) -> std::size_t {
            for (const auto& v : vars)
                if (v.id.value == id) return v.cardinality();
            throw ModelError("CPT refers to unknown variable " + std::to_string(id));
        };
        std::vector<Cpt> cpts;
        for (const auto& c : j.at("cpts")) {
            std::vector<VarId> parents, scope;
            std::vector<std::size_t> cards;
            for (auto p : c.at("parents").get<std::vector<std::uint32_t>>()) parents.emplace_back(p);
            for (auto s : c.at("scope").get<std::vector<std::uint32_t>>()) {
                scope.emplace_back(s);
                cards.push_back(card_of(s));
            }
            cpts.emplace_back(VarId(c.at("child").get<std::uint32_t>()), std::move(parents),
                              Factor(std::move(scope), std::move(cards), c.at("values").get<std::vector<double>>()));
        }
        return BayesianNetwork(std::move(vars), std::move(cpts));
    } catch (const nlohmann::json::exception& e) {
        throw ModelError(std::string("malformed network document: ") + e.what());
    }
}

} // namespace frl
