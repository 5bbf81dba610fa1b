#pragma once

// Experiment configuration. A JSON document whose keys may be nested
// ({"em": {"conv_tol": 1e-3}}) or dotted ({"em.conv_tol": 1e-3}).
// Unknown keys are ignored, so instance.json files written by `simulate`
// are themselves valid configs for `identify`.

#include "json.hpp"

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "bsi/bases.hpp"
#include "bsi/em.hpp"
#include "bsi/io/csv.hpp"
#include "bsi/simulation.hpp"

namespace bsi::io {

using nlohmann::json;

struct GroupSpec {
    Index p;
    int runs;
};

struct BasisSpec {
    std::string kind = "piecewise_constant";  // or "sinusoid"
    std::vector<Index> switch_instants;
    std::vector<double> frequencies;

    [[nodiscard]] bool explicit_basis() const {
        return kind == "sinusoid" ? !frequencies.empty() : !switch_instants.empty();
    }

    [[nodiscard]] InputBasis build(Index N) const {
        if (kind == "piecewise_constant") return piecewise_constant_basis(switch_instants, N);
        if (kind == "sinusoid") return sinusoid_basis(frequencies, N);
        throw InputError("unknown basis.kind '" + kind + "'");
    }

    [[nodiscard]] json to_json() const {
        json j;
        j["kind"] = kind;
        if (kind == "sinusoid") {
            j["frequencies"] = frequencies;
        } else {
            j["switch_instants"] = switch_instants;
        }
        return j;
    }
};

struct ExperimentConfig {
    std::vector<GroupSpec> groups{{10, 100}, {20, 100}, {30, 100}, {40, 100}, {50, 100}, {60, 100}};
    Index N = 200;
    Index n = 50;
    double noise_ratio = 10.0;
    RandomSystemSpec system;
    EMSettings em;
    std::uint64_t master_seed = 1;
    std::string output_dir = ".";
    BasisSpec basis;

    void validate() const {
        if (N < 1 || n < 1 || n > N) throw InputError("config: need 1 <= n <= N");
        if (!(noise_ratio > 0.0)) throw InputError("config: noise_ratio must be positive");
        if (groups.empty()) throw InputError("config: groups must be non-empty");
        for (const auto& g : groups) {
            if (g.p < 1 || g.p > N || g.runs < 1) {
                throw InputError("config: every group needs 1 <= p <= N and runs >= 1");
            }
        }
        em.validate();
    }
};

namespace detail {

inline const json* lookup(const json& root, const std::string& dotted) {
    if (root.contains(dotted)) return &root.at(dotted);
    const json* cur = &root;
    std::size_t start = 0;
    for (;;) {
        const auto dot = dotted.find('.', start);
        const std::string key = dotted.substr(start, dot == std::string::npos ? dotted.npos : dot - start);
        if (!cur->is_object() || !cur->contains(key)) return nullptr;
        cur = &cur->at(key);
        if (dot == std::string::npos) return cur;
        start = dot + 1;
    }
}

template <typename T>
void read_key(const json& root, const std::string& key, T& out) {
    if (const json* v = lookup(root, key)) {
        try {
            out = v->get<T>();
        } catch (const json::exception& e) {
            throw DataError("config key '" + key + "': " + e.what());
        }
    }
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j, ExperimentConfig cfg = {}) {
    if (!j.is_object()) throw DataError("config must be a JSON object");
    detail::read_key(j, "N", cfg.N);
    detail::read_key(j, "n", cfg.n);
    detail::read_key(j, "noise_ratio", cfg.noise_ratio);
    detail::read_key(j, "seed", cfg.master_seed);
    detail::read_key(j, "output_dir", cfg.output_dir);
    if (const json* g = detail::lookup(j, "groups")) {
        if (!g->is_array()) throw DataError("config key 'groups' must be a list");
        cfg.groups.clear();
        for (const auto& e : *g) {
            if (!e.is_object() || !e.contains("p") || !e.contains("runs")) {
                throw DataError("config: each group needs 'p' and 'runs'");
            }
            try {
                cfg.groups.push_back({e.at("p").get<Index>(), e.at("runs").get<int>()});
            } catch (const json::exception& ex) {
                throw DataError(std::string("config key 'groups': ") + ex.what());
            }
        }
    }
    detail::read_key(j, "em.conv_tol", cfg.em.conv_tol);
    detail::read_key(j, "em.max_iters", cfg.em.max_iters);
    detail::read_key(j, "em.beta_grid", cfg.em.beta_grid_size);
    detail::read_key(j, "em.restarts", cfg.em.restarts);
    detail::read_key(j, "system.n_poles", cfg.system.n_poles);
    detail::read_key(j, "system.n_zeros", cfg.system.n_zeros);
    detail::read_key(j, "system.pole_mag_max", cfg.system.pole_mag_max);
    detail::read_key(j, "system.zero_mag_max", cfg.system.zero_mag_max);
    detail::read_key(j, "basis.kind", cfg.basis.kind);
    detail::read_key(j, "basis.switch_instants", cfg.basis.switch_instants);
    detail::read_key(j, "basis.frequencies", cfg.basis.frequencies);
    cfg.em.n = cfg.n;
    if (cfg.basis.kind != "piecewise_constant" && cfg.basis.kind != "sinusoid") {
        throw InputError("config: basis.kind must be 'piecewise_constant' or 'sinusoid'");
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config '" + path + "'");
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw DataError("config '" + path + "': " + e.what());
    }
    return parse_config(j);
}

}  // namespace bsi::io
