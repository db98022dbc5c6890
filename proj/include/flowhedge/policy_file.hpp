#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowhedge/error.hpp"
#include "flowhedge/grid.hpp"

namespace flowhedge {

enum class PolicyFlavor { speed, impulse };

/// Shared on-disk policy format (see docs/policy_format.md):
///   {"flavor": "speed" | "impulse", "t_grid": [...], "q_grid": [...],
///    "actions": [[...n_q...] x n_t+1], "metadata": {...}}
/// Speed actions are in lot/day; impulse actions are post-trade inventories.
struct PolicyFile {
    PolicyFlavor flavor = PolicyFlavor::speed;
    std::vector<double> t_grid;
    std::vector<double> q_grid;
    Table<double> actions;
    nlohmann::json metadata = nlohmann::json::object();
};

inline void validate(const PolicyFile& f) {
    auto check_grid = [](const std::vector<double>& g, const char* name) {
        if (g.size() < 2) throw FormatError(std::string(name) + " needs at least two nodes");
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!std::isfinite(g[i])) throw FormatError(std::string(name) + " has a non-finite entry");
            if (i > 0 && !(g[i] > g[i - 1])) throw FormatError(std::string(name) + " is not strictly increasing");
        }
    };
    check_grid(f.t_grid, "t_grid");
    check_grid(f.q_grid, "q_grid");
    if (f.actions.rows() != f.t_grid.size() || f.actions.cols() != f.q_grid.size())
        throw FormatError("actions must be len(t_grid) x len(q_grid)");
    for (double a : f.actions.data())
        if (!std::isfinite(a)) throw FormatError("actions contain a non-finite entry");
}

inline nlohmann::json to_json(const PolicyFile& f) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < f.actions.rows(); ++i) {
        const auto r = f.actions.row(i);
        rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return {{"flavor", f.flavor == PolicyFlavor::speed ? "speed" : "impulse"},
            {"t_grid", f.t_grid},
            {"q_grid", f.q_grid},
            {"actions", rows},
            {"metadata", f.metadata}};
}

inline PolicyFile policy_file_from_json(const nlohmann::json& j) {
    PolicyFile f;
    try {
        if (!j.is_object()) throw FormatError("policy file must be a JSON object");
        const auto flavor = j.at("flavor").get<std::string>();
        if (flavor == "speed")
            f.flavor = PolicyFlavor::speed;
        else if (flavor == "impulse")
            f.flavor = PolicyFlavor::impulse;
        else
            throw FormatError("flavor must be \"speed\" or \"impulse\"");

        auto numbers = [](const nlohmann::json& arr, const char* name) {
            if (!arr.is_array()) throw FormatError(std::string(name) + " must be an array");
            std::vector<double> out;
            out.reserve(arr.size());
            for (const auto& v : arr) {
                // NaN / Inf are written by nlohmann as null.
                if (!v.is_number()) throw FormatError(std::string(name) + " has a non-numeric entry");
                out.push_back(v.get<double>());
            }
            return out;
        };
        f.t_grid = numbers(j.at("t_grid"), "t_grid");
        f.q_grid = numbers(j.at("q_grid"), "q_grid");
        const auto& rows = j.at("actions");
        if (!rows.is_array() || rows.size() != f.t_grid.size())
            throw FormatError("actions must have one row per t_grid node");
        f.actions = Table<double>(f.t_grid.size(), f.q_grid.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto row = numbers(rows[i], "actions");
            if (row.size() != f.q_grid.size()) throw FormatError("actions row length must match q_grid");
            for (std::size_t c = 0; c < row.size(); ++c) f.actions(i, c) = row[c];
        }
        if (j.contains("metadata")) f.metadata = j.at("metadata");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("policy file: ") + e.what());
    }
    validate(f);
    return f;
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    out << j.dump(1) << '\n';
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("'" + path + "': " + e.what());
    }
}

}  // namespace flowhedge
