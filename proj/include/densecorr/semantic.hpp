#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "densecorr/assignment.hpp"
#include "densecorr/errors.hpp"
#include "densecorr/geodesics.hpp"

namespace densecorr {

// Per-vertex part labels and the vertex sets they induce.
class SemanticGroups {
public:
    SemanticGroups() = default;

    explicit SemanticGroups(std::vector<int> group_of, std::map<int, std::string> names = {})
        : group_of_(std::move(group_of)), names_(std::move(names)) {
        for (std::size_t v = 0; v < group_of_.size(); ++v) {
            if (group_of_[v] < 0) {
                throw DataError("vertex " + std::to_string(v) + " has negative group label " + std::to_string(group_of_[v]));
            }
            groups_[group_of_[v]].push_back(static_cast<int>(v));
        }
    }

    Index num_vertices() const { return static_cast<Index>(group_of_.size()); }
    Index num_groups() const { return static_cast<Index>(groups_.size()); }
    int group_of(Index v) const { return group_of_[static_cast<std::size_t>(v)]; }
    const std::vector<int>& labels() const { return group_of_; }
    bool has(int id) const { return groups_.count(id) > 0; }

    const std::vector<int>& members(int id) const {
        auto it = groups_.find(id);
        if (it == groups_.end()) throw ArgumentError("no semantic group with id " + std::to_string(id));
        return it->second;
    }

    // Group ids in ascending order.
    std::vector<int> ids() const {
        std::vector<int> out;
        out.reserve(groups_.size());
        for (const auto& [id, _] : groups_) out.push_back(id);
        return out;
    }

    const std::map<int, std::string>& names() const { return names_; }

private:
    std::vector<int> group_of_;
    std::map<int, std::vector<int>> groups_;
    std::map<int, std::string> names_;
};

// Groups file: {"n": int, "group_of": [int; n], "names": {"id": "name"}}.
inline SemanticGroups load_groups(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    try {
        const auto n = j.at("n").get<long long>();
        auto labels = j.at("group_of").get<std::vector<int>>();
        if (static_cast<long long>(labels.size()) != n) {
            throw ShapeError(path.string() + ": group_of has " + std::to_string(labels.size()) + " entries, n=" + std::to_string(n));
        }
        std::map<int, std::string> names;
        if (j.contains("names")) {
            for (const auto& [key, value] : j.at("names").items()) names[std::stoi(key)] = value.get<std::string>();
        }
        return SemanticGroups(std::move(labels), std::move(names));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

inline void save_groups(const std::filesystem::path& path, const SemanticGroups& groups) {
    nlohmann::json j;
    j["n"] = groups.num_vertices();
    j["group_of"] = groups.labels();
    if (!groups.names().empty()) {
        nlohmann::json names = nlohmann::json::object();
        for (const auto& [id, name] : groups.names()) names[std::to_string(id)] = name;
        j["names"] = names;
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path.string());
    out << j.dump() << '\n';
}

// Average geodesic distance between optimally matched vertices of groups a and
// b: (1 / min(|a|, |b|)) * min-cost assignment over the |a| x |b| block of geo.
// For vertices on different meshes, evaluate on the target mesh with the
// source vertex's group id.
inline double semantic_distance(const SemanticGroups& groups, const GeodesicMatrix& geo, int a, int b) {
    if (geo.rows() != groups.num_vertices() || geo.cols() != groups.num_vertices()) {
        throw ArgumentError("geodesic matrix and semantic groups disagree in vertex count");
    }
    const auto& ga = groups.members(std::min(a, b));  // fixed order keeps the result bitwise symmetric
    const auto& gb = groups.members(std::max(a, b));
    if (a == b) return 0.0;
    const Eigen::MatrixXd cost = geo(ga, gb);
    const Assignment m = min_cost_assignment(cost);
    return m.cost / static_cast<double>(std::min(ga.size(), gb.size()));
}

// G x G distances over the ascending group ids; symmetric by construction.
struct SemanticDistanceTable {
    std::vector<int> ids;
    Eigen::MatrixXd values;

    std::optional<Index> index_of(int id) const {
        auto it = std::lower_bound(ids.begin(), ids.end(), id);
        if (it == ids.end() || *it != id) return std::nullopt;
        return static_cast<Index>(it - ids.begin());
    }
    bool has(int id) const { return index_of(id).has_value(); }
    double at(int a, int b) const {
        const auto ia = index_of(a), ib = index_of(b);
        if (!ia || !ib) throw ArgumentError("semantic distance table has no group " + std::to_string(ia ? b : a));
        return values(*ia, *ib);
    }
};

inline SemanticDistanceTable semantic_distance_table(const SemanticGroups& groups, const GeodesicMatrix& geo) {
    SemanticDistanceTable table;
    table.ids = groups.ids();
    const auto g = static_cast<Index>(table.ids.size());
    table.values = Eigen::MatrixXd::Zero(g, g);
    for (Index i = 0; i < g; ++i) {
        for (Index j = i + 1; j < g; ++j) {
            table.values(i, j) = table.values(j, i) = semantic_distance(groups, geo, table.ids[i], table.ids[j]);
        }
    }
    return table;
}

}  // namespace densecorr
