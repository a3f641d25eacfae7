#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "densecorr/errors.hpp"
#include "densecorr/funcmap.hpp"
#include "densecorr/geodesics.hpp"
#include "densecorr/mesh.hpp"
#include "densecorr/mesh_io.hpp"
#include "densecorr/pipeline.hpp"
#include "densecorr/semantic.hpp"

namespace densecorr {

// Per-target-vertex normalized geodesic errors (x100). Vertices whose group
// has no counterpart on the source are excluded and hold NaN.
struct GeodesicErrors {
    Eigen::VectorXd per_vertex;
    std::vector<char> included;
    Index num_included = 0;

    double coverage() const {
        return per_vertex.size() ? static_cast<double>(num_included) / static_cast<double>(per_vertex.size()) : 0.0;
    }
    Eigen::VectorXd included_errors() const {
        Eigen::VectorXd out(num_included);
        Index c = 0;
        for (Index j = 0; j < per_vertex.size(); ++j) {
            if (included[static_cast<std::size_t>(j)]) out(c++) = per_vertex(j);
        }
        return out;
    }
    double mean() const { return num_included ? included_errors().mean() : std::numeric_limits<double>::quiet_NaN(); }
};

// err_j = 100 * min over source vertices u in target j's group of
// d_src(match(j), u) / sqrt(source area).
inline GeodesicErrors geodesic_error(const std::vector<int>& target_to_source, const SemanticGroups& source_groups,
                                     const SemanticGroups& target_groups, const GeodesicMatrix& source_geo,
                                     const VertexAreas& source_areas) {
    const Index nN = static_cast<Index>(target_to_source.size());
    const Index nM = source_groups.num_vertices();
    if (target_groups.num_vertices() != nN) throw ArgumentError("point map and target groups disagree in vertex count");
    if (source_geo.rows() != nM || source_geo.cols() != nM || source_areas.size() != nM) {
        throw ArgumentError("source groups, geodesic matrix and areas disagree in vertex count");
    }
    const double scale = 100.0 / std::sqrt(source_areas.sum());
    // Distance from every source vertex to each needed source group, computed lazily.
    std::map<int, Eigen::VectorXd> to_group;
    auto distances = [&](int g) -> const Eigen::VectorXd& {
        auto it = to_group.find(g);
        if (it != to_group.end()) return it->second;
        Eigen::VectorXd d = Eigen::VectorXd::Constant(nM, std::numeric_limits<double>::infinity());
        for (int u : source_groups.members(g)) d = d.cwiseMin(source_geo.col(u));
        return to_group.emplace(g, std::move(d)).first->second;
    };
    GeodesicErrors out;
    out.per_vertex = Eigen::VectorXd::Constant(nN, std::numeric_limits<double>::quiet_NaN());
    out.included.assign(static_cast<std::size_t>(nN), 0);
    for (Index j = 0; j < nN; ++j) {
        const int g = target_groups.group_of(j);
        if (!source_groups.has(g)) continue;
        const int m = target_to_source[static_cast<std::size_t>(j)];
        if (m < 0 || m >= nM) throw ArgumentError("point map entry " + std::to_string(j) + " out of range");
        out.per_vertex(j) = scale * distances(g)(m);
        out.included[static_cast<std::size_t>(j)] = 1;
        ++out.num_included;
    }
    if (out.num_included == 0) throw DataError("no target semantic group exists on the source; evaluation impossible");
    return out;
}

struct AucCurve {
    Eigen::VectorXd thresholds;
    Eigen::VectorXd accuracy;
    double auc = 0.0;
};

inline constexpr double kDefaultAucMax = 25.0;
inline constexpr Index kDefaultAucSamples = 100;

// accuracy(t) = fraction of errors <= t at `samples` uniform thresholds in
// [0, max_threshold]; auc is the trapezoidal integral divided by max_threshold.
inline AucCurve auc(const Eigen::VectorXd& errors, double max_threshold = kDefaultAucMax,
                    Index samples = kDefaultAucSamples) {
    if (errors.size() == 0) throw ArgumentError("auc of an empty error list");
    if (!(max_threshold > 0.0)) throw ArgumentError("auc needs max_threshold > 0");
    if (samples < 2) throw ArgumentError("auc needs at least 2 threshold samples");
    std::vector<double> sorted(errors.data(), errors.data() + errors.size());
    std::sort(sorted.begin(), sorted.end());
    AucCurve c;
    c.thresholds.resize(samples);
    c.accuracy.resize(samples);
    for (Index i = 0; i < samples; ++i) {
        const double t = max_threshold * static_cast<double>(i) / static_cast<double>(samples - 1);
        c.thresholds(i) = t;
        const auto count = std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
        c.accuracy(i) = static_cast<double>(count) / static_cast<double>(sorted.size());
    }
    // The integral over [0, max] divided by max is the trapezoid rule in index space.
    double sum = 0.5 * (c.accuracy(0) + c.accuracy(samples - 1));
    for (Index i = 1; i + 1 < samples; ++i) sum += c.accuracy(i);
    c.auc = sum / static_cast<double>(samples - 1);
    return c;
}

enum class Split { Train, Val, Test };

inline std::string to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

struct DatasetInstance {
    std::string category;
    std::string name;
    TriMesh textured_mesh;
    TriMesh remeshed;
    SemanticGroups groups;
    GeodesicMatrix geo;
    Split split = Split::Test;
};

namespace detail {

inline Split parse_split(const std::string& s, const std::filesystem::path& where) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw FormatError(where.string() + ": unknown split '" + s + "'");
}

}  // namespace detail

// Loads root/<category>/<instance>/{mesh.ply, remeshed.ply, groups.json, geo.dgm}.
// A missing geo.dgm is computed on the remeshed geometry and written back as a
// cache. An optional <instance>/meta.json {"split": "train"|"val"|"test"}
// sets the split (default test). Instances are sorted by category, then name.
inline std::vector<DatasetInstance> load_dataset(const std::filesystem::path& root, const std::string& only_category = "",
                                                 unsigned geo_threads = 1) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw DataError("dataset root is not a directory: " + root.string());
    std::vector<fs::path> dirs;
    for (const auto& cat : fs::directory_iterator(root)) {
        if (!cat.is_directory()) continue;
        if (!only_category.empty() && cat.path().filename().string() != only_category) continue;
        for (const auto& inst : fs::directory_iterator(cat.path())) {
            if (inst.is_directory()) dirs.push_back(inst.path());
        }
    }
    std::sort(dirs.begin(), dirs.end());
    std::vector<DatasetInstance> out;
    for (const auto& dir : dirs) {
        DatasetInstance d;
        d.category = dir.parent_path().filename().string();
        d.name = dir.filename().string();
        const std::string id = d.category + "/" + d.name;
        d.textured_mesh = load_mesh(dir / "mesh.ply");
        d.remeshed = load_mesh(dir / "remeshed.ply");
        d.groups = load_groups(dir / "groups.json");
        if (d.groups.num_vertices() != d.remeshed.num_vertices()) {
            throw DataError("instance " + id + ": groups.json has n=" + std::to_string(d.groups.num_vertices()) +
                            " but remeshed.ply has " + std::to_string(d.remeshed.num_vertices()) + " vertices");
        }
        const fs::path geo_path = dir / "geo.dgm";
        if (fs::exists(geo_path)) {
            d.geo = load_geodesic_matrix(geo_path);
            if (d.geo.rows() != d.remeshed.num_vertices()) {
                throw DataError("instance " + id + ": geo.dgm has n=" + std::to_string(d.geo.rows()) +
                                " but remeshed.ply has " + std::to_string(d.remeshed.num_vertices()) + " vertices");
            }
        } else {
            // Round through float32 as the cache stores it, so results do not
            // depend on whether the cache existed.
            d.geo = geodesic_matrix(d.remeshed, geo_threads).cast<float>().cast<double>();
            save_geodesic_matrix(geo_path, d.geo);
        }
        const fs::path meta = dir / "meta.json";
        if (fs::exists(meta)) {
            std::ifstream in(meta);
            try {
                nlohmann::json j;
                in >> j;
                if (j.contains("split")) d.split = detail::parse_split(j["split"].get<std::string>(), meta);
            } catch (const nlohmann::json::exception& e) {
                throw FormatError(meta.string() + ": " + e.what());
            }
        }
        out.push_back(std::move(d));
    }
    return out;
}

struct PairResult {
    std::string source, target;
    bool ok = false;
    std::string error;
    double err_mean = std::numeric_limits<double>::quiet_NaN();
    double auc = std::numeric_limits<double>::quiet_NaN();
    double coverage = 0.0;
    double wall_ms = 0.0;
};

struct BenchmarkResult {
    std::string category;
    std::vector<PairResult> pairs;  // row-major over (source, target) in name order
    double err_mean = std::numeric_limits<double>::quiet_NaN();
    double auc_mean = std::numeric_limits<double>::quiet_NaN();
    Index failed = 0;
};

struct BenchmarkOptions {
    unsigned jobs = 1;
    double auc_max = kDefaultAucMax;
    Index auc_samples = kDefaultAucSamples;
    bool test_split_only = true;
    // Optional per-instance external features (keyed by instance name).
    std::function<std::optional<FeatureField>(const DatasetInstance&)> external_features;
    // Called once per finished pair (from worker threads, serialized).
    std::function<void(const PairResult&)> on_pair;
};

namespace detail {

// Runs body(i) for i in [0, count) on up to `jobs` threads.
inline void parallel_for(std::size_t count, unsigned jobs, const std::function<void(std::size_t)>& body) {
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    if (jobs == 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < jobs; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace detail

// Evaluates every ordered pair (including self-pairs) of the category's
// instances. Pair failures are recorded, not fatal.
inline BenchmarkResult benchmark_category(const std::vector<DatasetInstance>& dataset, const std::string& category,
                                          const MatcherConfig& matcher, const BenchmarkOptions& opts = {}) {
    std::vector<const DatasetInstance*> inst;
    for (const auto& d : dataset) {
        if (d.category == category && (!opts.test_split_only || d.split == Split::Test)) inst.push_back(&d);
    }
    if (inst.empty()) throw ArgumentError("category '" + category + "' has no test instances");
    std::sort(inst.begin(), inst.end(), [](const auto* a, const auto* b) { return a->name < b->name; });
    const std::size_t N = inst.size();

    std::vector<std::optional<PreparedShape>> prepared(N);
    std::vector<std::string> prep_error(N);
    std::vector<VertexAreas> areas(N);
    detail::parallel_for(N, opts.jobs, [&](std::size_t i) {
        try {
            std::optional<FeatureField> ext;
            if (opts.external_features) ext = opts.external_features(*inst[i]);
            prepared[i] = prepare_shape(inst[i]->remeshed, matcher, ext);
            areas[i] = vertex_areas(inst[i]->remeshed);
        } catch (const std::exception& e) {
            prep_error[i] = e.what();
        }
    });

    BenchmarkResult res;
    res.category = category;
    res.pairs.resize(N * N);
    std::mutex report;
    detail::parallel_for(N * N, opts.jobs, [&](std::size_t idx) {
        const std::size_t si = idx / N, ti = idx % N;
        PairResult& pr = res.pairs[idx];
        pr.source = inst[si]->name;
        pr.target = inst[ti]->name;
        const auto start = std::chrono::steady_clock::now();
        try {
            if (!prepared[si]) throw DataError(pr.source + ": " + prep_error[si]);
            if (!prepared[ti]) throw DataError(pr.target + ": " + prep_error[ti]);
            const MatchResult m = match_shapes(*prepared[si], *prepared[ti], matcher);
            // Errors are measured on the source geometry as loaded (geo.dgm is in its units).
            const GeodesicErrors ge =
                geodesic_error(m.points.target_to_source, inst[si]->groups, inst[ti]->groups, inst[si]->geo, areas[si]);
            pr.err_mean = ge.mean();
            pr.auc = auc(ge.included_errors(), opts.auc_max, opts.auc_samples).auc;
            pr.coverage = ge.coverage();
            pr.ok = true;
        } catch (const std::exception& e) {
            pr.error = e.what();
        }
        pr.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        if (opts.on_pair) {
            std::lock_guard lock(report);
            opts.on_pair(pr);
        }
    });

    double se = 0.0, sa = 0.0;
    Index ok = 0;
    for (const auto& pr : res.pairs) {
        if (!pr.ok) {
            ++res.failed;
            continue;
        }
        se += pr.err_mean;
        sa += pr.auc;
        ++ok;
    }
    if (ok) {
        res.err_mean = se / static_cast<double>(ok);
        res.auc_mean = sa / static_cast<double>(ok);
    }
    return res;
}

inline std::vector<std::string> categories(const std::vector<DatasetInstance>& dataset) {
    std::vector<std::string> out;
    for (const auto& d : dataset) out.push_back(d.category);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

namespace detail {

inline std::string fixed(double v, int digits = 6) {
    if (std::isnan(v)) return "nan";
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

}  // namespace detail

// CSV with columns category,pair,err,auc,coverage,wall_ms,status. With
// include_timing = false the wall_ms column is left empty so the file is
// byte-identical across runs.
inline void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkResult>& results, bool include_timing = true) {
    out << "category,pair,err,auc,coverage,wall_ms,status\n";
    for (const auto& r : results) {
        for (const auto& p : r.pairs) {
            out << r.category << ',' << p.source << "->" << p.target << ',' << detail::fixed(p.err_mean) << ','
                << detail::fixed(p.auc) << ',' << detail::fixed(p.coverage) << ','
                << (include_timing ? detail::fixed(p.wall_ms, 1) : std::string()) << ','
                << (p.ok ? std::string("ok") : "failed: " + p.error) << '\n';
        }
    }
}

// {category: {err_mean, auc_mean, pairs, failed}, "overall": {err_mean, auc_mean}}.
// The overall values are means over all successful pairs.
inline nlohmann::json benchmark_summary(const std::vector<BenchmarkResult>& results) {
    nlohmann::json j = nlohmann::json::object();
    double se = 0.0, sa = 0.0;
    Index ok = 0;
    auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
    for (const auto& r : results) {
        j[r.category] = {{"err_mean", num(r.err_mean)},
                         {"auc_mean", num(r.auc_mean)},
                         {"pairs", r.pairs.size()},
                         {"failed", r.failed}};
        for (const auto& p : r.pairs) {
            if (!p.ok) continue;
            se += p.err_mean;
            sa += p.auc;
            ++ok;
        }
    }
    j["overall"] = {{"err_mean", num(ok ? se / static_cast<double>(ok) : std::nan(""))},
                    {"auc_mean", num(ok ? sa / static_cast<double>(ok) : std::nan(""))}};
    return j;
}

}  // namespace densecorr
