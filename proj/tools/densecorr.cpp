#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "densecorr/densecorr.hpp"

namespace fs = std::filesystem;
using namespace densecorr;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kArgument = 2, kData = 3, kNumeric = 4 };

struct Globals {
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    bool log_json = false;
};

// One JSON object per line on stderr when --log-json is set.
void log_event(const Globals& g, const json& event) {
    if (g.log_json) std::cerr << event.dump() << '\n';
}

struct MatcherFlags {
    MatcherConfig cfg;
    std::string descriptors;
    std::string recovery = "nn";
    bool no_normalize = false;
    bool no_channel_normalize = false;
    bool no_reduce = false;

    void add(CLI::App* app) {
        app->add_option("-k,--k", cfg.k, "Functional map basis size")->capture_default_str()->check(CLI::PositiveNumber);
        app->add_option("--alpha", cfg.weights.alpha, "Laplacian commutativity weight")->capture_default_str();
        app->add_option("--beta", cfg.weights.beta, "Pointwise commutativity weight")->capture_default_str();
        app->add_option("--w-entropy", cfg.weights.entropy, "Entropy weight on the clamped point map")->capture_default_str();
        app->add_option("--w-sum", cfg.weights.sums, "Row/column sum weight")->capture_default_str();
        app->add_option("--descriptors", descriptors,
                        "Comma-separated descriptor stack from hks,wks,posenc; 'none' for feature files only "
                        "(default: hks,wks,posenc without feature files, none with them)");
        app->add_option("--hks", cfg.descriptors.hks_times, "HKS time samples")->capture_default_str();
        app->add_option("--wks", cfg.descriptors.wks_energies, "WKS energy samples")->capture_default_str();
        app->add_option("--posenc-bands", cfg.descriptors.posenc_bands, "Positional encoding bands")->capture_default_str();
        app->add_option("--descriptor-basis", cfg.descriptors.basis_size, "Eigenpairs used by HKS/WKS")->capture_default_str();
        app->add_option("--recovery", recovery, "Point map recovery: nn (spectral nearest neighbour) or argmax")
            ->check(CLI::IsMember({"nn", "argmax"}))
            ->capture_default_str();
        app->add_option("--max-iter", cfg.solve.max_iter, "Solver iteration limit")->capture_default_str();
        app->add_option("--tol", cfg.solve.tol, "Relative gradient tolerance")->capture_default_str();
        app->add_option("--max-channels", cfg.problem.max_channels, "Channel cap for the pointwise term")->capture_default_str();
        app->add_flag("--no-channel-reduction", no_reduce, "Use every feature channel in the pointwise term");
        app->add_flag("--no-normalize", no_normalize, "Skip scale/centre normalization of the meshes");
        app->add_flag("--no-channel-normalize", no_channel_normalize, "Skip per-channel feature normalization");
        app->add_option("--channel-norm", cfg.channel_norm, "Area-weighted norm of each feature channel (0: sqrt(k))")
            ->capture_default_str()
            ->check(CLI::NonNegativeNumber);
        app->add_flag("!--no-area-match", cfg.match_area,
                      "Solve with the target at its own surface area instead of the source's");
    }

    MatcherConfig finish(const Globals& g, bool have_feature_files) {
        if (descriptors.empty()) descriptors = have_feature_files ? "none" : "hks,wks,posenc";
        cfg.descriptors = parse_descriptor_list(descriptors == "none" ? "" : descriptors, cfg.descriptors);
        cfg.recovery = recovery == "argmax" ? Recovery::RowArgmax : Recovery::SpectralNearestNeighbor;
        cfg.normalize = !no_normalize;
        cfg.normalize_channels = !no_channel_normalize;
        cfg.problem.reduce_channels = !no_reduce;
        cfg.eigen.seed ^= g.seed;
        return cfg;
    }
};

std::optional<FeatureField> maybe_features(const std::string& path, Index n) {
    if (path.empty()) return std::nullopt;
    return load_features(path, n);
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    out << j.dump(1) << '\n';
    if (!out) throw DataError("failed writing " + path);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- match -----------------------------------------------------------------

struct MatchArgs {
    std::string source, target, source_features, target_features, out;
    bool partial = false;
    PartialOptions partial_opts;
    MatcherFlags flags;
};

void add_match(CLI::App& app, MatchArgs& a) {
    auto* cmd = app.add_subcommand("match", "Solve a functional map and write the dense point map as JSON");
    cmd->add_option("--source", a.source, "Source mesh (.ply/.obj/.off)")->required();
    cmd->add_option("--target", a.target, "Target mesh")->required();
    cmd->add_option("--source-features", a.source_features, "Source per-vertex features (DMF1 or text)");
    cmd->add_option("--target-features", a.target_features, "Target per-vertex features");
    cmd->add_option("-o,--out", a.out, "Output map JSON")->required();
    cmd->add_flag("--partial", a.partial, "Jointly solve a target membership mask (partial source)");
    cmd->add_option("--w-area", a.partial_opts.w_area, "Partial: area preservation weight")->capture_default_str();
    cmd->add_option("--w-ms", a.partial_opts.w_ms, "Partial: mask smoothness weight")->capture_default_str();
    cmd->add_option("--w-eta", a.partial_opts.w_eta, "Partial: mask entropy weight")->capture_default_str();
    a.flags.add(cmd);
}

int run_match(MatchArgs& a, const Globals& g) {
    if (a.source_features.empty() != a.target_features.empty()) {
        throw ArgumentError("give both --source-features and --target-features or neither");
    }
    const auto t0 = std::chrono::steady_clock::now();
    const MatcherConfig cfg = a.flags.finish(g, !a.source_features.empty());
    const TriMesh src = load_mesh(a.source);
    const TriMesh tgt = load_mesh(a.target);
    const PreparedShape ps = prepare_shape(src, cfg, maybe_features(a.source_features, src.num_vertices()));
    const PreparedShape pt = prepare_shape(tgt, cfg, maybe_features(a.target_features, tgt.num_vertices()));
    log_event(g, {{"event", "prepared"}, {"n_source", src.num_vertices()}, {"n_target", tgt.num_vertices()},
                  {"d", ps.features.cols()}, {"seconds", seconds_since(t0)}});

    MatchResult r;
    json extra;
    if (a.partial) {
        const FmapProblem problem = make_problem(ps.basis, pt.basis, ps.features, pt.features, cfg.weights, cfg.problem);
        PartialOptions po = a.partial_opts;
        po.solve = cfg.solve;
        const PartialSolution sol = solve_partial(problem, pt.mesh, po);
        r.fmap.C = sol.C;
        r.fmap.final_objective = sol.objective;
        r.fmap.iterations = sol.rounds;
        r.fmap.converged = true;
        r.points = recover(cfg.recovery, sol.C, ps.basis, pt.basis);
        extra["eta"] = std::vector<double>(sol.eta.data(), sol.eta.data() + sol.eta.size());
        extra["matched_area_fraction"] = sol.matched_area_fraction;
    } else {
        r = match_shapes(ps, pt, cfg);
    }
    json j = map_to_json(r.fmap, r.points, cfg.weights);
    for (auto& [key, value] : extra.items()) j[key] = value;
    write_json(a.out, j);
    const double secs = seconds_since(t0);
    std::cout << "objective " << r.fmap.final_objective << "\niterations " << r.fmap.iterations << "\nconverged "
              << (r.fmap.converged ? "yes" : "no") << "\nwall_seconds " << secs << '\n';
    log_event(g, {{"event", "match"}, {"objective", r.fmap.final_objective}, {"iterations", r.fmap.iterations},
                  {"converged", r.fmap.converged}, {"seconds", secs}});
    return kOk;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
    std::string map, source_mesh, source_groups, target_groups, source_geo, out;
    double auc_max = kDefaultAucMax;
    Index auc_samples = kDefaultAucSamples;
};

void add_eval(CLI::App& app, EvalArgs& a) {
    auto* cmd = app.add_subcommand("eval", "Normalized geodesic error and AUC of a map against semantic groups");
    cmd->add_option("--map", a.map, "Map JSON from 'match'")->required();
    cmd->add_option("--source-mesh", a.source_mesh, "Source mesh (areas and, without --source-geo, geodesics)")->required();
    cmd->add_option("--source-groups", a.source_groups, "Source groups JSON")->required();
    cmd->add_option("--target-groups", a.target_groups, "Target groups JSON")->required();
    cmd->add_option("--source-geo", a.source_geo, "Precomputed source geodesic matrix (DGM1)");
    cmd->add_option("--auc-max", a.auc_max, "AUC threshold ceiling (x100 scale)")->capture_default_str();
    cmd->add_option("--auc-samples", a.auc_samples, "AUC threshold samples")->capture_default_str();
    cmd->add_option("-o,--out", a.out, "Output JSON (default: stdout)");
}

int run_eval(EvalArgs& a, const Globals& g) {
    const MapFile mf = load_map(a.map);
    const TriMesh src = load_mesh(a.source_mesh);
    const SemanticGroups sg = load_groups(a.source_groups);
    const SemanticGroups tg = load_groups(a.target_groups);
    if (sg.num_vertices() != src.num_vertices()) throw DataError(a.source_groups + ": group count does not match the source mesh");
    const GeodesicMatrix geo = a.source_geo.empty() ? geodesic_matrix(src, g.jobs) : load_geodesic_matrix(a.source_geo);
    const GeodesicErrors ge = geodesic_error(mf.points.target_to_source, sg, tg, geo, vertex_areas(src));
    const AucCurve curve = auc(ge.included_errors(), a.auc_max, a.auc_samples);
    json j = {{"err_mean", ge.mean()},
              {"auc", curve.auc},
              {"coverage", ge.coverage()},
              {"thresholds", std::vector<double>(curve.thresholds.data(), curve.thresholds.data() + curve.thresholds.size())},
              {"accuracy", std::vector<double>(curve.accuracy.data(), curve.accuracy.data() + curve.accuracy.size())}};
    if (a.out.empty()) std::cout << j.dump(1) << '\n';
    else write_json(a.out, j);
    return kOk;
}

// ---- benchmark -------------------------------------------------------------

struct BenchArgs {
    std::string root, category, csv, json_out, features_name;
    bool all_splits = false;
    bool no_timing = false;
    double auc_max = kDefaultAucMax;
    Index auc_samples = kDefaultAucSamples;
    MatcherFlags flags;
};

void add_benchmark(CLI::App& app, BenchArgs& a) {
    auto* cmd = app.add_subcommand("benchmark", "All-pairs benchmark over a dataset root");
    cmd->add_option("--root", a.root, "Dataset root (<category>/<instance>/...)")->required();
    cmd->add_option("--category", a.category, "Restrict to one category");
    cmd->add_option("--csv", a.csv, "Per-pair CSV output")->required();
    cmd->add_option("--json", a.json_out, "Aggregate JSON output");
    cmd->add_option("--features", a.features_name,
                    "Per-instance feature file name inside each instance directory (e.g. features.dmf)");
    cmd->add_flag("--all-splits", a.all_splits, "Use train/val instances too");
    cmd->add_flag("--no-timing", a.no_timing, "Leave the wall_ms column empty (byte-stable CSV)");
    cmd->add_option("--auc-max", a.auc_max, "AUC threshold ceiling (x100 scale)")->capture_default_str();
    cmd->add_option("--auc-samples", a.auc_samples, "AUC threshold samples")->capture_default_str();
    a.flags.add(cmd);
}

int run_benchmark(BenchArgs& a, const Globals& g) {
    const MatcherConfig cfg = a.flags.finish(g, !a.features_name.empty());
    const auto dataset = load_dataset(a.root, a.category, g.jobs);
    if (dataset.empty()) throw DataError("no instances found under " + a.root);
    BenchmarkOptions opts;
    opts.jobs = g.jobs;
    opts.auc_max = a.auc_max;
    opts.auc_samples = a.auc_samples;
    opts.test_split_only = !a.all_splits;
    if (!a.features_name.empty()) {
        const fs::path root = a.root;
        const std::string name = a.features_name;
        opts.external_features = [root, name](const DatasetInstance& d) -> std::optional<FeatureField> {
            return load_features(root / d.category / d.name / name, d.remeshed.num_vertices());
        };
    }
    opts.on_pair = [&](const PairResult& p) {
        log_event(g, {{"event", "pair"}, {"source", p.source}, {"target", p.target}, {"ok", p.ok},
                      {"err", p.ok ? json(p.err_mean) : json(nullptr)}, {"auc", p.ok ? json(p.auc) : json(nullptr)},
                      {"wall_ms", p.wall_ms}, {"error", p.error}});
    };
    std::vector<std::string> cats = a.category.empty() ? categories(dataset) : std::vector<std::string>{a.category};
    std::vector<BenchmarkResult> results;
    for (const auto& c : cats) results.push_back(benchmark_category(dataset, c, cfg, opts));
    {
        std::ofstream out(a.csv);
        if (!out) throw DataError("cannot write file: " + a.csv);
        write_benchmark_csv(out, results, !a.no_timing);
    }
    const json summary = benchmark_summary(results);
    if (!a.json_out.empty()) write_json(a.json_out, summary);
    std::cout << summary.dump(1) << '\n';
    return kOk;
}

// ---- transfer --------------------------------------------------------------

struct TransferArgs {
    std::string source, target, map, out;
    MatcherFlags flags;
};

// Loads the map file, or solves a fresh descriptor-based map when none is given.
MatchResult map_for(const TransferArgs& a, MatcherConfig cfg, const PreparedShape& ps, const PreparedShape& pt) {
    if (a.map.empty()) return match_shapes(ps, pt, cfg);
    MapFile mf = load_map(a.map);
    if (static_cast<Index>(mf.points.target_to_source.size()) != pt.mesh.num_vertices()) {
        throw DataError(a.map + ": map covers " + std::to_string(mf.points.target_to_source.size()) +
                        " target vertices, target mesh has " + std::to_string(pt.mesh.num_vertices()));
    }
    return {mf.fmap, mf.points};
}

void add_transfer_common(CLI::App* cmd, TransferArgs& a) {
    cmd->add_option("--source", a.source, "Simplified source (template) mesh")->required();
    cmd->add_option("--target", a.target, "Simplified target mesh")->required();
    cmd->add_option("--map", a.map, "Map JSON from 'match' (solved from descriptors when omitted)");
    a.flags.add(cmd);
}

struct ColorArgs {
    TransferArgs t;
    std::string textured;
    bool binary = false;
};

void add_transfer_color(CLI::App& app, ColorArgs& a) {
    auto* cmd = app.add_subcommand("transfer-color", "Copy vertex colours from a textured source onto the target");
    cmd->add_option("--source-textured", a.textured, "Full-resolution coloured source mesh")->required();
    cmd->add_option("-o,--out", a.t.out, "Output coloured PLY")->required();
    cmd->add_flag("--binary", a.binary, "Write binary PLY");
    add_transfer_common(cmd, a.t);
}

int run_transfer_color(ColorArgs& a, const Globals& g) {
    const MatcherConfig cfg = a.t.flags.finish(g, false);
    const TriMesh textured = load_mesh(a.textured);
    const TriMesh src = load_mesh(a.t.source);
    const TriMesh tgt = load_mesh(a.t.target);
    std::vector<int> match;
    if (a.t.map.empty()) {
        const PreparedShape ps = prepare_shape(src, cfg), pt = prepare_shape(tgt, cfg);
        match = match_shapes(ps, pt, cfg).points.target_to_source;
    } else {
        const MapFile mf = load_map(a.t.map);
        if (static_cast<Index>(mf.points.target_to_source.size()) != tgt.num_vertices()) {
            throw DataError(a.t.map + ": map size does not match the target mesh");
        }
        match = mf.points.target_to_source;
    }
    save_ply(a.t.out, transfer_colors(textured, src, tgt, match), a.binary);
    return kOk;
}

struct KeypointArgs {
    TransferArgs t;
    std::string keypoints;
};

void add_transfer_keypoints(CLI::App& app, KeypointArgs& a) {
    auto* cmd = app.add_subcommand("transfer-keypoints", "Move template keypoints onto the target");
    cmd->add_option("--keypoints", a.keypoints, "Keypoints JSON on the source mesh")->required();
    cmd->add_option("-o,--out", a.t.out, "Output JSON (default: stdout)");
    add_transfer_common(cmd, a.t);
}

int run_transfer_keypoints(KeypointArgs& a, const Globals& g) {
    MatcherConfig cfg = a.t.flags.finish(g, false);
    const TriMesh src = load_mesh(a.t.source);
    const TriMesh tgt = load_mesh(a.t.target);
    const auto resolved = resolve_keypoints(load_keypoints(a.keypoints), src);
    if (!a.t.map.empty()) {
        // Only the spectral bases are needed for the fallback; size them to the stored C.
        const MapFile mf = load_map(a.t.map);
        cfg.k = mf.fmap.C.rows();
        cfg.descriptors.use_hks = cfg.descriptors.use_wks = false;
        cfg.descriptors.use_posenc = true;
    }
    const PreparedShape ps = prepare_shape(src, cfg), pt = prepare_shape(tgt, cfg);
    const MatchResult r = map_for(a.t, cfg, ps, pt);
    const auto moved = transfer_keypoints(resolved, r.points, SpectralFallback{r.fmap.C, ps.basis, pt.basis});
    const json j = keypoints_to_json(moved);
    if (a.t.out.empty()) std::cout << j.dump(1) << '\n';
    else write_json(a.t.out, j);
    return kOk;
}

// ---- descriptors -----------------------------------------------------------

struct DescriptorArgs {
    std::string mesh, out;
    Index hks_times = 0, wks_energies = 0, posenc_bands = -1;
    Index basis_size = 128;
    bool no_normalize = false;
    bool unit = false;
};

void add_descriptors(CLI::App& app, DescriptorArgs& a) {
    auto* cmd = app.add_subcommand("descriptors", "Write a descriptor stack as a DMF1 feature file");
    cmd->add_option("--mesh", a.mesh, "Input mesh")->required();
    cmd->add_option("-o,--out", a.out, "Output DMF1 file")->required();
    cmd->add_option("--hks", a.hks_times, "HKS time samples (0 = off)");
    cmd->add_option("--wks", a.wks_energies, "WKS energy samples (0 = off)");
    cmd->add_option("--posenc", a.posenc_bands, "Positional encoding bands (-1 = off)");
    cmd->add_option("--descriptor-basis", a.basis_size, "Eigenpairs used by HKS/WKS")->capture_default_str();
    cmd->add_flag("--no-normalize", a.no_normalize, "Skip scale/centre normalization");
    cmd->add_flag("--unit", a.unit, "Unit-normalize every row");
}

int run_descriptors(DescriptorArgs& a, const Globals& g) {
    if (a.hks_times <= 0 && a.wks_energies <= 0 && a.posenc_bands < 0) {
        throw ArgumentError("select at least one of --hks, --wks, --posenc");
    }
    TriMesh mesh = load_mesh(a.mesh);
    if (!a.no_normalize) mesh = normalize_mesh(mesh);
    std::vector<FeatureField> parts;
    if (a.hks_times > 0 || a.wks_energies > 0) {
        EigenOptions eo;
        eo.seed ^= g.seed;
        const SpectralBasis basis = eigenbasis(mesh, std::min(a.basis_size, mesh.num_vertices()), eo);
        if (a.hks_times > 0) parts.push_back(hks(basis, a.hks_times));
        if (a.wks_energies > 0) parts.push_back(wks(basis, a.wks_energies));
    }
    if (a.posenc_bands >= 0) parts.push_back(positional_encoding(mesh, a.posenc_bands));
    FeatureField f = concat_features(parts);
    if (a.unit) f = unit_normalize(f);
    write_features(a.out, f.values);
    std::cout << "n " << f.rows() << "\nd " << f.dim() << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dense semantic correspondence between 3D meshes via regularized functional maps"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Seed for every randomized step")->capture_default_str();
    app.add_option("--jobs", g.jobs, "Worker threads (benchmark pairs, geodesics)")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_flag("--log-json", g.log_json, "Structured JSON-lines log on stderr");

    MatchArgs match;
    EvalArgs eval;
    BenchArgs bench;
    ColorArgs color;
    KeypointArgs kps;
    DescriptorArgs desc;
    add_match(app, match);
    add_eval(app, eval);
    add_benchmark(app, bench);
    add_transfer_color(app, color);
    add_transfer_keypoints(app, kps);
    add_descriptors(app, desc);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kArgument;
    }

    warning_handler() = [&g](std::string_view msg) {
        if (g.log_json) log_event(g, {{"event", "warning"}, {"message", std::string(msg)}});
        else std::cerr << "warning: " << msg << '\n';
    };

    const std::string sub = app.get_subcommands().front()->get_name();
    try {
        if (sub == "match") return run_match(match, g);
        if (sub == "eval") return run_eval(eval, g);
        if (sub == "benchmark") return run_benchmark(bench, g);
        if (sub == "transfer-color") return run_transfer_color(color, g);
        if (sub == "transfer-keypoints") return run_transfer_keypoints(kps, g);
        if (sub == "descriptors") return run_descriptors(desc, g);
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kArgument;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
    return kArgument;
}
