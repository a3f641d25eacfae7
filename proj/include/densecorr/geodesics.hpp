#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <queue>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "densecorr/errors.hpp"
#include "densecorr/mesh.hpp"

namespace densecorr {

// n x n all-pairs distances in model units.
using GeodesicMatrix = Eigen::MatrixXd;

namespace detail {

struct Adjacency {
    std::vector<int> offset;  // CSR row pointers, size n + 1
    std::vector<int> target;
    std::vector<double> length;
};

inline Adjacency edge_graph(const TriMesh& mesh) {
    const auto edges = edge_list(mesh);
    const auto n = static_cast<std::size_t>(mesh.num_vertices());
    std::vector<int> degree(n, 0);
    for (const auto& [a, b] : edges) {
        ++degree[a];
        ++degree[b];
    }
    Adjacency g;
    g.offset.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) g.offset[i + 1] = g.offset[i] + degree[i];
    g.target.resize(g.offset[n]);
    g.length.resize(g.offset[n]);
    std::vector<int> fill(g.offset.begin(), g.offset.end() - 1);
    for (const auto& [a, b] : edges) {
        const double len = (mesh.vertices.row(a) - mesh.vertices.row(b)).norm();
        g.target[fill[a]] = b;
        g.length[fill[a]++] = len;
        g.target[fill[b]] = a;
        g.length[fill[b]++] = len;
    }
    return g;
}

inline void dijkstra(const Adjacency& g, int source, double* dist) {
    const auto n = g.offset.size() - 1;
    std::fill(dist, dist + n, std::numeric_limits<double>::infinity());
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[source] = 0.0;
    heap.emplace(0.0, source);
    while (!heap.empty()) {
        const auto [d, v] = heap.top();
        heap.pop();
        if (d > dist[v]) continue;
        for (int e = g.offset[v]; e < g.offset[v + 1]; ++e) {
            const double nd = d + g.length[e];
            const int w = g.target[e];
            if (nd < dist[w]) {
                dist[w] = nd;
                heap.emplace(nd, w);
            }
        }
    }
}

}  // namespace detail

// All-pairs shortest paths over the edge graph with Euclidean edge lengths.
// The result is symmetrized exactly (min of both directions).
inline GeodesicMatrix geodesic_matrix(const TriMesh& mesh, unsigned threads = 1) {
    const Index n = mesh.num_vertices();
    if (n == 0) throw EmptyMeshError("geodesic matrix of an empty mesh");
    int ncomp = 0;
    const auto comp = connected_components(mesh, &ncomp);
    if (ncomp > 1) {
        std::vector<Index> sizes(static_cast<std::size_t>(ncomp), 0);
        for (int c : comp) ++sizes[c];
        std::string msg = "mesh is disconnected; infinite geodesic distances between components of sizes";
        for (Index s : sizes) msg += " " + std::to_string(s);
        throw DisconnectedMeshError(msg);
    }
    const auto graph = detail::edge_graph(mesh);
    // Column-major storage: column s holds the distances from source s.
    GeodesicMatrix d(n, n);
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
    if (threads == 1) {
        for (Index s = 0; s < n; ++s) detail::dijkstra(graph, static_cast<int>(s), d.col(s).data());
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                for (Index s = t; s < n; s += threads) detail::dijkstra(graph, static_cast<int>(s), d.col(s).data());
            });
        }
        for (auto& th : pool) th.join();
    }
    d = d.cwiseMin(d.transpose()).eval();
    return d;
}

// Geodesic matrix file: "DGM1", u32 n, f32 little-endian row-major n x n.
inline void save_geodesic_matrix(const std::filesystem::path& path, const GeodesicMatrix& d) {
    if (d.rows() != d.cols()) throw ArgumentError("geodesic matrix must be square");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path.string());
    const auto n = static_cast<std::uint32_t>(d.rows());
    out.write("DGM1", 4);
    out.write(reinterpret_cast<const char*>(&n), 4);
    const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f = d.cast<float>();
    out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(4ull * n * n));
    if (!out) throw DataError("failed writing " + path.string());
}

inline GeodesicMatrix load_geodesic_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "DGM1") throw FormatError(path.string() + ": offset 0: bad magic, expected DGM1");
    std::uint32_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 4);
    if (!in) throw FormatError(path.string() + ": offset 4: truncated header");
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f(n, n);
    in.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(4ull * n * n));
    if (!in) throw FormatError(path.string() + ": truncated payload for n=" + std::to_string(n));
    if (!f.allFinite()) throw DataError(path.string() + ": non-finite geodesic distance");
    return f.cast<double>();
}

}  // namespace densecorr
