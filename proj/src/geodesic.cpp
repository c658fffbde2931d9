#include "unimatch/error.hpp"
#include "unimatch/mesh.hpp"

#include <limits>
#include <map>
#include <tuple>
#include <queue>

namespace unimatch {

namespace {

using QueueItem = std::pair<double, int>;
using MinQueue = std::priority_queue<QueueItem, std::vector<QueueItem>, std::greater<>>;

// Distance between the apexes of two triangles sharing edge (p, q), after
// rotating the second triangle into the plane of the first. Returns a
// negative value when the unfolded quad is not convex along the diagonal.
double unfolded_diagonal(
    const Eigen::Vector3d& p,
    const Eigen::Vector3d& q,
    const Eigen::Vector3d& a,
    const Eigen::Vector3d& b)
{
    const Eigen::Vector3d e = q - p;
    const double len = e.norm();
    if (len <= 0.0) return -1.0;
    const Eigen::Vector3d u = e / len;

    // 2D coordinates: edge along x, apex a above (y > 0), apex b below.
    const Eigen::Vector3d pa = a - p;
    const Eigen::Vector3d pb = b - p;
    const double ax = pa.dot(u);
    const double ay = (pa - ax * u).norm();
    const double bx = pb.dot(u);
    const double by = -(pb - bx * u).norm();
    if (ay <= 0.0 || by >= 0.0) return -1.0;

    // Where segment a-b meets the x axis; must lie strictly inside the edge.
    const double t = ay / (ay - by);
    const double cross_x = ax + t * (bx - ax);
    if (cross_x <= 0.0 || cross_x >= len) return -1.0;
    return std::hypot(ax - bx, ay - by);
}

} // namespace

void GeodesicGraph::add_edge(int a, int b, double length)
{
    m_adjacency[static_cast<size_t>(a)].emplace_back(b, length);
    m_adjacency[static_cast<size_t>(b)].emplace_back(a, length);
}

GeodesicGraph::GeodesicGraph(const TriangleMesh& mesh)
{
    const Index n = mesh.n_vertices();
    m_adjacency.resize(static_cast<size_t>(n));

    // Undirected edge -> opposite apexes, in face order.
    std::map<std::pair<int, int>, std::vector<int>> opposite;
    for (Index f = 0; f < mesh.n_faces(); ++f) {
        for (int c = 0; c < 3; ++c) {
            int i = mesh.faces(f, (c + 1) % 3);
            int j = mesh.faces(f, (c + 2) % 3);
            opposite[{std::min(i, j), std::max(i, j)}].push_back(mesh.faces(f, c));
        }
    }

    std::map<std::pair<int, int>, double> lengths;
    auto offer = [&](int a, int b, double length) {
        auto key = std::make_pair(std::min(a, b), std::max(a, b));
        auto it = lengths.find(key);
        if (it == lengths.end() || length < it->second) lengths[key] = length;
    };

    for (const auto& [edge, apexes] : opposite) {
        const Eigen::Vector3d p = mesh.vertices.row(edge.first).transpose();
        const Eigen::Vector3d q = mesh.vertices.row(edge.second).transpose();
        offer(edge.first, edge.second, (q - p).norm());
        if (apexes.size() == 2 && apexes[0] != apexes[1]) {
            const Eigen::Vector3d a = mesh.vertices.row(apexes[0]).transpose();
            const Eigen::Vector3d b = mesh.vertices.row(apexes[1]).transpose();
            const double diagonal = unfolded_diagonal(p, q, a, b);
            if (diagonal > 0.0) offer(apexes[0], apexes[1], diagonal);
        }
    }
    for (const auto& [edge, length] : lengths) add_edge(edge.first, edge.second, length);
}

GeodesicGraph GeodesicGraph::from_edges(
    Index n_vertices,
    const std::vector<std::pair<int, int>>& edges,
    const std::vector<double>& lengths)
{
    if (edges.size() != lengths.size()) throw Error(ErrorCode::ShapeMismatch, "one length per edge required");
    GeodesicGraph graph;
    graph.m_adjacency.resize(static_cast<size_t>(n_vertices));
    for (size_t e = 0; e < edges.size(); ++e) {
        auto [a, b] = edges[e];
        if (a < 0 || b < 0 || a >= n_vertices || b >= n_vertices) {
            throw Error(ErrorCode::IndexError, "edge endpoint out of range");
        }
        graph.add_edge(a, b, lengths[e]);
    }
    return graph;
}

Vec GeodesicGraph::distances_from(int source, bool allow_unreachable) const
{
    const Index n = n_vertices();
    if (source < 0 || source >= n) {
        throw Error(ErrorCode::IndexError, "source vertex " + std::to_string(source) + " out of range");
    }
    Vec dist = Vec::Constant(n, std::numeric_limits<double>::infinity());
    dist[source] = 0.0;
    MinQueue queue;
    queue.emplace(0.0, source);
    while (!queue.empty()) {
        auto [d, v] = queue.top();
        queue.pop();
        if (d > dist[v]) continue;
        for (const auto& [w, length] : m_adjacency[static_cast<size_t>(v)]) {
            const double candidate = d + length;
            if (candidate < dist[w]) {
                dist[w] = candidate;
                queue.emplace(candidate, w);
            }
        }
    }
    if (!allow_unreachable && !dist.allFinite()) {
        throw Error(ErrorCode::Disconnected, "some vertices are unreachable from " + std::to_string(source));
    }
    return dist;
}

std::pair<Vec, std::vector<int>> GeodesicGraph::nearest_source(const std::vector<int>& sources) const
{
    const Index n = n_vertices();
    Vec dist = Vec::Constant(n, std::numeric_limits<double>::infinity());
    std::vector<int> owner(static_cast<size_t>(n), -1);

    // Ordered by (distance, source slot) so ties resolve to the smaller slot.
    using Item = std::tuple<double, int, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    for (size_t s = 0; s < sources.size(); ++s) {
        int v = sources[s];
        if (v < 0 || v >= n) throw Error(ErrorCode::IndexError, "source vertex out of range");
        if (owner[static_cast<size_t>(v)] >= 0) continue;
        dist[v] = 0.0;
        owner[static_cast<size_t>(v)] = static_cast<int>(s);
        queue.emplace(0.0, static_cast<int>(s), v);
    }
    while (!queue.empty()) {
        auto [d, slot, v] = queue.top();
        queue.pop();
        if (d > dist[v] || (d == dist[v] && slot != owner[static_cast<size_t>(v)])) continue;
        for (const auto& [w, length] : m_adjacency[static_cast<size_t>(v)]) {
            const double candidate = d + length;
            if (candidate < dist[w] || (candidate == dist[w] && slot < owner[static_cast<size_t>(w)])) {
                dist[w] = candidate;
                owner[static_cast<size_t>(w)] = slot;
                queue.emplace(candidate, slot, w);
            }
        }
    }
    return {dist, owner};
}

Vec geodesics_from(const TriangleMesh& mesh, int source)
{
    return GeodesicGraph(mesh).distances_from(source);
}

} // namespace unimatch
