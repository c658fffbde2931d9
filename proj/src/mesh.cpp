#include "unimatch/error.hpp"
#include "unimatch/mesh.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <numeric>

namespace unimatch {

namespace {

int find_root(std::vector<int>& parent, int v)
{
    while (parent[static_cast<size_t>(v)] != v) {
        parent[static_cast<size_t>(v)] = parent[static_cast<size_t>(parent[static_cast<size_t>(v)])];
        v = parent[static_cast<size_t>(v)];
    }
    return v;
}

Eigen::Vector3d corner(const TriangleMesh& mesh, Index f, int c)
{
    return mesh.vertices.row(mesh.faces(f, c)).transpose();
}

} // namespace

void validate_mesh(const TriangleMesh& mesh, const MeshLoadOptions& options)
{
    const Index n = mesh.n_vertices();
    if (n < 4) throw Error(ErrorCode::DegenerateMesh, "mesh needs at least 4 vertices, got " + std::to_string(n));
    if (mesh.n_faces() < 1) throw Error(ErrorCode::DegenerateMesh, "mesh has no faces");
    if (!mesh.vertices.allFinite()) throw Error(ErrorCode::DegenerateMesh, "non-finite vertex coordinate");

    for (Index f = 0; f < mesh.n_faces(); ++f) {
        for (int c = 0; c < 3; ++c) {
            int idx = mesh.faces(f, c);
            if (idx < 0 || idx >= n) {
                throw Error(ErrorCode::DegenerateMesh,
                    "face " + std::to_string(f) + " references vertex " + std::to_string(idx) + " outside [0, " +
                        std::to_string(n) + ")");
            }
        }
        if (mesh.faces(f, 0) == mesh.faces(f, 1) || mesh.faces(f, 1) == mesh.faces(f, 2) ||
            mesh.faces(f, 0) == mesh.faces(f, 2)) {
            throw Error(ErrorCode::DegenerateMesh, "face " + std::to_string(f) + " repeats a vertex");
        }
    }
    Vec areas = face_areas(mesh);
    for (Index f = 0; f < areas.size(); ++f) {
        if (!(areas[f] > 1e-12)) {
            throw Error(ErrorCode::DegenerateMesh, "face " + std::to_string(f) + " has zero area");
        }
    }
    if (!options.allow_disconnected) {
        int components = connected_components(mesh);
        if (components != 1) {
            throw Error(ErrorCode::Disconnected, "mesh has " + std::to_string(components) + " connected components");
        }
    }
}

TriangleMesh make_mesh(
    Eigen::Matrix<double, Eigen::Dynamic, 3> vertices,
    Eigen::Matrix<int, Eigen::Dynamic, 3> faces,
    std::string name,
    const MeshLoadOptions& options)
{
    TriangleMesh mesh{std::move(vertices), std::move(faces), std::move(name)};
    validate_mesh(mesh, options);
    return mesh;
}

int connected_components(const TriangleMesh& mesh, std::vector<int>* component_of)
{
    const auto n = static_cast<size_t>(mesh.n_vertices());
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    for (Index f = 0; f < mesh.n_faces(); ++f) {
        for (int c = 0; c < 3; ++c) {
            int a = find_root(parent, mesh.faces(f, c));
            int b = find_root(parent, mesh.faces(f, (c + 1) % 3));
            if (a != b) parent[static_cast<size_t>(std::max(a, b))] = std::min(a, b);
        }
    }
    std::vector<int> label(n, -1);
    int count = 0;
    for (size_t v = 0; v < n; ++v) {
        int root = find_root(parent, static_cast<int>(v));
        if (label[static_cast<size_t>(root)] < 0) label[static_cast<size_t>(root)] = count++;
        label[v] = label[static_cast<size_t>(root)];
    }
    if (component_of) *component_of = std::move(label);
    return count;
}

std::vector<std::vector<int>> vertex_adjacency(const TriangleMesh& mesh)
{
    std::vector<std::vector<int>> adjacency(static_cast<size_t>(mesh.n_vertices()));
    for (Index f = 0; f < mesh.n_faces(); ++f) {
        for (int c = 0; c < 3; ++c) {
            int a = mesh.faces(f, c);
            int b = mesh.faces(f, (c + 1) % 3);
            adjacency[static_cast<size_t>(a)].push_back(b);
            adjacency[static_cast<size_t>(b)].push_back(a);
        }
    }
    for (auto& list : adjacency) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }
    return adjacency;
}

Vec face_areas(const TriangleMesh& mesh)
{
    Vec areas(mesh.n_faces());
    for (Index f = 0; f < mesh.n_faces(); ++f) {
        Eigen::Vector3d a = corner(mesh, f, 0);
        Eigen::Vector3d b = corner(mesh, f, 1);
        Eigen::Vector3d c = corner(mesh, f, 2);
        areas[f] = 0.5 * (b - a).cross(c - a).norm();
    }
    return areas;
}

MassVector lumped_mass(const TriangleMesh& mesh)
{
    Vec areas = face_areas(mesh);
    MassVector mass;
    mass.diag = Vec::Zero(mesh.n_vertices());
    for (Index f = 0; f < mesh.n_faces(); ++f) {
        for (int c = 0; c < 3; ++c) mass.diag[mesh.faces(f, c)] += areas[f] / 3.0;
    }
    mass.total_area = areas.sum();
    return mass;
}

SpMat cotangent_laplacian(const TriangleMesh& mesh, const LaplacianOptions& options)
{
    const Index n = mesh.n_vertices();
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<size_t>(mesh.n_faces()) * 12);

    for (Index f = 0; f < mesh.n_faces(); ++f) {
        for (int c = 0; c < 3; ++c) {
            // Angle at corner c is opposite the edge (c+1, c+2).
            const int i = mesh.faces(f, (c + 1) % 3);
            const int j = mesh.faces(f, (c + 2) % 3);
            Eigen::Vector3d u = corner(mesh, f, (c + 1) % 3) - corner(mesh, f, c);
            Eigen::Vector3d v = corner(mesh, f, (c + 2) % 3) - corner(mesh, f, c);
            const double cross = u.cross(v).norm();
            double cot = cross > 0.0 ? u.dot(v) / cross : options.cot_max * 2.0;
            if (options.strict && cot > options.cot_max) {
                throw Error(ErrorCode::DegenerateMesh,
                    "face " + std::to_string(f) + " has a near-zero angle (cot " + std::to_string(cot) + ")");
            }
            cot = std::clamp(cot, options.cot_min, options.cot_max);
            const double w = 0.5 * cot;
            triplets.emplace_back(i, j, -w);
            triplets.emplace_back(j, i, -w);
            triplets.emplace_back(i, i, w);
            triplets.emplace_back(j, j, w);
        }
    }
    SpMat L(n, n);
    L.setFromTriplets(triplets.begin(), triplets.end());
    L.makeCompressed();
    return L;
}

} // namespace unimatch
