#pragma once

#include "unimatch/types.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace unimatch {

/// Triangle mesh with 0-based face indices. Vertex order is the order found
/// in the source file; correspondence files index into it.
struct TriangleMesh
{
    Eigen::Matrix<double, Eigen::Dynamic, 3> vertices;
    Eigen::Matrix<int, Eigen::Dynamic, 3> faces;
    std::string name;

    Index n_vertices() const { return vertices.rows(); }
    Index n_faces() const { return faces.rows(); }
};

enum class MeshFormat { OFF, OBJ, PLY };

struct MeshLoadOptions
{
    bool allow_disconnected = false;
};

/// Checks index range, repeated face vertices, face area > 1e-12, n >= 4,
/// m >= 1 and (unless allowed) edge connectivity. Throws Error.
void validate_mesh(const TriangleMesh& mesh, const MeshLoadOptions& options = {});

TriangleMesh make_mesh(
    Eigen::Matrix<double, Eigen::Dynamic, 3> vertices,
    Eigen::Matrix<int, Eigen::Dynamic, 3> faces,
    std::string name,
    const MeshLoadOptions& options = {});

TriangleMesh load_mesh(
    const std::filesystem::path& path,
    MeshFormat format,
    const MeshLoadOptions& options = {});

/// Format picked from the file extension (.off, .obj, .ply).
TriangleMesh load_mesh(const std::filesystem::path& path, const MeshLoadOptions& options = {});

/// Writes an OFF file. Only fixtures and tests write meshes.
void save_off(const TriangleMesh& mesh, const std::filesystem::path& path);

/// Number of edge-connected components (isolated vertices count as components).
int connected_components(const TriangleMesh& mesh, std::vector<int>* component_of = nullptr);

/// Per-vertex neighbor lists from the face edges, sorted ascending.
std::vector<std::vector<int>> vertex_adjacency(const TriangleMesh& mesh);

Vec face_areas(const TriangleMesh& mesh);

struct MassVector
{
    Vec diag;
    double total_area = 0.0;
};

/// One-third lumped vertex areas.
MassVector lumped_mass(const TriangleMesh& mesh);

struct LaplacianOptions
{
    double cot_min = 1e-6;
    double cot_max = 1e6;
    /// Reject (instead of clamp) angles whose cotangent exceeds cot_max.
    bool strict = false;
};

/// Cotangent stiffness matrix: L_ij = -(cot a + cot b)/2, L_ii = -sum_j L_ij.
/// Cotangents are clamped to [cot_min, cot_max] before assembly.
SpMat cotangent_laplacian(const TriangleMesh& mesh, const LaplacianOptions& options = {});

struct SpectralBasis
{
    Vec eigvals;   // ascending, length k
    Mat eigvecs;   // n x k, mass-orthonormal
    MassVector mass;

    Index k() const { return eigvals.size(); }
    Index n() const { return eigvecs.rows(); }
};

struct SpectralOptions
{
    /// Dense generalized solver at or below this vertex count.
    Index dense_max_n = 300;
    double shift = -1e-8;
    /// Relative residual target for the iterative solver.
    double tolerance = 1e-11;
    int max_iterations = 1000;
    std::uint64_t seed = 0x5eed;
    LaplacianOptions laplacian;
};

/// k smallest eigenpairs of L phi = lambda M phi. Each column's entry of
/// largest magnitude is made positive.
SpectralBasis spectral_basis(const TriangleMesh& mesh, Index k, const SpectralOptions& options = {});

/// Same, from preassembled stiffness and lumped mass.
SpectralBasis spectral_basis(const SpMat& stiffness, const MassVector& mass, Index k, const SpectralOptions& options = {});

/// Weighted edge graph for approximate geodesics: mesh edges plus, for every
/// interior edge, the diagonal joining its two opposite vertices measured in
/// the planar unfolding of the two incident triangles (only when the
/// unfolded quad is convex, so the straight segment crosses the edge).
class GeodesicGraph
{
public:
    explicit GeodesicGraph(const TriangleMesh& mesh);

    static GeodesicGraph from_edges(
        Index n_vertices,
        const std::vector<std::pair<int, int>>& edges,
        const std::vector<double>& lengths);

    Index n_vertices() const { return static_cast<Index>(m_adjacency.size()); }

    /// Dijkstra from one source. Throws Disconnected on unreachable vertices
    /// unless allow_unreachable is set (then they stay +inf).
    Vec distances_from(int source, bool allow_unreachable = false) const;

    /// Multi-source variant: returns distance and the index (into sources) of
    /// the nearest source for every vertex. Ties go to the smaller source slot.
    std::pair<Vec, std::vector<int>> nearest_source(const std::vector<int>& sources) const;

private:
    GeodesicGraph() = default;
    void add_edge(int a, int b, double length);

    std::vector<std::vector<std::pair<int, double>>> m_adjacency;
};

Vec geodesics_from(const TriangleMesh& mesh, int source);

} // namespace unimatch
