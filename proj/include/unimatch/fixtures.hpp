#pragma once

#include "unimatch/dataset.hpp"
#include "unimatch/mesh.hpp"
#include "unimatch/semantics.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace unimatch {

/// Unit icosphere; level 0 is the icosahedron (12 vertices), each level
/// splits every triangle in four.
TriangleMesh icosphere(int level);

/// Regular nu x nv vertex grid on [0, width] x [0, height] in the z = 0 plane.
TriangleMesh grid_plane(int nu, int nv, double width, double height);

/// Rolls the plane around the axis parallel to y at the given radius,
/// preserving all intrinsic distances.
TriangleMesh bend_plane(const TriangleMesh& plane, double radius);

struct FixtureShape
{
    TriangleMesh mesh;
    /// base_index[v]: vertex of the common template this vertex comes from.
    std::vector<int> base_index;
    Mat semantic;
    std::optional<PartLabels> labels;
    Mat embeddings;
};

struct FixtureSet
{
    std::string kind;
    std::uint64_t seed = 0;
    std::vector<FixtureShape> shapes;
    std::vector<std::pair<int, int>> train_pairs;
    std::vector<std::pair<int, int>> eval_pairs;
};

/// Kinds: "sphere", "bent-plane", "isometric-pair", "blob-pair".
/// Deterministic for a given seed.
FixtureSet make_fixture(const std::string& kind, std::uint64_t seed);

/// Target -> source ground truth through the shared template.
std::vector<int> fixture_truth(const FixtureShape& source, const FixtureShape& target);

/// Writes meshes (OFF), semantic fields (F32MAT), part labels and
/// embeddings, dense ground truth per eval pair and `manifest.json`.
/// Returns the manifest path.
std::filesystem::path write_fixture(const FixtureSet& fixture, const std::filesystem::path& dir);

/// Applies a vertex permutation: vertex v moves to perm[v].
TriangleMesh permute_vertices(const TriangleMesh& mesh, const std::vector<int>& perm);

} // namespace unimatch
