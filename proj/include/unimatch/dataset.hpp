#pragma once

#include "unimatch/config.hpp"
#include "unimatch/descriptors.hpp"
#include "unimatch/mesh.hpp"
#include "unimatch/semantics.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace unimatch {

/// One shape entry of a manifest; paths are resolved against the manifest
/// directory. Only `mesh` is required.
struct ShapeEntry
{
    std::string name;
    std::filesystem::path mesh;
    std::filesystem::path features;
    std::filesystem::path labels;
    std::filesystem::path embeddings;
};

/// Ground truth of an evaluation pair: a dense target->source vertex map or
/// keypoint pairs (source vertex, target vertex).
struct EvalPair
{
    int source = 0;
    int target = 0;
    std::optional<std::vector<int>> dense;
    std::optional<std::vector<std::pair<int, int>>> keypoints;
    std::filesystem::path dense_path;
    std::filesystem::path keypoints_path;
};

struct Manifest
{
    std::filesystem::path path;
    std::vector<ShapeEntry> shapes;
    std::vector<std::pair<int, int>> train_pairs;
    std::vector<EvalPair> eval_pairs;
};

/// Parses the manifest and checks pair indices (PairIndexError) and
/// train/eval disjointness. Ground-truth files are read here.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// Dense ground truth: one 0-based source index per line.
std::vector<int> load_dense_map(const std::filesystem::path& path);
void save_dense_map(const std::filesystem::path& path, const std::vector<int>& map);
/// JSON list of [source_vertex, target_vertex] pairs.
std::vector<std::pair<int, int>> load_keypoints(const std::filesystem::path& path);

struct ShapeRecord
{
    std::string name;
    TriangleMesh mesh;
    SpectralBasis basis;
    FeatureField f_geo;
    std::optional<FeatureField> f_sem;
    FillReport fill;
    std::optional<PartLabels> labels;
    std::optional<PartEmbeddings> embeddings;

    /// Refiner input: WKS, optionally concatenated with the semantic field.
    Mat input_features(bool use_semantic, bool standardize) const;
    Index n() const { return mesh.n_vertices(); }
};

struct CacheStats
{
    int hits = 0;
    int misses = 0;
};

struct PairDataset
{
    Manifest manifest;
    std::vector<ShapeRecord> shapes;
    CacheStats cache;
};

/// Cache root: $UNIMATCH_CACHE_DIR when set, else `.unimatch_cache` next to
/// the manifest.
std::filesystem::path cache_root(const std::filesystem::path& manifest_path);

/// Basis and WKS for a mesh file, cached under a SHA-256 of the mesh bytes
/// and the spectral parameters.
struct Precomputed
{
    SpectralBasis basis;
    FeatureField wks;
    bool from_cache = false;
};
Precomputed precompute_shape(
    const std::filesystem::path& mesh_path,
    const TriangleMesh& mesh,
    Index basis_k,
    Index n_energies,
    const std::filesystem::path& cache_dir);

/// Loads and validates every shape, runs (or reuses) the precomputation and
/// loads the optional semantic artifacts.
PairDataset build_dataset(const std::filesystem::path& manifest_path, const RunConfig& config);

/// Part-distance rank structure between two labelled shapes, if both carry
/// labels and embeddings.
std::optional<RankStructure> pair_ranks(const ShapeRecord& x, const ShapeRecord& y);

} // namespace unimatch
