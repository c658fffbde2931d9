#pragma once

#include "unimatch/mesh.hpp"
#include "unimatch/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace unimatch {

/// Per-vertex part ids in [0, n_parts) with one name per part. Every part is
/// nonempty and there are at least two of them.
struct PartLabels
{
    std::vector<int> label;
    int n_parts = 0;
    std::vector<std::string> part_names;
    /// original_ids[p] is the id part p carried in the source file before
    /// empty parts were compacted away.
    std::vector<int> original_ids;

    Index n_vertices() const { return static_cast<Index>(label.size()); }
    std::vector<std::vector<int>> members() const;
};

/// Validates and compacts empty parts out. `warnings` collects one line per
/// dropped part.
PartLabels make_part_labels(
    std::vector<int> label,
    int n_parts,
    std::vector<std::string> names,
    std::vector<std::string>* warnings = nullptr);

PartLabels load_part_labels(
    const std::filesystem::path& path,
    const TriangleMesh& mesh,
    std::vector<std::string>* warnings = nullptr);
void save_part_labels(const std::filesystem::path& path, const PartLabels& labels);

/// Unit-norm language embedding per part.
struct PartEmbeddings
{
    Mat E;
    /// Parts named "unknown" that received the mean embedding of known parts.
    std::vector<bool> imputed;

    Index n_parts() const { return E.rows(); }
    Index dim() const { return E.cols(); }
};

/// Normalizes rows and fills "unknown" parts. `raw` rows may be indexed by
/// the compacted part ids or by the original (pre-compaction) ids.
PartEmbeddings make_part_embeddings(const Mat& raw, const PartLabels& labels);
PartEmbeddings load_part_embeddings(const std::filesystem::path& path, const PartLabels& labels);
void save_part_embeddings(const std::filesystem::path& path, const PartEmbeddings& embeddings);

/// Cosine distance 1 - <Ex_i, Ey_j> between unit rows.
Mat embedding_distances(const PartEmbeddings& ex, const PartEmbeddings& ey);

/// Negative-set membership derived from part distances: for source part i
/// and reference part j, target part k is a negative iff D(i,k) >= D(i,j).
class RankStructure
{
public:
    RankStructure() = default;
    explicit RankStructure(Mat distances);

    const Mat& distances() const { return m_distances; }
    Index n_source() const { return m_distances.rows(); }
    Index n_target() const { return m_distances.cols(); }

    bool is_negative(Index i, Index j, Index k) const
    {
        return m_mask[static_cast<size_t>((i * n_target() + j) * n_target() + k)] != 0;
    }
    std::vector<int> negatives(Index i, Index j) const;

    /// Target part with the smallest distance from source part i (ties go to
    /// the lowest index).
    Index nearest(Index i) const;

    RankStructure transposed() const { return RankStructure(m_distances.transpose()); }

private:
    Mat m_distances;
    std::vector<std::uint8_t> m_mask;
};

RankStructure rank_structure(const Mat& distances);

struct FixtureConcept
{
    std::string name;
    std::vector<double> direction;
};

struct FixtureShapeSpec
{
    /// Concept name per part.
    std::vector<std::string> parts;
    /// Optional part names written to the label file (defaults to concept names).
    std::vector<std::string> names;
};

struct FixtureSpec
{
    Index dim = 16;
    double perturbation = 0.0;
    std::vector<FixtureConcept> concepts;
    FixtureShapeSpec x;
    FixtureShapeSpec y;

    static FixtureSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct SemanticFixture
{
    PartLabels labels_x;
    PartLabels labels_y;
    PartEmbeddings embeddings_x;
    PartEmbeddings embeddings_y;
};

/// Deterministic coarse semantics for a shape pair. Parts grow as geodesic
/// Voronoi cells around seed vertices (farthest-point samples from a seeded
/// start unless given); embeddings are normalized concept directions plus a
/// seeded perturbation of the configured norm.
SemanticFixture synth_fixture(
    std::uint64_t seed,
    const FixtureSpec& spec,
    const TriangleMesh& x,
    const TriangleMesh& y,
    const std::optional<std::vector<int>>& seeds_x = std::nullopt,
    const std::optional<std::vector<int>>& seeds_y = std::nullopt);

/// Geodesic Voronoi labels around the given seed vertices.
std::vector<int> voronoi_labels(const TriangleMesh& mesh, const std::vector<int>& seeds);

/// Farthest-point sampling over graph geodesics starting from `start`.
std::vector<int> farthest_point_samples(const TriangleMesh& mesh, int count, int start);

} // namespace unimatch
