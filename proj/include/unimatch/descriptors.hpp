#pragma once

#include "unimatch/mesh.hpp"
#include "unimatch/types.hpp"

#include <filesystem>

namespace unimatch {

enum class FeatureKind { geometric, semantic, input, refined };

/// Per-vertex feature matrix (n x C).
struct FeatureField
{
    Mat values;
    FeatureKind kind = FeatureKind::geometric;

    Index rows() const { return values.rows(); }
    Index channels() const { return values.cols(); }
};

inline constexpr Index kDefaultWksEnergies = 128;
inline constexpr Index kDefaultSemanticChannels = 768;

/// Wave kernel signature with log-spaced energies, variance 7 x range / N and
/// 2-sigma range margins. Each energy channel is scaled so that its
/// mass-weighted sum over vertices is 1.
FeatureField wks(const SpectralBasis& basis, Index n_energies = kDefaultWksEnergies);

struct FillReport
{
    /// Rows that were all zero in the file.
    Index zero_rows = 0;
    /// Zero rows recovered by neighbor averaging.
    Index filled_rows = 0;
    /// Zero rows left over (no nonzero vertex in their component).
    Index unfilled_rows = 0;
};

/// Replaces all-zero rows by the mean of their nonzero 1-ring neighbors,
/// sweeping until no more rows can be filled. Each sweep reads only rows
/// filled in earlier sweeps.
FillReport fill_invisible_rows(Mat& values, const std::vector<std::vector<int>>& adjacency);

struct LoadedFeatureField
{
    FeatureField field;
    FillReport report;
};

LoadedFeatureField load_feature_field(const std::filesystem::path& path, const TriangleMesh& mesh);
void save_feature_field(const std::filesystem::path& path, const FeatureField& field);

/// Zero-mean, unit-variance columns over rows; constant columns become zero.
Mat standardize_columns(const Mat& values);

/// [geo | sem]. An empty semantic field (0 channels) gives the geometric-only
/// input.
FeatureField concat_features(const FeatureField& geo, const FeatureField& sem, bool standardize);

} // namespace unimatch
