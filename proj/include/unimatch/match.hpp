#pragma once

#include "unimatch/config.hpp"
#include "unimatch/dataset.hpp"
#include "unimatch/fmap.hpp"
#include "unimatch/train.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <utility>
#include <vector>

namespace unimatch {

struct MatchResult
{
    /// Target -> source vertex map.
    PointMap map;
    /// The functional map the point map was extracted from.
    FunctionalMap fmap;
};

/// Inference on precomputed refined features: top-t soft correspondence,
/// its functional map at k0, optional ZoomOut to the final size, then
/// point-map extraction. Returns the map from `target` onto `source`.
MatchResult match_features(
    const Mat& f_source,
    const Mat& f_target,
    const SpectralBasis& basis_source,
    const SpectralBasis& basis_target,
    const RunConfig& config,
    bool refine);

MatchResult match(
    const Checkpoint& checkpoint, const ShapeRecord& source, const ShapeRecord& target, const RunConfig& config, bool refine);

/// Geodesic distances on one mesh, computed per source vertex on demand.
class GeodesicCache
{
public:
    explicit GeodesicCache(const TriangleMesh& mesh);
    const Vec& from(int vertex);
    double area() const { return m_area; }

private:
    GeodesicGraph m_graph;
    double m_area = 0.0;
    std::map<int, Vec> m_rows;
};

struct PckCurve
{
    std::vector<double> thresholds;
    std::vector<double> fraction;
};

struct EvalResult
{
    std::vector<double> per_pair;
    double mean = 0.0;
    bool x100 = false;
    std::vector<PckCurve> pck;

    nlohmann::json to_json() const;
};

struct PairError
{
    double mean = 0.0;
    /// Normalized error per evaluated point, unscaled.
    std::vector<double> errors;
};

/// Dense: truth[y] is the correct source vertex of target vertex y.
/// Errors are geodesic distances on the source divided by sqrt(source area).
PairError dense_error(const PointMap& pred, const std::vector<int>& truth, GeodesicCache& source);
/// Keypoints are (source vertex, target vertex) pairs.
PairError keypoint_error(const PointMap& pred, const std::vector<std::pair<int, int>>& keypoints, GeodesicCache& source);

/// Fraction of errors at or below each of `samples` evenly spaced
/// thresholds in [0, max_threshold].
PckCurve pck_curve(const std::vector<double>& errors, double max_threshold = 0.25, int samples = 26);

/// Aggregates per-pair errors; x100 scales all reported values.
EvalResult summarize(const std::vector<PairError>& pairs, bool x100);

/// Writes a PLY whose vertex colours on the target are the source colours
/// (from normalized source positions) pulled through the map.
void save_color_transfer_ply(
    const std::filesystem::path& path, const TriangleMesh& source, const TriangleMesh& target, const PointMap& map);

} // namespace unimatch
