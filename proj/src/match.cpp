#include "unimatch/error.hpp"
#include "unimatch/match.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace unimatch {

using nlohmann::json;

MatchResult match_features(
    const Mat& f_source,
    const Mat& f_target,
    const SpectralBasis& basis_source,
    const SpectralBasis& basis_target,
    const RunConfig& config,
    bool refine)
{
    const SoftCorrespondence pi = soft_correspondence(f_source, f_target, config.tau_p, config.inference_top_t);
    const Index k0 = config.zoomout_k0;
    MatchResult out;
    out.fmap = p2p_to_fmap(pi, basis_source, basis_target, k0, k0);
    if (refine) {
        out.fmap = zoomout(out.fmap, basis_source, basis_target, config.zoomout_target(), config.zoomout_step, config.workers);
    }
    out.map = fmap_to_p2p(out.fmap, basis_source, basis_target, config.workers);
    return out;
}

MatchResult match(
    const Checkpoint& checkpoint, const ShapeRecord& source, const ShapeRecord& target, const RunConfig& config, bool refine)
{
    const Mat fs = refine_features(checkpoint, source);
    const Mat ft = refine_features(checkpoint, target);
    return match_features(fs, ft, source.basis, target.basis, config, refine);
}

GeodesicCache::GeodesicCache(const TriangleMesh& mesh)
    : m_graph(mesh)
    , m_area(face_areas(mesh).sum())
{}

const Vec& GeodesicCache::from(int vertex)
{
    auto it = m_rows.find(vertex);
    if (it == m_rows.end()) it = m_rows.emplace(vertex, m_graph.distances_from(vertex, true)).first;
    return it->second;
}

namespace {

void check_vertex(int v, Index n, const char* what)
{
    if (v < 0 || v >= n) {
        throw Error(ErrorCode::IndexError,
            std::string(what) + " vertex " + std::to_string(v) + " outside [0, " + std::to_string(n) + ")");
    }
}

PairError finish(std::vector<double> errors)
{
    PairError out;
    out.errors = std::move(errors);
    double total = 0.0;
    for (double e : out.errors) total += e;
    out.mean = out.errors.empty() ? 0.0 : total / static_cast<double>(out.errors.size());
    return out;
}

} // namespace

PairError dense_error(const PointMap& pred, const std::vector<int>& truth, GeodesicCache& source)
{
    if (pred.idx.size() != truth.size()) {
        throw Error(ErrorCode::IndexError,
            "prediction has " + std::to_string(pred.idx.size()) + " entries, ground truth " +
                std::to_string(truth.size()));
    }
    const Index n = source.from(0).size();
    const double scale = 1.0 / std::sqrt(source.area());
    std::vector<double> errors(truth.size());
    for (size_t y = 0; y < truth.size(); ++y) {
        check_vertex(truth[y], n, "ground-truth");
        check_vertex(pred.idx[y], n, "predicted");
        errors[y] = source.from(truth[y])[pred.idx[y]] * scale;
    }
    return finish(std::move(errors));
}

PairError keypoint_error(const PointMap& pred, const std::vector<std::pair<int, int>>& keypoints, GeodesicCache& source)
{
    const Index n = source.from(0).size();
    const double scale = 1.0 / std::sqrt(source.area());
    std::vector<double> errors;
    errors.reserve(keypoints.size());
    for (const auto& [s, t] : keypoints) {
        check_vertex(s, n, "keypoint source");
        check_vertex(t, pred.size(), "keypoint target");
        const int p = pred.idx[static_cast<size_t>(t)];
        check_vertex(p, n, "predicted");
        errors.push_back(source.from(s)[p] * scale);
    }
    return finish(std::move(errors));
}

PckCurve pck_curve(const std::vector<double>& errors, double max_threshold, int samples)
{
    PckCurve c;
    std::vector<double> sorted = errors;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < samples; ++i) {
        const double t = samples == 1 ? max_threshold : max_threshold * i / (samples - 1);
        const auto count = std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
        c.thresholds.push_back(t);
        c.fraction.push_back(sorted.empty() ? 0.0 : static_cast<double>(count) / static_cast<double>(sorted.size()));
    }
    return c;
}

EvalResult summarize(const std::vector<PairError>& pairs, bool x100)
{
    EvalResult r;
    r.x100 = x100;
    const double factor = x100 ? 100.0 : 1.0;
    double total = 0.0;
    for (const auto& p : pairs) {
        r.per_pair.push_back(p.mean * factor);
        total += p.mean * factor;
        r.pck.push_back(pck_curve(p.errors));
    }
    r.mean = pairs.empty() ? 0.0 : total / static_cast<double>(pairs.size());
    return r;
}

json EvalResult::to_json() const
{
    json pck_json = json::array();
    for (const auto& c : pck) pck_json.push_back({{"thresholds", c.thresholds}, {"fraction", c.fraction}});
    return json{{"mean_geodesic_error", mean}, {"per_pair", per_pair}, {"x100", x100}, {"pck", pck_json}};
}

void save_color_transfer_ply(
    const std::filesystem::path& path, const TriangleMesh& source, const TriangleMesh& target, const PointMap& map)
{
    if (map.size() != target.n_vertices()) throw Error(ErrorCode::ShapeMismatch, "map does not cover the target");
    const Eigen::RowVector3d lo = source.vertices.colwise().minCoeff();
    const Eigen::RowVector3d span = (source.vertices.colwise().maxCoeff() - lo).cwiseMax(1e-12);

    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << "ply\nformat ascii 1.0\n";
    out << "element vertex " << target.n_vertices() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "element face " << target.n_faces() << "\nproperty list uchar int vertex_indices\nend_header\n";
    out.precision(9);
    for (Index y = 0; y < target.n_vertices(); ++y) {
        const int x = map.idx[static_cast<size_t>(y)];
        check_vertex(x, source.n_vertices(), "mapped");
        const Eigen::RowVector3d rgb = (source.vertices.row(x) - lo).cwiseQuotient(span) * 255.0;
        out << target.vertices(y, 0) << ' ' << target.vertices(y, 1) << ' ' << target.vertices(y, 2);
        for (int c = 0; c < 3; ++c) out << ' ' << static_cast<int>(std::lround(rgb[c]));
        out << '\n';
    }
    for (Index f = 0; f < target.n_faces(); ++f) {
        out << "3 " << target.faces(f, 0) << ' ' << target.faces(f, 1) << ' ' << target.faces(f, 2) << '\n';
    }
}

} // namespace unimatch
