#include "unimatch/autodiff.hpp"
#include "unimatch/error.hpp"
#include "unimatch/f32mat.hpp"
#include "unimatch/fmap.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

namespace unimatch {

Mat SoftCorrespondence::apply(const Mat& rhs) const
{
    if (is_sparse) return sparse * rhs;
    return dense * rhs;
}

Mat SoftCorrespondence::to_dense() const
{
    if (is_sparse) return Mat(sparse);
    return dense;
}

Mat project(const SpectralBasis& basis, const Mat& field)
{
    if (field.rows() != basis.n()) {
        throw Error(ErrorCode::ShapeMismatch,
            "field has " + std::to_string(field.rows()) + " rows, basis has " + std::to_string(basis.n()));
    }
    return basis.eigvecs.transpose() * (basis.mass.diag.asDiagonal() * field);
}

FunctionalMap solve_fmap(const Mat& Ax, const Mat& Ay, const Vec& lambda_x, const Vec& lambda_y, double mu)
{
    ad::Tape tape;
    return {ad::fmap_solve(tape.constant(Ax), tape.constant(Ay), lambda_x, lambda_y, mu).value()};
}

namespace {

Mat normalized_rows(const Mat& f)
{
    Mat out = f;
    for (Index i = 0; i < f.rows(); ++i) {
        const double norm = f.row(i).norm();
        if (!(norm >= 1e-12)) throw Error(ErrorCode::ZeroVector, "feature row " + std::to_string(i) + " has zero norm");
        out.row(i) /= norm;
    }
    return out;
}

} // namespace

SoftCorrespondence soft_correspondence(const Mat& fx, const Mat& fy, double tau_p, Index top_t)
{
    if (!(tau_p > 0.0) || !std::isfinite(tau_p)) throw Error(ErrorCode::BadTemperature, "tau_p must be positive");
    if (fx.cols() != fy.cols()) {
        throw Error(ErrorCode::DimMismatch,
            "feature channels differ: " + std::to_string(fx.cols()) + " vs " + std::to_string(fy.cols()));
    }
    const Mat nx = normalized_rows(fx);
    const Mat ny = normalized_rows(fy);
    const Index n_x = fx.rows();

    SoftCorrespondence pi;
    if (top_t <= 0 || top_t >= n_x) {
        pi.dense = (ny * nx.transpose()) / tau_p;
        for (Index y = 0; y < pi.dense.rows(); ++y) {
            const double m = pi.dense.row(y).maxCoeff();
            pi.dense.row(y) = (pi.dense.row(y).array() - m).exp().matrix();
            pi.dense.row(y) /= pi.dense.row(y).sum();
        }
        return pi;
    }

    pi.is_sparse = true;
    pi.sparse.resize(fy.rows(), n_x);
    pi.sparse.reserve(Eigen::VectorXi::Constant(fy.rows(), static_cast<int>(top_t)));
    std::vector<int> order(static_cast<size_t>(n_x));
    for (Index y = 0; y < fy.rows(); ++y) {
        const Vec logits = (nx * ny.row(y).transpose()) / tau_p;
        std::iota(order.begin(), order.end(), 0);
        std::partial_sort(order.begin(), order.begin() + top_t, order.end(), [&](int a, int b) {
            return logits[a] > logits[b] || (logits[a] == logits[b] && a < b);
        });
        std::vector<int> kept(order.begin(), order.begin() + top_t);
        std::sort(kept.begin(), kept.end());
        const double m = logits[order[0]];
        double total = 0.0;
        for (int x : kept) total += std::exp(logits[x] - m);
        for (int x : kept) pi.sparse.insert(y, x) = std::exp(logits[x] - m) / total;
    }
    pi.sparse.makeCompressed();
    return pi;
}

namespace {

void check_truncation(Index& kx, Index& ky, const SpectralBasis& bx, const SpectralBasis& by)
{
    if (kx == 0) kx = bx.k();
    if (ky == 0) ky = by.k();
    if (kx < 1 || kx > bx.k() || ky < 1 || ky > by.k()) {
        throw Error(ErrorCode::BasisTooSmall, "requested map size exceeds the basis size");
    }
}

} // namespace

FunctionalMap p2p_to_fmap(const PointMap& map, const SpectralBasis& basis_x, const SpectralBasis& basis_y, Index kx, Index ky)
{
    if (map.size() != basis_y.n()) throw Error(ErrorCode::ShapeMismatch, "point map length differs from target size");
    check_truncation(kx, ky, basis_x, basis_y);
    Mat pulled(map.size(), kx);
    for (Index y = 0; y < map.size(); ++y) {
        const int x = map.idx[static_cast<size_t>(y)];
        if (x < 0 || x >= basis_x.n()) throw Error(ErrorCode::IndexError, "point map index out of range");
        pulled.row(y) = basis_x.eigvecs.row(x).head(kx);
    }
    return {basis_y.eigvecs.leftCols(ky).transpose() * (basis_y.mass.diag.asDiagonal() * pulled)};
}

FunctionalMap p2p_to_fmap(
    const SoftCorrespondence& pi, const SpectralBasis& basis_x, const SpectralBasis& basis_y, Index kx, Index ky)
{
    if (pi.rows() != basis_y.n() || pi.cols() != basis_x.n()) {
        throw Error(ErrorCode::ShapeMismatch, "soft correspondence does not match the bases");
    }
    check_truncation(kx, ky, basis_x, basis_y);
    const Mat pulled = pi.apply(basis_x.eigvecs.leftCols(kx));
    return {basis_y.eigvecs.leftCols(ky).transpose() * (basis_y.mass.diag.asDiagonal() * pulled)};
}

PointMap fmap_to_p2p(const FunctionalMap& map, const SpectralBasis& basis_x, const SpectralBasis& basis_y, int workers)
{
    const Index kx = map.kx();
    const Index ky = map.ky();
    if (kx > basis_x.k() || ky > basis_y.k()) throw Error(ErrorCode::BasisTooSmall, "map larger than basis");

    const Mat source = basis_x.eigvecs.leftCols(kx) * map.C.transpose(); // n_x x ky
    const Mat query = basis_y.eigvecs.leftCols(ky);
    const Index n_x = source.rows();
    const Index n_y = query.rows();

    PointMap out;
    out.n_source = n_x;
    out.idx.assign(static_cast<size_t>(n_y), 0);

    auto run = [&](Index begin, Index end) {
        for (Index y = begin; y < end; ++y) {
            double best = std::numeric_limits<double>::infinity();
            int best_x = 0;
            for (Index x = 0; x < n_x; ++x) {
                const double d = (source.row(x) - query.row(y)).squaredNorm();
                if (d < best) {
                    best = d;
                    best_x = static_cast<int>(x);
                }
            }
            out.idx[static_cast<size_t>(y)] = best_x;
        }
    };

    const int threads = std::max(1, std::min<int>(workers, static_cast<int>(n_y)));
    if (threads == 1) {
        run(0, n_y);
        return out;
    }
    std::vector<std::thread> pool;
    const Index chunk = (n_y + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const Index begin = t * chunk;
        const Index end = std::min(n_y, begin + chunk);
        if (begin < end) pool.emplace_back(run, begin, end);
    }
    for (auto& th : pool) th.join();
    return out;
}

FunctionalMap zoomout(
    const FunctionalMap& initial,
    const SpectralBasis& basis_x,
    const SpectralBasis& basis_y,
    Index k_final,
    Index step,
    int workers)
{
    const Index k0 = initial.kx();
    if (initial.ky() != k0) throw Error(ErrorCode::ShapeMismatch, "zoomout needs a square initial map");
    if (step < 1) throw Error(ErrorCode::SpecError, "zoomout step must be at least 1");
    if (k0 < 1 || k_final < k0) throw Error(ErrorCode::BasisTooSmall, "zoomout target size is below the initial size");
    if (k_final > std::min(basis_x.k(), basis_y.k())) {
        throw Error(ErrorCode::BasisTooSmall,
            "zoomout target " + std::to_string(k_final) + " exceeds the basis size " +
                std::to_string(std::min(basis_x.k(), basis_y.k())));
    }

    FunctionalMap current = initial;
    Index k = k0;
    do {
        const PointMap p2p = fmap_to_p2p(current, basis_x, basis_y, workers);
        const Index next = std::min(k + step, k_final);
        current = p2p_to_fmap(p2p, basis_x, basis_y, next, next);
        k = next;
    } while (k < k_final);
    return current;
}

void save_functional_map(const std::filesystem::path& path, const FunctionalMap& map)
{
    write_f32mat(path, map.C);
}

FunctionalMap load_functional_map(const std::filesystem::path& path)
{
    return {read_f32mat(path)};
}

void save_point_map(const std::filesystem::path& path, const PointMap& map)
{
    nlohmann::json j;
    j["direction"] = "target_to_source";
    j["n_source"] = map.n_source;
    j["n_target"] = map.size();
    j["indices"] = map.idx;
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << j.dump() << '\n';
}

PointMap load_point_map(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
        PointMap map;
        map.idx = j.at("indices").get<std::vector<int>>();
        map.n_source = j.at("n_source").get<Index>();
        for (int x : map.idx) {
            if (x < 0 || x >= map.n_source) throw Error(ErrorCode::IndexError, path.string() + ": index out of range");
        }
        return map;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
    }
}

} // namespace unimatch
