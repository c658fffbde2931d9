#pragma once

#include "unimatch/mesh.hpp"
#include "unimatch/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace unimatch {

/// C maps spectral coefficients on X to coefficients on Y (k_y x k_x).
struct FunctionalMap
{
    Mat C;

    Index kx() const { return C.cols(); }
    Index ky() const { return C.rows(); }
};

/// Target-to-source vertex map: idx[y] is a vertex of X.
struct PointMap
{
    std::vector<int> idx;
    Index n_source = 0;

    Index size() const { return static_cast<Index>(idx.size()); }
};

/// Row-stochastic n_y x n_x matrix, dense or with at most t entries per row.
struct SoftCorrespondence
{
    Mat dense;
    RowSpMat sparse;
    bool is_sparse = false;

    Index rows() const { return is_sparse ? sparse.rows() : dense.rows(); }
    Index cols() const { return is_sparse ? sparse.cols() : dense.cols(); }
    /// Pi * rhs.
    Mat apply(const Mat& rhs) const;
    Mat to_dense() const;
};

/// Phi^T M f.
Mat project(const SpectralBasis& basis, const Mat& field);

/// Row-wise ridge solution of min |C Ax - Ay|^2 + mu sum_pq (ly_p - lx_q)^2 C_pq^2.
FunctionalMap solve_fmap(const Mat& Ax, const Mat& Ay, const Vec& lambda_x, const Vec& lambda_y, double mu);

/// Pi[y, x] = softmax_x(cos(fy_y, fx_x) / tau_p). With top_t > 0 each row
/// keeps only its t largest logits (ties to the lower index) before the
/// softmax; intended for inference only.
SoftCorrespondence soft_correspondence(const Mat& fx, const Mat& fy, double tau_p, Index top_t = 0);

/// C = Phi_y^T M_y Pi Phi_x truncated to the leading ky x kx block
/// (0 selects the full basis size).
FunctionalMap p2p_to_fmap(
    const PointMap& map, const SpectralBasis& basis_x, const SpectralBasis& basis_y, Index kx = 0, Index ky = 0);
FunctionalMap p2p_to_fmap(
    const SoftCorrespondence& pi, const SpectralBasis& basis_x, const SpectralBasis& basis_y, Index kx = 0, Index ky = 0);

/// Nearest neighbour of each row of Phi_y[:, :ky] among the rows of
/// Phi_x[:, :kx] C^T. Ties go to the smaller index. `workers` > 1 splits the
/// query rows across threads; the result does not depend on it.
PointMap fmap_to_p2p(const FunctionalMap& map, const SpectralBasis& basis_x, const SpectralBasis& basis_y, int workers = 1);

/// Spectral upsampling from a square k0 x k0 map: alternate point-map
/// extraction and re-encoding at k + step until k_final. k_final == k0
/// performs a single round trip.
FunctionalMap zoomout(
    const FunctionalMap& initial,
    const SpectralBasis& basis_x,
    const SpectralBasis& basis_y,
    Index k_final,
    Index step,
    int workers = 1);

void save_functional_map(const std::filesystem::path& path, const FunctionalMap& map);
FunctionalMap load_functional_map(const std::filesystem::path& path);

/// JSON {"direction": "target_to_source", "n_source", "n_target", "indices"}.
void save_point_map(const std::filesystem::path& path, const PointMap& map);
PointMap load_point_map(const std::filesystem::path& path);

} // namespace unimatch
