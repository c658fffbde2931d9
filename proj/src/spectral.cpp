#include "unimatch/error.hpp"
#include "unimatch/mesh.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace unimatch {

namespace {

void fix_signs(Mat& vectors)
{
    for (Index c = 0; c < vectors.cols(); ++c) {
        Index best = 0;
        double best_abs = -1.0;
        for (Index r = 0; r < vectors.rows(); ++r) {
            const double a = std::abs(vectors(r, c));
            if (a > best_abs) {
                best_abs = a;
                best = r;
            }
        }
        if (vectors(best, c) < 0.0) vectors.col(c) *= -1.0;
    }
}

SpectralBasis dense_basis(const SpMat& L, const MassVector& mass, Index k)
{
    Mat Ld(L);
    Mat Md = mass.diag.asDiagonal();
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> solver(Ld, Md);
    if (solver.info() != Eigen::Success) {
        throw Error(ErrorCode::ConvergenceError, "dense generalized eigensolver failed");
    }
    SpectralBasis basis;
    basis.eigvals = solver.eigenvalues().head(k);
    basis.eigvecs = solver.eigenvectors().leftCols(k);
    basis.mass = mass;
    return basis;
}

// Kernel of the stiffness matrix: one M-normalized indicator per component of
// the sparsity graph.
Mat kernel_vectors(const SpMat& L, const MassVector& mass)
{
    const Index n = L.rows();
    std::vector<int> parent(static_cast<size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    auto root = [&](int v) {
        while (parent[static_cast<size_t>(v)] != v) {
            parent[static_cast<size_t>(v)] = parent[static_cast<size_t>(parent[static_cast<size_t>(v)])];
            v = parent[static_cast<size_t>(v)];
        }
        return v;
    };
    for (Index c = 0; c < L.outerSize(); ++c) {
        for (SpMat::InnerIterator it(L, c); it; ++it) {
            if (it.row() == it.col() || it.value() == 0.0) continue;
            int a = root(static_cast<int>(it.row()));
            int b = root(static_cast<int>(it.col()));
            if (a != b) parent[static_cast<size_t>(std::max(a, b))] = std::min(a, b);
        }
    }
    std::vector<int> label(static_cast<size_t>(n), -1);
    int count = 0;
    std::vector<int> comp(static_cast<size_t>(n));
    for (Index v = 0; v < n; ++v) {
        int r = root(static_cast<int>(v));
        if (label[static_cast<size_t>(r)] < 0) label[static_cast<size_t>(r)] = count++;
        comp[static_cast<size_t>(v)] = label[static_cast<size_t>(r)];
    }
    Mat K = Mat::Zero(n, count);
    for (Index v = 0; v < n; ++v) K(v, comp[static_cast<size_t>(v)]) = 1.0;
    for (Index c = 0; c < count; ++c) {
        const double norm2 = K.col(c).dot(mass.diag.asDiagonal() * K.col(c));
        K.col(c) /= std::sqrt(norm2);
    }
    return K;
}

// Y <- Y - K (K^T M Y), applied twice for numerical safety.
void deflate(Mat& Y, const Mat& K, const Vec& m)
{
    for (int pass = 0; pass < 2; ++pass) {
        Y -= K * (K.transpose() * (m.asDiagonal() * Y));
    }
}

// M-orthonormalizes the columns of Y (CholeskyQR2). Returns false if Y is
// numerically rank deficient.
bool m_orthonormalize(Mat& Y, const Vec& m)
{
    for (int pass = 0; pass < 2; ++pass) {
        Mat G = Y.transpose() * (m.asDiagonal() * Y);
        Eigen::LLT<Mat> llt(G);
        if (llt.info() != Eigen::Success) return false;
        Mat R = llt.matrixU();
        Y = R.triangularView<Eigen::Upper>().solve<Eigen::OnTheRight>(Y);
    }
    return true;
}

SpectralBasis iterative_basis(const SpMat& L, const MassVector& mass, Index k, const SpectralOptions& options)
{
    const Index n = L.rows();
    const Vec& m = mass.diag;

    Mat K = kernel_vectors(L, mass);
    const Index n_kernel = std::min<Index>(K.cols(), k);
    const Index wanted = k - n_kernel;

    SpectralBasis basis;
    basis.mass = mass;
    basis.eigvals.resize(k);
    basis.eigvecs.resize(n, k);
    for (Index c = 0; c < n_kernel; ++c) {
        basis.eigvecs.col(c) = K.col(c);
        basis.eigvals[c] = K.col(c).dot(L * K.col(c));
    }
    if (wanted == 0) return basis;

    SpMat shifted = L;
    for (Index i = 0; i < n; ++i) shifted.coeffRef(i, i) -= options.shift * m[i];
    Eigen::SimplicialLDLT<SpMat> factor(shifted);
    if (factor.info() != Eigen::Success) {
        throw Error(ErrorCode::ConvergenceError, "factorization of the shifted stiffness matrix failed");
    }

    const Index block = std::min<Index>(n - K.cols(), std::max<Index>(2 * wanted, wanted + 16));
    if (block < wanted) throw Error(ErrorCode::BasisTooLarge, "not enough non-kernel modes for the requested basis");

    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Mat X(n, block);
    for (Index c = 0; c < block; ++c) {
        for (Index r = 0; r < n; ++r) X(r, c) = gauss(rng);
    }
    deflate(X, K, m);
    if (!m_orthonormalize(X, m)) throw Error(ErrorCode::ConvergenceError, "degenerate start block");

    double worst = std::numeric_limits<double>::infinity();
    Vec theta;
    for (int iteration = 0; iteration < options.max_iterations; ++iteration) {
        Mat Y = factor.solve(m.asDiagonal() * X);
        deflate(Y, K, m);
        if (!m_orthonormalize(Y, m)) {
            throw Error(ErrorCode::ConvergenceError, "subspace collapsed at iteration " + std::to_string(iteration));
        }
        Mat LY = L * Y;
        Mat H = Y.transpose() * LY;
        H = 0.5 * (H + H.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Mat> rr(H);
        theta = rr.eigenvalues();
        X = Y * rr.eigenvectors();
        Mat LX = LY * rr.eigenvectors();

        worst = 0.0;
        for (Index j = 0; j < wanted; ++j) {
            Vec residual = LX.col(j) - theta[j] * (m.asDiagonal() * X.col(j));
            const double scale = LX.col(j).norm() + std::abs(theta[j]) * (m.asDiagonal() * X.col(j)).norm();
            worst = std::max(worst, residual.norm() / std::max(scale, 1e-300));
        }
        if (worst < options.tolerance) {
            basis.eigvals.tail(wanted) = theta.head(wanted);
            basis.eigvecs.rightCols(wanted) = X.leftCols(wanted);
            return basis;
        }
    }
    std::ostringstream msg;
    msg << "subspace iteration did not converge after " << options.max_iterations
        << " iterations (worst relative residual " << worst << ")";
    throw Error(ErrorCode::ConvergenceError, msg.str());
}

} // namespace

SpectralBasis spectral_basis(const SpMat& stiffness, const MassVector& mass, Index k, const SpectralOptions& options)
{
    const Index n = stiffness.rows();
    if (k < 2) throw Error(ErrorCode::BasisTooSmall, "basis size must be at least 2");
    if (k > n - 1) {
        throw Error(ErrorCode::BasisTooLarge,
            "basis size " + std::to_string(k) + " exceeds n-1 = " + std::to_string(n - 1));
    }
    if (mass.diag.size() != n || !(mass.diag.array() > 0.0).all()) {
        throw Error(ErrorCode::DegenerateMesh, "lumped mass must be positive on every vertex");
    }

    SpectralBasis basis = n <= options.dense_max_n ? dense_basis(stiffness, mass, k)
                                                   : iterative_basis(stiffness, mass, k, options);
    fix_signs(basis.eigvecs);
    return basis;
}

SpectralBasis spectral_basis(const TriangleMesh& mesh, Index k, const SpectralOptions& options)
{
    return spectral_basis(cotangent_laplacian(mesh, options.laplacian), lumped_mass(mesh), k, options);
}

} // namespace unimatch
