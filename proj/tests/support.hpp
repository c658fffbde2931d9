#pragma once

// Independent reference implementations used as test oracles. Everything
// here is written from the defining formulas with plain loops and dense
// linear algebra, sharing no code paths with the library beyond its types.

#include "unimatch/fixtures.hpp"
#include "unimatch/mesh.hpp"
#include "unimatch/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace oracle {

using unimatch::Index;
using unimatch::Mat;
using unimatch::TriangleMesh;
using unimatch::Vec;

inline Mat random_matrix(std::mt19937_64& rng, Index rows, Index cols, double scale = 1.0)
{
    std::normal_distribution<double> g(0.0, scale);
    Mat m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m(i) = g(rng);
    return m;
}

inline Mat dense_laplacian(const TriangleMesh& mesh, double cot_min = 1e-6, double cot_max = 1e6)
{
    const Index n = mesh.n_vertices();
    Mat L = Mat::Zero(n, n);
    for (Index f = 0; f < mesh.n_faces(); ++f) {
        for (int c = 0; c < 3; ++c) {
            const int o = mesh.faces(f, c);
            const int a = mesh.faces(f, (c + 1) % 3);
            const int b = mesh.faces(f, (c + 2) % 3);
            const Eigen::Vector3d u = (mesh.vertices.row(a) - mesh.vertices.row(o)).transpose();
            const Eigen::Vector3d v = (mesh.vertices.row(b) - mesh.vertices.row(o)).transpose();
            double cot = u.dot(v) / u.cross(v).norm();
            cot = std::clamp(cot, cot_min, cot_max);
            L(a, b) -= 0.5 * cot;
            L(b, a) -= 0.5 * cot;
        }
    }
    for (Index i = 0; i < n; ++i) L(i, i) = -(L.row(i).sum() - L(i, i));
    return L;
}

inline Vec dense_mass(const TriangleMesh& mesh)
{
    Vec m = Vec::Zero(mesh.n_vertices());
    for (Index f = 0; f < mesh.n_faces(); ++f) {
        const Eigen::Vector3d p0 = mesh.vertices.row(mesh.faces(f, 0)).transpose();
        const Eigen::Vector3d p1 = mesh.vertices.row(mesh.faces(f, 1)).transpose();
        const Eigen::Vector3d p2 = mesh.vertices.row(mesh.faces(f, 2)).transpose();
        const double area = 0.5 * (p1 - p0).cross(p2 - p0).norm();
        for (int c = 0; c < 3; ++c) m[mesh.faces(f, c)] += area / 3.0;
    }
    return m;
}

struct Spectrum
{
    Vec values;
    Mat vectors;
};

/// Generalized problem L phi = lambda M phi through the symmetric matrix
/// M^-1/2 L M^-1/2.
inline Spectrum dense_spectrum(const Mat& L, const Vec& mass, Index k)
{
    const Vec s = mass.cwiseSqrt().cwiseInverse();
    const Mat S = s.asDiagonal() * L * s.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (S + S.transpose()));
    Spectrum out;
    out.values = es.eigenvalues().head(k);
    out.vectors = s.asDiagonal() * es.eigenvectors().leftCols(k);
    return out;
}

/// WKS straight from the definition with the mass-weighted normalizer
/// computed explicitly.
inline Mat wks(const Vec& eigvals, const Mat& eigvecs, const Vec& mass, Index n_energies)
{
    const Index k = eigvals.size();
    const Index n = eigvecs.rows();
    const double e_min = std::log(eigvals[1]);
    const double e_max = std::log(eigvals[k - 1]);
    const double sigma = 7.0 * (e_max - e_min) / static_cast<double>(n_energies);
    const double lo = e_min + 2 * sigma;
    const double hi = e_max - 2 * sigma;
    Mat out(n, n_energies);
    for (Index t = 0; t < n_energies; ++t) {
        const double e = n_energies == 1 ? lo : lo + (hi - lo) * static_cast<double>(t) / static_cast<double>(n_energies - 1);
        for (Index x = 0; x < n; ++x) {
            double acc = 0;
            for (Index i = 1; i < k; ++i) {
                const double d = e - std::log(eigvals[i]);
                acc += eigvecs(x, i) * eigvecs(x, i) * std::exp(-d * d / (2 * sigma * sigma));
            }
            out(x, t) = acc;
        }
        double total = 0;
        for (Index x = 0; x < n; ++x) total += mass[x] * out(x, t);
        out.col(t) /= total;
    }
    return out;
}

inline double cosine(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b)
{
    return a.dot(b) / (a.norm() * b.norm());
}

/// Group-wise rank contrastive loss by direct enumeration. `dist(i, j)` is
/// the part distance between source part i and target part j.
inline double rnc_groups(
    const Mat& fx,
    const Mat& fy,
    const std::vector<int>& labels_y,
    int n_parts_y,
    const std::vector<int>& anchor_vertex,
    const std::vector<int>& anchor_part,
    const Mat& dist,
    double tau)
{
    double total = 0;
    for (size_t a = 0; a < anchor_vertex.size(); ++a) {
        const int i = anchor_part[a];
        double per_anchor = 0;
        for (int j = 0; j < n_parts_y; ++j) {
            double num = 0, den = 0;
            for (Index l = 0; l < fy.rows(); ++l) {
                const double e = std::exp(cosine(fx.row(anchor_vertex[a]), fy.row(l)) / tau);
                const int part = labels_y[static_cast<size_t>(l)];
                if (part == j) num += e;
                if (dist(i, part) >= dist(i, j)) den += e;
            }
            per_anchor += -std::log(num / den);
        }
        total += per_anchor / n_parts_y;
    }
    return total / static_cast<double>(anchor_vertex.size());
}

/// Per-sample rank contrastive loss: every target vertex is its own label,
/// the negatives of reference j are the samples at least as far as j.
inline double rnc_per_sample(
    const Mat& fx, const Mat& fy, const std::vector<int>& anchors, const Mat& dist, double tau)
{
    double total = 0;
    const Index ny = fy.rows();
    for (size_t a = 0; a < anchors.size(); ++a) {
        const int i = anchors[a];
        double per_anchor = 0;
        for (Index j = 0; j < ny; ++j) {
            const double sij = cosine(fx.row(i), fy.row(j)) / tau;
            double den = 0;
            for (Index k = 0; k < ny; ++k) {
                if (dist(i, k) >= dist(i, j)) den += std::exp(cosine(fx.row(i), fy.row(k)) / tau);
            }
            per_anchor += -(sij - std::log(den));
        }
        total += per_anchor / static_cast<double>(ny);
    }
    return total / static_cast<double>(anchors.size());
}

/// Central-difference gradient of a scalar function of one matrix.
inline Mat numeric_gradient(const std::function<double(const Mat&)>& f, Mat x, double h = 1e-6)
{
    Mat g(x.rows(), x.cols());
    for (Index i = 0; i < x.size(); ++i) {
        const double keep = x(i);
        x(i) = keep + h;
        const double up = f(x);
        x(i) = keep - h;
        const double down = f(x);
        x(i) = keep;
        g(i) = (up - down) / (2 * h);
    }
    return g;
}

inline double relative_error(const Mat& a, const Mat& b, double floor = 1e-8)
{
    double worst = 0;
    for (Index i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a(i)), std::abs(b(i)), floor});
        worst = std::max(worst, std::abs(a(i) - b(i)) / scale);
    }
    return worst;
}

/// Seeded meshes for spectral checks: noisy icospheres, grids and bent grids,
/// all with at most 300 vertices.
inline TriangleMesh seeded_mesh(int seed)
{
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed) * 7919u + 1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    TriangleMesh mesh;
    switch (seed % 3) {
    case 0: {
        mesh = unimatch::icosphere(seed % 2 == 0 ? 2 : 1);
        for (Index v = 0; v < mesh.n_vertices(); ++v) mesh.vertices.row(v) *= 1.0 + 0.1 * u(rng);
        break;
    }
    case 1: {
        const int nu = 8 + seed % 7;
        const int nv = 6 + seed % 5;
        mesh = unimatch::grid_plane(nu, nv, 1.0 + 0.1 * seed, 1.0);
        for (Index v = 0; v < mesh.n_vertices(); ++v) mesh.vertices(v, 2) = 0.05 * u(rng);
        break;
    }
    default:
        mesh = unimatch::bend_plane(unimatch::grid_plane(10 + seed % 5, 7, 2.0, 1.0), 1.0 + 0.05 * seed);
        break;
    }
    return mesh;
}

inline Eigen::Matrix3d rotation(double a, double b, double c)
{
    return (Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()) * Eigen::AngleAxisd(b, Eigen::Vector3d::UnitY())
               * Eigen::AngleAxisd(c, Eigen::Vector3d::UnitX()))
        .toRotationMatrix();
}

inline TriangleMesh rigid_copy(const TriangleMesh& mesh, const Eigen::Matrix3d& R, const Eigen::RowVector3d& t)
{
    TriangleMesh out = mesh;
    out.vertices = (mesh.vertices * R.transpose()).rowwise() + t;
    return out;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag)
{
    static int counter = 0;
    auto dir = std::filesystem::temp_directory_path()
        / ("unimatch_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace oracle
