#include "doctest.h"
#include "support.hpp"

#include "unimatch/error.hpp"
#include "unimatch/fixtures.hpp"
#include "unimatch/mesh.hpp"

#include <fstream>

using namespace unimatch;

namespace {

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream(path) << text;
}

ErrorCode code_of(const std::function<void()>& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::IoError;
}

TriangleMesh single_triangle(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c)
{
    TriangleMesh m;
    m.vertices.resize(3, 3);
    m.vertices.row(0) = a.transpose();
    m.vertices.row(1) = b.transpose();
    m.vertices.row(2) = c.transpose();
    m.faces.resize(1, 3);
    m.faces << 0, 1, 2;
    return m;
}

const char* kTetraOff = "OFF\n4 4 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n";

} // namespace

TEST_CASE("OFF tetrahedron loads with 4 vertices and 4 faces")
{
    auto dir = oracle::temp_dir("mesh");
    write_text(dir / "t.off", kTetraOff);
    TriangleMesh m = load_mesh(dir / "t.off");
    CHECK(m.n_vertices() == 4);
    CHECK(m.n_faces() == 4);
    CHECK(m.vertices(1, 0) == 1.0);
}

TEST_CASE("OBJ quad is fan-triangulated from its first vertex")
{
    auto dir = oracle::temp_dir("mesh");
    write_text(dir / "q.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0.5 0.5 1\nf 1 2 3 4\nf 1 2 5\nf 2 3 5\nf 3 4 5\nf 4 1 5\n");
    TriangleMesh m = load_mesh(dir / "q.obj");
    REQUIRE(m.n_faces() == 6);
    CHECK(m.faces.row(0) == Eigen::RowVector3i(0, 1, 2));
    CHECK(m.faces.row(1) == Eigen::RowVector3i(0, 2, 3));
}

TEST_CASE("OBJ slash-separated face indices")
{
    auto dir = oracle::temp_dir("mesh");
    write_text(dir / "s.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nvt 0 0\nf 1/1 3/1 2/1\nf 1//1 2//1 4//1\nf 1 4 3\nf 2 3 4\n");
    TriangleMesh m = load_mesh(dir / "s.obj");
    CHECK(m.n_faces() == 4);
    CHECK(m.faces.row(0) == Eigen::RowVector3i(0, 2, 1));
}

TEST_CASE("ASCII PLY loads")
{
    auto dir = oracle::temp_dir("mesh");
    write_text(dir / "t.ply",
        "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\n"
        "element face 4\nproperty list uchar int vertex_indices\nend_header\n"
        "0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n");
    TriangleMesh m = load_mesh(dir / "t.ply");
    CHECK(m.n_vertices() == 4);
    CHECK(m.n_faces() == 4);
}

TEST_CASE("load errors")
{
    auto dir = oracle::temp_dir("mesh");
    std::string bad = "OFF\n10 1 0\n";
    for (int i = 0; i < 10; ++i) bad += std::to_string(i) + " 0 0\n";
    bad += "3 0 1 999\n";
    write_text(dir / "bad.off", bad);
    CHECK(code_of([&] { load_mesh(dir / "bad.off"); }) == ErrorCode::DegenerateMesh);

    write_text(dir / "garbage.off", "OFF\n4 4 0\n0 0 zero\n");
    CHECK(code_of([&] { load_mesh(dir / "garbage.off"); }) == ErrorCode::ParseError);

    write_text(dir / "flat.off", "OFF\n4 2 0\n0 0 0\n1 0 0\n2 0 0\n0 1 0\n3 0 1 2\n3 0 1 3\n");
    CHECK(code_of([&] { load_mesh(dir / "flat.off"); }) == ErrorCode::DegenerateMesh);

    write_text(dir / "repeat.off", "OFF\n4 2 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 0 1\n3 0 1 2\n");
    CHECK(code_of([&] { load_mesh(dir / "repeat.off"); }) == ErrorCode::DegenerateMesh);
}

TEST_CASE("disconnected meshes are rejected unless allowed")
{
    auto dir = oracle::temp_dir("mesh");
    write_text(dir / "two.off", "OFF\n6 2 0\n0 0 0\n1 0 0\n0 1 0\n5 0 0\n6 0 0\n5 1 0\n3 0 1 2\n3 3 4 5\n");
    CHECK(code_of([&] { load_mesh(dir / "two.off"); }) == ErrorCode::Disconnected);
    MeshLoadOptions allow;
    allow.allow_disconnected = true;
    TriangleMesh m = load_mesh(dir / "two.off", allow);
    CHECK(connected_components(m) == 2);
}

TEST_CASE("save_off then load_mesh reproduces the mesh")
{
    auto dir = oracle::temp_dir("mesh");
    TriangleMesh m = icosphere(1);
    save_off(m, dir / "s.off");
    TriangleMesh back = load_mesh(dir / "s.off");
    CHECK(back.faces == m.faces);
    CHECK((back.vertices - m.vertices).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lumped mass of a unit right triangle")
{
    auto m = single_triangle({0, 0, 0}, {1, 0, 0}, {0, 1, 0});
    MassVector mass = lumped_mass(m);
    for (int i = 0; i < 3; ++i) CHECK(mass.diag[i] == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
    CHECK(mass.total_area == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("lumped mass of a regular tetrahedron is uniform and scales with s^2")
{
    Eigen::Matrix<double, 4, 3> V;
    V << 1, 1, 1, 1, -1, -1, -1, 1, -1, -1, -1, 1;
    V /= 2.0 * std::sqrt(2.0); // edge 1
    Eigen::Matrix<int, 4, 3> F;
    F << 0, 1, 2, 0, 3, 1, 0, 2, 3, 1, 3, 2;
    TriangleMesh m = make_mesh(V, F, "tet");
    MassVector mass = lumped_mass(m);
    for (int i = 0; i < 4; ++i) CHECK(mass.diag[i] == doctest::Approx(std::sqrt(3.0) / 4.0).epsilon(1e-12));
    CHECK(mass.diag.sum() == doctest::Approx(mass.total_area).epsilon(1e-12));

    TriangleMesh scaled = m;
    scaled.vertices *= 3.0;
    MassVector ms = lumped_mass(scaled);
    CHECK((ms.diag - 9.0 * mass.diag).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cotangent weights of an equilateral triangle")
{
    auto m = single_triangle({0, 0, 0}, {1, 0, 0}, {0.5, std::sqrt(3.0) / 2.0, 0});
    Mat L = Mat(cotangent_laplacian(m));
    const double w = -0.5 / std::tan(M_PI / 3.0);
    CHECK(L(0, 1) == doctest::Approx(w).epsilon(1e-12));
    CHECK(L(1, 2) == doctest::Approx(w).epsilon(1e-12));
    CHECK(L(0, 1) == doctest::Approx(-0.288675).epsilon(1e-6));
    CHECK(L(0, 0) == doctest::Approx(-2 * w).epsilon(1e-12));
}

TEST_CASE("Laplacian matches the dense oracle, kills constants, is symmetric and rotation invariant")
{
    for (int seed = 0; seed < 6; ++seed) {
        TriangleMesh m = oracle::seeded_mesh(seed);
        SpMat L = cotangent_laplacian(m);
        Mat Ld = Mat(L);
        CHECK((Ld - oracle::dense_laplacian(m)).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((L * Vec::Ones(m.n_vertices())).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((Ld - Ld.transpose()).cwiseAbs().maxCoeff() == 0.0);
        TriangleMesh r = oracle::rigid_copy(m, oracle::rotation(0.3, -1.1, 2.0), Eigen::RowVector3d(1, 2, 3));
        CHECK((Mat(cotangent_laplacian(r)) - Ld).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("strict mode rejects angles beyond the clamp")
{
    TriangleMesh m = make_mesh(
        (Eigen::Matrix<double, 4, 3>() << 0, 0, 0, 1, 0, 0, 0.5, 1e-8, 0, 0.5, -1, 0).finished(),
        (Eigen::Matrix<int, 2, 3>() << 0, 1, 2, 0, 3, 1).finished(),
        "sliver");
    LaplacianOptions strict;
    strict.strict = true;
    CHECK_THROWS_AS(cotangent_laplacian(m, strict), Error);
    CHECK_NOTHROW(cotangent_laplacian(m));
}

TEST_CASE("basis k=8: zero first eigenvalue, constant first vector, orthonormal")
{
    TriangleMesh m = icosphere(2);
    SpectralBasis b = spectral_basis(m, 8);
    CHECK(std::abs(b.eigvals[0]) <= 1e-9);
    for (Index i = 1; i < 8; ++i) CHECK(b.eigvals[i] >= b.eigvals[i - 1]);
    const Vec c0 = b.eigvecs.col(0);
    CHECK((c0.maxCoeff() - c0.minCoeff()) / c0.cwiseAbs().mean() < 1e-6);
    const Mat gram = b.eigvecs.transpose() * b.mass.diag.asDiagonal() * b.eigvecs;
    CHECK((gram - Mat::Identity(8, 8)).norm() < 1e-6);
}

TEST_CASE("icosahedron k=11 eigenvalues match the dense oracle")
{
    TriangleMesh m = icosphere(0);
    SpectralBasis b = spectral_basis(m, 11);
    auto ref = oracle::dense_spectrum(oracle::dense_laplacian(m), oracle::dense_mass(m), 11);
    for (Index i = 0; i < 11; ++i) CHECK(std::abs(b.eigvals[i] - ref.values[i]) <= 1e-8 * std::max(1.0, std::abs(ref.values[i])));
}

TEST_CASE("iterative solver agrees with the dense oracle above the dense cutoff")
{
    TriangleMesh m = icosphere(3);
    for (Index v = 0; v < m.n_vertices(); ++v) m.vertices.row(v) *= 1.0 + 0.05 * std::sin(3.0 * m.vertices(v, 0) + m.vertices(v, 2));
    SpectralBasis b = spectral_basis(m, 24);
    auto ref = oracle::dense_spectrum(oracle::dense_laplacian(m), oracle::dense_mass(m), 24);
    for (Index i = 1; i < 24; ++i) CHECK(std::abs(b.eigvals[i] - ref.values[i]) <= 1e-8 * ref.values[i]);
    const Mat gram = b.eigvecs.transpose() * b.mass.diag.asDiagonal() * b.eigvecs;
    CHECK((gram - Mat::Identity(24, 24)).norm() < 1e-6);
    // Residual of every pair in the generalized problem.
    const Mat L = oracle::dense_laplacian(m);
    for (Index i = 0; i < 24; ++i) {
        const Vec r = L * b.eigvecs.col(i) - b.eigvals[i] * b.mass.diag.cwiseProduct(b.eigvecs.col(i));
        CHECK(r.norm() < 1e-6 * std::max(1.0, b.eigvals[i]));
    }
}

TEST_CASE("eigenvalues scale by 1/s^2 and vectors by 1/s")
{
    TriangleMesh m = oracle::seeded_mesh(4);
    TriangleMesh s = m;
    s.vertices *= 2.0;
    SpectralBasis a = spectral_basis(m, 8);
    SpectralBasis b = spectral_basis(s, 8);
    for (Index i = 1; i < 8; ++i) CHECK(b.eigvals[i] == doctest::Approx(a.eigvals[i] / 4.0).epsilon(1e-8));
    CHECK((b.eigvecs - a.eigvecs / 2.0).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("sign convention and byte-identical reruns")
{
    TriangleMesh m = icosphere(3);
    SpectralBasis a = spectral_basis(m, 16);
    SpectralBasis b = spectral_basis(m, 16);
    CHECK(a.eigvecs == b.eigvecs);
    CHECK(a.eigvals == b.eigvals);
    for (Index c = 0; c < 16; ++c) {
        Index arg;
        a.eigvecs.col(c).cwiseAbs().maxCoeff(&arg);
        CHECK(a.eigvecs(arg, c) > 0);
    }
}

TEST_CASE("basis size limits")
{
    TriangleMesh m = icosphere(0);
    CHECK_THROWS_AS(spectral_basis(m, 12), Error);
    try {
        spectral_basis(m, 12);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::BasisTooLarge);
    }
}

TEST_CASE("geodesic basics")
{
    TriangleMesh m = icosphere(2);
    Vec d = geodesics_from(m, 5);
    CHECK(d[5] == 0.0);

    GeodesicGraph path = GeodesicGraph::from_edges(3, {{0, 1}, {1, 2}}, {1.0, 2.0});
    Vec p = path.distances_from(0);
    CHECK(p[0] == 0.0);
    CHECK(p[1] == 1.0);
    CHECK(p[2] == 3.0);

    GeodesicGraph broken = GeodesicGraph::from_edges(4, {{0, 1}, {2, 3}}, {1.0, 1.0});
    CHECK_THROWS_AS(broken.distances_from(0), Error);
    CHECK(std::isinf(broken.distances_from(0, true)[3]));
}

TEST_CASE("flat unit square corner to corner within 8% of sqrt 2")
{
    TriangleMesh m = grid_plane(11, 11, 1.0, 1.0);
    Vec d = geodesics_from(m, 0);
    CHECK(std::abs(d[120] - std::sqrt(2.0)) <= 0.08 * std::sqrt(2.0));
    CHECK(d[120] >= std::sqrt(2.0) - 1e-12);
}

TEST_CASE("geodesics satisfy the triangle inequality")
{
    TriangleMesh m = oracle::seeded_mesh(0);
    GeodesicGraph g(m);
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(m.n_vertices()) - 1);
    for (int t = 0; t < 100; ++t) {
        const int a = pick(rng), b = pick(rng), c = pick(rng);
        Vec da = g.distances_from(a);
        Vec db = g.distances_from(b);
        CHECK(da[c] <= da[b] + db[c] + 1e-12);
    }
}
