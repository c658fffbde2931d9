#include "doctest.h"
#include "support.hpp"

#include "unimatch/descriptors.hpp"
#include "unimatch/error.hpp"
#include "unimatch/f32mat.hpp"
#include "unimatch/fixtures.hpp"

#include <fstream>

using namespace unimatch;

namespace {

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

} // namespace

TEST_CASE("WKS on the icosahedron matches the dense-spectrum oracle")
{
    TriangleMesh m = icosphere(0);
    SpectralBasis b = spectral_basis(m, 11);
    auto ref = oracle::dense_spectrum(oracle::dense_laplacian(m), oracle::dense_mass(m), 11);
    Mat expected = oracle::wks(ref.values, ref.vectors, oracle::dense_mass(m), 16);
    Mat got = wks(b, 16).values;
    REQUIRE(got.cols() == 16);
    CHECK((got - expected).cwiseAbs().maxCoeff() <= 1e-8 * expected.cwiseAbs().maxCoeff());
}

TEST_CASE("WKS energies are mass-normalized")
{
    TriangleMesh m = oracle::seeded_mesh(3);
    SpectralBasis b = spectral_basis(m, 20);
    Mat w = wks(b, 32).values;
    const RowVec sums = b.mass.diag.transpose() * w;
    CHECK((sums.array() - 1.0).abs().maxCoeff() <= 1e-9);
}

TEST_CASE("WKS is invariant to rigid motion")
{
    TriangleMesh m = oracle::seeded_mesh(0);
    TriangleMesh r = oracle::rigid_copy(m, oracle::rotation(1.0, 0.4, -0.7), Eigen::RowVector3d(-2, 0.5, 4));
    Mat a = wks(spectral_basis(m, 30), 64).values;
    Mat b = wks(spectral_basis(r, 30), 64).values;
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("WKS needs three eigenpairs")
{
    TriangleMesh m = icosphere(1);
    CHECK(code_of([&] { wks(spectral_basis(m, 2), 8); }) == ErrorCode::BasisTooSmall);
}

TEST_CASE("F32MAT layout")
{
    auto dir = oracle::temp_dir("desc");
    Mat v(2, 3);
    v << 1, 2, 3, 4, 5, 6.5;
    write_f32mat(dir / "m.f32", v);
    std::ifstream in(dir / "m.f32", std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
    REQUIRE(bytes.size() == 16 + 6 * 4);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "F32M");
    CHECK(bytes[4] == 2);
    CHECK(bytes[8] == 3);
    CHECK(bytes[12] == 0);
    float last;
    std::memcpy(&last, bytes.data() + 16 + 5 * 4, 4);
    CHECK(last == 6.5f);
    CHECK(read_f32mat(dir / "m.f32") == v);
}

TEST_CASE("feature field loading, fill and errors")
{
    auto dir = oracle::temp_dir("desc");
    TriangleMesh m = icosphere(1);
    const Index n = m.n_vertices();
    std::mt19937_64 rng(5);
    Mat f = oracle::random_matrix(rng, n, 768);

    write_f32mat(dir / "full.f32", f);
    LoadedFeatureField full = load_feature_field(dir / "full.f32", m);
    CHECK(full.field.channels() == 768);
    CHECK(full.report.zero_rows == 0);
    CHECK(full.field.values == round_to_f32(f));

    Mat holes = f;
    holes.row(7).setZero();
    write_f32mat(dir / "hole.f32", holes);
    LoadedFeatureField filled = load_feature_field(dir / "hole.f32", m);
    CHECK(filled.report.zero_rows == 1);
    CHECK(filled.report.filled_rows == 1);
    RowVec mean = RowVec::Zero(768);
    const auto adj = vertex_adjacency(m);
    for (int j : adj[7]) mean += round_to_f32(f).row(j);
    mean /= static_cast<double>(adj[7].size());
    CHECK((filled.field.values.row(7) - mean).cwiseAbs().maxCoeff() < 1e-12);

    write_f32mat(dir / "short.f32", f.topRows(n - 1));
    CHECK(code_of([&] { load_feature_field(dir / "short.f32", m); }) == ErrorCode::ShapeMismatch);

    std::ofstream(dir / "junk.f32") << "NOPE and some more bytes";
    CHECK(code_of([&] { load_feature_field(dir / "junk.f32", m); }) == ErrorCode::FormatError);
}

TEST_CASE("fill closes over chains of invisible rows")
{
    TriangleMesh m = grid_plane(6, 2, 5.0, 1.0);
    Mat f = Mat::Zero(12, 2);
    f.row(0) << 1, 2;
    const auto report = fill_invisible_rows(f, vertex_adjacency(m));
    CHECK(report.zero_rows == 11);
    CHECK(report.filled_rows == 11);
    CHECK(report.unfilled_rows == 0);
    for (Index i = 0; i < 12; ++i) CHECK(f.row(i) == RowVec((RowVec(2) << 1, 2).finished()));
}

TEST_CASE("load-save-load is bit exact at f32")
{
    auto dir = oracle::temp_dir("desc");
    TriangleMesh m = icosphere(1);
    std::mt19937_64 rng(2);
    write_f32mat(dir / "a.f32", oracle::random_matrix(rng, m.n_vertices(), 16));
    FeatureField a = load_feature_field(dir / "a.f32", m).field;
    save_feature_field(dir / "b.f32", a);
    FeatureField b = load_feature_field(dir / "b.f32", m).field;
    CHECK(a.values == b.values);
}

TEST_CASE("concatenation")
{
    std::mt19937_64 rng(9);
    FeatureField geo{oracle::random_matrix(rng, 40, 128), FeatureKind::geometric};
    FeatureField sem{oracle::random_matrix(rng, 40, 768), FeatureKind::semantic};
    FeatureField both = concat_features(geo, sem, false);
    CHECK(both.channels() == 896);
    CHECK(both.values.leftCols(128) == geo.values);

    FeatureField none{Mat(40, 0), FeatureKind::semantic};
    CHECK(concat_features(geo, none, false).values == geo.values);

    geo.values.col(3).setConstant(2.5);
    FeatureField st = concat_features(geo, sem, true);
    CHECK(st.values.col(3).cwiseAbs().maxCoeff() == 0.0);
    const Mat s = st.values;
    CHECK(s.col(10).mean() == doctest::Approx(0.0).epsilon(1e-12));
    const double var = (s.col(10).array() - s.col(10).mean()).square().mean();
    CHECK(var == doctest::Approx(1.0).epsilon(1e-12));

    FeatureField wrong{oracle::random_matrix(rng, 39, 768), FeatureKind::semantic};
    CHECK(code_of([&] { concat_features(geo, wrong, false); }) == ErrorCode::ShapeMismatch);
}
