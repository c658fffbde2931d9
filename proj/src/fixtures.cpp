#include "unimatch/descriptors.hpp"
#include "unimatch/error.hpp"
#include "unimatch/f32mat.hpp"
#include "unimatch/fixtures.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace unimatch {

namespace fs = std::filesystem;

using Vertices = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3>;

TriangleMesh icosphere(int level)
{
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Eigen::Vector3d> v = {
        {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
        {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
        {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1},
    };
    std::vector<Eigen::Vector3i> f = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
        {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
        {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1},
    };
    for (auto& p : v) p.normalize();

    for (int l = 0; l < level; ++l) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            v.push_back((v[static_cast<size_t>(a)] + v[static_cast<size_t>(b)]).normalized());
            const int id = static_cast<int>(v.size()) - 1;
            midpoint.emplace(key, id);
            return id;
        };
        std::vector<Eigen::Vector3i> next;
        next.reserve(f.size() * 4);
        for (const auto& tri : f) {
            const int ab = mid(tri[0], tri[1]);
            const int bc = mid(tri[1], tri[2]);
            const int ca = mid(tri[2], tri[0]);
            next.emplace_back(tri[0], ab, ca);
            next.emplace_back(tri[1], bc, ab);
            next.emplace_back(tri[2], ca, bc);
            next.emplace_back(ab, bc, ca);
        }
        f = std::move(next);
    }

    Vertices V(static_cast<Index>(v.size()), 3);
    for (size_t i = 0; i < v.size(); ++i) V.row(static_cast<Index>(i)) = v[i].transpose();
    Faces F(static_cast<Index>(f.size()), 3);
    for (size_t i = 0; i < f.size(); ++i) F.row(static_cast<Index>(i)) = f[i].transpose();
    return make_mesh(std::move(V), std::move(F), "icosphere" + std::to_string(level));
}

TriangleMesh grid_plane(int nu, int nv, double width, double height)
{
    if (nu < 2 || nv < 2) throw Error(ErrorCode::SpecError, "grid needs at least 2x2 vertices");
    Vertices V(nu * nv, 3);
    for (int j = 0; j < nv; ++j) {
        for (int i = 0; i < nu; ++i) {
            V.row(j * nu + i) << width * i / (nu - 1), height * j / (nv - 1), 0.0;
        }
    }
    Faces F(2 * (nu - 1) * (nv - 1), 3);
    int f = 0;
    for (int j = 0; j + 1 < nv; ++j) {
        for (int i = 0; i + 1 < nu; ++i) {
            const int a = j * nu + i;
            const int b = a + 1;
            const int c = a + nu;
            const int d = c + 1;
            // Alternate the diagonal to avoid a directional bias.
            if ((i + j) % 2 == 0) {
                F.row(f++) << a, b, d;
                F.row(f++) << a, d, c;
            } else {
                F.row(f++) << a, b, c;
                F.row(f++) << b, d, c;
            }
        }
    }
    return make_mesh(std::move(V), std::move(F), "plane");
}

TriangleMesh bend_plane(const TriangleMesh& plane, double radius)
{
    TriangleMesh out = plane;
    for (Index v = 0; v < plane.n_vertices(); ++v) {
        const double u = plane.vertices(v, 0);
        const double theta = u / radius;
        out.vertices.row(v) << radius * std::sin(theta), plane.vertices(v, 1), radius * (1.0 - std::cos(theta));
    }
    out.name = "bent_plane";
    return out;
}

TriangleMesh permute_vertices(const TriangleMesh& mesh, const std::vector<int>& perm)
{
    TriangleMesh out = mesh;
    for (Index v = 0; v < mesh.n_vertices(); ++v) out.vertices.row(perm[static_cast<size_t>(v)]) = mesh.vertices.row(v);
    for (Index f = 0; f < mesh.n_faces(); ++f) {
        for (int c = 0; c < 3; ++c) out.faces(f, c) = perm[static_cast<size_t>(mesh.faces(f, c))];
    }
    return out;
}

std::vector<int> fixture_truth(const FixtureShape& source, const FixtureShape& target)
{
    std::vector<int> source_of_base(source.base_index.size(), -1);
    for (size_t v = 0; v < source.base_index.size(); ++v) source_of_base[static_cast<size_t>(source.base_index[v])] = static_cast<int>(v);
    std::vector<int> truth(target.base_index.size());
    for (size_t y = 0; y < target.base_index.size(); ++y) {
        truth[y] = source_of_base[static_cast<size_t>(target.base_index[y])];
        if (truth[y] < 0) throw Error(ErrorCode::IndexError, "fixture shapes do not share a template");
    }
    return truth;
}

namespace {

constexpr Index kSemanticChannels = 768;

struct Bump
{
    Eigen::Vector3d center;
    double amplitude;
};

std::vector<Bump> random_bumps(std::mt19937_64& rng, int count, double lo, double hi)
{
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> amp(lo, hi);
    std::vector<Bump> bumps;
    for (int i = 0; i < count; ++i) {
        Eigen::Vector3d c(gauss(rng), gauss(rng), gauss(rng));
        bumps.push_back({c.normalized(), amp(rng)});
    }
    return bumps;
}

/// Radial displacement of unit-sphere template positions.
Vertices displace(const Vertices& base, const std::vector<Bump>& bumps, double width)
{
    Vertices out = base;
    for (Index v = 0; v < base.rows(); ++v) {
        const Eigen::Vector3d p = base.row(v).transpose();
        double r = 1.0;
        for (const auto& b : bumps) r += b.amplitude * std::exp(-(p - b.center).squaredNorm() / (2 * width * width));
        out.row(v) = (r * p).transpose();
    }
    return out;
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng)
{
    std::normal_distribution<double> gauss;
    Eigen::Quaterniond q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    q.normalize();
    return q.toRotationMatrix();
}

/// Random Fourier features of template positions: smooth, shape-consistent
/// stand-ins for back-projected image features.
Mat fourier_features(const Vertices& base, std::mt19937_64& rng, double bandwidth)
{
    std::normal_distribution<double> gauss(0.0, bandwidth);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
    Mat W(3, kSemanticChannels);
    for (Index i = 0; i < W.size(); ++i) W(i) = gauss(rng);
    RowVec b(kSemanticChannels);
    for (Index i = 0; i < b.size(); ++i) b[i] = phase(rng);
    Mat f = (base * W).rowwise() + b;
    return f.array().cos().matrix();
}

struct ShapeRecipe
{
    Vertices positions;
    Mat semantic;
    double jitter = 0.0;
    int zero_rows = 0;
};

/// Rigid motion, jitter, vertex shuffle and semantic noise for one copy.
FixtureShape instantiate(const TriangleMesh& base, const ShapeRecipe& recipe, double semantic_noise, std::mt19937_64& rng, const std::string& name)
{
    const Index n = base.n_vertices();
    std::normal_distribution<double> gauss;
    const Eigen::Matrix3d R = random_rotation(rng);
    const Eigen::RowVector3d shift(0.5 * gauss(rng), 0.5 * gauss(rng), 0.5 * gauss(rng));

    TriangleMesh shaped = base;
    for (Index v = 0; v < n; ++v) {
        Eigen::RowVector3d p = recipe.positions.row(v);
        if (recipe.jitter > 0) p += recipe.jitter * Eigen::RowVector3d(gauss(rng), gauss(rng), gauss(rng));
        shaped.vertices.row(v) = p * R.transpose() + shift;
    }

    std::vector<int> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    FixtureShape out;
    out.mesh = permute_vertices(shaped, perm);
    out.mesh.name = name;
    out.base_index.assign(static_cast<size_t>(n), 0);
    for (Index v = 0; v < n; ++v) out.base_index[static_cast<size_t>(perm[static_cast<size_t>(v)])] = static_cast<int>(v);

    if (recipe.semantic.size() > 0) {
        out.semantic.resize(n, recipe.semantic.cols());
        for (Index v = 0; v < n; ++v) {
            RowVec row = recipe.semantic.row(v);
            for (Index c = 0; c < row.size(); ++c) row[c] += semantic_noise * gauss(rng);
            out.semantic.row(perm[static_cast<size_t>(v)]) = row;
        }
        std::uniform_int_distribution<Index> pick(0, n - 1);
        for (int z = 0; z < recipe.zero_rows; ++z) out.semantic.row(pick(rng)).setZero();
    }
    return out;
}

const std::vector<std::string> kPartNames = {"head", "torso", "left arm", "right arm", "left leg", "right leg"};

/// Template parts as geodesic Voronoi cells, transferred to every shape
/// through its template indices, with per-shape perturbed name embeddings.
void plant_parts(std::vector<FixtureShape>& shapes, const TriangleMesh& base, std::mt19937_64& rng, double perturbation)
{
    const int n_parts = static_cast<int>(kPartNames.size());
    std::uniform_int_distribution<int> start(0, static_cast<int>(base.n_vertices()) - 1);
    const std::vector<int> seeds = farthest_point_samples(base, n_parts, start(rng));
    const std::vector<int> base_labels = voronoi_labels(base, seeds);

    const Index dim = 16;
    std::normal_distribution<double> gauss;
    Mat concepts(n_parts, dim);
    for (Index i = 0; i < concepts.size(); ++i) concepts(i) = gauss(rng);
    concepts.rowwise().normalize();

    for (auto& s : shapes) {
        std::vector<int> label(s.base_index.size());
        for (size_t v = 0; v < label.size(); ++v) label[v] = base_labels[static_cast<size_t>(s.base_index[v])];
        s.labels = make_part_labels(std::move(label), n_parts, kPartNames);
        Mat noise(n_parts, dim);
        for (Index i = 0; i < noise.size(); ++i) noise(i) = gauss(rng);
        noise.rowwise().normalize();
        s.embeddings = (concepts + perturbation * noise).rowwise().normalized();
    }
}

std::vector<std::pair<int, int>> all_pairs_except(int n, std::pair<int, int> held_out)
{
    std::vector<std::pair<int, int>> out;
    for (int a = 0; a < n; ++a) {
        for (int b = a + 1; b < n; ++b) {
            if (std::make_pair(a, b) != held_out && std::make_pair(b, a) != held_out) out.emplace_back(a, b);
        }
    }
    return out;
}

} // namespace

FixtureSet make_fixture(const std::string& kind, std::uint64_t seed)
{
    FixtureSet fx;
    fx.kind = kind;
    fx.seed = seed;
    std::mt19937_64 rng(seed);

    if (kind == "sphere") {
        const TriangleMesh base = icosphere(2);
        ShapeRecipe recipe{base.vertices, fourier_features(base.vertices, rng, 1.5), 0.0, 0};
        for (int i = 0; i < 2; ++i) fx.shapes.push_back(instantiate(base, recipe, 0.0, rng, "sphere" + std::to_string(i)));
        fx.train_pairs = {{0, 1}};
        return fx;
    }

    if (kind == "bent-plane") {
        const TriangleMesh plane = grid_plane(21, 11, 2.0, 1.0);
        const TriangleMesh bent = bend_plane(plane, 2.0 / (0.75 * M_PI));
        std::vector<int> identity(static_cast<size_t>(plane.n_vertices()));
        std::iota(identity.begin(), identity.end(), 0);
        fx.shapes.push_back({plane, identity, {}, std::nullopt, {}});
        fx.shapes.push_back({bent, identity, {}, std::nullopt, {}});
        fx.shapes[0].mesh.name = "plane";
        fx.shapes[1].mesh.name = "bent";
        fx.eval_pairs = {{0, 1}};
        return fx;
    }

    if (kind == "isometric-pair") {
        // Four rigidly moved, reindexed copies of one bumpy sphere; the eval
        // pair is held out of training.
        const TriangleMesh base = icosphere(3);
        const Vertices bumpy = displace(base.vertices, random_bumps(rng, 10, -0.2, 0.35), 0.4);
        const Mat semantic = fourier_features(base.vertices, rng, 1.5);
        for (int i = 0; i < 4; ++i) {
            ShapeRecipe recipe{bumpy, semantic, 1e-4, 4};
            fx.shapes.push_back(instantiate(base, recipe, 0.05, rng, "iso" + std::to_string(i)));
        }
        plant_parts(fx.shapes, base, rng, 0.1);
        fx.eval_pairs = {{0, 1}};
        fx.train_pairs = all_pairs_except(4, {0, 1});
        return fx;
    }

    if (kind == "blob-pair") {
        // Two "categories" of blobs (different anisotropic stretches) with
        // shape-specific bumps, so no pair is isometric. Only part of the
        // semantic channels agree across shapes; the rest are smooth
        // shape-specific nuisance fields.
        const Index signal = 192;
        const double noise = 0.3;
        const TriangleMesh base = icosphere(3);
        const std::vector<Bump> shared = random_bumps(rng, 6, -0.15, 0.3);
        const Mat common = fourier_features(base.vertices, rng, 1.0);
        const Eigen::DiagonalMatrix<double, 3> stretch[2] = {
            Eigen::DiagonalMatrix<double, 3>(1.5, 1.0, 0.8),
            Eigen::DiagonalMatrix<double, 3>(0.85, 1.3, 1.15),
        };
        for (int i = 0; i < 4; ++i) {
            std::vector<Bump> bumps = shared;
            for (const auto& b : random_bumps(rng, 4, -0.15, 0.2)) bumps.push_back(b);
            Vertices positions = displace(base.vertices, bumps, 0.4) * stretch[i % 2];
            Mat semantic = fourier_features(base.vertices, rng, 1.0);
            semantic.leftCols(signal) = common.leftCols(signal);
            ShapeRecipe recipe{positions, semantic, 0.0, 4};
            fx.shapes.push_back(instantiate(base, recipe, noise, rng, "blob" + std::to_string(i)));
        }
        plant_parts(fx.shapes, base, rng, 0.2);
        fx.eval_pairs = {{0, 1}};
        fx.train_pairs = all_pairs_except(4, {0, 1});
        return fx;
    }

    throw Error(ErrorCode::SpecError, "unknown fixture kind '" + kind + "'");
}

fs::path write_fixture(const FixtureSet& fixture, const fs::path& dir)
{
    fs::create_directories(dir);
    Manifest m;
    m.path = dir / "manifest.json";
    for (const auto& s : fixture.shapes) {
        ShapeEntry e;
        e.name = s.mesh.name;
        e.mesh = dir / (s.mesh.name + ".off");
        save_off(s.mesh, e.mesh);
        if (s.semantic.size() > 0) {
            e.features = dir / (s.mesh.name + ".sem.f32");
            write_f32mat(e.features, s.semantic);
        }
        if (s.labels) {
            e.labels = dir / (s.mesh.name + ".parts.json");
            save_part_labels(e.labels, *s.labels);
            e.embeddings = dir / (s.mesh.name + ".names.f32");
            write_f32mat(e.embeddings, s.embeddings);
        }
        m.shapes.push_back(e);
    }
    m.train_pairs = fixture.train_pairs;
    for (const auto& [a, b] : fixture.eval_pairs) {
        EvalPair e;
        e.source = a;
        e.target = b;
        e.dense = fixture_truth(fixture.shapes[static_cast<size_t>(a)], fixture.shapes[static_cast<size_t>(b)]);
        e.dense_path = dir / ("truth_" + std::to_string(a) + "_" + std::to_string(b) + ".txt");
        save_dense_map(e.dense_path, *e.dense);
        m.eval_pairs.push_back(std::move(e));
    }
    save_manifest(m.path, m);
    return m.path;
}

} // namespace unimatch
