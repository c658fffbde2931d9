// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when any
// criterion fails. Expensive criteria drive the command-line tool.

#include "cases.hpp"
#include "cli_runner.hpp"
#include "grad_suite.hpp"
#include "support.hpp"

#include "unimatch/cosegment.hpp"
#include "unimatch/descriptors.hpp"
#include "unimatch/fixtures.hpp"
#include "unimatch/fmap.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

using namespace unimatch;
using namespace cli_runner;
namespace fs = std::filesystem;

namespace {

struct Outcome
{
    bool pass = false;
    std::string detail;
};

class Report
{
public:
    void run(const std::string& name, const std::function<Outcome()>& body)
    {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = body();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), seconds);
        std::fflush(stdout);
        m_failed += o.pass ? 0 : 1;
    }

    int failed() const { return m_failed; }

private:
    int m_failed = 0;
};

double elapsed_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* format, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof(buf), format, args...);
    return buf;
}

Outcome eigensolver()
{
    const auto start = std::chrono::steady_clock::now();
    double worst_value = 0.0;
    double worst_gram = 0.0;
    Index largest = 0;
    for (int seed = 0; seed < 20; ++seed) {
        const TriangleMesh m = oracle::seeded_mesh(seed);
        largest = std::max(largest, m.n_vertices());
        const Index k = std::min<Index>(30, m.n_vertices() - 1);
        const auto ref = oracle::dense_spectrum(oracle::dense_laplacian(m), oracle::dense_mass(m), k);
        // Default path (dense below the cutoff) and the iterative solver forced on the same mesh.
        SpectralOptions iterative;
        iterative.dense_max_n = 0;
        for (const SpectralBasis& b : {spectral_basis(m, k), spectral_basis(m, k, iterative)}) {
            for (Index i = 0; i < k; ++i) {
                worst_value =
                    std::max(worst_value, std::abs(b.eigvals[i] - ref.values[i]) / std::max(1.0, std::abs(ref.values[i])));
            }
            const Mat gram = b.eigvecs.transpose() * b.mass.diag.asDiagonal() * b.eigvecs;
            worst_gram = std::max(worst_gram, (gram - Mat::Identity(k, k)).cwiseAbs().maxCoeff());
        }
    }
    const double seconds = elapsed_since(start);
    return {largest <= 300 && worst_value <= 1e-8 && worst_gram <= 1e-6 && seconds < 60.0,
        fmt("20 meshes (n <= %ld), dense and iterative paths, eigenvalue rel err %.2e, orthonormality err %.2e", static_cast<long>(largest), worst_value,
            worst_gram)};
}

Outcome wks_oracle()
{
    double worst_oracle = 0.0;
    double worst_rigid = 0.0;
    for (int seed = 0; seed < 6; ++seed) {
        const TriangleMesh m = oracle::seeded_mesh(seed);
        const SpectralBasis b = spectral_basis(m, 30);
        const auto ref = oracle::dense_spectrum(oracle::dense_laplacian(m), oracle::dense_mass(m), 30);
        const Mat expected = oracle::wks(ref.values, ref.vectors, oracle::dense_mass(m), 64);
        const Mat got = wks(b, 64).values;
        worst_oracle = std::max(worst_oracle, (got - expected).cwiseAbs().maxCoeff() / expected.cwiseAbs().maxCoeff());

        const TriangleMesh moved =
            oracle::rigid_copy(m, oracle::rotation(0.3 * seed + 0.1, -0.8, 1.7), Eigen::RowVector3d(seed, -2.0, 0.5));
        worst_rigid = std::max(worst_rigid, (wks(spectral_basis(moved, 30), 64).values - got).cwiseAbs().maxCoeff());
    }
    return {worst_oracle <= 1e-8 && worst_rigid <= 1e-6,
        fmt("6 meshes, oracle rel err %.2e, rigid-motion err %.2e", worst_oracle, worst_rigid)};
}

Outcome fmap_round_trip()
{
    int exact = 0;
    const int trials = 10;
    for (int t = 0; t < trials; ++t) {
        TriangleMesh x = icosphere(0);
        if (t % 2 == 1) {
            // Odd trials jitter the vertices to break the symmetry.
            std::mt19937_64 jitter(static_cast<std::uint64_t>(t));
            x.vertices += oracle::random_matrix(jitter, x.n_vertices(), 3, 0.05);
        }
        std::vector<int> perm(static_cast<size_t>(x.n_vertices()));
        std::iota(perm.begin(), perm.end(), 0);
        std::mt19937_64 rng(static_cast<std::uint64_t>(100 + t));
        std::shuffle(perm.begin(), perm.end(), rng);
        const TriangleMesh y = permute_vertices(x, perm);
        PointMap truth;
        truth.n_source = x.n_vertices();
        truth.idx.assign(perm.size(), -1);
        for (size_t v = 0; v < perm.size(); ++v) truth.idx[static_cast<size_t>(perm[v])] = static_cast<int>(v);
        const SpectralBasis bx = spectral_basis(x, 11);
        const SpectralBasis by = spectral_basis(y, 11);
        exact += fmap_to_p2p(p2p_to_fmap(truth, bx, by), bx, by).idx == truth.idx;
    }

    double worst_planted = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(seed);
        const Index kx = 12, ky = 9, c = 40;
        const Mat Ax = oracle::random_matrix(rng, kx, c);
        const Mat R = oracle::random_matrix(rng, ky, kx);
        const Vec lx = Vec::LinSpaced(kx, 0.0, 3.0);
        const Vec ly = Vec::LinSpaced(ky, 0.0, 2.0);
        worst_planted = std::max(worst_planted, (solve_fmap(Ax, R * Ax, lx, ly, 0.0).C - R).cwiseAbs().maxCoeff());
    }
    return {exact == trials && worst_planted <= 1e-8,
        fmt("icosahedron k=11 round trips exact %d/%d, planted map err %.2e", exact, trials, worst_planted)};
}

Outcome rnc_correctness()
{
    double worst_singleton = 0.0;
    Index largest = 0;
    for (std::uint64_t seed = 100; seed < 150; ++seed) {
        const cases::SingletonInstance s = cases::singleton_instance(seed);
        largest = std::max(largest, s.fy.rows());
        const double got = cases::rnc(s.fx, s.fy, s.ly, s.anchors, s.D, s.tau);
        const double expected = oracle::rnc_per_sample(s.fx, s.fy, s.anchor_rows, s.D, s.tau);
        worst_singleton = std::max(worst_singleton, std::abs(got - expected));
    }
    std::mt19937_64 rng(7);
    double lowest = std::numeric_limits<double>::infinity();
    double worst_scale = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const cases::GroupInstance g = cases::group_instance(rng, trial);
        const double base = cases::rnc(g.fx, g.fy, g.ly, g.anchors, g.D, g.tau);
        lowest = std::min(lowest, base);
        const double scaled = cases::rnc(3.7 * g.fx, 0.01 * g.fy, g.ly, g.anchors, g.D, g.tau);
        worst_scale = std::max(worst_scale, std::abs(scaled - base));
    }
    return {largest <= 40 && worst_singleton <= 1e-10 && lowest >= 0.0 && worst_scale <= 1e-10,
        fmt("singleton err %.2e over 50, min loss %.3g over 200, scale err %.2e", worst_singleton, lowest, worst_scale)};
}

Outcome gradient_suite()
{
    const auto start = std::chrono::steady_clock::now();
    double worst_primitive = 0.0;
    std::string worst_name;
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        for (const auto& c : grad_suite::primitive_suite(seed)) {
            if (c.error > worst_primitive) {
                worst_primitive = c.error;
                worst_name = c.name;
            }
        }
    }
    const GradCheckResult rnc = grad_suite::pipeline_grad_check(5, ContrastiveKind::RnC);
    const GradCheckResult supcon = grad_suite::pipeline_grad_check(6, ContrastiveKind::SupCon);
    const double pipeline = std::max(rnc.max_relative_error, supcon.max_relative_error);
    const double seconds = elapsed_since(start);
    return {worst_primitive <= 1e-6 && pipeline <= 1e-4 && seconds < 120.0,
        fmt("primitives %.2e (worst %s), pipeline %.2e over %ld parameters", worst_primitive, worst_name.c_str(), pipeline,
            static_cast<long>(rnc.checked + supcon.checked))};
}

double eval_mean(const fs::path& manifest, const fs::path& checkpoint, const std::string& extra, const fs::path& out)
{
    const Run r = cli("eval " + q(manifest) + " --checkpoint " + q(checkpoint) + " " + extra + " --log-level warn --out-dir " + q(out));
    if (r.code != 0) throw std::runtime_error("eval exited with " + std::to_string(r.code) + ": " + r.err);
    return r.summary()["mean_geodesic_error"].get<double>();
}

void train_run(const fs::path& manifest, const std::string& extra, const fs::path& out)
{
    const Run r = cli("train " + q(manifest) + " " + extra + " --log-level warn --out-dir " + q(out));
    if (r.code != 0) throw std::runtime_error("train exited with " + std::to_string(r.code) + ": " + r.err);
}

fs::path make_fixture_dir(const std::string& kind, int seed, const std::string& tag)
{
    const fs::path dir = oracle::temp_dir(tag);
    const Run r = cli("fixture --kind " + kind + " --seed " + std::to_string(seed) + " --out-dir " + q(dir));
    if (r.code != 0) throw std::runtime_error("fixture exited with " + std::to_string(r.code) + ": " + r.err);
    return dir / "manifest.json";
}

Outcome end_to_end()
{
    const auto start = std::chrono::steady_clock::now();
    const fs::path manifest = make_fixture_dir("isometric-pair", 0, "acc_e2e");
    const fs::path out = manifest.parent_path() / "run";
    train_run(manifest, "", out);
    const double refined = eval_mean(manifest, out / "model.ckpt", "--refine", out / "refined");
    const double plain = eval_mean(manifest, out / "model.ckpt", "--no-refine", out / "plain");
    const double seconds = elapsed_since(start);
    return {refined <= 0.05 && refined <= plain && seconds < 300.0,
        fmt("error %.4f with ZoomOut, %.4f without", refined, plain)};
}

double median3(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    return v[1];
}

Outcome ablation()
{
    std::vector<double> full, no_rnc, geometric;
    std::ostringstream per_seed;
    for (int seed = 1; seed <= 3; ++seed) {
        const fs::path manifest = make_fixture_dir("blob-pair", seed, "acc_ablation");
        const fs::path dir = manifest.parent_path();
        std::ofstream(dir / "no_rnc.toml") << "lambda_rnc = 0.0\n";
        std::ofstream(dir / "geometric.toml") << "use_semantic = false\n";
        const std::string s = " --seed " + std::to_string(seed);
        train_run(manifest, s, dir / "full");
        train_run(manifest, s + " --config " + q(dir / "no_rnc.toml"), dir / "no_rnc");
        train_run(manifest, s + " --config " + q(dir / "geometric.toml"), dir / "geometric");
        full.push_back(eval_mean(manifest, dir / "full" / "model.ckpt", s, dir / "full"));
        no_rnc.push_back(eval_mean(manifest, dir / "no_rnc" / "model.ckpt", s + " --config " + q(dir / "no_rnc.toml"), dir / "no_rnc"));
        geometric.push_back(
            eval_mean(manifest, dir / "geometric" / "model.ckpt", s + " --config " + q(dir / "geometric.toml"), dir / "geometric"));
        per_seed << fmt(" seed %d: %.4f/%.4f/%.4f;", seed, full.back(), no_rnc.back(), geometric.back());
    }
    const double m_full = median3(full), m_no_rnc = median3(no_rnc), m_geo = median3(geometric);
    return {m_full <= m_no_rnc && m_full <= m_geo,
        fmt("median error full %.4f, no-rnc %.4f, geometric-only %.4f;", m_full, m_no_rnc, m_geo) + per_seed.str()};
}

Outcome cosegmentation()
{
    double worst_agreement = 1.0;
    double worst_ami = 1.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const cases::Planted a = cases::planted(2 * seed, 0.08);
        const cases::Planted b = cases::planted(2 * seed + 1, 0.08);
        const CosegResult r = cosegment(a.features, a.mesh, b.features, 3);
        worst_agreement = std::min({worst_agreement, aligned_agreement(r.anchor, a.truth), aligned_agreement(r.target, b.truth)});
        const CosegResult self = cosegment(a.features, a.mesh, a.features, 3);
        worst_ami = std::min(worst_ami, adjusted_mutual_information(self.anchor, self.target));
    }
    return {worst_agreement >= 0.95 && std::abs(worst_ami - 1.0) <= 1e-12,
        fmt("5 planted pairs, min agreement %.4f, min self-pair AMI %.12f", worst_agreement, worst_ami)};
}

Outcome determinism()
{
    const fs::path manifest = make_fixture_dir("blob-pair", 1, "acc_determinism");
    const fs::path dir = manifest.parent_path();
    for (const char* run : {"a", "b"}) {
        const fs::path out = dir / run;
        train_run(manifest, "--seed 1", out);
        const Run m = cli("match " + q(manifest) + " --checkpoint " + q(out / "model.ckpt") + " --seed 1 --log-level warn --out-dir " + q(out));
        if (m.code != 0) throw std::runtime_error("match exited with " + std::to_string(m.code));
        const Run e = cli("eval " + q(manifest) + " --pred-dir " + q(out) + " --seed 1 --log-level warn --out-dir " + q(out));
        if (e.code != 0) throw std::runtime_error("eval exited with " + std::to_string(e.code));
    }
    const auto a = tree(dir / "a");
    const auto b = tree(dir / "b");
    size_t differing = 0;
    for (const auto& [name, bytes] : a) differing += !b.count(name) || b.at(name) != bytes;
    const bool expected_files = a.count("model.ckpt") && a.count("train_log.jsonl") && a.count("map_0_1.json") && a.count("eval.json");
    return {a.size() == b.size() && differing == 0 && expected_files,
        fmt("%zu output files compared, %zu differ", a.size(), differing)};
}

} // namespace

int main()
{
    Report report;
    report.run("eigensolver oracle", eigensolver);
    report.run("WKS oracle", wks_oracle);
    report.run("functional-map round trip", fmap_round_trip);
    report.run("RnC correctness", rnc_correctness);
    report.run("gradient suite", gradient_suite);
    report.run("end-to-end isometric fixture", end_to_end);
    report.run("ablation direction", ablation);
    report.run("co-segmentation", cosegmentation);
    report.run("determinism", determinism);
    std::printf("%d criteria failed\n", report.failed());
    return report.failed() == 0 ? 0 : 1;
}
