#include "doctest.h"
#include "cases.hpp"
#include "grad_suite.hpp"
#include "support.hpp"

#include "unimatch/error.hpp"
#include "unimatch/fixtures.hpp"
#include "unimatch/fmap.hpp"
#include "unimatch/losses.hpp"

#include <nlohmann/json.hpp>

#include <numeric>

using namespace unimatch;
using namespace cases;

namespace {

double value_of(const std::function<ad::Var(ad::Tape&)>& f)
{
    ad::Tape t;
    return f(t).scalar();
}

} // namespace

TEST_CASE("data loss")
{
    std::mt19937_64 rng(1);
    Mat A = oracle::random_matrix(rng, 5, 9);
    CHECK(value_of([&](ad::Tape& t) { return data_loss(t.constant(Mat::Identity(5, 5)), t.constant(A), t.constant(A)); }) == 0.0);

    Mat Ay = oracle::random_matrix(rng, 4, 9);
    CHECK(value_of([&](ad::Tape& t) { return data_loss(t.constant(Mat::Zero(4, 5)), t.constant(A), t.constant(Ay)); })
        == doctest::Approx(Ay.squaredNorm() / (4.0 * 9.0)).epsilon(1e-14));

    Mat C = oracle::random_matrix(rng, 4, 5);
    double direct = 0;
    for (Index p = 0; p < 4; ++p) {
        for (Index c = 0; c < 9; ++c) {
            double r = -Ay(p, c);
            for (Index q = 0; q < 5; ++q) r += C(p, q) * A(q, c);
            direct += r * r;
        }
    }
    direct /= 36.0;
    CHECK(std::abs(value_of([&](ad::Tape& t) { return data_loss(t.constant(C), t.constant(A), t.constant(Ay)); }) - direct) <= 1e-12);
    CHECK_THROWS_AS(value_of([&](ad::Tape& t) { return data_loss(t.constant(C), t.constant(Ay), t.constant(Ay)); }), Error);
}

TEST_CASE("regularization loss")
{
    auto reg = [](const Mat& a, const Mat& b) {
        return value_of([&](ad::Tape& t) { return reg_loss(t.constant(a), t.constant(b)); });
    };
    CHECK(reg(Mat::Identity(4, 4), Mat::Identity(4, 4)) == 0.0);
    std::mt19937_64 rng(2);
    Eigen::HouseholderQR<Mat> qr(oracle::random_matrix(rng, 6, 6));
    Mat Q = qr.householderQ();
    CHECK(reg(Q, Q.transpose()) <= 1e-12);

    // Residuals: I, I, 3I and 0 for Cxy = 2I, Cyx = I.
    const Mat I = Mat::Identity(4, 4);
    const double oracle_value = ((2 * I * I - I).squaredNorm() + (I * 2 * I - I).squaredNorm()
                                    + ((2 * I).transpose() * 2 * I - I).squaredNorm() + (I.transpose() * I - I).squaredNorm())
        / (4.0 * 16.0);
    CHECK(oracle_value == doctest::Approx(44.0 / 64.0));
    CHECK(std::abs(reg(2 * I, I) - oracle_value) <= 1e-12);
}

TEST_CASE("coupling loss")
{
    TriangleMesh m = oracle::seeded_mesh(1);
    SpectralBasis b = spectral_basis(m, 10);
    std::mt19937_64 rng(3);
    Mat fx = oracle::random_matrix(rng, m.n_vertices(), 6);
    Mat fy = oracle::random_matrix(rng, m.n_vertices(), 6);
    SoftCorrespondence pi = soft_correspondence(fx, fy, 0.2);
    Mat C = p2p_to_fmap(pi, b, b).C;
    auto couple = [&](const Mat& c, const Mat& p) {
        return value_of([&](ad::Tape& t) { return couple_loss(t.constant(c), t.constant(p), b, b); });
    };
    CHECK(couple(C, pi.dense) <= 1e-12);
    CHECK(couple(Mat::Identity(10, 10), Mat::Identity(m.n_vertices(), m.n_vertices())) <= 1e-12);

    Mat R = oracle::random_matrix(rng, 10, 10);
    const Mat target = b.eigvecs.transpose() * b.mass.diag.asDiagonal() * pi.dense * b.eigvecs;
    CHECK(std::abs(couple(R, pi.dense) - (R - target).squaredNorm() / 100.0) <= 1e-12);
}

TEST_CASE("rank contrastive loss hand value")
{
    Mat fx(1, 2);
    fx << 1, 0;
    Mat fy(2, 2);
    fy << 0.9, std::sqrt(1 - 0.81), 0.1, std::sqrt(1 - 0.01);
    Mat D(1, 2);
    D << 0.1, 0.9;
    const double expected = 0.5 * (-std::log(std::exp(0.9) / (std::exp(0.9) + std::exp(0.1))) - std::log(1.0));
    const double got = rnc(fx, fy, raw_labels({0, 1}, 2), anchors_from({0}, {0}), D, 1.0);
    CHECK(std::abs(got - expected) <= 1e-12);
}

TEST_CASE("single target group gives zero loss")
{
    std::mt19937_64 rng(4);
    Mat fx = oracle::random_matrix(rng, 5, 3);
    Mat fy = oracle::random_matrix(rng, 8, 3);
    const double got = rnc(fx, fy, raw_labels(std::vector<int>(8, 0), 1), anchors_from({0, 2, 4}, {0, 0, 0}), Mat::Zero(1, 1), 0.1);
    CHECK(std::abs(got) <= 1e-12);
}

TEST_CASE("singleton groups reduce to the per-sample loss")
{
    for (std::uint64_t seed = 100; seed < 150; ++seed) {
        const SingletonInstance s = singleton_instance(seed);
        const double got = rnc(s.fx, s.fy, s.ly, s.anchors, s.D, s.tau);
        const double expected = oracle::rnc_per_sample(s.fx, s.fy, s.anchor_rows, s.D, s.tau);
        CHECK(std::abs(got - expected) <= 1e-10);
    }
}

TEST_CASE("group loss matches the enumeration oracle, including ties")
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const int nx = 10, ny = 14, c = 5;
        const int px = 3 + trial % 3, py = 2 + trial % 4;
        Mat fx = oracle::random_matrix(rng, nx, c);
        Mat fy = oracle::random_matrix(rng, ny, c);
        std::vector<int> ly(ny);
        for (int v = 0; v < ny; ++v) ly[static_cast<size_t>(v)] = v % py;
        Mat D(px, py);
        std::uniform_int_distribution<int> level(0, 3);
        for (Index i = 0; i < D.size(); ++i) D(i) = 0.3 * level(rng);
        std::vector<int> av, ap;
        for (int v = 0; v < nx; ++v) {
            av.push_back(v);
            ap.push_back(v % px);
        }
        const double got = rnc(fx, fy, raw_labels(ly, py), anchors_from(av, ap), D, 0.07);
        const double expected = oracle::rnc_groups(fx, fy, ly, py, av, ap, D, 0.07);
        CHECK(std::abs(got - expected) <= 1e-10 * std::max(1.0, expected));
    }
}

TEST_CASE("adding a vertex to the farthest group follows the set accounting")
{
    std::mt19937_64 rng(6);
    Mat fx = oracle::random_matrix(rng, 4, 3);
    Mat fy = oracle::random_matrix(rng, 9, 3);
    std::vector<int> ly = {0, 0, 0, 1, 1, 1, 2, 2, 2};
    Mat D(1, 3);
    D << 0.1, 0.4, 0.9;
    std::vector<int> av = {0, 1, 2, 3}, ap = {0, 0, 0, 0};
    Mat fy2(10, 3);
    fy2 << fy, oracle::random_matrix(rng, 1, 3);
    std::vector<int> ly2 = ly;
    ly2.push_back(2);
    const double got = rnc(fx, fy2, raw_labels(ly2, 3), anchors_from(av, ap), D, 0.1);
    CHECK(std::abs(got - oracle::rnc_groups(fx, fy2, ly2, 3, av, ap, D, 0.1)) <= 1e-12);
}

TEST_CASE("rank contrastive loss is non-negative and scale invariant")
{
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const GroupInstance g = group_instance(rng, trial);
        const double base = rnc(g.fx, g.fy, g.ly, g.anchors, g.D, g.tau);
        CHECK(base >= 0.0);
        if (trial < 50) CHECK(std::abs(rnc(3.7 * g.fx, 0.01 * g.fy, g.ly, g.anchors, g.D, g.tau) - base) <= 1e-10);
    }
}

TEST_CASE("contrastive loss errors")
{
    Mat f = Mat::Ones(3, 2);
    CHECK_THROWS_AS(rnc(f, f, raw_labels({0, 1, 1}, 2), anchors_from({0}, {0}), Mat::Zero(1, 2), 0.0), Error);
    try {
        rnc(f, f, raw_labels({0, 0, 0}, 2), anchors_from({0}, {0}), Mat::Zero(1, 2), 0.1);
        FAIL("expected EmptyGroup");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyGroup);
    }
}

TEST_CASE("supervised-contrastive ablation")
{
    Mat fx(1, 2);
    fx << 1, 0;
    Mat fy(2, 2);
    fy << 0.9, std::sqrt(1 - 0.81), 0.1, std::sqrt(1 - 0.01);
    Mat D(1, 2);
    D << 0.1, 0.9;
    const double hand = -std::log(std::exp(0.9) / (std::exp(0.9) + std::exp(0.1)));
    CHECK(std::abs(supcon(fx, fy, raw_labels({0, 1}, 2), anchors_from({0}, {0}), D, 1.0) - hand) <= 1e-12);

    // Equidistant parts: part 0 is the positive.
    std::mt19937_64 rng(8);
    Mat gx = oracle::random_matrix(rng, 2, 3);
    Mat gy = oracle::random_matrix(rng, 6, 3);
    std::vector<int> ly = {2, 0, 1, 0, 2, 1};
    double num = 0, den = 0;
    for (Index l = 0; l < 6; ++l) {
        const double e = std::exp(oracle::cosine(gx.row(1), gy.row(l)) / 0.5);
        den += e;
        if (ly[static_cast<size_t>(l)] == 0) num += e;
    }
    CHECK(std::abs(supcon(gx, gy, raw_labels(ly, 3), anchors_from({1}, {0}), Mat::Constant(1, 3, 0.4), 0.5) + std::log(num / den)) <= 1e-12);
    CHECK(rank_structure(Mat::Constant(1, 3, 0.4)).nearest(0) == 0);

    // Positives covering the whole pool.
    CHECK(std::abs(supcon(gx, gy, raw_labels(std::vector<int>(6, 0), 1), anchors_from({0, 1}, {0, 0}), Mat::Zero(1, 1), 0.1)) <= 1e-12);
}

TEST_CASE("loss report bookkeeping")
{
    LossWeights w;
    LossReport r = total_loss(1, 2, 3, 4, w);
    CHECK(r.total == 10.0);
    w.lambda_rnc = 0.0;
    CHECK(total_loss(1, 2, 3, 4, w).total == 6.0);
    w.lambda_reg = 0.3;
    w.lambda_couple = 1.7;
    w.lambda_rnc = 0.25;
    LossReport s = total_loss(0.1, 0.2, 0.3, 0.4, w);
    CHECK(std::abs(s.total - s.weighted_sum()) <= 1e-10);
    CHECK(std::abs(s.total - (0.1 + 0.3 * 0.2 + 1.7 * 0.3 + 0.25 * 0.4)) <= 1e-10);
    const auto j = s.to_json();
    CHECK(j.at("components").at("couple").get<double>() == 0.3);
    CHECK(j.at("weights").at("lambda_couple").get<double>() == 1.7);
    try {
        total_loss(1, NAN, 0, 0, w);
        FAIL("expected NonFinite");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonFinite);
    }
}

TEST_CASE("stratified anchors")
{
    PartLabels labels = make_part_labels({0, 0, 0, 0, 0, 0, 1, 1, 2, 2, 2, 2}, 3, {"a", "b", "c"});
    std::mt19937_64 rng(9);
    AnchorSet a = stratified_anchors(labels, 7, rng);
    CHECK(a.size() == 7);
    std::vector<int> per(3, 0);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(labels.label[static_cast<size_t>(a.vertex[i])] == a.part[i]);
        ++per[static_cast<size_t>(a.part[i])];
    }
    CHECK(per == std::vector<int>{3, 2, 2});

    std::mt19937_64 r1(4), r2(4);
    CHECK(stratified_anchors(labels, 5, r1).vertex == stratified_anchors(labels, 5, r2).vertex);
    std::mt19937_64 r3(4);
    CHECK(stratified_anchors(labels, 100, r3).size() == 12);
    CHECK(all_anchors(labels).size() == 12);
}

TEST_CASE("loss gradients against central differences")
{
    std::mt19937_64 rng(10);
    const TriangleMesh m = oracle::seeded_mesh(2);
    const SpectralBasis b = spectral_basis(m, 6);
    const Index n = m.n_vertices();
    using V = std::vector<ad::Var>;
    CHECK(grad_suite::check_primitive([](ad::Tape&, const V& v) { return data_loss(v[0], v[1], v[2]); },
              {oracle::random_matrix(rng, 4, 5), oracle::random_matrix(rng, 5, 7), oracle::random_matrix(rng, 4, 7)}, 1, 1e-5)
        <= 1e-4);
    CHECK(grad_suite::check_primitive([](ad::Tape&, const V& v) { return reg_loss(v[0], v[1]); },
              {oracle::random_matrix(rng, 5, 5), oracle::random_matrix(rng, 5, 5)}, 2, 1e-5)
        <= 1e-4);
    Mat pi = soft_correspondence(oracle::random_matrix(rng, n, 3), oracle::random_matrix(rng, n, 3), 0.3).dense;
    CHECK(grad_suite::check_primitive([&](ad::Tape&, const V& v) { return couple_loss(v[0], v[1], b, b); },
              {oracle::random_matrix(rng, 6, 6), pi}, 3, 1e-5)
        <= 1e-4);

    const PartLabels ly = raw_labels({0, 1, 2, 0, 1, 2, 0, 1}, 3);
    const AnchorSet a = anchors_from({0, 1, 2, 3, 4}, {0, 1, 1, 0, 1});
    const RankStructure ranks = rank_structure((Mat(2, 3) << 0.1, 0.5, 0.5, 0.7, 0.2, 0.4).finished());
    CHECK(grad_suite::check_primitive([&](ad::Tape&, const V& v) { return rnc_group_loss(v[0], v[1], ly, a, ranks, 0.07); },
              {oracle::random_matrix(rng, 5, 4), oracle::random_matrix(rng, 8, 4)}, 4, 1e-5)
        <= 1e-4);
    CHECK(grad_suite::check_primitive([&](ad::Tape&, const V& v) { return supcon_group_loss(v[0], v[1], ly, a, ranks, 0.07); },
              {oracle::random_matrix(rng, 5, 4), oracle::random_matrix(rng, 8, 4)}, 5, 1e-5)
        <= 1e-4);
}

TEST_CASE("pair objective report and missing labels")
{
    grad_suite::TinyPair p = grad_suite::tiny_pair(3);
    PairContext ctx;
    ctx.basis_x = &p.bx;
    ctx.basis_y = &p.by;
    PairObjectiveOptions opt;
    ad::Tape t;
    PairObjective unlabeled = pair_objective(t.constant(p.fx.leftCols(6)), t.constant(p.fy.leftCols(6)), ctx, opt);
    CHECK(unlabeled.rnc.scalar() == 0.0);

    ctx.labels_x = &p.lx;
    ctx.labels_y = &p.ly;
    ctx.ranks_xy = &p.rxy;
    ctx.ranks_yx = &p.ryx;
    ctx.anchors_x = all_anchors(p.lx);
    ctx.anchors_y = all_anchors(p.ly);
    opt.weights.lambda_reg = 0.5;
    PairObjective o = pair_objective(t.constant(p.fx), t.constant(p.fy), ctx, opt);
    LossReport r = o.report(opt.weights);
    CHECK(r.rnc > 0.0);
    CHECK(std::abs(r.total - r.weighted_sum()) <= 1e-10);
    CHECK(std::abs(o.total.scalar() - r.total) <= 1e-12);
    CHECK(o.Cxy.rows() == 8);
}
