#include "unimatch/error.hpp"
#include "unimatch/losses.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace unimatch {

using nlohmann::json;

ad::Var data_loss(const ad::Var& C, const ad::Var& Ax, const ad::Var& Ay)
{
    if (C.cols() != Ax.rows() || C.rows() != Ay.rows() || Ax.cols() != Ay.cols()) {
        throw Error(ErrorCode::ShapeMismatch, "data loss: map and coefficient sizes disagree");
    }
    const double norm = static_cast<double>(Ay.rows() * Ay.cols());
    return ad::scale(ad::sum_squares(ad::matmul(C, Ax) - Ay), 1.0 / norm);
}

ad::Var reg_loss(const ad::Var& Cxy, const ad::Var& Cyx)
{
    const Index ky = Cxy.rows();
    const Index kx = Cxy.cols();
    if (Cyx.rows() != kx || Cyx.cols() != ky) {
        throw Error(ErrorCode::ShapeMismatch, "reg loss: maps are not mutually transposed in shape");
    }
    ad::Tape& tape = *Cxy.tape();
    const ad::Var ix = tape.constant(Mat::Identity(kx, kx));
    const ad::Var iy = tape.constant(Mat::Identity(ky, ky));
    ad::Var r = ad::sum_squares(ad::matmul(Cxy, Cyx) - iy);
    r = r + ad::sum_squares(ad::matmul(Cyx, Cxy) - ix);
    r = r + ad::sum_squares(ad::matmul(ad::transpose(Cxy), Cxy) - ix);
    r = r + ad::sum_squares(ad::matmul(ad::transpose(Cyx), Cyx) - iy);
    return ad::scale(r, 1.0 / (4.0 * static_cast<double>(kx * ky)));
}

ad::Var couple_loss(const ad::Var& C, const ad::Var& pi, const SpectralBasis& basis_x, const SpectralBasis& basis_y)
{
    const Index ky = C.rows();
    const Index kx = C.cols();
    if (kx > basis_x.k() || ky > basis_y.k() || pi.rows() != basis_y.n() || pi.cols() != basis_x.n()) {
        throw Error(ErrorCode::ShapeMismatch, "couple loss: map, correspondence and bases disagree");
    }
    ad::Tape& tape = *C.tape();
    const ad::Var project_y =
        tape.constant(basis_y.eigvecs.leftCols(ky).transpose() * basis_y.mass.diag.asDiagonal());
    const ad::Var phi_x = tape.constant(basis_x.eigvecs.leftCols(kx));
    const ad::Var induced = ad::matmul(ad::matmul(project_y, pi), phi_x);
    return ad::scale(ad::sum_squares(C - induced), 1.0 / static_cast<double>(kx * ky));
}

AnchorSet all_anchors(const PartLabels& labels)
{
    AnchorSet anchors;
    for (Index v = 0; v < labels.n_vertices(); ++v) {
        anchors.vertex.push_back(static_cast<int>(v));
        anchors.part.push_back(labels.label[static_cast<size_t>(v)]);
    }
    return anchors;
}

AnchorSet stratified_anchors(const PartLabels& labels, Index count, std::mt19937_64& rng)
{
    auto members = labels.members();
    for (auto& m : members) std::shuffle(m.begin(), m.end(), rng);

    AnchorSet anchors;
    const Index budget = std::min<Index>(count, labels.n_vertices());
    std::vector<size_t> cursor(members.size(), 0);
    while (static_cast<Index>(anchors.size()) < budget) {
        for (size_t p = 0; p < members.size() && static_cast<Index>(anchors.size()) < budget; ++p) {
            if (cursor[p] < members[p].size()) {
                anchors.vertex.push_back(members[p][cursor[p]++]);
                anchors.part.push_back(static_cast<int>(p));
            }
        }
    }
    return anchors;
}

namespace {

ad::Var group_similarities(
    const ad::Var& fx,
    const ad::Var& fy,
    const PartLabels& labels_y,
    const AnchorSet& anchors,
    const RankStructure& ranks,
    double tau)
{
    if (!(tau > 0.0) || !std::isfinite(tau)) throw Error(ErrorCode::BadTemperature, "tau must be positive");
    if (anchors.size() == 0) throw Error(ErrorCode::SpecError, "contrastive loss needs at least one anchor");
    if (anchors.vertex.size() != anchors.part.size()) throw Error(ErrorCode::ShapeMismatch, "anchor arrays differ in length");
    if (fy.rows() != labels_y.n_vertices()) throw Error(ErrorCode::ShapeMismatch, "target labels do not cover target rows");
    if (ranks.n_target() != labels_y.n_parts) {
        throw Error(ErrorCode::ShapeMismatch, "rank structure columns differ from target part count");
    }
    for (int p : anchors.part) {
        if (p < 0 || p >= ranks.n_source()) throw Error(ErrorCode::IndexError, "anchor part id outside rank structure");
    }
    const ad::Var s = ad::scale(ad::cosine_similarity(ad::gather_rows(fx, anchors.vertex), fy), 1.0 / tau);
    return ad::segment_logsumexp(s, labels_y.label, labels_y.n_parts);
}

} // namespace

ad::Var rnc_group_loss(
    const ad::Var& fx,
    const ad::Var& fy,
    const PartLabels& labels_y,
    const AnchorSet& anchors,
    const RankStructure& ranks,
    double tau)
{
    const ad::Var groups = group_similarities(fx, fy, labels_y, anchors, ranks, tau);
    const int n_parts = labels_y.n_parts;
    const double weight = 1.0 / (static_cast<double>(anchors.size()) * n_parts);

    std::vector<ad::GroupTerm> terms;
    terms.reserve(anchors.size() * static_cast<size_t>(n_parts));
    for (size_t a = 0; a < anchors.size(); ++a) {
        for (int j = 0; j < n_parts; ++j) {
            terms.push_back({static_cast<int>(a), j, ranks.negatives(anchors.part[a], j), weight});
        }
    }
    return ad::group_nll(groups, std::move(terms));
}

ad::Var supcon_group_loss(
    const ad::Var& fx,
    const ad::Var& fy,
    const PartLabels& labels_y,
    const AnchorSet& anchors,
    const RankStructure& ranks,
    double tau)
{
    const ad::Var groups = group_similarities(fx, fy, labels_y, anchors, ranks, tau);
    std::vector<int> pool(static_cast<size_t>(labels_y.n_parts));
    for (int p = 0; p < labels_y.n_parts; ++p) pool[static_cast<size_t>(p)] = p;
    const double weight = 1.0 / static_cast<double>(anchors.size());

    std::vector<ad::GroupTerm> terms;
    terms.reserve(anchors.size());
    for (size_t a = 0; a < anchors.size(); ++a) {
        terms.push_back({static_cast<int>(a), static_cast<int>(ranks.nearest(anchors.part[a])), pool, weight});
    }
    return ad::group_nll(groups, std::move(terms));
}

json LossWeights::to_json() const
{
    return json{{"lambda_reg", lambda_reg}, {"lambda_couple", lambda_couple}, {"lambda_rnc", lambda_rnc}, {"tau", tau}};
}

double LossReport::weighted_sum() const
{
    return data + weights.lambda_reg * reg + weights.lambda_couple * couple + weights.lambda_rnc * rnc;
}

json LossReport::to_json() const
{
    return json{
        {"total", total},
        {"components", {{"data", data}, {"reg", reg}, {"couple", couple}, {"rnc", rnc}}},
        {"weights", weights.to_json()},
    };
}

LossReport total_loss(double data, double reg, double couple, double rnc, const LossWeights& weights)
{
    for (double v : {data, reg, couple, rnc}) {
        if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "loss component is not finite");
    }
    LossReport report{0.0, data, reg, couple, rnc, weights};
    report.total = report.weighted_sum();
    if (!std::isfinite(report.total)) throw Error(ErrorCode::NonFinite, "total loss is not finite");
    return report;
}

LossReport PairObjective::report(const LossWeights& weights) const
{
    return total_loss(data.scalar(), reg.scalar(), couple.scalar(), rnc.scalar(), weights);
}

PairObjective pair_objective(
    const ad::Var& fx, const ad::Var& fy, const PairContext& context, const PairObjectiveOptions& options)
{
    const SpectralBasis& bx = *context.basis_x;
    const SpectralBasis& by = *context.basis_y;
    ad::Tape& tape = *fx.tape();

    const ad::Var project_x = tape.constant(bx.eigvecs.transpose() * bx.mass.diag.asDiagonal());
    const ad::Var project_y = tape.constant(by.eigvecs.transpose() * by.mass.diag.asDiagonal());
    const ad::Var Ax = ad::matmul(project_x, fx);
    const ad::Var Ay = ad::matmul(project_y, fy);

    const double scale = std::max(bx.eigvals.maxCoeff(), by.eigvals.maxCoeff());
    const Vec lx = bx.eigvals / scale;
    const Vec ly = by.eigvals / scale;

    PairObjective out;
    out.Cxy = ad::fmap_solve(Ax, Ay, lx, ly, options.mu_commute);
    out.Cyx = ad::fmap_solve(Ay, Ax, ly, lx, options.mu_commute);
    out.data = 0.5 * (data_loss(out.Cxy, Ax, Ay) + data_loss(out.Cyx, Ay, Ax));
    out.reg = reg_loss(out.Cxy, out.Cyx);

    const double inv_tau_p = 1.0 / options.tau_p;
    const ad::Var pi_yx = ad::row_softmax(ad::scale(ad::cosine_similarity(fy, fx), inv_tau_p));
    const ad::Var pi_xy = ad::row_softmax(ad::scale(ad::cosine_similarity(fx, fy), inv_tau_p));
    out.couple = 0.5 * (couple_loss(out.Cxy, pi_yx, bx, by) + couple_loss(out.Cyx, pi_xy, by, bx));

    const bool have_parts = context.labels_x && context.labels_y && context.ranks_xy && context.ranks_yx;
    if (have_parts) {
        auto contrastive = options.contrastive == ContrastiveKind::RnC ? rnc_group_loss : supcon_group_loss;
        const double tau = options.weights.tau;
        out.rnc = 0.5 * (contrastive(fx, fy, *context.labels_y, context.anchors_x, *context.ranks_xy, tau) +
                            contrastive(fy, fx, *context.labels_x, context.anchors_y, *context.ranks_yx, tau));
    } else {
        out.rnc = tape.constant(Mat::Zero(1, 1));
    }

    const auto& w = options.weights;
    out.total = out.data + w.lambda_reg * out.reg + w.lambda_couple * out.couple + w.lambda_rnc * out.rnc;
    return out;
}

} // namespace unimatch
