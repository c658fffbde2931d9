#pragma once

#include "unimatch/autodiff.hpp"
#include "unimatch/mesh.hpp"
#include "unimatch/semantics.hpp"
#include "unimatch/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace unimatch {

/// |C Ax - Ay|^2 / (k_y * channels).
ad::Var data_loss(const ad::Var& C, const ad::Var& Ax, const ad::Var& Ay);

/// Bijectivity and orthogonality residuals of the two directional maps,
/// summed and divided by 4 k_x k_y.
ad::Var reg_loss(const ad::Var& Cxy, const ad::Var& Cyx);

/// |C - Phi_y^T M_y Pi Phi_x|^2 / (k_x k_y), Pi being n_y x n_x.
ad::Var couple_loss(const ad::Var& C, const ad::Var& pi, const SpectralBasis& basis_x, const SpectralBasis& basis_y);

/// Anchors are source vertices with their source part ids (rows of `ranks`).
struct AnchorSet
{
    std::vector<int> vertex;
    std::vector<int> part;

    size_t size() const { return vertex.size(); }
};

AnchorSet all_anchors(const PartLabels& labels);

/// Up to `count` anchors: each part's vertices are shuffled, then parts are
/// visited round-robin in id order until the budget is spent.
AnchorSet stratified_anchors(const PartLabels& labels, Index count, std::mt19937_64& rng);

/// Group-wise rank contrastive loss. For anchor i and every target part j:
/// -log(sum_{l in G_j} e^{s_il} / sum_{k in S_ij} e^{s_ik}), s = cos / tau and
/// S_ij the vertices of target parts no closer to part(i) than j. Averaged
/// over parts, then over anchors.
ad::Var rnc_group_loss(
    const ad::Var& fx,
    const ad::Var& fy,
    const PartLabels& labels_y,
    const AnchorSet& anchors,
    const RankStructure& ranks,
    double tau);

/// Supervised-contrastive ablation: the positive set is the nearest target
/// part (ties to the lowest id), the pool is every target vertex, and the
/// per-anchor term is -log(sum_pos e^s / sum_pool e^s).
ad::Var supcon_group_loss(
    const ad::Var& fx,
    const ad::Var& fy,
    const PartLabels& labels_y,
    const AnchorSet& anchors,
    const RankStructure& ranks,
    double tau);

struct LossWeights
{
    double lambda_reg = 1.0;
    double lambda_couple = 1.0;
    double lambda_rnc = 1.0;
    double tau = 0.07;

    nlohmann::json to_json() const;
};

struct LossReport
{
    double total = 0.0;
    double data = 0.0;
    double reg = 0.0;
    double couple = 0.0;
    double rnc = 0.0;
    LossWeights weights;

    nlohmann::json to_json() const;
    double weighted_sum() const;
};

/// total = data + l_reg reg + l_couple couple + l_rnc rnc. Throws NonFinite.
LossReport total_loss(double data, double reg, double couple, double rnc, const LossWeights& weights);

enum class ContrastiveKind { RnC, SupCon };

struct PairObjectiveOptions
{
    LossWeights weights;
    double tau_p = 0.07;
    double mu_commute = 1e-2;
    ContrastiveKind contrastive = ContrastiveKind::RnC;
};

/// Everything fixed for one training pair.
struct PairContext
{
    const SpectralBasis* basis_x = nullptr;
    const SpectralBasis* basis_y = nullptr;
    const PartLabels* labels_x = nullptr;
    const PartLabels* labels_y = nullptr;
    /// Source-part x target-part rank structure for X anchors.
    const RankStructure* ranks_xy = nullptr;
    const RankStructure* ranks_yx = nullptr;
    AnchorSet anchors_x;
    AnchorSet anchors_y;
};

struct PairObjective
{
    ad::Var total;
    ad::Var data;
    ad::Var reg;
    ad::Var couple;
    ad::Var rnc;
    ad::Var Cxy;
    ad::Var Cyx;

    LossReport report(const LossWeights& weights) const;
};

/// Full symmetric pair objective on refined features: functional maps in
/// both directions from projected features (spectra scaled by their joint
/// maximum), data/reg/couple terms averaged over directions, and the
/// contrastive term averaged over X->Y and Y->X anchors.
PairObjective pair_objective(
    const ad::Var& fx, const ad::Var& fy, const PairContext& context, const PairObjectiveOptions& options);

} // namespace unimatch
