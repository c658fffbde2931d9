#include "unimatch/descriptors.hpp"
#include "unimatch/error.hpp"
#include "unimatch/f32mat.hpp"

#include <cmath>

namespace unimatch {

FeatureField wks(const SpectralBasis& basis, Index n_energies)
{
    const Index k = basis.k();
    if (k < 3) throw Error(ErrorCode::BasisTooSmall, "WKS needs at least 3 eigenpairs");
    if (n_energies < 1) throw Error(ErrorCode::SpecError, "WKS needs at least one energy");

    const double lambda_first = basis.eigvals[1];
    const double lambda_last = basis.eigvals[k - 1];
    if (!(lambda_first > 0.0)) {
        throw Error(ErrorCode::DegenerateSpectrum, "first non-kernel eigenvalue is not positive");
    }
    Vec log_lambda = basis.eigvals.tail(k - 1).array().log();

    const double e_min = std::log(lambda_first);
    const double e_max = std::log(lambda_last);
    const double range = e_max - e_min;
    if (!(range > 0.0)) throw Error(ErrorCode::DegenerateSpectrum, "spectrum has zero log-range");
    const double sigma = 7.0 * range / static_cast<double>(n_energies);
    const double lo = e_min + 2.0 * sigma;
    const double hi = e_max - 2.0 * sigma;

    Vec energies = n_energies == 1 ? Vec(Vec::Constant(1, lo)) : Vec(Vec::LinSpaced(n_energies, lo, hi));

    // weights(i, t) = exp(-(e_t - log lambda_i)^2 / (2 sigma^2)) over i >= 1.
    Mat weights(k - 1, n_energies);
    for (Index t = 0; t < n_energies; ++t) {
        weights.col(t) = (-(energies[t] - log_lambda.array()).square() / (2.0 * sigma * sigma)).exp();
    }
    // Phi rows are M-orthonormal, so sum_x M[x] phi_i(x)^2 = 1 and the
    // normalizer is the inverse column sum of the weights.
    RowVec normalizer = weights.colwise().sum().cwiseInverse();

    Mat phi_sq = basis.eigvecs.rightCols(k - 1).array().square();
    FeatureField field;
    field.kind = FeatureKind::geometric;
    field.values = (phi_sq * weights) * normalizer.asDiagonal();
    return field;
}

FillReport fill_invisible_rows(Mat& values, const std::vector<std::vector<int>>& adjacency)
{
    const Index n = values.rows();
    std::vector<char> known(static_cast<size_t>(n));
    FillReport report;
    for (Index i = 0; i < n; ++i) {
        known[static_cast<size_t>(i)] = values.row(i).cwiseAbs().maxCoeff() > 0.0 || values.cols() == 0;
        if (!known[static_cast<size_t>(i)]) ++report.zero_rows;
    }

    Index remaining = report.zero_rows;
    while (remaining > 0) {
        std::vector<std::pair<Index, RowVec>> updates;
        for (Index i = 0; i < n; ++i) {
            if (known[static_cast<size_t>(i)]) continue;
            RowVec sum = RowVec::Zero(values.cols());
            int count = 0;
            for (int j : adjacency[static_cast<size_t>(i)]) {
                if (known[static_cast<size_t>(j)]) {
                    sum += values.row(j);
                    ++count;
                }
            }
            if (count > 0) updates.emplace_back(i, sum / count);
        }
        if (updates.empty()) break;
        for (auto& [i, row] : updates) {
            values.row(i) = row;
            known[static_cast<size_t>(i)] = 1;
        }
        report.filled_rows += static_cast<Index>(updates.size());
        remaining -= static_cast<Index>(updates.size());
    }
    report.unfilled_rows = remaining;
    return report;
}

LoadedFeatureField load_feature_field(const std::filesystem::path& path, const TriangleMesh& mesh)
{
    Mat values = read_f32mat(path);
    if (values.rows() != mesh.n_vertices()) {
        throw Error(ErrorCode::ShapeMismatch,
            path.string() + ": " + std::to_string(values.rows()) + " rows for a mesh with " +
                std::to_string(mesh.n_vertices()) + " vertices");
    }
    if (!values.allFinite()) throw Error(ErrorCode::FormatError, path.string() + ": non-finite feature value");

    LoadedFeatureField loaded;
    loaded.report = fill_invisible_rows(values, vertex_adjacency(mesh));
    loaded.field.values = std::move(values);
    loaded.field.kind = FeatureKind::semantic;
    return loaded;
}

void save_feature_field(const std::filesystem::path& path, const FeatureField& field)
{
    write_f32mat(path, field.values);
}

Mat standardize_columns(const Mat& values)
{
    Mat out(values.rows(), values.cols());
    if (values.rows() == 0) return out;
    const double n = static_cast<double>(values.rows());
    for (Index c = 0; c < values.cols(); ++c) {
        const double mean = values.col(c).mean();
        Vec centered = values.col(c).array() - mean;
        const double stddev = std::sqrt(centered.squaredNorm() / n);
        // Relative guard: float32-rounded constants can leave a tiny spread.
        if (stddev <= 1e-12 * std::max(1.0, std::abs(mean))) {
            out.col(c).setZero();
        } else {
            out.col(c) = centered / stddev;
        }
    }
    return out;
}

FeatureField concat_features(const FeatureField& geo, const FeatureField& sem, bool standardize)
{
    if (sem.channels() > 0 && geo.rows() != sem.rows()) {
        throw Error(ErrorCode::ShapeMismatch,
            "geometric field has " + std::to_string(geo.rows()) + " rows, semantic field " +
                std::to_string(sem.rows()));
    }
    FeatureField out;
    out.kind = FeatureKind::input;
    out.values.resize(geo.rows(), geo.channels() + sem.channels());
    out.values.leftCols(geo.channels()) = standardize ? standardize_columns(geo.values) : geo.values;
    if (sem.channels() > 0) {
        out.values.rightCols(sem.channels()) = standardize ? standardize_columns(sem.values) : sem.values;
    }
    return out;
}

} // namespace unimatch
