#include "unimatch/error.hpp"
#include "unimatch/f32mat.hpp"
#include "unimatch/semantics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace unimatch {

using nlohmann::json;

std::vector<std::vector<int>> PartLabels::members() const
{
    std::vector<std::vector<int>> groups(static_cast<size_t>(n_parts));
    for (size_t v = 0; v < label.size(); ++v) groups[static_cast<size_t>(label[v])].push_back(static_cast<int>(v));
    return groups;
}

PartLabels make_part_labels(
    std::vector<int> label,
    int n_parts,
    std::vector<std::string> names,
    std::vector<std::string>* warnings)
{
    if (n_parts < 0) throw Error(ErrorCode::FormatError, "negative part count");
    if (names.empty()) names.assign(static_cast<size_t>(n_parts), "unknown");
    if (static_cast<int>(names.size()) != n_parts) {
        throw Error(ErrorCode::FormatError,
            std::to_string(names.size()) + " part names for " + std::to_string(n_parts) + " parts");
    }
    std::vector<Index> sizes(static_cast<size_t>(n_parts), 0);
    for (size_t v = 0; v < label.size(); ++v) {
        if (label[v] < 0 || label[v] >= n_parts) {
            throw Error(ErrorCode::FormatError,
                "vertex " + std::to_string(v) + " has part id " + std::to_string(label[v]) + " outside [0, " +
                    std::to_string(n_parts) + ")");
        }
        ++sizes[static_cast<size_t>(label[v])];
    }

    PartLabels out;
    std::vector<int> remap(static_cast<size_t>(n_parts), -1);
    for (int p = 0; p < n_parts; ++p) {
        if (sizes[static_cast<size_t>(p)] == 0) {
            if (warnings) warnings->push_back("part " + std::to_string(p) + " ('" + names[static_cast<size_t>(p)] + "') has no vertices; dropped");
            continue;
        }
        remap[static_cast<size_t>(p)] = out.n_parts++;
        out.part_names.push_back(names[static_cast<size_t>(p)]);
        out.original_ids.push_back(p);
    }
    if (out.n_parts < 2) {
        throw Error(ErrorCode::TooFewParts, "need at least 2 nonempty parts, got " + std::to_string(out.n_parts));
    }
    out.label.resize(label.size());
    for (size_t v = 0; v < label.size(); ++v) out.label[v] = remap[static_cast<size_t>(label[v])];
    return out;
}

PartLabels load_part_labels(const std::filesystem::path& path, const TriangleMesh& mesh, std::vector<std::string>* warnings)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
    }
    try {
        const auto n_vertices = doc.at("n_vertices").get<Index>();
        const auto n_parts = doc.at("n_parts").get<int>();
        auto labels = doc.at("labels").get<std::vector<int>>();
        auto names = doc.contains("part_names") ? doc.at("part_names").get<std::vector<std::string>>()
                                                : std::vector<std::string>{};
        if (n_vertices != mesh.n_vertices() || static_cast<Index>(labels.size()) != mesh.n_vertices()) {
            throw Error(ErrorCode::ShapeMismatch,
                path.string() + ": " + std::to_string(labels.size()) + " labels for a mesh with " +
                    std::to_string(mesh.n_vertices()) + " vertices");
        }
        return make_part_labels(std::move(labels), n_parts, std::move(names), warnings);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ShapeMismatch) throw;
        throw e.within(path.string());
    }
}

void save_part_labels(const std::filesystem::path& path, const PartLabels& labels)
{
    json doc{
        {"n_vertices", labels.label.size()},
        {"n_parts", labels.n_parts},
        {"labels", labels.label},
        {"part_names", labels.part_names},
    };
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << doc.dump() << '\n';
}

PartEmbeddings make_part_embeddings(const Mat& raw, const PartLabels& labels)
{
    const auto n_parts = static_cast<Index>(labels.n_parts);
    Mat rows;
    if (raw.rows() == n_parts) {
        rows = raw;
    } else if (!labels.original_ids.empty() &&
               raw.rows() == static_cast<Index>(labels.original_ids.back()) + 1 && raw.rows() > n_parts) {
        rows.resize(n_parts, raw.cols());
        for (Index p = 0; p < n_parts; ++p) rows.row(p) = raw.row(labels.original_ids[static_cast<size_t>(p)]);
    } else {
        throw Error(ErrorCode::ShapeMismatch,
            std::to_string(raw.rows()) + " embedding rows for " + std::to_string(n_parts) + " parts");
    }
    if (!rows.allFinite()) throw Error(ErrorCode::FormatError, "non-finite embedding value");

    PartEmbeddings out;
    out.E = rows;
    out.imputed.assign(static_cast<size_t>(n_parts), false);

    RowVec known_sum = RowVec::Zero(rows.cols());
    int known = 0;
    for (Index p = 0; p < n_parts; ++p) {
        const bool unknown = labels.part_names[static_cast<size_t>(p)] == "unknown";
        if (unknown) continue;
        const double norm = rows.row(p).norm();
        if (!(norm > 0.0)) throw Error(ErrorCode::FormatError, "embedding row " + std::to_string(p) + " has zero norm");
        out.E.row(p) = rows.row(p) / norm;
        known_sum += out.E.row(p);
        ++known;
    }
    for (Index p = 0; p < n_parts; ++p) {
        if (labels.part_names[static_cast<size_t>(p)] != "unknown") continue;
        RowVec row = known > 0 ? RowVec(known_sum / known) : RowVec(rows.row(p));
        const double norm = row.norm();
        if (!(norm > 0.0)) throw Error(ErrorCode::FormatError, "embedding row " + std::to_string(p) + " has zero norm");
        out.E.row(p) = row / norm;
        out.imputed[static_cast<size_t>(p)] = known > 0;
    }
    return out;
}

PartEmbeddings load_part_embeddings(const std::filesystem::path& path, const PartLabels& labels)
{
    try {
        return make_part_embeddings(read_f32mat(path), labels);
    } catch (const Error& e) {
        throw e.within(path.string());
    }
}

void save_part_embeddings(const std::filesystem::path& path, const PartEmbeddings& embeddings)
{
    write_f32mat(path, embeddings.E);
}

Mat embedding_distances(const PartEmbeddings& ex, const PartEmbeddings& ey)
{
    if (ex.dim() != ey.dim()) {
        throw Error(ErrorCode::DimMismatch,
            "embedding dims differ: " + std::to_string(ex.dim()) + " vs " + std::to_string(ey.dim()));
    }
    // 1 - <a, b> written as |a - b|^2 / 2 (equal for unit rows), which is
    // exactly zero for identical rows.
    Mat D(ex.n_parts(), ey.n_parts());
    for (Index i = 0; i < D.rows(); ++i) {
        for (Index j = 0; j < D.cols(); ++j) D(i, j) = 0.5 * (ex.E.row(i) - ey.E.row(j)).squaredNorm();
    }
    return D;
}

RankStructure::RankStructure(Mat distances)
    : m_distances(std::move(distances))
{
    if (!m_distances.allFinite()) throw Error(ErrorCode::NonFinite, "non-finite part distance");
    const Index ns = n_source();
    const Index nt = n_target();
    m_mask.assign(static_cast<size_t>(ns * nt * nt), 0);
    for (Index i = 0; i < ns; ++i) {
        for (Index j = 0; j < nt; ++j) {
            for (Index k = 0; k < nt; ++k) {
                m_mask[static_cast<size_t>((i * nt + j) * nt + k)] = m_distances(i, k) >= m_distances(i, j);
            }
        }
    }
}

std::vector<int> RankStructure::negatives(Index i, Index j) const
{
    std::vector<int> out;
    for (Index k = 0; k < n_target(); ++k) {
        if (is_negative(i, j, k)) out.push_back(static_cast<int>(k));
    }
    return out;
}

Index RankStructure::nearest(Index i) const
{
    Index best = 0;
    for (Index k = 1; k < n_target(); ++k) {
        if (m_distances(i, k) < m_distances(i, best)) best = k;
    }
    return best;
}

RankStructure rank_structure(const Mat& distances)
{
    return RankStructure(distances);
}

FixtureSpec FixtureSpec::from_json(const json& j)
{
    FixtureSpec spec;
    try {
        spec.dim = j.value("dim", spec.dim);
        spec.perturbation = j.value("perturbation", spec.perturbation);
        for (const auto& c : j.at("concepts")) {
            FixtureConcept concept_;
            concept_.name = c.at("name").get<std::string>();
            if (c.contains("direction")) concept_.direction = c.at("direction").get<std::vector<double>>();
            spec.concepts.push_back(std::move(concept_));
        }
        auto read_shape = [](const json& s) {
            FixtureShapeSpec shape;
            shape.parts = s.at("parts").get<std::vector<std::string>>();
            if (s.contains("names")) shape.names = s.at("names").get<std::vector<std::string>>();
            return shape;
        };
        spec.x = read_shape(j.at("x"));
        spec.y = read_shape(j.at("y"));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SpecError, e.what());
    }
    return spec;
}

json FixtureSpec::to_json() const
{
    json concepts_json = json::array();
    for (const auto& c : concepts) {
        json entry{{"name", c.name}};
        if (!c.direction.empty()) entry["direction"] = c.direction;
        concepts_json.push_back(entry);
    }
    auto shape_json = [](const FixtureShapeSpec& s) {
        json out{{"parts", s.parts}};
        if (!s.names.empty()) out["names"] = s.names;
        return out;
    };
    return json{{"dim", dim}, {"perturbation", perturbation}, {"concepts", concepts_json}, {"x", shape_json(x)},
        {"y", shape_json(y)}};
}

std::vector<int> voronoi_labels(const TriangleMesh& mesh, const std::vector<int>& seeds)
{
    auto [dist, owner] = GeodesicGraph(mesh).nearest_source(seeds);
    for (size_t v = 0; v < owner.size(); ++v) {
        if (owner[v] < 0) throw Error(ErrorCode::Disconnected, "vertex " + std::to_string(v) + " unreachable from seeds");
    }
    return owner;
}

std::vector<int> farthest_point_samples(const TriangleMesh& mesh, int count, int start)
{
    GeodesicGraph graph(mesh);
    std::vector<int> samples{start};
    Vec nearest = graph.distances_from(start, true);
    while (static_cast<int>(samples.size()) < count) {
        Index next = 0;
        for (Index v = 1; v < nearest.size(); ++v) {
            if (nearest[v] > nearest[next]) next = v;
        }
        samples.push_back(static_cast<int>(next));
        nearest = nearest.cwiseMin(graph.distances_from(static_cast<int>(next), true));
    }
    return samples;
}

SemanticFixture synth_fixture(
    std::uint64_t seed,
    const FixtureSpec& spec,
    const TriangleMesh& x,
    const TriangleMesh& y,
    const std::optional<std::vector<int>>& seeds_x,
    const std::optional<std::vector<int>>& seeds_y)
{
    if (spec.dim < 1) throw Error(ErrorCode::SpecError, "embedding dim must be positive");
    if (spec.perturbation < 0.0) throw Error(ErrorCode::SpecError, "perturbation must be non-negative");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> pick;

    // Concept base directions, normalized; missing ones drawn from the seed.
    std::vector<RowVec> bases;
    for (const auto& c : spec.concepts) {
        RowVec base(spec.dim);
        if (c.direction.empty()) {
            for (Index d = 0; d < spec.dim; ++d) base[d] = gauss(rng);
        } else {
            if (static_cast<Index>(c.direction.size()) != spec.dim) {
                throw Error(ErrorCode::SpecError, "concept '" + c.name + "' direction has wrong dimension");
            }
            for (Index d = 0; d < spec.dim; ++d) base[d] = c.direction[static_cast<size_t>(d)];
        }
        const double norm = base.norm();
        if (!(norm > 0.0)) throw Error(ErrorCode::SpecError, "concept '" + c.name + "' has a zero direction");
        bases.push_back(base / norm);
    }
    auto concept_index = [&](const std::string& name) {
        for (size_t i = 0; i < spec.concepts.size(); ++i) {
            if (spec.concepts[i].name == name) return i;
        }
        throw Error(ErrorCode::SpecError, "unknown concept '" + name + "'");
    };

    auto build = [&](const FixtureShapeSpec& shape, const TriangleMesh& mesh, const std::optional<std::vector<int>>& given,
                     PartLabels& labels, PartEmbeddings& embeddings) {
        const int n_parts = static_cast<int>(shape.parts.size());
        if (n_parts < 2) throw Error(ErrorCode::SpecError, "each shape needs at least 2 parts");
        if (n_parts > mesh.n_vertices()) throw Error(ErrorCode::SpecError, "more parts than vertices");
        if (!shape.names.empty() && static_cast<int>(shape.names.size()) != n_parts) {
            throw Error(ErrorCode::SpecError, "names must match parts");
        }
        std::vector<int> seeds;
        if (given) {
            seeds = *given;
            if (static_cast<int>(seeds.size()) != n_parts) throw Error(ErrorCode::SpecError, "one seed vertex per part required");
        } else {
            const int start = static_cast<int>(pick(rng) % static_cast<int>(mesh.n_vertices()));
            seeds = farthest_point_samples(mesh, n_parts, start);
        }
        labels = make_part_labels(voronoi_labels(mesh, seeds), n_parts, shape.names.empty() ? shape.parts : shape.names);

        Mat E(n_parts, spec.dim);
        for (int p = 0; p < n_parts; ++p) {
            RowVec row = bases[concept_index(shape.parts[static_cast<size_t>(p)])];
            RowVec noise(spec.dim);
            for (Index d = 0; d < spec.dim; ++d) noise[d] = gauss(rng);
            if (spec.perturbation > 0.0) row += spec.perturbation * noise / noise.norm();
            E.row(p) = row / row.norm();
        }
        embeddings.E = E;
        embeddings.imputed.assign(static_cast<size_t>(n_parts), false);
    };

    SemanticFixture out;
    build(spec.x, x, seeds_x, out.labels_x, out.embeddings_x);
    build(spec.y, y, seeds_y, out.labels_y, out.embeddings_y);
    return out;
}

} // namespace unimatch
