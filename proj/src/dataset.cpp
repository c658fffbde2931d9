#include "log.hpp"
#include "unimatch/dataset.hpp"
#include "unimatch/error.hpp"
#include "unimatch/f32mat.hpp"

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace unimatch {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
    }
}

fs::path resolve(const fs::path& base, const json& j, const char* key)
{
    if (!j.contains(key) || j.at(key).is_null()) return {};
    const fs::path p = j.at(key).get<std::string>();
    return p.is_absolute() ? p : base / p;
}

std::string relative_to(const fs::path& p, const fs::path& base)
{
    if (p.empty()) return {};
    return fs::relative(p, base).generic_string();
}

std::string read_bytes(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::string sha256_hex(const std::string& data)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
        throw Error(ErrorCode::IoError, "SHA-256 failed");
    }
    std::ostringstream hex;
    for (unsigned int i = 0; i < length; ++i) {
        hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    }
    return hex.str();
}

} // namespace

std::vector<int> load_dense_map(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::vector<int> map;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream row(line);
        long long v = 0;
        std::string rest;
        if (!(row >> v) || (row >> rest) || v < 0 || v > std::numeric_limits<int>::max()) {
            throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": expected a vertex index");
        }
        map.push_back(static_cast<int>(v));
    }
    return map;
}

void save_dense_map(const fs::path& path, const std::vector<int>& map)
{
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    for (int v : map) out << v << '\n';
}

std::vector<std::pair<int, int>> load_keypoints(const fs::path& path)
{
    const json j = read_json(path);
    std::vector<std::pair<int, int>> out;
    try {
        for (const auto& item : j) {
            if (!item.is_array() || item.size() != 2) throw Error(ErrorCode::FormatError, "keypoint entries must be pairs");
            out.emplace_back(item[0].get<int>(), item[1].get<int>());
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
    } catch (const Error& e) {
        throw e.within(path.string());
    }
    return out;
}

Manifest load_manifest(const fs::path& path)
{
    const json j = read_json(path);
    const fs::path base = path.parent_path();
    Manifest m;
    m.path = path;
    try {
        for (const auto& s : j.at("shapes")) {
            ShapeEntry e;
            e.mesh = resolve(base, s, "mesh");
            if (e.mesh.empty()) throw Error(ErrorCode::FormatError, "shape entry without a mesh");
            e.name = s.value("name", e.mesh.stem().string());
            e.features = resolve(base, s, "features");
            e.labels = resolve(base, s, "labels");
            e.embeddings = resolve(base, s, "embeddings");
            if (!e.embeddings.empty() && e.labels.empty()) {
                throw Error(ErrorCode::FormatError, e.name + ": embeddings given without part labels");
            }
            m.shapes.push_back(std::move(e));
        }
        const int n = static_cast<int>(m.shapes.size());
        auto check_index = [&](int i) {
            if (i < 0 || i >= n) {
                throw Error(ErrorCode::PairIndexError,
                    "pair index " + std::to_string(i) + " outside [0, " + std::to_string(n) + ")");
            }
        };
        for (const auto& p : j.value("train_pairs", json::array())) {
            const int a = p.at(0).get<int>();
            const int b = p.at(1).get<int>();
            check_index(a);
            check_index(b);
            m.train_pairs.emplace_back(a, b);
        }
        for (const auto& p : j.value("eval_pairs", json::array())) {
            EvalPair e;
            e.source = p.at("source").get<int>();
            e.target = p.at("target").get<int>();
            check_index(e.source);
            check_index(e.target);
            e.dense_path = resolve(base, p, "dense_truth");
            e.keypoints_path = resolve(base, p, "keypoints");
            if (!e.dense_path.empty()) e.dense = load_dense_map(e.dense_path);
            if (!e.keypoints_path.empty()) e.keypoints = load_keypoints(e.keypoints_path);
            m.eval_pairs.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
    } catch (const Error& e) {
        throw e.within(path.string());
    }

    std::set<std::pair<int, int>> train(m.train_pairs.begin(), m.train_pairs.end());
    for (const auto& e : m.eval_pairs) {
        if (train.count({e.source, e.target})) {
            throw Error(ErrorCode::PairIndexError,
                path.string() + ": eval pair (" + std::to_string(e.source) + ", " + std::to_string(e.target) +
                    ") is also a train pair");
        }
    }
    return m;
}

void save_manifest(const fs::path& path, const Manifest& manifest)
{
    const fs::path base = path.parent_path();
    json j;
    j["shapes"] = json::array();
    for (const auto& s : manifest.shapes) {
        json e{{"name", s.name}, {"mesh", relative_to(s.mesh, base)}};
        if (!s.features.empty()) e["features"] = relative_to(s.features, base);
        if (!s.labels.empty()) e["labels"] = relative_to(s.labels, base);
        if (!s.embeddings.empty()) e["embeddings"] = relative_to(s.embeddings, base);
        j["shapes"].push_back(e);
    }
    j["train_pairs"] = json::array();
    for (const auto& [a, b] : manifest.train_pairs) j["train_pairs"].push_back({a, b});
    j["eval_pairs"] = json::array();
    for (const auto& e : manifest.eval_pairs) {
        json p{{"source", e.source}, {"target", e.target}};
        if (!e.dense_path.empty()) p["dense_truth"] = relative_to(e.dense_path, base);
        if (!e.keypoints_path.empty()) p["keypoints"] = relative_to(e.keypoints_path, base);
        j["eval_pairs"].push_back(p);
    }
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

Mat ShapeRecord::input_features(bool use_semantic, bool standardize) const
{
    if (use_semantic && f_sem) return concat_features(f_geo, *f_sem, standardize).values;
    return concat_features(f_geo, FeatureField{}, standardize).values;
}

fs::path cache_root(const fs::path& manifest_path)
{
    if (const char* env = std::getenv("UNIMATCH_CACHE_DIR"); env && *env) return fs::path(env);
    return manifest_path.parent_path() / ".unimatch_cache";
}

Precomputed precompute_shape(
    const fs::path& mesh_path, const TriangleMesh& mesh, Index basis_k, Index n_energies, const fs::path& cache_dir)
{
    std::ostringstream key;
    key << read_bytes(mesh_path) << "\nbasis_k=" << basis_k << "\nn_energies=" << n_energies << "\nformat=1";
    const fs::path file = cache_dir / (sha256_hex(key.str()) + ".bin");

    Precomputed out;
    if (fs::exists(file)) {
        try {
            std::ifstream in(file, std::ios::binary);
            out.basis.eigvals = read_f64mat(in, file.string()).col(0);
            out.basis.eigvecs = read_f64mat(in, file.string());
            const Mat mass = read_f64mat(in, file.string());
            out.basis.mass.diag = mass.col(0).head(mass.rows() - 1);
            out.basis.mass.total_area = mass(mass.rows() - 1, 0);
            out.wks.values = read_f64mat(in, file.string());
            out.wks.kind = FeatureKind::geometric;
            if (out.basis.n() == mesh.n_vertices() && out.basis.k() == basis_k &&
                out.wks.rows() == mesh.n_vertices() && out.wks.channels() == n_energies) {
                out.from_cache = true;
                log().info("cache hit {} ({})", mesh_path.string(), file.filename().string());
                return out;
            }
        } catch (const Error& e) {
            log().warn("ignoring unreadable cache entry {}: {}", file.string(), e.what());
        }
    }

    out = Precomputed{};
    out.basis = spectral_basis(mesh, basis_k);
    out.wks = wks(out.basis, n_energies);
    log().info("computed basis and descriptors for {}", mesh_path.string());

    fs::create_directories(cache_dir);
    const fs::path tmp = file.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw Error(ErrorCode::IoError, "cannot write cache file " + tmp.string());
        Mat mass(out.basis.n() + 1, 1);
        mass.col(0).head(out.basis.n()) = out.basis.mass.diag;
        mass(out.basis.n(), 0) = out.basis.mass.total_area;
        write_f64mat(f, out.basis.eigvals);
        write_f64mat(f, out.basis.eigvecs);
        write_f64mat(f, mass);
        write_f64mat(f, out.wks.values);
        if (!f) throw Error(ErrorCode::IoError, "failed writing cache file " + tmp.string());
    }
    fs::rename(tmp, file);
    return out;
}

PairDataset build_dataset(const fs::path& manifest_path, const RunConfig& config)
{
    PairDataset ds;
    ds.manifest = load_manifest(manifest_path);
    const fs::path cache_dir = cache_root(manifest_path);
    MeshLoadOptions options;
    options.allow_disconnected = config.allow_disconnected;

    for (const auto& entry : ds.manifest.shapes) {
        ShapeRecord rec;
        rec.name = entry.name;
        rec.mesh = load_mesh(entry.mesh, options);
        rec.mesh.name = entry.name;

        Precomputed pre = precompute_shape(entry.mesh, rec.mesh, config.basis_k, config.n_energies, cache_dir);
        pre.from_cache ? ++ds.cache.hits : ++ds.cache.misses;
        rec.basis = std::move(pre.basis);
        rec.f_geo = std::move(pre.wks);

        if (!entry.features.empty()) {
            LoadedFeatureField loaded = load_feature_field(entry.features, rec.mesh);
            if (loaded.report.zero_rows > 0) {
                log().info("{}: filled {} of {} invisible rows", entry.name, loaded.report.filled_rows,
                    loaded.report.zero_rows);
            }
            rec.f_sem = std::move(loaded.field);
            rec.fill = loaded.report;
        }
        if (!entry.labels.empty()) {
            std::vector<std::string> warnings;
            rec.labels = load_part_labels(entry.labels, rec.mesh, &warnings);
            for (const auto& w : warnings) log().warn("{}: {}", entry.name, w);
        }
        if (!entry.embeddings.empty()) rec.embeddings = load_part_embeddings(entry.embeddings, *rec.labels);
        ds.shapes.push_back(std::move(rec));
    }

    if (!ds.shapes.empty()) {
        for (const auto& s : ds.shapes) {
            if (s.f_sem.has_value() != ds.shapes.front().f_sem.has_value() ||
                (s.f_sem && s.f_sem->channels() != ds.shapes.front().f_sem->channels())) {
                throw Error(ErrorCode::DimMismatch, manifest_path.string() + ": semantic fields differ across shapes");
            }
        }
    }
    return ds;
}

std::optional<RankStructure> pair_ranks(const ShapeRecord& x, const ShapeRecord& y)
{
    if (!x.labels || !y.labels || !x.embeddings || !y.embeddings) return std::nullopt;
    return rank_structure(embedding_distances(*x.embeddings, *y.embeddings));
}

} // namespace unimatch
