// Command-line front end: precompute, train, match, eval, coseg, fixture.
// Machine-readable JSON summaries go to stdout, logs to stderr.

#include "unimatch/config.hpp"
#include "unimatch/cosegment.hpp"
#include "unimatch/dataset.hpp"
#include "unimatch/error.hpp"
#include "unimatch/fixtures.hpp"
#include "unimatch/fmap.hpp"
#include "unimatch/match.hpp"
#include "unimatch/train.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace unimatch;

namespace {

struct CommonOptions
{
    fs::path config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    bool refine = false;
    CLI::Option* refine_opt = nullptr;
    bool x100 = false;
    bool allow_disconnected = false;
    fs::path out_dir = ".";

    RunConfig effective() const
    {
        RunConfig c = config_path.empty() ? RunConfig{} : load_config(config_path);
        if (seed) c.seed = *seed;
        if (workers) c.workers = *workers;
        if (refine_opt && refine_opt->count() > 0) c.refine = refine;
        if (x100) c.x100 = true;
        if (allow_disconnected) c.allow_disconnected = true;
        c.validate();
        return c;
    }
};

void add_common(CLI::App* app, CommonOptions& o)
{
    app->add_option("--config", o.config_path, "Run configuration (JSON or flat TOML)")->check(CLI::ExistingFile);
    app->add_option("--seed", o.seed, "Random seed (overrides the config)");
    app->add_option("--workers", o.workers, "Threads for point-map extraction")->check(CLI::PositiveNumber);
    o.refine_opt = app->add_flag("--refine,!--no-refine", o.refine, "Enable or disable ZoomOut refinement");
    app->add_flag("--x100", o.x100, "Report errors multiplied by 100");
    app->add_flag("--allow-disconnected", o.allow_disconnected, "Accept meshes with several components");
    app->add_option("--out-dir", o.out_dir, "Directory for output files");
}

void emit(json summary, const RunConfig& config)
{
    summary["config"] = config.to_json();
    std::cout << summary.dump(2) << std::endl;
}

std::string pair_stem(int a, int b)
{
    return std::to_string(a) + "_" + std::to_string(b);
}

int run_precompute(const fs::path& manifest, const CommonOptions& o)
{
    const RunConfig config = o.effective();
    const PairDataset ds = build_dataset(manifest, config);
    emit(json{{"command", "precompute"},
             {"shapes", ds.shapes.size()},
             {"cache_hits", ds.cache.hits},
             {"cache_misses", ds.cache.misses},
             {"cache_dir", cache_root(manifest).string()}},
        config);
    return 0;
}

int run_train(const fs::path& manifest, const CommonOptions& o)
{
    const RunConfig config = o.effective();
    const PairDataset ds = build_dataset(manifest, config);
    fs::create_directories(o.out_dir);
    const fs::path log_path = o.out_dir / "train_log.jsonl";
    const fs::path ckpt_path = o.out_dir / "model.ckpt";
    std::ofstream log_file(log_path);
    if (!log_file) throw Error(ErrorCode::IoError, "cannot write " + log_path.string());

    const TrainResult result = train(ds, config, [&](const json& line) { log_file << line.dump() << '\n'; }, ckpt_path);
    save_checkpoint(ckpt_path, result.checkpoint);
    emit(json{{"command", "train"},
             {"checkpoint", ckpt_path.string()},
             {"log", log_path.string()},
             {"steps", result.steps.size()},
             {"final_loss", result.steps.empty() ? 0.0 : result.steps.back().total},
             {"epoch_means", result.epoch_means}},
        config);
    return 0;
}

std::vector<std::pair<int, int>> selected_pairs(const PairDataset& ds, const std::vector<int>& pair)
{
    if (pair.size() == 2) {
        const int n = static_cast<int>(ds.shapes.size());
        for (int i : pair) {
            if (i < 0 || i >= n) throw Error(ErrorCode::PairIndexError, "--pair index " + std::to_string(i) + " out of range");
        }
        return {{pair[0], pair[1]}};
    }
    std::vector<std::pair<int, int>> out;
    for (const auto& e : ds.manifest.eval_pairs) out.emplace_back(e.source, e.target);
    if (out.empty()) throw Error(ErrorCode::PairIndexError, "manifest has no eval pairs; pass --pair SOURCE TARGET");
    return out;
}

int run_match(const fs::path& manifest, const fs::path& checkpoint, const std::vector<int>& pair, bool ply, const CommonOptions& o)
{
    const RunConfig config = o.effective();
    const Checkpoint ck = load_checkpoint(checkpoint);
    const PairDataset ds = build_dataset(manifest, config);
    fs::create_directories(o.out_dir);
    json maps = json::array();
    for (const auto& [s, t] : selected_pairs(ds, pair)) {
        const auto& src = ds.shapes[static_cast<size_t>(s)];
        const auto& tgt = ds.shapes[static_cast<size_t>(t)];
        const MatchResult m = match(ck, src, tgt, config, config.refine);
        const fs::path map_path = o.out_dir / ("map_" + pair_stem(s, t) + ".json");
        const fs::path fmap_path = o.out_dir / ("fmap_" + pair_stem(s, t) + ".f32");
        save_point_map(map_path, m.map);
        save_functional_map(fmap_path, m.fmap);
        json entry{{"source", s}, {"target", t}, {"map", map_path.string()}, {"fmap", fmap_path.string()}};
        if (ply) {
            const fs::path ply_path = o.out_dir / ("transfer_" + pair_stem(s, t) + ".ply");
            save_color_transfer_ply(ply_path, src.mesh, tgt.mesh, m.map);
            entry["ply"] = ply_path.string();
        }
        maps.push_back(entry);
    }
    emit(json{{"command", "match"}, {"refined", config.refine}, {"maps", maps}}, config);
    return 0;
}

int run_eval(
    const fs::path& manifest,
    const fs::path& checkpoint,
    const fs::path& pred_dir,
    const fs::path& pred,
    const fs::path& truth,
    const fs::path& mesh_path,
    bool keypoints,
    const CommonOptions& o)
{
    const RunConfig config = o.effective();
    std::vector<PairError> errors;
    json pairs = json::array();

    if (!pred.empty()) {
        if (truth.empty() || mesh_path.empty()) throw Error(ErrorCode::SpecError, "--pred needs --truth and --mesh");
        MeshLoadOptions mo;
        mo.allow_disconnected = config.allow_disconnected;
        const TriangleMesh source = load_mesh(mesh_path, mo);
        GeodesicCache cache(source);
        const PointMap map = load_point_map(pred);
        errors.push_back(keypoints ? keypoint_error(map, load_keypoints(truth), cache)
                                   : dense_error(map, load_dense_map(truth), cache));
        pairs.push_back({{"pred", pred.string()}, {"truth", truth.string()}});
    } else {
        if (manifest.empty()) throw Error(ErrorCode::SpecError, "eval needs a manifest or --pred");
        if (checkpoint.empty() == pred_dir.empty()) throw Error(ErrorCode::SpecError, "pass exactly one of --checkpoint or --pred-dir");
        const PairDataset ds = build_dataset(manifest, config);
        std::optional<Checkpoint> ck;
        if (!checkpoint.empty()) ck = load_checkpoint(checkpoint);
        for (const auto& e : ds.manifest.eval_pairs) {
            const auto& src = ds.shapes[static_cast<size_t>(e.source)];
            const auto& tgt = ds.shapes[static_cast<size_t>(e.target)];
            PointMap map;
            if (ck) {
                map = match(*ck, src, tgt, config, config.refine).map;
            } else {
                map = load_point_map(pred_dir / ("map_" + pair_stem(e.source, e.target) + ".json"));
            }
            GeodesicCache cache(src.mesh);
            if (e.dense) {
                errors.push_back(dense_error(map, *e.dense, cache));
            } else if (e.keypoints) {
                errors.push_back(keypoint_error(map, *e.keypoints, cache));
            } else {
                throw Error(ErrorCode::SpecError, "eval pair without ground truth");
            }
            pairs.push_back({{"source", e.source}, {"target", e.target}});
        }
    }

    const EvalResult result = summarize(errors, config.x100);
    json summary = result.to_json();
    summary["command"] = "eval";
    summary["pairs"] = pairs;
    fs::create_directories(o.out_dir);
    std::ofstream(o.out_dir / "eval.json") << summary.dump(2) << '\n';
    emit(summary, config);
    return 0;
}

int run_coseg(const fs::path& manifest, const fs::path& checkpoint, int anchor, int target, int k, const CommonOptions& o)
{
    const RunConfig config = o.effective();
    const Checkpoint ck = load_checkpoint(checkpoint);
    const PairDataset ds = build_dataset(manifest, config);
    const int n = static_cast<int>(ds.shapes.size());
    if (anchor < 0 || anchor >= n || target < 0 || target >= n) throw Error(ErrorCode::PairIndexError, "shape index out of range");
    const auto& a = ds.shapes[static_cast<size_t>(anchor)];
    const auto& t = ds.shapes[static_cast<size_t>(target)];
    const CosegResult seg = cosegment(refine_features(ck, a), a.mesh, refine_features(ck, t), k);

    fs::create_directories(o.out_dir);
    auto write = [&](int shape, const std::vector<int>& labels) {
        const fs::path p = o.out_dir / ("coseg_" + std::to_string(shape) + ".json");
        std::ofstream(p) << json{{"n_vertices", labels.size()}, {"k", k}, {"labels", labels}}.dump() << '\n';
        return p.string();
    };
    const std::string pa = write(anchor, seg.anchor);
    const std::string pt = write(target, seg.target);
    emit(json{{"command", "coseg"}, {"k", k}, {"anchor", pa}, {"target", pt}}, config);
    return 0;
}

int run_fixture(const std::string& kind, const CommonOptions& o)
{
    const RunConfig config = o.effective();
    const FixtureSet fx = make_fixture(kind, config.seed);
    const fs::path manifest = write_fixture(fx, o.out_dir);
    emit(json{{"command", "fixture"}, {"kind", kind}, {"seed", config.seed}, {"shapes", fx.shapes.size()},
             {"manifest", manifest.string()}},
        config);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    auto logger = spdlog::stderr_logger_mt("cli");
    logger->set_pattern("[%l] %v");

    CLI::App app{"Semantic non-rigid shape matching with functional maps"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string level = "info";
    app.add_option("--log-level", level, "trace, debug, info, warn, error or off");

    fs::path manifest, checkpoint, pred_dir, pred, truth, mesh_path;
    std::vector<int> pair;
    bool ply = false;
    bool keypoints = false;
    int anchor = 0, target = 1, k = 2;
    std::string kind;

    CommonOptions pre_o, train_o, match_o, eval_o, coseg_o, fix_o;

    auto* pre = app.add_subcommand("precompute", "Compute and cache spectral bases and descriptors");
    pre->add_option("manifest", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    add_common(pre, pre_o);

    auto* tr = app.add_subcommand("train", "Train the feature refiner");
    tr->add_option("manifest", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    add_common(tr, train_o);

    auto* ma = app.add_subcommand("match", "Compute target-to-source point maps");
    ma->add_option("manifest", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    ma->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
    ma->add_option("--pair", pair, "SOURCE TARGET shape indices (default: manifest eval pairs)")->expected(2);
    ma->add_flag("--ply", ply, "Also write colour-transfer PLY files");
    add_common(ma, match_o);

    auto* ev = app.add_subcommand("eval", "Mean normalized geodesic error of point maps");
    ev->add_option("manifest", manifest, "Dataset manifest")->check(CLI::ExistingFile);
    ev->add_option("--checkpoint", checkpoint, "Match the eval pairs with this checkpoint")->check(CLI::ExistingFile);
    ev->add_option("--pred-dir", pred_dir, "Directory with map_<source>_<target>.json files")->check(CLI::ExistingDirectory);
    ev->add_option("--pred", pred, "Single point-map file")->check(CLI::ExistingFile);
    ev->add_option("--truth", truth, "Ground truth for --pred")->check(CLI::ExistingFile);
    ev->add_option("--mesh", mesh_path, "Source mesh for --pred")->check(CLI::ExistingFile);
    ev->add_flag("--keypoints", keypoints, "--truth holds keypoint pairs instead of a dense map");
    add_common(ev, eval_o);

    auto* co = app.add_subcommand("coseg", "Co-segment an anchor and a target shape");
    co->add_option("manifest", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    co->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
    co->add_option("--anchor", anchor, "Anchor shape index");
    co->add_option("--target", target, "Target shape index");
    co->add_option("--k", k, "Number of segments")->check(CLI::PositiveNumber);
    add_common(co, coseg_o);

    auto* fx = app.add_subcommand("fixture", "Generate a synthetic dataset with known correspondences");
    fx->add_option("--kind", kind, "sphere, bent-plane, isometric-pair or blob-pair")
        ->required()
        ->check(CLI::IsMember({"sphere", "bent-plane", "isometric-pair", "blob-pair"}));
    add_common(fx, fix_o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    spdlog::level::level_enum lvl = spdlog::level::from_str(level);
    spdlog::apply_all([lvl](const std::shared_ptr<spdlog::logger>& l) { l->set_level(lvl); });
    spdlog::set_level(lvl);

    try {
        if (*pre) return run_precompute(manifest, pre_o);
        if (*tr) return run_train(manifest, train_o);
        if (*ma) return run_match(manifest, checkpoint, pair, ply, match_o);
        if (*ev) return run_eval(manifest, checkpoint, pred_dir, pred, truth, mesh_path, keypoints, eval_o);
        if (*co) return run_coseg(manifest, checkpoint, anchor, target, k, coseg_o);
        if (*fx) return run_fixture(kind, fix_o);
    } catch (const Error& e) {
        logger->error("{}", e.what());
        return exit_code_for(e.code());
    } catch (const fs::filesystem_error& e) {
        logger->error("IoError: {}", e.what());
        return 2;
    } catch (const std::exception& e) {
        logger->error("{}", e.what());
        return 3;
    }
    return 2;
}
