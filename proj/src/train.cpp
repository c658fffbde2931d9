#include "log.hpp"
#include "unimatch/error.hpp"
#include "unimatch/f32mat.hpp"
#include "unimatch/train.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace unimatch {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kMagic = "UNIMATCH-CKPT 1\n";

void write_u64(std::ostream& out, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t read_u64(std::istream& in)
{
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        const int c = in.get();
        if (c == EOF) throw Error(ErrorCode::IncompatibleCheckpoint, "truncated header length");
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
}

json adam_json(const AdamWConfig& c)
{
    return json{{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}, {"weight_decay", c.weight_decay}};
}

} // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& ck)
{
    json header;
    header["refiner"] = ck.refiner.to_json();
    header["seed"] = ck.seed;
    header["config"] = ck.config.to_json();
    header["optimizer"] = adam_json(ck.optim.config);
    header["optimizer"]["step"] = ck.optim.step;
    header["params"] = json::array();
    for (size_t i = 0; i < ck.params.size(); ++i) {
        header["params"].push_back(
            {{"name", ck.params.names[i]}, {"rows", ck.params.values[i].rows()}, {"cols", ck.params.values[i].cols()}});
    }
    const std::string text = header.dump();

    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
        out << kMagic;
        write_u64(out, text.size());
        out << text;
        for (const auto& v : ck.params.values) write_f32mat(out, v);
        for (const auto& m : ck.optim.m) write_f64mat(out, m);
        for (const auto& v : ck.optim.v) write_f64mat(out, v);
        if (!out) throw Error(ErrorCode::IoError, "failed writing " + tmp.string());
    }
    fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open checkpoint " + path.string());
    try {
        std::string magic(std::char_traits<char>::length(kMagic), '\0');
        in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
        if (!in || magic != kMagic) throw Error(ErrorCode::IncompatibleCheckpoint, "not a checkpoint file");
        const std::uint64_t length = read_u64(in);
        if (length > (1u << 26)) throw Error(ErrorCode::IncompatibleCheckpoint, "implausible header length");
        std::string text(length, '\0');
        in.read(text.data(), static_cast<std::streamsize>(length));
        if (!in) throw Error(ErrorCode::IncompatibleCheckpoint, "truncated header");

        const json header = json::parse(text);
        Checkpoint ck;
        ck.refiner = RefinerConfig::from_json(header.at("refiner"));
        ck.seed = header.at("seed").get<std::uint64_t>();
        ck.config = RunConfig::from_json(header.at("config"));
        const json& opt = header.at("optimizer");
        ck.optim.config = {opt.at("lr").get<double>(), opt.at("beta1").get<double>(), opt.at("beta2").get<double>(),
            opt.at("eps").get<double>(), opt.at("weight_decay").get<double>()};
        ck.optim.step = opt.at("step").get<std::int64_t>();

        for (const auto& p : header.at("params")) {
            Mat v = read_f32mat(in, path.string());
            if (v.rows() != p.at("rows").get<Index>() || v.cols() != p.at("cols").get<Index>()) {
                throw Error(ErrorCode::IncompatibleCheckpoint, "parameter block shape disagrees with the header");
            }
            ck.params.names.push_back(p.at("name").get<std::string>());
            ck.params.values.push_back(std::move(v));
        }
        for (int pass = 0; pass < 2; ++pass) {
            auto& target = pass == 0 ? ck.optim.m : ck.optim.v;
            for (const auto& value : ck.params.values) {
                Mat moment = read_f64mat(in, path.string());
                if (moment.rows() != value.rows() || moment.cols() != value.cols()) {
                    throw Error(ErrorCode::IncompatibleCheckpoint, "moment block shape disagrees with its parameter");
                }
                target.push_back(std::move(moment));
            }
        }
        if (in.peek() != EOF) throw Error(ErrorCode::IncompatibleCheckpoint, "trailing bytes after the last block");
        Refiner(ck.refiner).check(ck.params);
        return ck;
    } catch (const Error& e) {
        throw Error(ErrorCode::IncompatibleCheckpoint, path.string() + ": " + e.detail());
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IncompatibleCheckpoint, path.string() + ": " + e.what());
    }
}

PairObjectiveOptions objective_options(const RunConfig& config)
{
    PairObjectiveOptions o;
    o.weights.lambda_reg = config.lambda_reg;
    o.weights.lambda_couple = config.lambda_couple;
    o.weights.lambda_rnc = config.lambda_rnc;
    o.weights.tau = config.tau;
    o.tau_p = config.tau_p;
    o.mu_commute = config.mu_commute;
    o.contrastive = config.contrastive == "supcon" ? ContrastiveKind::SupCon : ContrastiveKind::RnC;
    return o;
}

TrainResult train(const PairDataset& dataset, const RunConfig& config, const StepLogger& logger, const fs::path& failure_checkpoint)
{
    config.validate();
    if (dataset.manifest.train_pairs.empty()) throw Error(ErrorCode::SpecError, "no train pairs in the manifest");

    std::vector<Mat> inputs;
    double lambda_max = 0.0;
    for (const auto& s : dataset.shapes) {
        inputs.push_back(s.input_features(config.use_semantic, config.standardize));
        lambda_max = std::max(lambda_max, s.basis.eigvals.maxCoeff());
        if (s.basis.k() != config.basis_k) throw Error(ErrorCode::ShapeMismatch, s.name + ": basis size differs from config");
    }

    RefinerConfig rc;
    rc.in_channels = inputs.front().cols();
    rc.hidden = config.hidden;
    rc.out_channels = config.out_dim;
    rc.blocks = config.blocks;
    const Refiner refiner(rc);

    AdamWConfig adam;
    adam.lr = config.lr;
    adam.weight_decay = config.weight_decay;

    Checkpoint ck;
    ck.refiner = rc;
    ck.seed = config.seed;
    ck.config = config;
    ck.params = refiner.init(config.seed, 1.0 / lambda_max);
    ck.optim = OptimState::zeros(ck.params, adam);

    const auto& pairs = dataset.manifest.train_pairs;
    std::vector<std::optional<RankStructure>> ranks_xy(pairs.size());
    std::vector<std::optional<RankStructure>> ranks_yx(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
        ranks_xy[i] = pair_ranks(dataset.shapes[static_cast<size_t>(pairs[i].first)],
            dataset.shapes[static_cast<size_t>(pairs[i].second)]);
        if (ranks_xy[i]) ranks_yx[i] = ranks_xy[i]->transposed();
    }

    const PairObjectiveOptions options = objective_options(config);
    std::mt19937_64 rng(config.seed);
    TrainResult result;
    std::vector<size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::int64_t step = 0;

    try {
        for (int epoch = 1; epoch <= config.epochs; ++epoch) {
            std::shuffle(order.begin(), order.end(), rng);
            double epoch_total = 0.0;
            for (size_t slot : order) {
                const auto& X = dataset.shapes[static_cast<size_t>(pairs[slot].first)];
                const auto& Y = dataset.shapes[static_cast<size_t>(pairs[slot].second)];

                PairContext ctx;
                ctx.basis_x = &X.basis;
                ctx.basis_y = &Y.basis;
                if (ranks_xy[slot]) {
                    ctx.labels_x = &*X.labels;
                    ctx.labels_y = &*Y.labels;
                    ctx.ranks_xy = &*ranks_xy[slot];
                    ctx.ranks_yx = &*ranks_yx[slot];
                    ctx.anchors_x = stratified_anchors(*X.labels, config.anchors_per_step, rng);
                    ctx.anchors_y = stratified_anchors(*Y.labels, config.anchors_per_step, rng);
                }

                ad::Tape tape;
                const auto vars = refiner.bind(tape, ck.params);
                const ad::Var fx =
                    refiner.forward(vars, tape.constant(inputs[static_cast<size_t>(pairs[slot].first)]), X.basis);
                const ad::Var fy =
                    refiner.forward(vars, tape.constant(inputs[static_cast<size_t>(pairs[slot].second)]), Y.basis);
                const PairObjective obj = pair_objective(fx, fy, ctx, options);
                const LossReport report = obj.report(options.weights);

                tape.backward(obj.total);
                std::vector<Mat> grads;
                grads.reserve(vars.size());
                for (const auto& v : vars) grads.push_back(v.grad());

                // adamw_step leaves params and state untouched when it throws.
                adamw_step(ck.params, grads, ck.optim);

                ++step;
                epoch_total += report.total;
                result.steps.push_back(report);
                if (logger) {
                    json line = report.to_json();
                    line["epoch"] = epoch;
                    line["step"] = step;
                    line["pair"] = {pairs[slot].first, pairs[slot].second};
                    logger(line);
                }
            }
            result.epoch_means.push_back(epoch_total / static_cast<double>(pairs.size()));
            log().info("epoch {}/{} mean loss {:.6g}", epoch, config.epochs, result.epoch_means.back());
        }
    } catch (const Error& e) {
        // Any numeric failure mid-training (a diverged step can surface as
        // NonFinite, ZeroVector or SingularSystem) keeps the last good state.
        if (!failure_checkpoint.empty() && exit_code_for(e.code()) == 3) {
            save_checkpoint(failure_checkpoint, ck);
            log().error("training aborted, last good checkpoint written to {}", failure_checkpoint.string());
        }
        throw;
    }

    for (auto& v : ck.params.values) v = round_to_f32(v);
    result.checkpoint = std::move(ck);
    return result;
}

Mat refine_features(const Checkpoint& checkpoint, const ShapeRecord& shape)
{
    const Mat input = shape.input_features(checkpoint.config.use_semantic, checkpoint.config.standardize);
    if (input.cols() != checkpoint.refiner.in_channels) {
        throw Error(ErrorCode::DimMismatch,
            shape.name + ": " + std::to_string(input.cols()) + " input channels, checkpoint expects " +
                std::to_string(checkpoint.refiner.in_channels));
    }
    return Refiner(checkpoint.refiner).apply(checkpoint.params, input, shape.basis);
}

} // namespace unimatch
