#pragma once

#include "unimatch/config.hpp"
#include "unimatch/dataset.hpp"
#include "unimatch/losses.hpp"
#include "unimatch/refiner.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace unimatch {

/// Trained refiner plus optimizer state. On disk: the line
/// "UNIMATCH-CKPT 1", a little-endian u64 header length, a JSON header, then
/// one F32M block per parameter and F64M blocks for the Adam moments.
struct Checkpoint
{
    RefinerConfig refiner;
    ParamSet params;
    OptimState optim;
    std::uint64_t seed = 0;
    RunConfig config;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Throws IncompatibleCheckpoint for a foreign, truncated or mismatched file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

PairObjectiveOptions objective_options(const RunConfig& config);

struct TrainResult
{
    Checkpoint checkpoint;
    std::vector<LossReport> steps;
    /// Mean total loss per epoch.
    std::vector<double> epoch_means;
};

/// Called once per optimizer step with the JSON log record.
using StepLogger = std::function<void(const nlohmann::json&)>;

/// Seeded training over the dataset's train pairs. Parameters are rounded
/// to float32 after the last step so the in-memory result equals what a
/// checkpoint stores. On a numeric failure the last good checkpoint is
/// written to `failure_checkpoint` (when non-empty) before rethrowing.
TrainResult train(
    const PairDataset& dataset,
    const RunConfig& config,
    const StepLogger& logger = {},
    const std::filesystem::path& failure_checkpoint = {});

/// Refined features of one shape under a checkpoint's parameters.
Mat refine_features(const Checkpoint& checkpoint, const ShapeRecord& shape);

} // namespace unimatch
