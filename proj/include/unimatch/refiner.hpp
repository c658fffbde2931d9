#pragma once

#include "unimatch/autodiff.hpp"
#include "unimatch/mesh.hpp"
#include "unimatch/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace unimatch {

struct RefinerConfig
{
    Index in_channels = 896;
    Index hidden = 256;
    Index out_channels = 256;
    int blocks = 4;

    nlohmann::json to_json() const;
    static RefinerConfig from_json(const nlohmann::json& j);
    bool operator==(const RefinerConfig&) const = default;
};

/// Ordered named parameter tensors.
struct ParamSet
{
    std::vector<std::string> names;
    std::vector<Mat> values;

    size_t size() const { return values.size(); }
    Index n_scalars() const;
    const Mat& at(const std::string& name) const;
};

/// Spectral heat-diffusion refiner. Per block: pointwise affine, per-channel
/// heat diffusion Phi diag(exp(-lambda t_c)) Phi^T M, GELU(pointwise affine).
/// A linear head maps to out_channels and rows are L2-normalized.
///
/// Parameters per block b: block{b}.w1, .b1, .time (raw, softplus-mapped),
/// .w2, .b2; then head.w, head.b.
class Refiner
{
public:
    explicit Refiner(RefinerConfig config)
        : m_config(config)
    {}

    const RefinerConfig& config() const { return m_config; }

    /// He-style uniform init (bound sqrt(6 / fan_in)), zero biases, diffusion
    /// times at softplus^-1(initial_time).
    ParamSet init(std::uint64_t seed, double initial_time) const;

    /// Puts every parameter on the tape as a gradient-tracking variable.
    std::vector<ad::Var> bind(ad::Tape& tape, const ParamSet& params) const;

    ad::Var forward(const std::vector<ad::Var>& params, const ad::Var& input, const SpectralBasis& basis) const;

    /// Forward pass on a throwaway tape.
    Mat apply(const ParamSet& params, const Mat& input, const SpectralBasis& basis) const;

    /// Validates names and shapes of a parameter set against the config.
    void check(const ParamSet& params) const;

private:
    RefinerConfig m_config;
};

/// h <- Phi (exp(-lambda softplus(t_c)) * (Phi^T M h)), per channel c.
ad::Var spectral_diffusion(const ad::Var& h, const ad::Var& raw_time, const SpectralBasis& basis);

/// softplus^-1
double inverse_softplus(double y);

struct AdamWConfig
{
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

struct OptimState
{
    AdamWConfig config;
    std::vector<Mat> m;
    std::vector<Mat> v;
    std::int64_t step = 0;

    static OptimState zeros(const ParamSet& params, AdamWConfig config);
};

/// Decoupled weight decay (theta *= 1 - lr*wd) followed by the bias-corrected
/// Adam update. Throws StepError on non-finite gradients or on results
/// outside the float32 range, leaving params and state untouched.
void adamw_step(ParamSet& params, const std::vector<Mat>& grads, OptimState& state);

/// Loss closure for gradient checks: returns the value and, when `grads` is
/// non-null, fills one gradient per parameter tensor.
using LossClosure = std::function<double(const std::vector<Mat>& params, std::vector<Mat>* grads)>;

struct GradCheckResult
{
    double max_relative_error = 0.0;
    Index checked = 0;
};

/// Central differences on a seeded random subsample (`fraction`, at least
/// `min_samples`) of parameter entries. Relative error per entry is
/// |a - n| / max(|a|, |n|, floor).
GradCheckResult grad_check(
    const LossClosure& loss,
    const std::vector<Mat>& params,
    double h,
    std::uint64_t seed = 1,
    double fraction = 0.05,
    Index min_samples = 20,
    double floor = 1e-6);

} // namespace unimatch
