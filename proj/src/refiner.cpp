#include "unimatch/error.hpp"
#include "unimatch/refiner.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace unimatch {

using nlohmann::json;

json RefinerConfig::to_json() const
{
    return json{{"in_channels", in_channels}, {"hidden", hidden}, {"out_channels", out_channels}, {"blocks", blocks}};
}

RefinerConfig RefinerConfig::from_json(const json& j)
{
    RefinerConfig c;
    c.in_channels = j.at("in_channels").get<Index>();
    c.hidden = j.at("hidden").get<Index>();
    c.out_channels = j.at("out_channels").get<Index>();
    c.blocks = j.at("blocks").get<int>();
    return c;
}

Index ParamSet::n_scalars() const
{
    Index total = 0;
    for (const auto& v : values) total += v.size();
    return total;
}

const Mat& ParamSet::at(const std::string& name) const
{
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw Error(ErrorCode::IncompatibleCheckpoint, "missing parameter " + name);
    return values[static_cast<size_t>(it - names.begin())];
}

double inverse_softplus(double y)
{
    return y > 30.0 ? y : std::log(std::expm1(y));
}

ParamSet Refiner::init(std::uint64_t seed, double initial_time) const
{
    if (!(initial_time > 0.0)) throw Error(ErrorCode::SpecError, "initial diffusion time must be positive");
    std::mt19937_64 rng(seed);
    auto uniform = [&](Index rows, Index cols) {
        const double bound = std::sqrt(6.0 / static_cast<double>(rows));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Mat w(rows, cols);
        for (Index r = 0; r < rows; ++r) {
            for (Index c = 0; c < cols; ++c) w(r, c) = dist(rng);
        }
        return w;
    };

    ParamSet params;
    auto push = [&](std::string name, Mat value) {
        params.names.push_back(std::move(name));
        params.values.push_back(std::move(value));
    };
    const double raw_time = inverse_softplus(initial_time);
    Index width = m_config.in_channels;
    for (int b = 0; b < m_config.blocks; ++b) {
        const std::string prefix = "block" + std::to_string(b) + ".";
        push(prefix + "w1", uniform(width, m_config.hidden));
        push(prefix + "b1", Mat::Zero(1, m_config.hidden));
        push(prefix + "time", Mat::Constant(1, m_config.hidden, raw_time));
        push(prefix + "w2", uniform(m_config.hidden, m_config.hidden));
        push(prefix + "b2", Mat::Zero(1, m_config.hidden));
        width = m_config.hidden;
    }
    push("head.w", uniform(width, m_config.out_channels));
    push("head.b", Mat::Zero(1, m_config.out_channels));
    return params;
}

void Refiner::check(const ParamSet& params) const
{
    ParamSet reference = init(0, 1.0);
    if (params.names != reference.names) {
        throw Error(ErrorCode::IncompatibleCheckpoint, "parameter names do not match the refiner layout");
    }
    for (size_t i = 0; i < params.size(); ++i) {
        if (params.values[i].rows() != reference.values[i].rows() ||
            params.values[i].cols() != reference.values[i].cols()) {
            throw Error(ErrorCode::IncompatibleCheckpoint, "parameter " + params.names[i] + " has the wrong shape");
        }
    }
}

std::vector<ad::Var> Refiner::bind(ad::Tape& tape, const ParamSet& params) const
{
    std::vector<ad::Var> vars;
    vars.reserve(params.size());
    for (const auto& v : params.values) vars.push_back(tape.variable(v));
    return vars;
}

ad::Var spectral_diffusion(const ad::Var& h, const ad::Var& raw_time, const SpectralBasis& basis)
{
    ad::Tape& tape = *h.tape();
    if (h.rows() != basis.n()) throw Error(ErrorCode::ShapeMismatch, "diffusion input rows differ from basis rows");
    ad::Var project = tape.constant(basis.eigvecs.transpose() * basis.mass.diag.asDiagonal());
    ad::Var lift = tape.constant(basis.eigvecs);
    ad::Var lambdas = tape.constant(basis.eigvals);

    ad::Var coeffs = ad::matmul(project, h);
    ad::Var times = ad::softplus(raw_time);
    ad::Var decay = ad::exp(ad::scale(ad::matmul(lambdas, times), -1.0));
    return ad::matmul(lift, ad::hadamard(coeffs, decay));
}

ad::Var Refiner::forward(const std::vector<ad::Var>& params, const ad::Var& input, const SpectralBasis& basis) const
{
    if (input.cols() != m_config.in_channels) {
        throw Error(ErrorCode::DimMismatch,
            "refiner expects " + std::to_string(m_config.in_channels) + " input channels, got " +
                std::to_string(input.cols()));
    }
    if (input.rows() != basis.n()) throw Error(ErrorCode::ShapeMismatch, "feature rows differ from basis rows");
    const size_t expected = static_cast<size_t>(m_config.blocks) * 5 + 2;
    if (params.size() != expected) throw Error(ErrorCode::ShapeMismatch, "wrong number of refiner parameters");

    ad::Var h = input;
    size_t p = 0;
    for (int b = 0; b < m_config.blocks; ++b) {
        const auto& w1 = params[p++];
        const auto& b1 = params[p++];
        const auto& time = params[p++];
        const auto& w2 = params[p++];
        const auto& b2 = params[p++];
        h = ad::add_row(ad::matmul(h, w1), b1);
        h = spectral_diffusion(h, time, basis);
        h = ad::gelu(ad::add_row(ad::matmul(h, w2), b2));
    }
    h = ad::add_row(ad::matmul(h, params[p]), params[p + 1]);
    return ad::row_normalize(h);
}

Mat Refiner::apply(const ParamSet& params, const Mat& input, const SpectralBasis& basis) const
{
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& v : params.values) vars.push_back(tape.constant(v));
    return forward(vars, tape.constant(input), basis).value();
}

OptimState OptimState::zeros(const ParamSet& params, AdamWConfig config)
{
    OptimState state;
    state.config = config;
    for (const auto& v : params.values) {
        state.m.push_back(Mat::Zero(v.rows(), v.cols()));
        state.v.push_back(Mat::Zero(v.rows(), v.cols()));
    }
    return state;
}

void adamw_step(ParamSet& params, const std::vector<Mat>& grads, OptimState& state)
{
    if (grads.size() != params.size() || state.m.size() != params.size()) {
        throw Error(ErrorCode::ShapeMismatch, "gradient/moment count differs from parameter count");
    }
    for (size_t i = 0; i < grads.size(); ++i) {
        if (grads[i].rows() != params.values[i].rows() || grads[i].cols() != params.values[i].cols()) {
            throw Error(ErrorCode::ShapeMismatch, "gradient shape differs for " + params.names[i]);
        }
        if (!grads[i].allFinite()) throw Error(ErrorCode::StepError, "non-finite gradient for " + params.names[i]);
    }

    const auto& c = state.config;
    const std::int64_t step = state.step + 1;
    const double bias1 = 1.0 - std::pow(c.beta1, static_cast<double>(step));
    const double bias2 = 1.0 - std::pow(c.beta2, static_cast<double>(step));

    std::vector<Mat> updated(params.size());
    std::vector<Mat> m(params.size());
    std::vector<Mat> v(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grads[i];
        v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grads[i].cwiseProduct(grads[i]);
        Mat m_hat = m[i] / bias1;
        Mat v_hat = v[i] / bias2;
        updated[i] = params.values[i] * (1.0 - c.lr * c.weight_decay) -
                     c.lr * m_hat.cwiseQuotient((v_hat.array().sqrt() + c.eps).matrix());
        // Parameters are stored as float32, so they must stay in its range.
        if (!updated[i].allFinite() || (updated[i].size() > 0 && updated[i].cwiseAbs().maxCoeff() > std::numeric_limits<float>::max())) {
            throw Error(ErrorCode::StepError, "non-finite or out-of-range update for " + params.names[i]);
        }
    }
    params.values = std::move(updated);
    state.m = std::move(m);
    state.v = std::move(v);
    state.step = step;
}

GradCheckResult grad_check(
    const LossClosure& loss,
    const std::vector<Mat>& params,
    double h,
    std::uint64_t seed,
    double fraction,
    Index min_samples,
    double floor)
{
    if (!(h >= 1e-7 && h <= 1e-3)) throw Error(ErrorCode::SpecError, "grad_check step must lie in [1e-7, 1e-3]");

    std::vector<Mat> analytic;
    loss(params, &analytic);
    if (analytic.size() != params.size()) throw Error(ErrorCode::ShapeMismatch, "loss returned wrong gradient count");

    std::vector<std::pair<size_t, Index>> entries;
    for (size_t t = 0; t < params.size(); ++t) {
        for (Index e = 0; e < params[t].size(); ++e) entries.emplace_back(t, e);
    }
    std::mt19937_64 rng(seed);
    std::shuffle(entries.begin(), entries.end(), rng);
    const auto wanted = std::min<Index>(static_cast<Index>(entries.size()),
        std::max<Index>(min_samples, static_cast<Index>(std::ceil(fraction * static_cast<double>(entries.size())))));
    entries.resize(static_cast<size_t>(wanted));

    GradCheckResult result;
    std::vector<Mat> probe = params;
    for (const auto& [t, e] : entries) {
        const double original = probe[t](e);
        probe[t](e) = original + h;
        const double up = loss(probe, nullptr);
        probe[t](e) = original - h;
        const double down = loss(probe, nullptr);
        probe[t](e) = original;

        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic[t](e);
        const double denom = std::max({std::abs(a), std::abs(numeric), floor});
        result.max_relative_error = std::max(result.max_relative_error, std::abs(a - numeric) / denom);
        ++result.checked;
    }
    return result;
}

} // namespace unimatch
