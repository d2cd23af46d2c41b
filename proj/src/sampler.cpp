#include "stylestage/sampler.hpp"

#include "stylestage/errors.hpp"

#include <cmath>
#include <map>
#include <random>
#include <sstream>

namespace stylestage {

std::vector<int> sampling_timesteps(int start, int count) {
    if (start < 0) throw RangeError("sampling start timestep " + std::to_string(start) + " is negative");
    if (count < 1) throw ValidationError("number of sampling steps must be positive");
    count = std::min(count, start + 1);
    std::vector<int> ts;
    ts.reserve(static_cast<std::size_t>(count));
    if (count == 1) return {start};
    for (int i = 0; i < count; ++i) {
        ts.push_back(static_cast<int>(std::lround(start - static_cast<double>(i) * start / (count - 1))));
    }
    return ts;
}

LatentCode standard_normal_latent(TensorShape shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    LatentCode z(shape);
    for (Eigen::Index i = 0; i < z.values.size(); ++i) z.values(i) = normal(rng);
    return z;
}

namespace {

struct StageConditioning {
    ConditioningVector full;
    ConditioningVector style;
};

}  // namespace

LatentCode guided_denoise(const Backend& backend, const StyleEmbedding& style, const PromptBundle& prompt,
                          const GuidanceScales& scales, LatentCode z, std::span<const int> timesteps,
                          const StructureCondition* structure, const SampleObserver& observer) {
    scales.validate();
    const auto& table = style.table;
    if (table.schedule().num_timesteps() != backend.num_timesteps()) {
        throw ValidationError("style schedule has " + std::to_string(table.schedule().num_timesteps()) +
                              " timesteps, backend has " + std::to_string(backend.num_timesteps()));
    }
    if (table.dim() != backend.encoder->token_dim()) {
        throw ValidationError("style embedding dimension does not match the backend text encoder");
    }
    for (std::size_t i = 1; i < timesteps.size(); ++i) {
        if (timesteps[i] >= timesteps[i - 1]) throw ValidationError("sampling timesteps must strictly decrease");
    }

    const auto& encoder = *backend.encoder;
    const std::string full_prompt = build_inference_prompt(prompt, style.tokens);
    const GuidancePrompts parts = split_for_guidance(full_prompt, prompt.style_suffix_template);
    const TokenSequence full_seq = encoder.tokenize(full_prompt);
    const TokenSequence style_seq = encoder.tokenize(parts.style);
    const ConditioningVector context_cond = encode_injected(encoder, encoder.tokenize(parts.context), style.tokens,
                                                            Vector(), PromptVariant::ContextOnly);
    const ConditioningVector& null_cond = encode_null(encoder);
    const GuidancePasses passes = required_passes(scales);

    std::map<int, StageConditioning> per_stage;
    for (std::size_t i = 0; i < timesteps.size(); ++i) {
        const int t = timesteps[i];
        const int stage = table.schedule().stage_of(t);
        auto it = per_stage.find(stage);
        if (it == per_stage.end()) {
            const Vector injected = table[stage].cast<double>();
            it = per_stage
                     .emplace(stage, StageConditioning{
                                         encode_injected(encoder, full_seq, style.tokens, injected, PromptVariant::Full),
                                         encode_injected(encoder, style_seq, style.tokens, injected,
                                                         PromptVariant::StyleOnly)})
                     .first;
        }

        StepTrace trace;
        trace.step = static_cast<int>(i);
        trace.t = t;
        trace.stage = stage;
        trace.injected = table[stage];

        GuidanceInputs in;
        in.null = backend.denoiser->predict(z, t, null_cond, structure);
        trace.passes.push_back(PromptVariant::Null);
        // Skipped passes only feed zero-scale terms, so eps(null) stands in.
        in.full = in.style = in.context = in.null;
        if (passes.full) {
            in.full = backend.denoiser->predict(z, t, it->second.full, structure);
            trace.passes.push_back(PromptVariant::Full);
        }
        if (passes.style) {
            in.style = backend.denoiser->predict(z, t, it->second.style, structure);
            trace.passes.push_back(PromptVariant::StyleOnly);
        }
        if (passes.context) {
            in.context = backend.denoiser->predict(z, t, context_cond, structure);
            trace.passes.push_back(PromptVariant::ContextOnly);
        }
        const NoiseTensor eps = compose_guidance(in, scales);

        const double alpha_bar = backend.schedule.alpha_bar(t);
        const double alpha_prev = i + 1 < timesteps.size() ? backend.schedule.alpha_bar(timesteps[i + 1]) : 1.0;
        const Vector x0 = (z.values - std::sqrt(1.0 - alpha_bar) * eps.values) / std::sqrt(alpha_bar);
        z.values = std::sqrt(alpha_prev) * x0 + std::sqrt(1.0 - alpha_prev) * eps.values;
        if (!z.values.allFinite()) {
            std::ostringstream msg;
            msg << "latent became non-finite at step " << i << " (t=" << t << ", stage=" << stage << ")";
            throw NumericError(msg.str());
        }
        if (observer) observer(trace);
    }
    return z;
}

Image sample(const Backend& backend, const StyleEmbedding& style, const SampleOptions& options,
             const StructureCondition* structure, const SampleObserver& observer) {
    if (options.num_steps < 1 || options.num_steps > backend.num_timesteps()) {
        throw ValidationError("num_steps must lie in [1, " + std::to_string(backend.num_timesteps()) + "], got " +
                              std::to_string(options.num_steps));
    }
    const auto timesteps = sampling_timesteps(backend.num_timesteps() - 1, options.num_steps);
    LatentCode z = standard_normal_latent(backend.latent_shape(), options.seed);
    z = guided_denoise(backend, style, options.prompt, options.scales, std::move(z), timesteps, structure, observer);
    return backend.codec->decode(z);
}

}  // namespace stylestage
