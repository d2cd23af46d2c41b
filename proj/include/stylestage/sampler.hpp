#pragma once

#include "stylestage/backend.hpp"
#include "stylestage/guidance.hpp"
#include "stylestage/prompts.hpp"
#include "stylestage/stagespace.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace stylestage {

// What the sampler did at one visited timestep.
struct StepTrace {
    int step = 0;
    int t = 0;
    int stage = 0;
    Eigen::VectorXf injected;             // stage embedding placed at the placeholder
    std::vector<PromptVariant> passes;    // denoiser evaluations, in order
};

using SampleObserver = std::function<void(const StepTrace&)>;

// `count` timesteps evenly spaced from `start` down to 0 (rounded, strictly
// decreasing). count is clamped to start + 1.
std::vector<int> sampling_timesteps(int start, int count);

// A style ready for sampling: tokens plus the learned table.
struct StyleEmbedding {
    MultiStageTokenSet tokens;
    StageEmbeddingTable table;
};

struct SampleOptions {
    PromptBundle prompt;
    GuidanceScales scales;
    int num_steps = 50;
    std::uint64_t seed = 0;
};

// Deterministic (eta = 0) DDIM loop from z over the given descending
// timesteps. Each step conditions on the stage-t embedding, evaluates the
// required guidance passes and applies compose_guidance.
LatentCode guided_denoise(const Backend& backend, const StyleEmbedding& style, const PromptBundle& prompt,
                          const GuidanceScales& scales, LatentCode z, std::span<const int> timesteps,
                          const StructureCondition* structure = nullptr, const SampleObserver& observer = {});

LatentCode standard_normal_latent(TensorShape shape, std::uint64_t seed);

// Text-to-image: seeded Gaussian latent, guided denoise from T_max - 1,
// decode.
Image sample(const Backend& backend, const StyleEmbedding& style, const SampleOptions& options,
             const StructureCondition* structure = nullptr, const SampleObserver& observer = {});

}  // namespace stylestage
