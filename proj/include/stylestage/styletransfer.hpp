#pragma once

#include "stylestage/backend.hpp"
#include "stylestage/sampler.hpp"

#include <cstdint>
#include <memory>
#include <string>

namespace stylestage {

struct TransferConfig {
    double strength = 0.7;  // fraction of the schedule to re-noise to, (0, 1]
    GuidanceScales scales;
    std::uint64_t seed = 0;
    int num_steps = 50;

    void validate() const;
};

// round-half-up(strength * (T_max - 1))
int strength_to_timestep(double strength, int num_timesteps);

struct Inversion {
    LatentCode latent;
    int timestep = 0;
};

// z0 = E(content), z_t = add_noise(z0, t, eps(seed)).
Inversion invert_content(const Backend& backend, const Image& content, double strength, std::uint64_t seed);

// Structural condition extractor (depth, edge, ...). Implementations return
// features already resampled to `target`.
class StructureExtractor {
public:
    virtual ~StructureExtractor() = default;
    virtual bool supports(StructureModality modality) const = 0;
    virtual StructureCondition extract(const Image& content, StructureModality modality, TensorShape target) const = 0;
};

// Offline extractor. Depth is a gradient-magnitude pseudo-depth (central
// differences on luminance, replicate borders, area-pooled onto the latent
// grid); edge is that map thresholded to {0, 1}. Segmentation is not built in.
class BuiltinStructureExtractor final : public StructureExtractor {
public:
    explicit BuiltinStructureExtractor(double edge_threshold = 0.05) : edge_threshold_(edge_threshold) {}

    bool supports(StructureModality modality) const override;
    StructureCondition extract(const Image& content, StructureModality modality, TensorShape target) const override;

    // Per-pixel gradient magnitude (1 x H x W).
    static BasicTensor<double> gradient_magnitude(const Image& image);

private:
    double edge_threshold_;
};

// Throws UnsupportedModalityError when the extractor cannot serve `modality`.
StructureCondition extract_structure(const StructureExtractor& extractor, const Image& content,
                                     StructureModality modality, TensorShape target);

struct TransferResult {
    Image image;
    int start_timestep = 0;
    StructureModality modality = StructureModality::None;
    std::vector<int> timesteps;
};

// invert_content -> guided denoise from the start timestep (structure
// features passed at every step) -> decode. With modality None this is
// plain SDEdit.
TransferResult transfer(const Backend& backend, const StyleEmbedding& style, const Image& content,
                        const PromptBundle& prompt, const TransferConfig& config,
                        const StructureExtractor* extractor = nullptr,
                        StructureModality modality = StructureModality::None, const SampleObserver& observer = {});

}  // namespace stylestage
