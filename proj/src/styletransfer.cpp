#include "stylestage/styletransfer.hpp"

#include "stylestage/errors.hpp"

#include <cmath>
#include <random>

namespace stylestage {

void TransferConfig::validate() const {
    if (!(strength > 0.0 && strength <= 1.0)) {
        throw ValidationError("strength must lie in (0, 1], got " + std::to_string(strength));
    }
    if (num_steps < 1) throw ValidationError("transfer needs at least one step");
    scales.validate();
}

int strength_to_timestep(double strength, int num_timesteps) {
    if (!(strength > 0.0 && strength <= 1.0)) {
        throw ValidationError("strength must lie in (0, 1], got " + std::to_string(strength));
    }
    return static_cast<int>(std::floor(strength * (num_timesteps - 1) + 0.5));
}

Inversion invert_content(const Backend& backend, const Image& content, double strength, std::uint64_t seed) {
    const int t = strength_to_timestep(strength, backend.num_timesteps());
    const LatentCode z0 = backend.codec->encode(content);
    const NoiseTensor eps = standard_normal_latent(z0.shape, seed);
    return {add_noise(backend.schedule, z0, t, eps), t};
}

bool BuiltinStructureExtractor::supports(StructureModality modality) const {
    return modality == StructureModality::None || modality == StructureModality::Depth ||
           modality == StructureModality::Edge;
}

BasicTensor<double> BuiltinStructureExtractor::gradient_magnitude(const Image& image) {
    const int w = image.shape.width;
    const int h = image.shape.height;
    Matrix lum(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) lum(y, x) = (image.at(0, y, x) + image.at(1, y, x) + image.at(2, y, x)) / 3.0;
    }
    BasicTensor<double> mag(TensorShape{1, h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double gx = 0.5 * (lum(y, std::min(x + 1, w - 1)) - lum(y, std::max(x - 1, 0)));
            const double gy = 0.5 * (lum(std::min(y + 1, h - 1), x) - lum(std::max(y - 1, 0), x));
            mag.at(0, y, x) = std::sqrt(gx * gx + gy * gy);
        }
    }
    return mag;
}

StructureCondition BuiltinStructureExtractor::extract(const Image& content, StructureModality modality,
                                                      TensorShape target) const {
    if (!supports(modality)) {
        throw UnsupportedModalityError("builtin extractor does not support modality '" +
                                       std::string(to_string(modality)) + "'");
    }
    StructureCondition cond;
    cond.modality = modality;
    cond.features = BasicTensor<double>(TensorShape{1, target.height, target.width});
    if (modality == StructureModality::None) return cond;
    const int w = content.shape.width;
    const int h = content.shape.height;
    if (content.shape.channels != 3 || w < target.width || h < target.height) {
        throw ValidationError("cannot extract structure from image of shape " + content.shape.str());
    }
    const auto mag = gradient_magnitude(content);
    for (int ly = 0; ly < target.height; ++ly) {
        const int y0 = ly * h / target.height;
        const int y1 = (ly + 1) * h / target.height;
        for (int lx = 0; lx < target.width; ++lx) {
            const int x0 = lx * w / target.width;
            const int x1 = (lx + 1) * w / target.width;
            double sum = 0.0;
            double peak = 0.0;
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    sum += mag.at(0, y, x);
                    peak = std::max(peak, mag.at(0, y, x));
                }
            }
            cond.features.at(0, ly, lx) = modality == StructureModality::Edge
                                              ? (peak > edge_threshold_ ? 1.0 : 0.0)
                                              : sum / static_cast<double>((y1 - y0) * (x1 - x0));
        }
    }
    return cond;
}

StructureCondition extract_structure(const StructureExtractor& extractor, const Image& content,
                                     StructureModality modality, TensorShape target) {
    if (!extractor.supports(modality)) {
        throw UnsupportedModalityError("structure extractor does not support modality '" +
                                       std::string(to_string(modality)) + "'");
    }
    StructureCondition cond = extractor.extract(content, modality, target);
    if (!(cond.features.shape == target)) {
        throw ValidationError("extractor returned features of shape " + cond.features.shape.str() + ", expected " +
                              target.str());
    }
    if (!cond.features.values.allFinite()) throw NumericError("structure features are not finite");
    return cond;
}

TransferResult transfer(const Backend& backend, const StyleEmbedding& style, const Image& content,
                        const PromptBundle& prompt, const TransferConfig& config, const StructureExtractor* extractor,
                        StructureModality modality, const SampleObserver& observer) {
    config.validate();
    TransferResult result;
    result.modality = modality;

    StructureCondition structure;
    if (modality != StructureModality::None) {
        const BuiltinStructureExtractor builtin;
        structure = extract_structure(extractor != nullptr ? *extractor : builtin, content, modality,
                                      backend.denoiser->structure_shape());
    }

    Inversion inv = invert_content(backend, content, config.strength, config.seed);
    result.start_timestep = inv.timestep;
    result.timesteps = sampling_timesteps(inv.timestep, config.num_steps);
    const LatentCode z = guided_denoise(backend, style, prompt, config.scales, std::move(inv.latent), result.timesteps,
                                        modality == StructureModality::None ? nullptr : &structure, observer);
    result.image = backend.codec->decode(z);
    return result;
}

}  // namespace stylestage
