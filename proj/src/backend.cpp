#include "stylestage/backend.hpp"

#include "stylestage/digest.hpp"

#include <algorithm>
#include <random>
#include <utility>

namespace stylestage {

NoiseSchedule::NoiseSchedule(Vector betas) : betas_(std::move(betas)) {
    if (betas_.size() == 0) throw ValidationError("noise schedule is empty");
    alpha_bars_.resize(betas_.size());
    double running = 1.0;
    for (Eigen::Index t = 0; t < betas_.size(); ++t) {
        const double beta = betas_(t);
        if (!(beta > 0.0 && beta < 1.0)) {
            throw ValidationError("beta_" + std::to_string(t) + " = " + std::to_string(beta) + " outside (0, 1)");
        }
        running *= 1.0 - beta;
        alpha_bars_(t) = running;
    }
}

NoiseSchedule NoiseSchedule::linear(int num_timesteps, double beta_start, double beta_end) {
    if (num_timesteps < 1) throw ValidationError("noise schedule needs at least one timestep");
    if (num_timesteps == 1) return NoiseSchedule(Vector::Constant(1, beta_start));
    return NoiseSchedule(Vector::LinSpaced(num_timesteps, beta_start, beta_end));
}

LatentCode add_noise(const NoiseSchedule& schedule, const LatentCode& z0, int t, const NoiseTensor& eps) {
    if (!(z0.shape == eps.shape) || z0.values.size() != eps.values.size()) {
        throw ValidationError("noise shape " + eps.shape.str() + " does not match latent shape " + z0.shape.str());
    }
    return {z0.shape, add_noise(schedule.alpha_bar(t), z0.values, eps.values)};
}

std::string_view to_string(StructureModality modality) {
    switch (modality) {
        case StructureModality::None: return "none";
        case StructureModality::Depth: return "depth";
        case StructureModality::Edge: return "edge";
        case StructureModality::Segmentation: return "seg";
    }
    return "none";
}

StructureModality parse_modality(std::string_view text) {
    if (text == "none") return StructureModality::None;
    if (text == "depth") return StructureModality::Depth;
    if (text == "edge") return StructureModality::Edge;
    if (text == "seg" || text == "segmentation") return StructureModality::Segmentation;
    throw ValidationError("unknown structure modality '" + std::string(text) + "'");
}

Matrix Denoiser::predict_vjp(const LatentCode&, int, const ConditioningVector&, const StructureCondition*,
                             const Vector&) const {
    throw ValidationError("denoiser is not differentiable with respect to its conditioning");
}

std::uint64_t Backend::weights_digest() const {
    std::uint64_t h = denoiser->weights_digest();
    h ^= encoder->weights_digest() + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h;
}

double base_loss(const Denoiser& denoiser, const NoiseSchedule& schedule, const LatentCode& z0, int t,
                 const NoiseTensor& eps, const ConditioningVector& cond, const StructureCondition* structure) {
    const LatentCode z_t = add_noise(schedule, z0, t, eps);
    const NoiseTensor pred = denoiser.predict(z_t, t, cond, structure);
    return (eps.values - pred.values).squaredNorm() / static_cast<double>(eps.values.size());
}

LossWithGradient base_loss_with_grad(const Denoiser& denoiser, const NoiseSchedule& schedule, const LatentCode& z0,
                                     int t, const NoiseTensor& eps, const ConditioningVector& cond,
                                     const StructureCondition* structure) {
    const LatentCode z_t = add_noise(schedule, z0, t, eps);
    const NoiseTensor pred = denoiser.predict(z_t, t, cond, structure);
    const Vector residual = eps.values - pred.values;
    const auto n = static_cast<double>(residual.size());
    LossWithGradient out;
    out.loss = residual.squaredNorm() / n;
    const Vector upstream = (-2.0 / n) * residual;
    out.cond_grad = denoiser.predict_vjp(z_t, t, cond, structure, upstream);
    return out;
}

namespace {

Matrix gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * normal(rng);
    return m;
}

}  // namespace

ToyLatentCodec::ToyLatentCodec(std::uint64_t seed, TensorShape latent, int image_scale)
    : latent_(latent), scale_(image_scale) {
    if (latent.channels < 3 || latent.height < 1 || latent.width < 1 || image_scale < 1) {
        throw ValidationError("toy codec needs >= 3 latent channels and a positive scale");
    }
    std::mt19937_64 rng(seed);
    // Identity block keeps the mix well conditioned.
    mix_ = gaussian(rng, latent.channels, 3, 0.5);
    mix_.topRows(3) += 2.0 * Matrix::Identity(3, 3);
    unmix_ = (mix_.transpose() * mix_).ldlt().solve(mix_.transpose());
}

LatentCode ToyLatentCodec::encode(const Image& image) const {
    const int w = image.shape.width;
    const int h = image.shape.height;
    if (image.shape.channels != 3 || w < latent_.width || h < latent_.height) {
        throw ValidationError("toy codec cannot encode image of shape " + image.shape.str());
    }
    if (!image.values.allFinite()) throw ValidationError("image has non-finite pixels");
    LatentCode z(latent_);
    for (int ly = 0; ly < latent_.height; ++ly) {
        const int y0 = ly * h / latent_.height;
        const int y1 = (ly + 1) * h / latent_.height;
        for (int lx = 0; lx < latent_.width; ++lx) {
            const int x0 = lx * w / latent_.width;
            const int x1 = (lx + 1) * w / latent_.width;
            Eigen::Vector3d mean = Eigen::Vector3d::Zero();
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    for (int c = 0; c < 3; ++c) mean(c) += image.at(c, y, x);
                }
            }
            mean /= static_cast<double>((y1 - y0) * (x1 - x0));
            const Vector mixed = mix_ * (mean.array() - 0.5).matrix();
            for (int c = 0; c < latent_.channels; ++c) z.at(c, ly, lx) = mixed(c);
        }
    }
    return z;
}

Image ToyLatentCodec::decode(const LatentCode& latent) const {
    if (!(latent.shape == latent_)) {
        throw ValidationError("latent shape " + latent.shape.str() + " does not match codec " + latent_.str());
    }
    Image img = make_image(image_width(), image_height());
    Vector cell(latent_.channels);
    for (int ly = 0; ly < latent_.height; ++ly) {
        for (int lx = 0; lx < latent_.width; ++lx) {
            for (int c = 0; c < latent_.channels; ++c) cell(c) = latent.at(c, ly, lx);
            const Eigen::Vector3d rgb = (unmix_ * cell).array() + 0.5;
            for (int y = ly * scale_; y < (ly + 1) * scale_; ++y) {
                for (int x = lx * scale_; x < (lx + 1) * scale_; ++x) {
                    for (int c = 0; c < 3; ++c) img.at(c, y, x) = rgb(c);
                }
            }
        }
    }
    return img;
}

ToyDenoiser::ToyDenoiser(std::uint64_t seed, NoiseSchedule schedule, TensorShape latent, int sequence_length,
                         int cond_dim, ToyDenoiserOptions options)
    : schedule_(std::move(schedule)),
      latent_(latent),
      sequence_length_(sequence_length),
      cond_dim_(cond_dim),
      options_(options) {
    if (latent.size() == 0 || sequence_length < 1 || cond_dim < 1) throw ValidationError("invalid toy denoiser geometry");
    if (!(options.prior_variance > 0.0)) throw ValidationError("prior variance must be positive");
    std::mt19937_64 rng(seed);
    const Eigen::Index n = latent.size();

    pool_ = Vector::Constant(sequence_length, 1.0 / sequence_length);

    // Low-frequency cosine patterns, one channel each, cycling through
    // (channel, mode) pairs; unit RMS over the spatial grid.
    const std::pair<int, int> modes[] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 0}, {0, 2}, {2, 1}, {1, 2}};
    const int num_modes = static_cast<int>(std::size(modes));
    Matrix patterns = Matrix::Zero(n, cond_dim);
    for (int j = 0; j < cond_dim; ++j) {
        const int c = j % latent.channels;
        const auto [kx, ky] = modes[(j / latent.channels) % num_modes];
        for (int y = 0; y < latent.height; ++y) {
            for (int x = 0; x < latent.width; ++x) {
                patterns(latent.index(c, y, x), j) = std::cos(M_PI * kx * (x + 0.5) / latent.width) *
                                                     std::cos(M_PI * ky * (y + 0.5) / latent.height);
            }
        }
        const double rms = std::sqrt(patterns.col(j).squaredNorm() / (latent.height * latent.width));
        patterns.col(j) /= rms;
    }
    basis_ = patterns * gaussian(rng, cond_dim, cond_dim, 1.0 / std::sqrt(static_cast<double>(cond_dim)));
    offset_ = gaussian(rng, n, 1, 0.1);
    residual_ = gaussian(rng, n, n, 1.0 / std::sqrt(static_cast<double>(n)));
    time_dir_ = gaussian(rng, n, 1, 1.0);
    structure_proj_ = gaussian(rng, latent.channels, 1, 0.5);
}

double ToyDenoiser::gain(int t) const {
    const double a2 = schedule_.alpha_bar(t);
    const double b = std::sqrt(1.0 - a2);
    return b / (a2 * options_.prior_variance + b * b);
}

void ToyDenoiser::check_inputs(const LatentCode& z_t, const ConditioningVector& cond,
                               const StructureCondition* structure) const {
    if (!(z_t.shape == latent_) || z_t.values.size() != latent_.size()) {
        throw ValidationError("latent shape " + z_t.shape.str() + " does not match denoiser " + latent_.str());
    }
    if (cond.values.rows() != sequence_length_ || cond.values.cols() != cond_dim_) {
        throw ValidationError("conditioning is " + std::to_string(cond.values.rows()) + "x" +
                              std::to_string(cond.values.cols()) + ", denoiser expects " +
                              std::to_string(sequence_length_) + "x" + std::to_string(cond_dim_));
    }
    if (structure != nullptr && structure->modality != StructureModality::None &&
        !(structure->features.shape == structure_shape())) {
        throw ValidationError("structure features " + structure->features.shape.str() + " do not match " +
                              structure_shape().str());
    }
}

Vector ToyDenoiser::style_mean(const ConditioningVector& cond) const {
    const Vector pooled = cond.values.transpose() * pool_;
    return options_.mean_scale * (basis_ * pooled) + offset_;
}

NoiseTensor ToyDenoiser::predict(const LatentCode& z_t, int t, const ConditioningVector& cond,
                                 const StructureCondition* structure) const {
    check_inputs(z_t, cond, structure);
    const double a = std::sqrt(schedule_.alpha_bar(t));
    const double phase = static_cast<double>(t) / schedule_.num_timesteps();
    NoiseTensor eps(latent_);
    eps.values = gain(t) * (z_t.values - a * style_mean(cond)) +
                 options_.residual_gain * (residual_ * z_t.values + phase * time_dir_).array().tanh().matrix();
    if (structure != nullptr && structure->modality != StructureModality::None) {
        for (int c = 0; c < latent_.channels; ++c) {
            for (int y = 0; y < latent_.height; ++y) {
                for (int x = 0; x < latent_.width; ++x) {
                    eps.at(c, y, x) += structure_proj_(c) * structure->features.at(0, y, x);
                }
            }
        }
    }
    return eps;
}

Matrix ToyDenoiser::predict_vjp(const LatentCode& z_t, int t, const ConditioningVector& cond,
                                const StructureCondition* structure, const Vector& upstream) const {
    check_inputs(z_t, cond, structure);
    if (upstream.size() != latent_.size()) throw ValidationError("upstream gradient size mismatch");
    const double a = std::sqrt(schedule_.alpha_bar(t));
    const Vector mean_grad = -gain(t) * a * upstream;
    const Vector pooled_grad = options_.mean_scale * (basis_.transpose() * mean_grad);
    return pool_ * pooled_grad.transpose();
}

std::uint64_t ToyDenoiser::weights_digest() const {
    std::uint64_t h = fnv1a(pool_);
    h = fnv1a(basis_, h);
    h = fnv1a(offset_, h);
    h = fnv1a(residual_, h);
    h = fnv1a(time_dir_, h);
    return fnv1a(structure_proj_, h);
}

Backend toy_backend(std::uint64_t seed, const ToyBackendOptions& options) {
    std::mt19937_64 master(seed);
    const std::uint64_t encoder_seed = master();
    const std::uint64_t denoiser_seed = master();
    const std::uint64_t codec_seed = master();
    NoiseSchedule schedule = NoiseSchedule::linear(options.num_timesteps, options.beta_start, options.beta_end);
    auto encoder = std::make_shared<ToyTextEncoder>(encoder_seed, options.encoder);
    auto denoiser = std::make_shared<ToyDenoiser>(denoiser_seed, schedule, options.latent, encoder->sequence_length(),
                                                  encoder->cond_dim(), options.denoiser);
    auto codec = std::make_shared<ToyLatentCodec>(codec_seed, options.latent, options.image_scale);
    return Backend{"toy", std::move(denoiser), std::move(codec), std::move(encoder), std::move(schedule)};
}

}  // namespace stylestage
