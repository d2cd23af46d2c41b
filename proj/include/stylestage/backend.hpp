#pragma once

#include "stylestage/errors.hpp"
#include "stylestage/image.hpp"
#include "stylestage/tensor.hpp"
#include "stylestage/textcond.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

namespace stylestage {

// Forward-process parameters: beta_t and the cumulative products
// alpha_bar_t = prod_{s<=t} (1 - beta_s).
class NoiseSchedule {
public:
    explicit NoiseSchedule(Vector betas);
    static NoiseSchedule linear(int num_timesteps, double beta_start = 1e-4, double beta_end = 0.02);

    int num_timesteps() const noexcept { return static_cast<int>(betas_.size()); }
    double beta(int t) const { return betas_(check(t)); }
    double alpha_bar(int t) const { return alpha_bars_(check(t)); }
    const Vector& betas() const noexcept { return betas_; }
    const Vector& alpha_bars() const noexcept { return alpha_bars_; }

    int check(int t) const {
        if (t < 0 || t >= num_timesteps()) {
            throw RangeError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(num_timesteps()) + ")");
        }
        return t;
    }

private:
    Vector betas_;
    Vector alpha_bars_;
};

// z_t = sqrt(alpha_bar) z0 + sqrt(1 - alpha_bar) eps, as an Eigen expression.
template <typename D1, typename D2>
auto add_noise(double alpha_bar, const Eigen::MatrixBase<D1>& z0, const Eigen::MatrixBase<D2>& eps) {
    return std::sqrt(alpha_bar) * z0 + std::sqrt(1.0 - alpha_bar) * eps;
}

LatentCode add_noise(const NoiseSchedule& schedule, const LatentCode& z0, int t, const NoiseTensor& eps);

enum class StructureModality { None, Depth, Edge, Segmentation };

std::string_view to_string(StructureModality modality);
// Accepts "none", "depth", "edge", "seg"/"segmentation".
StructureModality parse_modality(std::string_view text);

// Spatial features aligned with the latent grid, injected into the denoiser
// as an additive conditioning stream.
struct StructureCondition {
    StructureModality modality = StructureModality::None;
    BasicTensor<double> features;
};

// Noise predictor eps_theta(z_t, t, c, structure).
class Denoiser {
public:
    virtual ~Denoiser() = default;

    virtual TensorShape latent_shape() const = 0;
    virtual TensorShape structure_shape() const = 0;
    virtual bool differentiable() const = 0;

    virtual NoiseTensor predict(const LatentCode& z_t, int t, const ConditioningVector& cond,
                                const StructureCondition* structure = nullptr) const = 0;

    // d<upstream, predict(...)> / d cond.values
    virtual Matrix predict_vjp(const LatentCode& z_t, int t, const ConditioningVector& cond,
                               const StructureCondition* structure, const Vector& upstream) const;

    virtual std::uint64_t weights_digest() const = 0;
};

// Latent codec E / D.
class LatentCodec {
public:
    virtual ~LatentCodec() = default;
    virtual TensorShape latent_shape() const = 0;
    virtual LatentCode encode(const Image& image) const = 0;
    virtual Image decode(const LatentCode& latent) const = 0;
};

// Frozen components sampled, trained against and decoded through together.
struct Backend {
    std::string name;
    std::shared_ptr<const Denoiser> denoiser;
    std::shared_ptr<const LatentCodec> codec;
    std::shared_ptr<const TextEncoder> encoder;
    NoiseSchedule schedule;

    TensorShape latent_shape() const { return denoiser->latent_shape(); }
    int num_timesteps() const { return schedule.num_timesteps(); }
    std::uint64_t weights_digest() const;
};

// Mean squared error ||eps - eps_theta(z_t, t, c)||^2 / N with
// z_t = add_noise(z0, t, eps).
double base_loss(const Denoiser& denoiser, const NoiseSchedule& schedule, const LatentCode& z0, int t,
                 const NoiseTensor& eps, const ConditioningVector& cond,
                 const StructureCondition* structure = nullptr);

struct LossWithGradient {
    double loss = 0.0;
    Matrix cond_grad;  // d loss / d cond.values
};

LossWithGradient base_loss_with_grad(const Denoiser& denoiser, const NoiseSchedule& schedule, const LatentCode& z0,
                                     int t, const NoiseTensor& eps, const ConditioningVector& cond,
                                     const StructureCondition* structure = nullptr);

struct ToyDenoiserOptions {
    double prior_variance = 0.25;
    double mean_scale = 3.0;
    double residual_gain = 0.05;
};

struct ToyBackendOptions {
    int num_timesteps = 50;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    TensorShape latent{4, 8, 8};
    int image_scale = 32;
    ToyTextEncoderOptions encoder;
    ToyDenoiserOptions denoiser;
};

// Worst per-pixel deviation tolerated when comparing a toy pipeline output
// with the codec round trip of its input. Covers 8-bit PNG quantisation
// (1/510) and the residual noise left by re-noising at t = 0.
inline constexpr double kToyCodecTolerance = 0.02;

// Toy latent codec: area-average the image onto the latent grid, centre,
// mix RGB into the latent channels with a fixed full-rank matrix. Decode
// inverts the mix and upsamples by image_scale (nearest). D(E(x)) is the
// block-mean projection of x, exact to 1e-12 for block-constant images.
class ToyLatentCodec final : public LatentCodec {
public:
    ToyLatentCodec(std::uint64_t seed, TensorShape latent, int image_scale);

    TensorShape latent_shape() const override { return latent_; }
    LatentCode encode(const Image& image) const override;
    Image decode(const LatentCode& latent) const override;

    int image_width() const { return latent_.width * scale_; }
    int image_height() const { return latent_.height * scale_; }

private:
    TensorShape latent_;
    int scale_;
    Matrix mix_;      // latent channels x 3
    Matrix unmix_;    // 3 x latent channels, left inverse of mix_
};

// Differentiable toy noise predictor. The conditioning is pooled over
// sequence positions and mapped onto a low-frequency latent "style mean"
// mu(c); the prediction is the posterior-mean noise for a Gaussian latent
// prior centred at mu(c), plus a small fixed nonlinear residual in z_t and
// a linear projection of the structure features.
class ToyDenoiser final : public Denoiser {
public:
    ToyDenoiser(std::uint64_t seed, NoiseSchedule schedule, TensorShape latent, int sequence_length, int cond_dim,
                ToyDenoiserOptions options = {});

    TensorShape latent_shape() const override { return latent_; }
    TensorShape structure_shape() const override { return {1, latent_.height, latent_.width}; }
    bool differentiable() const override { return true; }

    NoiseTensor predict(const LatentCode& z_t, int t, const ConditioningVector& cond,
                        const StructureCondition* structure = nullptr) const override;
    Matrix predict_vjp(const LatentCode& z_t, int t, const ConditioningVector& cond,
                       const StructureCondition* structure, const Vector& upstream) const override;
    std::uint64_t weights_digest() const override;

    Vector style_mean(const ConditioningVector& cond) const;

private:
    void check_inputs(const LatentCode& z_t, const ConditioningVector& cond, const StructureCondition* structure) const;
    double gain(int t) const;

    NoiseSchedule schedule_;
    TensorShape latent_;
    int sequence_length_;
    int cond_dim_;
    ToyDenoiserOptions options_;
    Vector pool_;        // sequence_length
    Matrix basis_;       // N x cond_dim, low-frequency latent patterns
    Vector offset_;      // N
    Matrix residual_;    // N x N
    Vector time_dir_;    // N
    Vector structure_proj_;  // latent channels
};

Backend toy_backend(std::uint64_t seed, const ToyBackendOptions& options = {});

}  // namespace stylestage
