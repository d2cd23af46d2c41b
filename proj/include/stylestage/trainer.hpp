#pragma once

#include "stylestage/backend.hpp"
#include "stylestage/persistence.hpp"
#include "stylestage/prompts.hpp"
#include "stylestage/stagespace.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace stylestage {

struct TrainConfig {
    int steps = 200;
    double learning_rate = 5e-3;
    int batch_size = 1;
    std::uint64_t seed = 0;
    int num_stages = 6;
    std::string base_token = "<style>";
    std::string initializer = "painting";
    std::string opening = "a painting";
    std::string suffix_template = std::string(kDefaultSuffixTemplate);
    // Adam
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate(int num_timesteps) const;
};

struct StyleExample {
    std::string id;
    Image image;
    CaptionRecord caption;
};

struct StyleDataset {
    std::vector<StyleExample> examples;

    // Throws on an empty dataset; returns warnings for empty contexts.
    std::vector<std::string> validate() const;
};

// Mutable training state: Adam moments per stage plus cached latents.
struct TrainState {
    MultiStageTokenSet tokens;
    std::vector<LatentCode> latents;
    std::vector<Vector> first_moment;
    std::vector<Vector> second_moment;
    std::vector<int> stage_updates;
    int step = 0;

    static TrainState prepare(const Backend& backend, const StyleDataset& dataset, const TrainConfig& config);
};

struct StepRecord {
    int step = 0;
    int t = 0;
    int stage = 0;
    double loss = 0.0;
    std::vector<int> images;
};

// One JSON object per line: {"step":..,"t":..,"stage":..,"loss":..}
std::string to_json_line(const StepRecord& record);

struct StageLoss {
    double loss = 0.0;
    Vector gradient;  // d loss / d injected stage embedding
};

// Noise-prediction loss ||eps - eps_theta(z_t, t, c)||^2 for one example at
// timestep t, with `injected` placed at the stage token of stage_of(t) in the
// context-aware training prompt.
StageLoss stage_loss_and_gradient(const Backend& backend, const MultiStageTokenSet& tokens,
                                  const TrainConfig& config, const StyleExample& example,
                                  const LatentCode& z0, int t, const NoiseTensor& eps, const Vector& injected);

// Draws t ~ U[0, T_max), image(s) and noise, then updates only the vectors of
// stage_of(t).
StepRecord train_step(TrainState& state, const Backend& backend, StageEmbeddingTable& table,
                      const StyleDataset& dataset, const TrainConfig& config, std::mt19937_64& rng);

// As train_step with the timestep fixed.
StepRecord train_step_at(TrainState& state, const Backend& backend, StageEmbeddingTable& table,
                         const StyleDataset& dataset, const TrainConfig& config, std::mt19937_64& rng, int t);

StageEmbeddingTable initial_table(const Backend& backend, const TrainConfig& config);

struct TrainResult {
    StyleCheckpoint checkpoint;
    std::vector<StepRecord> history;
    std::vector<std::string> warnings;

    std::vector<double> losses() const;
};

using StepCallback = std::function<void(const StepRecord&)>;

TrainResult train(const Backend& backend, const StyleDataset& dataset, const TrainConfig& config,
                  std::uint64_t backend_seed = 0, const StepCallback& on_step = {});

// Trailing-window moving average; element i averages losses[i-window+1..i].
std::vector<double> smoothed(const std::vector<double>& losses, std::size_t window);

}  // namespace stylestage
