#include "stylestage/trainer.hpp"

#include "stylestage/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <numeric>
#include <sstream>

namespace stylestage {

void TrainConfig::validate(int num_timesteps) const {
    if (steps < 0) throw ConfigError("steps must be non-negative, got " + std::to_string(steps));
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate must be finite and non-negative");
    }
    if (batch_size < 1) throw ConfigError("batch_size must be positive, got " + std::to_string(batch_size));
    if (num_stages < 1 || num_stages > num_timesteps) {
        throw ConfigError("stage count must lie in [1, " + std::to_string(num_timesteps) + "], got " +
                          std::to_string(num_stages));
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
        throw ConfigError("invalid Adam hyperparameters");
    }
    try {
        PromptBundle{opening, "", suffix_template}.validate();
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
}

std::vector<std::string> StyleDataset::validate() const {
    if (examples.empty()) throw ValidationError("style dataset has no images");
    std::vector<std::string> warnings;
    for (const auto& ex : examples) {
        if (normalize_whitespace(ex.caption.effective()).empty()) {
            warnings.push_back("image '" + ex.id + "' has an empty context caption; using the vanilla prompt");
        }
    }
    return warnings;
}

TrainState TrainState::prepare(const Backend& backend, const StyleDataset& dataset, const TrainConfig& config) {
    config.validate(backend.num_timesteps());
    dataset.validate();
    TrainState state;
    state.tokens = MultiStageTokenSet::derive(config.base_token, config.num_stages);
    validate_token_set(*backend.encoder, state.tokens);
    for (const auto& ex : dataset.examples) state.latents.push_back(backend.codec->encode(ex.image));
    const auto d = backend.encoder->token_dim();
    state.first_moment.assign(static_cast<std::size_t>(config.num_stages), Vector::Zero(d));
    state.second_moment.assign(static_cast<std::size_t>(config.num_stages), Vector::Zero(d));
    state.stage_updates.assign(static_cast<std::size_t>(config.num_stages), 0);
    return state;
}

std::string to_json_line(const StepRecord& record) {
    nlohmann::json j = {{"step", record.step}, {"t", record.t}, {"stage", record.stage}, {"loss", record.loss}};
    return j.dump();
}

StageLoss stage_loss_and_gradient(const Backend& backend, const MultiStageTokenSet& tokens,
                                  const TrainConfig& config, const StyleExample& example,
                                  const LatentCode& z0, int t, const NoiseTensor& eps, const Vector& injected) {
    const StageSchedule schedule(tokens.size(), backend.num_timesteps());
    const int stage = schedule.stage_of(t);
    const PromptBundle bundle{config.opening, example.caption.effective(), config.suffix_template};
    const TokenSequence seq = backend.encoder->tokenize(build_training_prompt(bundle, tokens, stage));
    const auto slot = seq.placeholder();
    if (!slot) throw StructureError("training prompt lost its style placeholder");

    const ConditioningVector cond = encode_injected(*backend.encoder, seq, tokens, injected);
    const LossWithGradient lg = base_loss_with_grad(*backend.denoiser, backend.schedule, z0, t, eps, cond);
    EmbeddingOverride overrides{{slot->first, injected}};
    return {lg.loss, backend.encoder->encode_vjp(seq, overrides, slot->first, lg.cond_grad)};
}

namespace {

NoiseTensor draw_noise(TensorShape shape, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    NoiseTensor eps(shape);
    for (Eigen::Index i = 0; i < eps.values.size(); ++i) eps.values(i) = normal(rng);
    return eps;
}

}  // namespace

StepRecord train_step_at(TrainState& state, const Backend& backend, StageEmbeddingTable& table,
                         const StyleDataset& dataset, const TrainConfig& config, std::mt19937_64& rng, int t) {
    const int stage = table.schedule().stage_of(t);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(dataset.examples.size()) - 1);

    StepRecord record;
    record.step = state.step;
    record.t = t;
    record.stage = stage;

    const Vector injected = table[stage].cast<double>();
    Vector grad = Vector::Zero(injected.size());
    double loss = 0.0;
    for (int b = 0; b < config.batch_size; ++b) {
        const int index = pick(rng);
        const NoiseTensor eps = draw_noise(backend.latent_shape(), rng);
        const auto sl = stage_loss_and_gradient(backend, state.tokens, config, dataset.examples[static_cast<std::size_t>(index)],
                                                state.latents[static_cast<std::size_t>(index)], t, eps, injected);
        loss += sl.loss;
        grad += sl.gradient;
        record.images.push_back(index);
    }
    loss /= config.batch_size;
    grad /= config.batch_size;
    record.loss = loss;

    if (!std::isfinite(loss) || !grad.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite loss at step " << state.step << " (t=" << t << ", stage=" << stage << ", loss=" << loss << ")";
        throw NumericError(msg.str());
    }

    // Adam on the active stage only; other stages keep their moments and
    // vectors untouched.
    const auto k = static_cast<std::size_t>(stage);
    Vector& m = state.first_moment[k];
    Vector& v = state.second_moment[k];
    const int count = ++state.stage_updates[k];
    m = config.beta1 * m + (1.0 - config.beta1) * grad;
    v = config.beta2 * v + (1.0 - config.beta2) * grad.cwiseAbs2();
    const double m_corr = 1.0 - std::pow(config.beta1, count);
    const double v_corr = 1.0 - std::pow(config.beta2, count);
    const Vector update =
        config.learning_rate * (m / m_corr).cwiseQuotient(((v / v_corr).cwiseSqrt().array() + config.epsilon).matrix());
    table[stage] = (injected - update).cast<float>();
    ++state.step;
    return record;
}

StepRecord train_step(TrainState& state, const Backend& backend, StageEmbeddingTable& table,
                      const StyleDataset& dataset, const TrainConfig& config, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick_t(0, backend.num_timesteps() - 1);
    const int t = pick_t(rng);
    return train_step_at(state, backend, table, dataset, config, rng, t);
}

StageEmbeddingTable initial_table(const Backend& backend, const TrainConfig& config) {
    config.validate(backend.num_timesteps());
    const StageSchedule schedule(config.num_stages, backend.num_timesteps());
    return init_table(schedule, backend.encoder->word_embedding(config.initializer).cast<float>().eval());
}

std::vector<double> TrainResult::losses() const {
    std::vector<double> out;
    out.reserve(history.size());
    for (const auto& r : history) out.push_back(r.loss);
    return out;
}

TrainResult train(const Backend& backend, const StyleDataset& dataset, const TrainConfig& config,
                  std::uint64_t backend_seed, const StepCallback& on_step) {
    TrainState state = TrainState::prepare(backend, dataset, config);
    StageEmbeddingTable table = initial_table(backend, config);
    std::mt19937_64 rng(config.seed);

    TrainResult result{StyleCheckpoint{state.tokens, table, {}}, {}, dataset.validate()};
    for (int s = 0; s < config.steps; ++s) {
        result.history.push_back(train_step(state, backend, table, dataset, config, rng));
        if (on_step) on_step(result.history.back());
    }
    for (int k = 0; k < config.num_stages; ++k) {
        if (state.stage_updates[static_cast<std::size_t>(k)] == 0 && config.steps > 0) {
            result.warnings.push_back("stage " + std::to_string(k) + " received no updates in " +
                                      std::to_string(config.steps) + " steps");
        }
    }

    auto& m = result.checkpoint.metadata;
    m.backend = backend.name;
    m.backend_seed = backend_seed;
    m.seed = config.seed;
    m.steps = config.steps;
    m.learning_rate = config.learning_rate;
    m.batch_size = config.batch_size;
    m.initializer = config.initializer;
    m.suffix_template = config.suffix_template;
    for (const auto& ex : dataset.examples) {
        m.captions.push_back({ex.id, ex.caption.effective(), std::string(to_string(ex.caption.source))});
    }
    const auto losses = result.losses();
    m.loss_history_length = losses.size();
    m.loss_history_digest = digest_loss_history(losses);
    m.extra["opening"] = config.opening;
    result.checkpoint.table = std::move(table);
    return result;
}

std::vector<double> smoothed(const std::vector<double>& losses, std::size_t window) {
    if (window == 0) throw ValidationError("smoothing window must be positive");
    std::vector<double> out;
    double running = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i) {
        running += losses[i];
        if (i >= window) running -= losses[i - window];
        out.push_back(running / static_cast<double>(std::min(i + 1, window)));
    }
    return out;
}

}  // namespace stylestage
