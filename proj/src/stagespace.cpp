#include "stylestage/stagespace.hpp"

#include <algorithm>
#include <cstdint>
#include <set>

namespace stylestage {

StageSchedule::StageSchedule(int num_stages, int num_timesteps)
    : num_stages_(num_stages), num_timesteps_(num_timesteps) {
    if (num_timesteps < 1) {
        throw ValidationError("num_timesteps must be positive, got " + std::to_string(num_timesteps));
    }
    if (num_stages < 1 || num_stages > num_timesteps) {
        throw ValidationError("num_stages must lie in [1, " + std::to_string(num_timesteps) + "], got " +
                              std::to_string(num_stages));
    }
}

int StageSchedule::stage_of(int t) const {
    if (t < 0 || t >= num_timesteps_) {
        throw RangeError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(num_timesteps_) + ")");
    }
    const auto stage = static_cast<int>(static_cast<std::int64_t>(t) * num_stages_ / num_timesteps_);
    return std::min(stage, num_stages_ - 1);
}

std::pair<int, int> StageSchedule::timestep_range(int stage) const {
    if (stage < 0 || stage >= num_stages_) {
        throw RangeError("stage " + std::to_string(stage) + " outside [0, " + std::to_string(num_stages_) + ")");
    }
    // Smallest t with floor(t*T/T_max) >= k is ceil(k*T_max/T).
    auto first_of = [&](int k) {
        const auto num = static_cast<std::int64_t>(k) * num_timesteps_;
        return static_cast<int>((num + num_stages_ - 1) / num_stages_);
    };
    return {first_of(stage), stage + 1 == num_stages_ ? num_timesteps_ : first_of(stage + 1)};
}

MultiStageTokenSet MultiStageTokenSet::derive(std::string_view base_token, int num_stages) {
    if (num_stages < 1) throw ValidationError("num_stages must be positive");
    if (base_token.empty()) throw ValidationError("base token is empty");
    MultiStageTokenSet set;
    set.base_token = std::string(base_token);
    std::string stem(base_token);
    std::string close;
    if (stem.size() >= 2 && stem.front() == '<' && stem.back() == '>') {
        stem.pop_back();
        close = ">";
    }
    for (int k = 0; k < num_stages; ++k) set.stage_tokens.push_back(stem + "_" + std::to_string(k) + close);
    return set;
}

int MultiStageTokenSet::index_of(std::string_view name) const {
    auto it = std::find(stage_tokens.begin(), stage_tokens.end(), name);
    return it == stage_tokens.end() ? -1 : static_cast<int>(it - stage_tokens.begin());
}

void MultiStageTokenSet::validate() const {
    if (base_token.empty()) throw ValidationError("base token is empty");
    if (stage_tokens.empty()) throw ValidationError("token set has no stage tokens");
    std::set<std::string> seen;
    for (const auto& token : stage_tokens) {
        if (token.empty()) throw ValidationError("empty stage token");
        if (token == base_token) throw ValidationError("stage token '" + token + "' equals the base token");
        if (!seen.insert(token).second) throw ValidationError("duplicate stage token '" + token + "'");
    }
}

}  // namespace stylestage
