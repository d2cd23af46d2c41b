#pragma once

#include "stylestage/errors.hpp"

#include <Eigen/Dense>

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace stylestage {

// Partition of diffusion timesteps [0, num_timesteps) into num_stages
// contiguous chunks. Stage index grows with t, so the last stage holds the
// highest-noise (structure-forming) timesteps.
class StageSchedule {
public:
    StageSchedule(int num_stages, int num_timesteps);

    int num_stages() const noexcept { return num_stages_; }
    int num_timesteps() const noexcept { return num_timesteps_; }

    // floor(t * T / T_max); throws RangeError outside [0, T_max).
    int stage_of(int t) const;

    // Half-open timestep range [first, last) covered by stage k.
    std::pair<int, int> timestep_range(int stage) const;

    friend bool operator==(const StageSchedule&, const StageSchedule&) = default;

private:
    int num_stages_;
    int num_timesteps_;
};

inline int stage_of(const StageSchedule& schedule, int t) { return schedule.stage_of(t); }

// Placeholder tokens S*_0..S*_{T-1} derived from a base token.
struct MultiStageTokenSet {
    std::string base_token;
    std::vector<std::string> stage_tokens;

    // "<style>" with T=3 -> "<style_0>", "<style_1>", "<style_2>".
    static MultiStageTokenSet derive(std::string_view base_token, int num_stages);

    int size() const noexcept { return static_cast<int>(stage_tokens.size()); }
    // Index of a stage token, or -1. The base token is not a stage token.
    int index_of(std::string_view name) const;
    bool names_placeholder(std::string_view name) const {
        return name == base_token || index_of(name) >= 0;
    }
    // Throws ValidationError on duplicate or empty names.
    void validate() const;

    friend bool operator==(const MultiStageTokenSet&, const MultiStageTokenSet&) = default;
};

template <typename Scalar>
class BasicStageEmbeddingTable {
public:
    using VectorType = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    BasicStageEmbeddingTable(StageSchedule schedule, std::vector<VectorType> vectors)
        : schedule_(schedule), vectors_(std::move(vectors)) {
        if (static_cast<int>(vectors_.size()) != schedule_.num_stages()) {
            throw ValidationError("embedding table needs " + std::to_string(schedule_.num_stages()) +
                                  " vectors, got " + std::to_string(vectors_.size()));
        }
        for (std::size_t k = 0; k < vectors_.size(); ++k) {
            if (vectors_[k].size() == 0 || vectors_[k].size() != vectors_.front().size()) {
                throw ValidationError("embedding vector " + std::to_string(k) + " has dimension " +
                                      std::to_string(vectors_[k].size()) + ", expected " +
                                      std::to_string(vectors_.front().size()));
            }
            if (!vectors_[k].allFinite()) {
                throw ValidationError("embedding vector " + std::to_string(k) + " is not finite");
            }
        }
    }

    const StageSchedule& schedule() const noexcept { return schedule_; }
    int num_stages() const noexcept { return schedule_.num_stages(); }
    Eigen::Index dim() const noexcept { return vectors_.front().size(); }

    const VectorType& operator[](int stage) const { return vectors_.at(static_cast<std::size_t>(stage)); }
    VectorType& operator[](int stage) { return vectors_.at(static_cast<std::size_t>(stage)); }
    const std::vector<VectorType>& vectors() const noexcept { return vectors_; }

    template <typename Other>
    BasicStageEmbeddingTable<Other> cast() const {
        std::vector<typename BasicStageEmbeddingTable<Other>::VectorType> out;
        out.reserve(vectors_.size());
        for (const auto& v : vectors_) out.push_back(v.template cast<Other>());
        return {schedule_, std::move(out)};
    }

    friend bool operator==(const BasicStageEmbeddingTable& a, const BasicStageEmbeddingTable& b) {
        if (!(a.schedule_ == b.schedule_) || a.vectors_.size() != b.vectors_.size()) return false;
        for (std::size_t k = 0; k < a.vectors_.size(); ++k) {
            if (a.vectors_[k].size() != b.vectors_[k].size() || a.vectors_[k] != b.vectors_[k]) return false;
        }
        return true;
    }

private:
    StageSchedule schedule_;
    std::vector<VectorType> vectors_;
};

// Stored precision of learned embeddings (matches the checkpoint container).
using StageEmbeddingTable = BasicStageEmbeddingTable<float>;

template <typename Derived>
auto init_table(const StageSchedule& schedule, const Eigen::MatrixBase<Derived>& seed)
    -> BasicStageEmbeddingTable<typename Derived::Scalar> {
    using Table = BasicStageEmbeddingTable<typename Derived::Scalar>;
    if (seed.cols() != 1 || seed.size() == 0) throw ValidationError("seed embedding must be a non-empty column vector");
    if (!seed.allFinite()) throw ValidationError("seed embedding is not finite");
    std::vector<typename Table::VectorType> vectors(static_cast<std::size_t>(schedule.num_stages()),
                                                    typename Table::VectorType(seed));
    return Table(schedule, std::move(vectors));
}

template <typename Scalar>
const typename BasicStageEmbeddingTable<Scalar>::VectorType& embedding_for(
    const BasicStageEmbeddingTable<Scalar>& table, int t) {
    return table[table.schedule().stage_of(t)];
}

class MixError : public ValidationError {
public:
    enum class Reason { ScheduleMismatch, DimensionMismatch, UnknownName, IncompleteAssignment };

    MixError(Reason reason, const std::string& message) : ValidationError(message), reason_(reason) {}
    Reason reason() const noexcept { return reason_; }

private:
    Reason reason_;
};

template <typename Scalar>
using NamedTable = std::pair<std::string, BasicStageEmbeddingTable<Scalar>>;

// result[k] = tables[assignment[k]][k]. The assignment must name a source
// for every stage.
template <typename Scalar>
BasicStageEmbeddingTable<Scalar> mix_styles(const std::vector<NamedTable<Scalar>>& tables,
                                            const std::map<int, std::string>& assignment) {
    if (tables.empty()) throw MixError(MixError::Reason::UnknownName, "no source tables to mix");
    const auto& reference = tables.front().second;
    for (const auto& [name, table] : tables) {
        if (!(table.schedule() == reference.schedule())) {
            throw MixError(MixError::Reason::ScheduleMismatch, "style '" + name + "' has a different stage schedule");
        }
        if (table.dim() != reference.dim()) {
            throw MixError(MixError::Reason::DimensionMismatch, "style '" + name + "' has embedding dimension " +
                                                                    std::to_string(table.dim()) + ", expected " +
                                                                    std::to_string(reference.dim()));
        }
    }
    const int num_stages = reference.num_stages();
    std::vector<typename BasicStageEmbeddingTable<Scalar>::VectorType> vectors;
    vectors.reserve(static_cast<std::size_t>(num_stages));
    for (int k = 0; k < num_stages; ++k) {
        auto it = assignment.find(k);
        if (it == assignment.end()) {
            throw MixError(MixError::Reason::IncompleteAssignment, "stage " + std::to_string(k) + " has no assigned style");
        }
        const BasicStageEmbeddingTable<Scalar>* source = nullptr;
        for (const auto& [name, table] : tables) {
            if (name == it->second) source = &table;
        }
        if (source == nullptr) throw MixError(MixError::Reason::UnknownName, "unknown style name '" + it->second + "'");
        vectors.push_back((*source)[k]);
    }
    for (const auto& [stage, name] : assignment) {
        if (stage < 0 || stage >= num_stages) {
            throw MixError(MixError::Reason::IncompleteAssignment, "assignment names stage " + std::to_string(stage) +
                                                                       " outside [0, " + std::to_string(num_stages) + ")");
        }
    }
    return {reference.schedule(), std::move(vectors)};
}

}  // namespace stylestage
