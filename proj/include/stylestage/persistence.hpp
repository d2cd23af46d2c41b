#pragma once

#include "stylestage/prompts.hpp"
#include "stylestage/stagespace.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace stylestage {

inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr std::string_view kCheckpointFormatName = "stylestage-checkpoint";
inline constexpr std::string_view kCheckpointExtension = ".ssckpt";

struct CaptionProvenance {
    std::string image_id;
    std::string caption;
    std::string source;  // "auto" | "human"

    friend bool operator==(const CaptionProvenance&, const CaptionProvenance&) = default;
};

struct CheckpointMetadata {
    std::string backend = "toy";
    std::uint64_t backend_seed = 0;
    std::uint64_t seed = 0;
    int steps = 0;
    double learning_rate = 0.0;
    int batch_size = 1;
    std::string initializer;
    std::string suffix_template;
    std::vector<CaptionProvenance> captions;  // one per dataset image, in dataset order
    std::size_t loss_history_length = 0;
    std::string loss_history_digest;
    std::map<std::string, std::string> extra;

    friend bool operator==(const CheckpointMetadata&, const CheckpointMetadata&) = default;
};

// Trained style: stage schedule + token names + per-stage vectors.
struct StyleCheckpoint {
    MultiStageTokenSet tokens;
    StageEmbeddingTable table;
    CheckpointMetadata metadata;

    friend bool operator==(const StyleCheckpoint&, const StyleCheckpoint&) = default;
};

// SHA-256 of a loss trajectory stored as little-endian float64.
std::string digest_loss_history(const std::vector<double>& losses);

// Canonical bytes of the checkpoint document. Identical inputs give
// identical bytes.
std::string serialize_checkpoint(const StyleCheckpoint& checkpoint);
// Throws VersionError, TruncatedError or IntegrityError.
StyleCheckpoint parse_checkpoint(std::string_view bytes);

// Content hash recorded in (and verified against) the document.
std::string checkpoint_hash(const StyleCheckpoint& checkpoint);

void save_checkpoint(const StyleCheckpoint& checkpoint, const std::filesystem::path& path);
StyleCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace stylestage
