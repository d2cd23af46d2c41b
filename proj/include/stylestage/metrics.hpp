#pragma once

#include "stylestage/errors.hpp"
#include "stylestage/image.hpp"
#include "stylestage/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace stylestage {

// cos(a, b) = <a,b> / sqrt(|a|^2 |b|^2). For a == b this is exactly 1 in
// IEEE arithmetic since sqrt(x*x) == x.
template <typename DA, typename DB>
double cosine(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
    if (a.size() != b.size()) {
        throw ValidationError("cosine of vectors with different sizes (" + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()) + ")");
    }
    const double na = a.squaredNorm();
    const double nb = b.squaredNorm();
    if (na == 0.0 || nb == 0.0) throw ValidationError("cosine is undefined for a zero vector");
    return a.dot(b) / std::sqrt(na * nb);
}

// max(100 cos(E_I, E_C), 0)
template <typename DA, typename DB>
double text_score(const Eigen::MatrixBase<DA>& image_embedding, const Eigen::MatrixBase<DB>& text_embedding) {
    return std::max(100.0 * cosine(image_embedding, text_embedding), 0.0);
}

// max(100 cos(E_I, E_S), 0)
template <typename DA, typename DB>
double image_score(const Eigen::MatrixBase<DA>& image_embedding, const Eigen::MatrixBase<DB>& style_embedding) {
    return std::max(100.0 * cosine(image_embedding, style_embedding), 0.0);
}

inline constexpr int kPatchSize = 224;

struct PatchOrigin {
    int x = 0;
    int y = 0;
    friend bool operator==(const PatchOrigin&, const PatchOrigin&) = default;
};

// Top-left corners of the four corner patches and the centre patch, in that
// order. Throws ValidationError for images smaller than the patch.
std::array<PatchOrigin, 5> patch_origins(int width, int height, int patch = kPatchSize);

Image crop(const Image& image, PatchOrigin origin, int size);

using PairSet = std::vector<std::pair<int, int>>;

// All 25 ordered (i, j) patch pairs.
PairSet all_patch_pairs();

// Feature extractor with L layer taps. Each tap is a (channels x positions)
// feature map.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual int num_layers() const = 0;
    virtual std::vector<Matrix> feature_maps(const Image& patch) const = 0;
};

// Per-layer Gram matrices F F^T / positions, flattened.
std::vector<Vector> gram_features(const FeatureExtractor& extractor, const Image& patch);

// 50 - (1/L) sum_l (1/|B|) sum_{(i,j) in B} cos(Gram_l(P_I^i), Gram_l(P_S^j)).
// Lower means more similar.
double style_score(const Image& image, const Image& style, const FeatureExtractor& extractor,
                   const PairSet& pairs = all_patch_pairs());

// Stand-in for a VGG-like network: L stride-2 3x3 valid convolutions with
// tanh, fixed random weights.
class ToyFeatureExtractor final : public FeatureExtractor {
public:
    explicit ToyFeatureExtractor(std::uint64_t seed, int num_layers = 3, int channels = 8);

    int num_layers() const override { return static_cast<int>(weights_.size()); }
    std::vector<Matrix> feature_maps(const Image& patch) const override;

private:
    std::vector<Matrix> weights_;  // out x (in * 9)
    std::vector<Vector> biases_;
};

// Joint image/text embedding (CLIP role).
class EmbeddingModel {
public:
    virtual ~EmbeddingModel() = default;
    virtual Vector embed_image(const Image& image) const = 0;
    virtual Vector embed_text(std::string_view text) const = 0;
};

// Image: 4x4 area-pooled colour layout projected to `dim`. Text: hashed
// bag of words projected to `dim`.
class ToyEmbeddingModel final : public EmbeddingModel {
public:
    explicit ToyEmbeddingModel(std::uint64_t seed, int dim = 32);

    Vector embed_image(const Image& image) const override;
    Vector embed_text(std::string_view text) const override;

private:
    Matrix image_proj_;
    Matrix text_proj_;
};

struct ManifestRow {
    std::filesystem::path image_path;
    std::string prompt;
    std::filesystem::path style_path;
};

// Tab-separated: image_path, prompt, style_path. '#' lines and blank lines
// are skipped; relative paths resolve against the manifest directory.
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

struct ScoreRow {
    ManifestRow source;
    double text_score = 0.0;
    double image_score = 0.0;
    double style_score = 0.0;
    std::optional<std::string> error;
};

struct ScoreMeans {
    std::size_t rows = 0;  // rows without error
    double text_score = 0.0;
    double image_score = 0.0;
    double style_score = 0.0;
};

struct ScoreTable {
    std::vector<ScoreRow> rows;
    ScoreMeans means;
};

// Scores every row; a row that fails records its error and the run goes on.
ScoreTable evaluate_manifest(const std::vector<ManifestRow>& manifest, const EmbeddingModel& embedder,
                             const FeatureExtractor& extractor);

std::string report_tsv(const ScoreTable& table);
std::string report_json(const ScoreTable& table);

}  // namespace stylestage
