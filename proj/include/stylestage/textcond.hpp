#pragma once

#include "stylestage/stagespace.hpp"
#include "stylestage/tensor.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace stylestage {

enum class PromptVariant { Full, StyleOnly, ContextOnly, Null };

std::string_view to_string(PromptVariant variant);

struct TokenSequence {
    std::vector<int> tokens;
    // sequence position -> placeholder name, at most one entry
    std::map<int, std::string> placeholder_slots;

    std::optional<std::pair<int, std::string>> placeholder() const;
};

// Conditioning matrix c(y): one row per sequence position.
struct ConditioningVector {
    Matrix values;
    PromptVariant provenance = PromptVariant::Full;
};

// Replacement token embeddings keyed by sequence position.
using EmbeddingOverride = std::map<int, Vector>;

// Text encoder role. Adapters for real encoders implement tokenize/encode;
// gradients are only required from differentiable encoders.
class TextEncoder {
public:
    virtual ~TextEncoder() = default;

    virtual int token_dim() const = 0;
    virtual int cond_dim() const = 0;
    virtual int sequence_length() const = 0;
    virtual bool differentiable() const = 0;

    virtual TokenSequence tokenize(std::string_view prompt) const = 0;
    virtual bool in_vocabulary(std::string_view word) const = 0;
    // Fixed vocabulary embedding of a single word; used to seed stage tokens.
    virtual Vector word_embedding(std::string_view word) const = 0;

    // Stable adapter contract: token ids plus embedding overrides in,
    // conditioning matrix (sequence_length x cond_dim) out.
    virtual Matrix encode(const TokenSequence& seq, const EmbeddingOverride& overrides) const = 0;

    // d<upstream, encode(seq, overrides)> / d overrides[position].
    virtual Vector encode_vjp(const TokenSequence& seq, const EmbeddingOverride& overrides, int position,
                              const Matrix& upstream) const;

    // Conditioning of the empty prompt, computed once per encoder.
    const ConditioningVector& null_conditioning() const;

    // Weight digest used to assert the encoder stays frozen.
    virtual std::uint64_t weights_digest() const = 0;

private:
    mutable std::once_flag null_once_;
    mutable ConditioningVector null_cache_;
};

inline const ConditioningVector& encode_null(const TextEncoder& encoder) { return encoder.null_conditioning(); }

// Stage tokens must be distinct and unknown to the encoder's vocabulary.
void validate_token_set(const TextEncoder& encoder, const MultiStageTokenSet& tokens);

// Encode with `injected` placed at the sequence's placeholder (if any).
ConditioningVector encode_injected(const TextEncoder& encoder, const TokenSequence& seq,
                                   const MultiStageTokenSet& tokens, const Vector& injected,
                                   PromptVariant provenance = PromptVariant::Full);

// Encode with embedding_for(table, t) injected at the placeholder.
template <typename Scalar>
ConditioningVector encode_with_injection(const TextEncoder& encoder, const TokenSequence& seq,
                                         const MultiStageTokenSet& tokens,
                                         const BasicStageEmbeddingTable<Scalar>& table, int t,
                                         PromptVariant provenance = PromptVariant::Full) {
    if (table.dim() != encoder.token_dim()) {
        throw ValidationError("embedding table dimension " + std::to_string(table.dim()) +
                              " does not match encoder token dimension " + std::to_string(encoder.token_dim()));
    }
    return encode_injected(encoder, seq, tokens, embedding_for(table, t).template cast<double>(), provenance);
}

struct ToyTextEncoderOptions {
    int vocab_buckets = 1000;
    int token_dim = 32;
    int cond_dim = 16;
    int sequence_length = 32;
    double position_decay = 0.35;
    // Per-coordinate std of word embeddings; the projection is rescaled by
    // its inverse so conditioning statistics do not depend on it.
    double embedding_scale = 0.05;
};

// Deterministic differentiable stand-in for a CLIP-like encoder:
//   h_p = sum_{q<=p} M[p,q] (e_q + pos_q),  c_p = tanh(W h_p + b)
// with M a causal, row-normalised exponential decay. Words hash into a
// fixed bucket vocabulary; "<...>" words are reserved for placeholders.
class ToyTextEncoder final : public TextEncoder {
public:
    explicit ToyTextEncoder(std::uint64_t seed, ToyTextEncoderOptions options = {});

    int token_dim() const override { return options_.token_dim; }
    int cond_dim() const override { return options_.cond_dim; }
    int sequence_length() const override { return options_.sequence_length; }
    bool differentiable() const override { return true; }

    TokenSequence tokenize(std::string_view prompt) const override;
    bool in_vocabulary(std::string_view word) const override;
    Vector word_embedding(std::string_view word) const override;
    Matrix encode(const TokenSequence& seq, const EmbeddingOverride& overrides) const override;
    Vector encode_vjp(const TokenSequence& seq, const EmbeddingOverride& overrides, int position,
                      const Matrix& upstream) const override;
    std::uint64_t weights_digest() const override;

    static constexpr int kPad = 0;
    static constexpr int kBegin = 1;
    static constexpr int kEnd = 2;
    static constexpr int kPlaceholder = 3;
    static constexpr int kFirstWord = 4;

    int word_id(std::string_view word) const;
    // Mixing weight M[p, q]; zero for q > p.
    double mixing(int p, int q) const { return mixing_(p, q); }

private:
    Matrix inputs(const TokenSequence& seq, const EmbeddingOverride& overrides) const;

    ToyTextEncoderOptions options_;
    Matrix vocab_;      // (kFirstWord + buckets) x token_dim
    Matrix positions_;  // sequence_length x token_dim
    Matrix mixing_;     // sequence_length x sequence_length
    Matrix proj_;       // cond_dim x token_dim
    Vector bias_;       // cond_dim
};

}  // namespace stylestage
