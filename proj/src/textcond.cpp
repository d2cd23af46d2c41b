#include "stylestage/textcond.hpp"

#include "stylestage/digest.hpp"

#include <cctype>
#include <cmath>
#include <random>
#include <sstream>

namespace stylestage {

std::string_view to_string(PromptVariant variant) {
    switch (variant) {
        case PromptVariant::Full: return "full";
        case PromptVariant::StyleOnly: return "style";
        case PromptVariant::ContextOnly: return "context";
        case PromptVariant::Null: return "null";
    }
    return "unknown";
}

std::optional<std::pair<int, std::string>> TokenSequence::placeholder() const {
    if (placeholder_slots.empty()) return std::nullopt;
    return *placeholder_slots.begin();
}

Vector TextEncoder::encode_vjp(const TokenSequence&, const EmbeddingOverride&, int, const Matrix&) const {
    throw ValidationError("text encoder is not differentiable");
}

const ConditioningVector& TextEncoder::null_conditioning() const {
    std::call_once(null_once_, [this] {
        null_cache_.values = encode(tokenize(""), {});
        null_cache_.provenance = PromptVariant::Null;
    });
    return null_cache_;
}

void validate_token_set(const TextEncoder& encoder, const MultiStageTokenSet& tokens) {
    tokens.validate();
    for (const auto& token : tokens.stage_tokens) {
        if (encoder.in_vocabulary(token)) {
            throw ValidationError("stage token '" + token + "' collides with the encoder vocabulary");
        }
    }
    if (encoder.in_vocabulary(tokens.base_token)) {
        throw ValidationError("base token '" + tokens.base_token + "' collides with the encoder vocabulary");
    }
}

ConditioningVector encode_injected(const TextEncoder& encoder, const TokenSequence& seq,
                                   const MultiStageTokenSet& tokens, const Vector& injected,
                                   PromptVariant provenance) {
    EmbeddingOverride overrides;
    if (auto slot = seq.placeholder()) {
        if (!tokens.names_placeholder(slot->second)) {
            throw ValidationError("placeholder '" + slot->second + "' is not a token of style '" +
                                  tokens.base_token + "'");
        }
        if (injected.size() != encoder.token_dim()) {
            throw ValidationError("injected embedding has dimension " + std::to_string(injected.size()) +
                                  ", encoder expects " + std::to_string(encoder.token_dim()));
        }
        overrides.emplace(slot->first, injected);
    }
    return {encoder.encode(seq, overrides), provenance};
}

namespace {

bool is_placeholder_word(std::string_view word) {
    return word.size() >= 3 && word.front() == '<' && word.back() == '>';
}

std::string lowercase(std::string_view word) {
    std::string out(word);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace

ToyTextEncoder::ToyTextEncoder(std::uint64_t seed, ToyTextEncoderOptions options) : options_(options) {
    if (options_.vocab_buckets < 1 || options_.token_dim < 1 || options_.cond_dim < 1 ||
        options_.sequence_length < 2 || !(options_.embedding_scale > 0.0)) {
        throw ValidationError("invalid toy text encoder options");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto gaussian = [&](Eigen::Index rows, Eigen::Index cols, double scale) {
        Matrix m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * normal(rng);
        return m;
    };
    const int d = options_.token_dim;
    const int L = options_.sequence_length;
    const double s = options_.embedding_scale;
    vocab_ = gaussian(kFirstWord + options_.vocab_buckets, d, s);
    vocab_.row(kPlaceholder).setZero();
    positions_ = gaussian(L, d, 0.2 * s);
    proj_ = gaussian(options_.cond_dim, d, 1.0 / (s * std::sqrt(static_cast<double>(d))));
    bias_ = gaussian(options_.cond_dim, 1, 0.1);

    mixing_ = Matrix::Zero(L, L);
    for (int p = 0; p < L; ++p) {
        for (int q = 0; q <= p; ++q) mixing_(p, q) = std::exp(-options_.position_decay * (p - q));
        mixing_.row(p) /= mixing_.row(p).sum();
    }
}

int ToyTextEncoder::word_id(std::string_view word) const {
    return kFirstWord + static_cast<int>(fnv1a(lowercase(word)) % static_cast<std::uint64_t>(options_.vocab_buckets));
}

bool ToyTextEncoder::in_vocabulary(std::string_view word) const {
    return !word.empty() && !is_placeholder_word(word);
}

Vector ToyTextEncoder::word_embedding(std::string_view word) const {
    if (!in_vocabulary(word)) throw ValidationError("'" + std::string(word) + "' is not a vocabulary word");
    return vocab_.row(word_id(word)).transpose();
}

TokenSequence ToyTextEncoder::tokenize(std::string_view prompt) const {
    TokenSequence seq;
    seq.tokens.push_back(kBegin);
    std::istringstream words{std::string(prompt)};
    std::string word;
    while (words >> word) {
        const int position = static_cast<int>(seq.tokens.size());
        if (is_placeholder_word(word)) {
            if (!seq.placeholder_slots.empty()) {
                throw ValidationError("prompt has more than one style placeholder: '" + std::string(prompt) + "'");
            }
            seq.placeholder_slots.emplace(position, word);
            seq.tokens.push_back(kPlaceholder);
        } else {
            seq.tokens.push_back(word_id(word));
        }
    }
    seq.tokens.push_back(kEnd);
    if (static_cast<int>(seq.tokens.size()) > options_.sequence_length) {
        throw ValidationError("prompt needs " + std::to_string(seq.tokens.size()) + " tokens, encoder holds " +
                              std::to_string(options_.sequence_length));
    }
    seq.tokens.resize(static_cast<std::size_t>(options_.sequence_length), kPad);
    return seq;
}

Matrix ToyTextEncoder::inputs(const TokenSequence& seq, const EmbeddingOverride& overrides) const {
    const int L = options_.sequence_length;
    if (static_cast<int>(seq.tokens.size()) != L) {
        throw ValidationError("token sequence length " + std::to_string(seq.tokens.size()) + " != " + std::to_string(L));
    }
    Matrix x(L, options_.token_dim);
    for (int p = 0; p < L; ++p) {
        const int id = seq.tokens[static_cast<std::size_t>(p)];
        if (id < 0 || id >= vocab_.rows()) throw ValidationError("token id " + std::to_string(id) + " out of range");
        auto it = overrides.find(p);
        if (it != overrides.end()) {
            if (it->second.size() != options_.token_dim) {
                throw ValidationError("override at position " + std::to_string(p) + " has dimension " +
                                      std::to_string(it->second.size()));
            }
            x.row(p) = it->second.transpose();
        } else if (id == kPlaceholder) {
            throw ValidationError("placeholder at position " + std::to_string(p) + " has no injected embedding");
        } else {
            x.row(p) = vocab_.row(id);
        }
    }
    for (const auto& [p, v] : overrides) {
        if (p < 0 || p >= L) throw ValidationError("override position " + std::to_string(p) + " out of range");
    }
    return x + positions_;
}

Matrix ToyTextEncoder::encode(const TokenSequence& seq, const EmbeddingOverride& overrides) const {
    const Matrix hidden = mixing_ * inputs(seq, overrides);
    Matrix pre = hidden * proj_.transpose();
    pre.rowwise() += bias_.transpose();
    return pre.array().tanh().matrix();
}

Vector ToyTextEncoder::encode_vjp(const TokenSequence& seq, const EmbeddingOverride& overrides, int position,
                                  const Matrix& upstream) const {
    if (position < 0 || position >= options_.sequence_length) {
        throw RangeError("vjp position " + std::to_string(position) + " out of range");
    }
    const Matrix out = encode(seq, overrides);
    if (upstream.rows() != out.rows() || upstream.cols() != out.cols()) {
        throw ValidationError("upstream gradient shape mismatch");
    }
    const Matrix pre_grad = (upstream.array() * (1.0 - out.array().square())).matrix();
    const Matrix hidden_grad = pre_grad * proj_;  // L x d
    return (mixing_.col(position).transpose() * hidden_grad).transpose();
}

std::uint64_t ToyTextEncoder::weights_digest() const {
    std::uint64_t h = fnv1a(vocab_);
    h = fnv1a(positions_, h);
    h = fnv1a(mixing_, h);
    h = fnv1a(proj_, h);
    return fnv1a(bias_, h);
}

}  // namespace stylestage
