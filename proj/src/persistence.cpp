#include "stylestage/persistence.hpp"

#include "stylestage/digest.hpp"
#include "stylestage/errors.hpp"
#include "stylestage/image.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>

namespace stylestage {

static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes a little-endian host");

using nlohmann::json;

namespace {

std::string encode_vector(const Eigen::VectorXf& v) {
    std::vector<unsigned char> bytes(static_cast<std::size_t>(v.size()) * sizeof(float));
    std::memcpy(bytes.data(), v.data(), bytes.size());
    return base64_encode(bytes);
}

Eigen::VectorXf decode_vector(const std::string& text, Eigen::Index dim) {
    std::string bytes;
    try {
        bytes = base64_decode(text);
    } catch (const ContentError& e) {
        throw IntegrityError(std::string("corrupt embedding payload: ") + e.what());
    }
    if (bytes.size() != static_cast<std::size_t>(dim) * sizeof(float)) {
        throw IntegrityError("embedding payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                             std::to_string(dim * sizeof(float)));
    }
    Eigen::VectorXf v(dim);
    std::memcpy(v.data(), bytes.data(), bytes.size());
    return v;
}

json body_json(const StyleCheckpoint& c) {
    const auto& m = c.metadata;
    json captions = json::array();
    for (const auto& p : m.captions) captions.push_back({{"image_id", p.image_id}, {"caption", p.caption}, {"source", p.source}});
    json vectors = json::array();
    for (const auto& v : c.table.vectors()) vectors.push_back(encode_vector(v));
    json extra = json::object();
    for (const auto& [k, v] : m.extra) extra[k] = v;
    return {
        {"format", kCheckpointFormatName},
        {"format_version", kCheckpointFormatVersion},
        {"num_stages", c.table.num_stages()},
        {"num_timesteps", c.table.schedule().num_timesteps()},
        {"embedding_dim", c.table.dim()},
        {"base_token", c.tokens.base_token},
        {"stage_tokens", c.tokens.stage_tokens},
        {"vectors", vectors},
        {"metadata",
         {{"backend", m.backend},
          {"backend_seed", m.backend_seed},
          {"seed", m.seed},
          {"steps", m.steps},
          {"learning_rate", m.learning_rate},
          {"batch_size", m.batch_size},
          {"initializer", m.initializer},
          {"suffix_template", m.suffix_template},
          {"captions", captions},
          {"loss_history_length", m.loss_history_length},
          {"loss_history_digest", m.loss_history_digest},
          {"extra", extra}}},
    };
}

StyleCheckpoint from_body(const json& doc) {
    const int num_stages = doc.at("num_stages").get<int>();
    const int num_timesteps = doc.at("num_timesteps").get<int>();
    const auto dim = doc.at("embedding_dim").get<Eigen::Index>();
    if (dim < 1) throw IntegrityError("embedding_dim must be positive");

    MultiStageTokenSet tokens;
    tokens.base_token = doc.at("base_token").get<std::string>();
    tokens.stage_tokens = doc.at("stage_tokens").get<std::vector<std::string>>();
    if (tokens.size() != num_stages) throw IntegrityError("stage token count does not match num_stages");

    const auto& encoded = doc.at("vectors");
    if (!encoded.is_array() || static_cast<int>(encoded.size()) != num_stages) {
        throw IntegrityError("vector count does not match num_stages");
    }
    std::vector<Eigen::VectorXf> vectors;
    for (const auto& v : encoded) vectors.push_back(decode_vector(v.get<std::string>(), dim));

    const auto& md = doc.at("metadata");
    CheckpointMetadata m;
    m.backend = md.at("backend").get<std::string>();
    m.backend_seed = md.at("backend_seed").get<std::uint64_t>();
    m.seed = md.at("seed").get<std::uint64_t>();
    m.steps = md.at("steps").get<int>();
    m.learning_rate = md.at("learning_rate").get<double>();
    m.batch_size = md.at("batch_size").get<int>();
    m.initializer = md.at("initializer").get<std::string>();
    m.suffix_template = md.at("suffix_template").get<std::string>();
    for (const auto& p : md.at("captions")) {
        m.captions.push_back({p.at("image_id").get<std::string>(), p.at("caption").get<std::string>(),
                              p.at("source").get<std::string>()});
    }
    m.loss_history_length = md.at("loss_history_length").get<std::size_t>();
    m.loss_history_digest = md.at("loss_history_digest").get<std::string>();
    for (const auto& [k, v] : md.at("extra").items()) m.extra[k] = v.get<std::string>();

    try {
        tokens.validate();
        return {tokens, StageEmbeddingTable(StageSchedule(num_stages, num_timesteps), std::move(vectors)), std::move(m)};
    } catch (const ValidationError& e) {
        throw IntegrityError(std::string("checkpoint content is invalid: ") + e.what());
    }
}

}  // namespace

std::string digest_loss_history(const std::vector<double>& losses) {
    std::vector<unsigned char> bytes(losses.size() * sizeof(double));
    if (!bytes.empty()) std::memcpy(bytes.data(), losses.data(), bytes.size());
    return sha256_hex(bytes);
}

std::string checkpoint_hash(const StyleCheckpoint& checkpoint) { return sha256_hex(body_json(checkpoint).dump()); }

std::string serialize_checkpoint(const StyleCheckpoint& checkpoint) {
    json doc = body_json(checkpoint);
    doc["content_hash"] = sha256_hex(doc.dump());
    return doc.dump(2) + "\n";
}

StyleCheckpoint parse_checkpoint(std::string_view bytes) {
    json doc;
    try {
        doc = json::parse(bytes);
    } catch (const json::parse_error& e) {
        // Running out of bytes mid-document is truncation; junk after a
        // complete document is not.
        const bool complete = std::string_view(e.what()).find("; expected end of input") != std::string_view::npos;
        if (bytes.empty() || (e.byte >= bytes.size() && !complete)) throw TruncatedError(std::string("checkpoint ends early: ") + e.what());
        throw IntegrityError(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw IntegrityError("checkpoint document is not an object");

    try {
        const auto version_it = doc.find("format_version");
        if (version_it == doc.end() || !version_it->is_number_integer()) {
            throw IntegrityError("checkpoint has no format_version");
        }
        const int version = version_it->get<int>();
        if (version != kCheckpointFormatVersion) {
            throw VersionError("checkpoint format_version " + std::to_string(version) + " is not supported (expected " +
                               std::to_string(kCheckpointFormatVersion) + ")");
        }
        if (doc.value("format", std::string()) != kCheckpointFormatName) {
            throw IntegrityError("not a " + std::string(kCheckpointFormatName) + " document");
        }
        const auto hash_it = doc.find("content_hash");
        if (hash_it == doc.end() || !hash_it->is_string()) throw IntegrityError("checkpoint has no content_hash");
        const std::string recorded = hash_it->get<std::string>();
        doc.erase("content_hash");
        const std::string actual = sha256_hex(doc.dump());
        if (recorded != actual) throw IntegrityError("checkpoint content hash mismatch");
        return from_body(doc);
    } catch (const json::exception& e) {
        throw IntegrityError(std::string("checkpoint field error: ") + e.what());
    }
}

void save_checkpoint(const StyleCheckpoint& checkpoint, const std::filesystem::path& path) {
    const std::string bytes = serialize_checkpoint(checkpoint);
    write_file_atomic(path, std::span(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()));
}

StyleCheckpoint load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string());
    const auto bytes = read_file_bytes(path);
    return parse_checkpoint(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace stylestage
