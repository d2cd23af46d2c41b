#pragma once

#include "stylestage/prompts.hpp"
#include "stylestage/styletransfer.hpp"

#include <chrono>
#include <map>
#include <string>

namespace stylestage {

// Offline captioner keyed by image id.
class FixtureCaptioner final : public Captioner {
public:
    explicit FixtureCaptioner(std::map<std::string, std::string> captions) : captions_(std::move(captions)) {}

    // id<TAB>caption per line.
    static FixtureCaptioner from_file(const std::filesystem::path& path);

    std::string caption(const CaptionRequest& request) const override;

private:
    std::map<std::string, std::string> captions_;
};

struct HttpClientOptions {
    std::string base_url;           // e.g. "http://127.0.0.1:8080"
    std::string path;               // endpoint path
    int retries = 2;                // extra attempts after the first
    std::chrono::milliseconds timeout{5000};
    std::chrono::milliseconds backoff{100};
};

// POST {path} with JSON {"image_id", "image_base64", "instruction"};
// expects {"caption": "..."}. Connection failures and 5xx responses are
// retried, then raised as TransportError.
class HttpCaptioner final : public Captioner {
public:
    explicit HttpCaptioner(HttpClientOptions options);
    std::string caption(const CaptionRequest& request) const override;

private:
    HttpClientOptions options_;
};

// POST {path} with JSON {"image_base64" (PNG), "modality", "channels",
// "height", "width"}; expects {"shape": [c, h, w], "features": [...]}.
class HttpStructureExtractor final : public StructureExtractor {
public:
    explicit HttpStructureExtractor(HttpClientOptions options);

    bool supports(StructureModality modality) const override { return modality != StructureModality::None; }
    StructureCondition extract(const Image& content, StructureModality modality, TensorShape target) const override;

private:
    HttpClientOptions options_;
};

}  // namespace stylestage
