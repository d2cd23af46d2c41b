#include "stylestage/clients.hpp"

#include "stylestage/digest.hpp"
#include "stylestage/errors.hpp"

#include <httplib.h>
#include <json.hpp>

#include <fstream>
#include <thread>

namespace stylestage {

using nlohmann::json;

FixtureCaptioner FixtureCaptioner::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read caption fixtures " + path.string());
    std::map<std::string, std::string> captions;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw ConfigError("caption fixture line lacks a tab: '" + line + "'");
        captions[line.substr(0, tab)] = line.substr(tab + 1);
    }
    return FixtureCaptioner(std::move(captions));
}

std::string FixtureCaptioner::caption(const CaptionRequest& request) const {
    auto it = captions_.find(request.image_id);
    if (it == captions_.end()) throw ContentError("no fixture caption for '" + request.image_id + "'");
    return it->second;
}

namespace {

json post_json(const HttpClientOptions& options, const json& body) {
    httplib::Client client(options.base_url);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(options.timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(options.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    const std::string payload = body.dump();
    std::string last_error;
    const int attempts = 1 + std::max(0, options.retries);
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        auto res = client.Post(options.path, payload, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
        } else if (res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
        } else if (res->status != 200) {
            throw ContentError(options.base_url + options.path + " answered HTTP " + std::to_string(res->status));
        } else {
            try {
                return json::parse(res->body);
            } catch (const json::parse_error& e) {
                throw ContentError(std::string("malformed response body: ") + e.what());
            }
        }
        if (attempt < attempts) std::this_thread::sleep_for(options.backoff);
    }
    throw TransportError(options.base_url + options.path + " failed after " + std::to_string(attempts) +
                             " attempt(s): " + last_error,
                         attempts);
}

}  // namespace

HttpCaptioner::HttpCaptioner(HttpClientOptions options) : options_(std::move(options)) {
    if (options_.path.empty()) options_.path = "/caption";
}

std::string HttpCaptioner::caption(const CaptionRequest& request) const {
    const json reply = post_json(options_, {{"image_id", request.image_id},
                                            {"image_base64", base64_encode(request.image_bytes)},
                                            {"instruction", request.instruction}});
    if (!reply.is_object() || !reply.contains("caption") || !reply["caption"].is_string()) {
        throw ContentError("captioner response has no caption string");
    }
    return reply["caption"].get<std::string>();
}

HttpStructureExtractor::HttpStructureExtractor(HttpClientOptions options) : options_(std::move(options)) {
    if (options_.path.empty()) options_.path = "/extract";
}

StructureCondition HttpStructureExtractor::extract(const Image& content, StructureModality modality,
                                                   TensorShape target) const {
    const auto png = encode_png(content);
    const json reply = post_json(options_, {{"image_base64", base64_encode(png)},
                                            {"modality", std::string(to_string(modality))},
                                            {"channels", target.channels},
                                            {"height", target.height},
                                            {"width", target.width}});
    try {
        const auto shape = reply.at("shape").get<std::vector<int>>();
        if (shape.size() != 3) throw ContentError("extractor shape must have 3 entries");
        const TensorShape got{shape[0], shape[1], shape[2]};
        const auto values = reply.at("features").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(values.size()) != got.size()) {
            throw ContentError("extractor returned " + std::to_string(values.size()) + " values for shape " + got.str());
        }
        StructureCondition cond;
        cond.modality = modality;
        cond.features = BasicTensor<double>(got, Eigen::Map<const Vector>(values.data(), got.size()));
        return cond;
    } catch (const json::exception& e) {
        throw ContentError(std::string("malformed extractor response: ") + e.what());
    }
}

}  // namespace stylestage
