#include "stylestage/prompts.hpp"

#include "stylestage/errors.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace stylestage {

namespace {

std::size_t count_slots(std::string_view text) {
    std::size_t count = 0;
    for (auto pos = text.find(kStyleSlot); pos != std::string_view::npos; pos = text.find(kStyleSlot, pos + 1)) ++count;
    return count;
}

std::string single_line(std::string_view text) {
    std::string out(text);
    for (char& c : out) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return normalize_whitespace(out);
}

}  // namespace

void PromptBundle::validate() const {
    if (normalize_whitespace(opening).empty()) throw ValidationError("prompt opening is empty");
    if (count_slots(style_suffix_template) != 1) {
        throw ValidationError("style suffix template must contain exactly one " + std::string(kStyleSlot) + ": '" +
                              style_suffix_template + "'");
    }
}

std::string normalize_whitespace(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out += ' ';
        pending_space = false;
        out += c;
    }
    return out;
}

std::string render_suffix(const PromptBundle& bundle, std::string_view token) {
    bundle.validate();
    std::string suffix = bundle.style_suffix_template;
    suffix.replace(suffix.find(kStyleSlot), kStyleSlot.size(), token);
    return normalize_whitespace(suffix);
}

std::string render_prompt(const PromptBundle& bundle, std::string_view token) {
    return normalize_whitespace(bundle.opening + " " + bundle.context + " " + render_suffix(bundle, token));
}

std::string build_training_prompt(const PromptBundle& bundle, const MultiStageTokenSet& tokens, int stage) {
    if (stage < 0 || stage >= tokens.size()) {
        throw RangeError("stage " + std::to_string(stage) + " outside [0, " + std::to_string(tokens.size()) + ")");
    }
    return render_prompt(bundle, tokens.stage_tokens[static_cast<std::size_t>(stage)]);
}

std::string build_inference_prompt(const PromptBundle& bundle, const MultiStageTokenSet& tokens) {
    return render_prompt(bundle, tokens.base_token);
}

GuidancePrompts split_for_guidance(std::string_view full_prompt, std::string_view suffix_template) {
    const std::string full = normalize_whitespace(full_prompt);
    const std::string tmpl = normalize_whitespace(suffix_template);
    if (count_slots(tmpl) != 1) throw ValidationError("suffix template needs exactly one style slot");
    const auto slot = tmpl.find(kStyleSlot);
    const std::string lead = tmpl.substr(0, slot);
    const std::string trail = tmpl.substr(slot + kStyleSlot.size());

    // The suffix is the last occurrence of `lead` followed by a single
    // placeholder word and then exactly `trail`.
    for (auto pos = full.rfind(lead); pos != std::string::npos; pos = pos == 0 ? std::string::npos : full.rfind(lead, pos - 1)) {
        if (pos != 0 && full[pos - 1] != ' ') continue;
        const std::string rest = full.substr(pos + lead.size());
        if (rest.size() < trail.size() || rest.compare(rest.size() - trail.size(), trail.size(), trail) != 0) continue;
        const std::string token = rest.substr(0, rest.size() - trail.size());
        if (token.size() < 3 || token.front() != '<' || token.back() != '>' || token.find(' ') != std::string::npos) {
            continue;
        }
        GuidancePrompts parts;
        parts.style = full.substr(pos);
        parts.context = pos == 0 ? std::string() : full.substr(0, pos - 1);
        return parts;
    }
    throw StructureError("prompt has no style suffix matching '" + tmpl + "': '" + full + "'");
}

std::string join_guidance_prompts(const GuidancePrompts& parts) {
    return parts.context.empty() ? parts.style : parts.context + " " + parts.style;
}

std::string_view to_string(CaptionSource source) { return source == CaptionSource::Human ? "human" : "auto"; }

CaptionRecord fetch_caption(const Captioner& client, const CaptionRequest& request) {
    CaptionRecord record;
    record.image_id = request.image_id;
    record.auto_caption = client.caption(request);
    if (normalize_whitespace(record.auto_caption).empty()) {
        throw ContentError("captioner returned an empty caption for '" + request.image_id + "'");
    }
    record.source = CaptionSource::Auto;
    return record;
}

CaptionRecord refine_caption(const CaptionRecord& record, std::string_view human_text) {
    std::string text = normalize_whitespace(human_text);
    if (text.empty()) throw ValidationError("refined caption is empty");
    CaptionRecord out = record;
    out.refined_caption = std::move(text);
    out.source = CaptionSource::Human;
    return out;
}

std::filesystem::path caption_sidecar_path(const std::filesystem::path& image) {
    auto path = image;
    path += ".caption";
    return path;
}

void write_caption_sidecar(const std::filesystem::path& path, const CaptionRecord& record) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write caption sidecar " + path.string());
    out << "# auto: " << single_line(record.auto_caption) << "\n";
    out << "# source: " << to_string(record.source) << "\n";
    out << single_line(record.effective()) << "\n";
    if (!out) throw IoError("failed writing caption sidecar " + path.string());
}

CaptionRecord read_caption_sidecar(const std::filesystem::path& path, std::string image_id) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read caption sidecar " + path.string());
    CaptionRecord record;
    record.image_id = image_id.empty() ? path.stem().string() : std::move(image_id);
    std::optional<std::string> caption;
    bool human = false;
    bool saw_auto = false;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.rfind("#", 0) == 0) {
            std::string_view body = std::string_view(line).substr(1);
            if (body.rfind(" auto:", 0) == 0) {
                record.auto_caption = normalize_whitespace(body.substr(6));
                saw_auto = true;
            } else if (body.rfind(" source:", 0) == 0) {
                human = normalize_whitespace(body.substr(8)) == "human";
            }
            continue;
        }
        if (!caption && !normalize_whitespace(line).empty()) caption = normalize_whitespace(line);
    }
    // A hand-written sidecar with only a caption line counts as human input.
    if (!caption) caption = std::string();
    if (!saw_auto) {
        record.auto_caption = *caption;
        human = human || !caption->empty();
    }
    if (human) {
        record.refined_caption = *caption;
        record.source = CaptionSource::Human;
    } else {
        record.auto_caption = *caption;
        record.source = CaptionSource::Auto;
    }
    return record;
}

}  // namespace stylestage
