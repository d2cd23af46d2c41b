#pragma once

#include "stylestage/stagespace.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace stylestage {

inline constexpr std::string_view kStyleSlot = "{style}";
inline constexpr std::string_view kDefaultSuffixTemplate = "in the style of {style}";

// [opening, context, style suffix]. An empty context yields the vanilla
// [opening, style] prompt.
struct PromptBundle {
    std::string opening = "a painting";
    std::string context;
    std::string style_suffix_template = std::string(kDefaultSuffixTemplate);

    void validate() const;
};

// Collapse whitespace runs to one space and trim both ends.
std::string normalize_whitespace(std::string_view text);

std::string render_suffix(const PromptBundle& bundle, std::string_view token);
std::string render_prompt(const PromptBundle& bundle, std::string_view token);

std::string build_training_prompt(const PromptBundle& bundle, const MultiStageTokenSet& tokens, int stage);
// Inference prompt with the base placeholder; the sampler swaps in the
// stage embedding per timestep.
std::string build_inference_prompt(const PromptBundle& bundle, const MultiStageTokenSet& tokens);

struct GuidancePrompts {
    std::string style;    // the suffix alone, e.g. "in the style of <style_3>"
    std::string context;  // everything before the suffix
};

// Splits a prompt rendered by this module at its style suffix. Throws
// StructureError when the suffix is missing.
GuidancePrompts split_for_guidance(std::string_view full_prompt,
                                   std::string_view suffix_template = kDefaultSuffixTemplate);

std::string join_guidance_prompts(const GuidancePrompts& parts);

enum class CaptionSource { Auto, Human };

std::string_view to_string(CaptionSource source);

struct CaptionRecord {
    std::string image_id;
    std::string auto_caption;
    std::optional<std::string> refined_caption;
    CaptionSource source = CaptionSource::Auto;

    const std::string& effective() const { return refined_caption ? *refined_caption : auto_caption; }
};

struct CaptionRequest {
    std::string image_id;
    std::span<const unsigned char> image_bytes;
    std::string instruction;
};

// Captioning service client: image bytes (+ optional instruction) in,
// caption text out.
class Captioner {
public:
    virtual ~Captioner() = default;
    virtual std::string caption(const CaptionRequest& request) const = 0;
};

// Throws ContentError when the captioner returns an empty caption;
// transport failures propagate as TransportError.
CaptionRecord fetch_caption(const Captioner& client, const CaptionRequest& request);

// Last write wins; the auto caption is kept for audit.
CaptionRecord refine_caption(const CaptionRecord& record, std::string_view human_text);

// Sidecar next to an image: "# auto: ..." and "# source: ..." comment lines
// followed by the effective caption on one line.
std::filesystem::path caption_sidecar_path(const std::filesystem::path& image);
void write_caption_sidecar(const std::filesystem::path& path, const CaptionRecord& record);
CaptionRecord read_caption_sidecar(const std::filesystem::path& path, std::string image_id = {});

}  // namespace stylestage
