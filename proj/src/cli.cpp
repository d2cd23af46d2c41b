#include "stylestage/cli.hpp"

#include "stylestage/clients.hpp"
#include "stylestage/metrics.hpp"
#include "stylestage/persistence.hpp"
#include "stylestage/sampler.hpp"
#include "stylestage/styletransfer.hpp"
#include "stylestage/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

namespace stylestage::cli {

using nlohmann::json;

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config:
        case ErrorKind::Validation:
        case ErrorKind::Range:
        case ErrorKind::Structure:
        case ErrorKind::UnsupportedModality:
            return kConfigError;
        case ErrorKind::Io:
        case ErrorKind::Integrity:
        case ErrorKind::Version:
        case ErrorKind::Truncated:
        case ErrorKind::Transport:
        case ErrorKind::Content:
            return kIoError;
        case ErrorKind::Numeric:
            return kNumericError;
    }
    return kFailure;
}

namespace {

int parse_int(std::string_view text, std::string_view what) {
    int value = 0;
    std::size_t used = 0;
    try {
        value = std::stoi(std::string(text), &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != text.size()) {
        throw ConfigError("malformed " + std::string(what) + " '" + std::string(text) + "'");
    }
    return value;
}

std::string trim(std::string_view s) { return normalize_whitespace(s); }

}  // namespace

std::map<int, std::string> parse_assignment(std::string_view text, int num_stages) {
    std::map<int, std::string> assignment;
    std::istringstream items{std::string(text)};
    std::string item;
    while (std::getline(items, item, ',')) {
        item = trim(item);
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError("assignment item '" + item + "' lacks ':NAME'");
        const std::string range = trim(item.substr(0, colon));
        const std::string name = trim(item.substr(colon + 1));
        if (range.empty() || name.empty()) throw ConfigError("assignment item '" + item + "' is incomplete");
        int lo = 0;
        int hi = 0;
        const auto dash = range.find('-');
        if (dash == std::string::npos) {
            lo = hi = parse_int(range, "stage index");
        } else {
            lo = parse_int(trim(range.substr(0, dash)), "stage index");
            hi = parse_int(trim(range.substr(dash + 1)), "stage index");
        }
        if (lo > hi) throw ConfigError("assignment range '" + range + "' is reversed");
        if (lo < 0 || hi >= num_stages) {
            throw ConfigError("assignment range '" + range + "' leaves [0, " + std::to_string(num_stages) + ")");
        }
        for (int k = lo; k <= hi; ++k) {
            if (!assignment.emplace(k, name).second) {
                throw ConfigError("stage " + std::to_string(k) + " is assigned more than once");
            }
        }
    }
    if (assignment.empty()) throw ConfigError("assignment is empty");
    return assignment;
}

Backend make_backend(std::string_view name, std::uint64_t seed) {
    if (name == "toy") return toy_backend(seed);
    throw ConfigError("unknown backend '" + std::string(name) + "' (only 'toy' is built in)");
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::filesystem::path sidecar_of(const std::filesystem::path& out) {
    auto p = out;
    p += ".json";
    return p;
}

json scales_json(const GuidanceScales& s) {
    return {{"lambda_n", s.lambda_n}, {"lambda_s", s.lambda_s}, {"lambda_c", s.lambda_c}};
}

struct LoadedStyle {
    StyleCheckpoint checkpoint;
    Backend backend;
    std::string hash;
};

LoadedStyle load_style(const std::filesystem::path& path) {
    StyleCheckpoint ckpt = load_checkpoint(path);
    Backend backend = make_backend(ckpt.metadata.backend, ckpt.metadata.backend_seed);
    if (ckpt.table.schedule().num_timesteps() != backend.num_timesteps()) {
        throw ValidationError("checkpoint schedule has " + std::to_string(ckpt.table.schedule().num_timesteps()) +
                              " timesteps, backend '" + backend.name + "' has " +
                              std::to_string(backend.num_timesteps()));
    }
    std::string hash = checkpoint_hash(ckpt);
    return {std::move(ckpt), std::move(backend), std::move(hash)};
}

PromptBundle inference_bundle(const StyleCheckpoint& ckpt, const std::optional<std::string>& opening,
                              const std::string& context) {
    PromptBundle bundle;
    if (opening) {
        bundle.opening = *opening;
    } else if (auto it = ckpt.metadata.extra.find("opening"); it != ckpt.metadata.extra.end()) {
        bundle.opening = it->second;
    }
    bundle.context = context;
    if (!ckpt.metadata.suffix_template.empty()) bundle.style_suffix_template = ckpt.metadata.suffix_template;
    bundle.validate();
    return bundle;
}

struct CaptionArgs {
    std::string image;
    std::string id;
    std::string fixtures;
    std::string url;
    std::string endpoint = "/caption";
    int retries = 2;
    std::string instruction = "Describe the objects, composition and background of this image.";
    std::optional<std::string> refine;
    bool no_prompt = false;
};

int cmd_caption(const CaptionArgs& a, std::ostream& out, std::istream& in) {
    if (a.fixtures.empty() == a.url.empty()) throw ConfigError("caption needs exactly one of --fixtures or --captioner-url");
    const std::filesystem::path image(a.image);
    if (!std::filesystem::exists(image)) throw IoError("image not found: " + image.string());
    const auto bytes = read_file_bytes(image);
    const std::string id = a.id.empty() ? image.filename().string() : a.id;

    std::unique_ptr<Captioner> client;
    if (!a.fixtures.empty()) {
        client = std::make_unique<FixtureCaptioner>(FixtureCaptioner::from_file(a.fixtures));
    } else {
        HttpClientOptions opts;
        opts.base_url = a.url;
        opts.path = a.endpoint;
        opts.retries = a.retries;
        client = std::make_unique<HttpCaptioner>(opts);
    }
    CaptionRecord record = fetch_caption(*client, {id, bytes, a.instruction});
    out << "auto caption: " << record.auto_caption << "\n";
    if (a.refine) {
        record = refine_caption(record, *a.refine);
    } else if (!a.no_prompt) {
        out << "refine caption (empty line keeps it): " << std::flush;
        std::string line;
        if (std::getline(in, line) && !trim(line).empty()) record = refine_caption(record, line);
    }
    const auto sidecar = caption_sidecar_path(image);
    write_caption_sidecar(sidecar, record);
    out << "caption (" << to_string(record.source) << "): " << record.effective() << "\n";
    out << "wrote " << sidecar.string() << "\n";
    return kOk;
}

struct TrainArgs {
    std::vector<std::string> images;
    std::vector<std::string> captions;
    std::string out;
    std::string log;
    std::string backend = "toy";
    std::uint64_t backend_seed = 0;
    TrainConfig config;
};

int cmd_train(const TrainArgs& a, const std::string& effective_config, std::ostream& out) {
    Backend backend = make_backend(a.backend, a.backend_seed);
    a.config.validate(backend.num_timesteps());
    if (a.images.empty()) throw ConfigError("train needs at least one --image");
    if (!a.captions.empty() && a.captions.size() != 1 && a.captions.size() != a.images.size()) {
        throw ConfigError("--caption-inline must be given once or once per image");
    }

    StyleDataset dataset;
    for (std::size_t i = 0; i < a.images.size(); ++i) {
        const std::filesystem::path path(a.images[i]);
        StyleExample ex;
        ex.id = path.filename().string();
        ex.image = read_png(path);
        if (!a.captions.empty()) {
            ex.caption.image_id = ex.id;
            ex.caption.auto_caption = a.captions.size() == 1 ? a.captions.front() : a.captions[i];
            ex.caption = refine_caption(ex.caption, ex.caption.auto_caption);
        } else {
            const auto sidecar = caption_sidecar_path(path);
            if (!std::filesystem::exists(sidecar)) {
                throw IoError("caption sidecar not found: " + sidecar.string() + " (run caption or pass --caption-inline)");
            }
            ex.caption = read_caption_sidecar(sidecar, ex.id);
        }
        dataset.examples.push_back(std::move(ex));
    }

    std::ofstream log;
    if (!a.log.empty()) {
        log.open(a.log, std::ios::trunc);
        if (!log) throw IoError("cannot write training log " + a.log);
    }
    TrainResult result = train(backend, dataset, a.config, a.backend_seed, [&](const StepRecord& r) {
        if (log) log << to_json_line(r) << "\n";
    });
    result.checkpoint.metadata.extra["effective_config"] = effective_config;
    save_checkpoint(result.checkpoint, a.out);

    for (const auto& w : result.warnings) out << "warning: " << w << "\n";
    const auto losses = result.losses();
    const auto smooth = smoothed(losses, 20);
    out << std::setprecision(6);
    out << "trained " << a.config.num_stages << " stages over " << a.config.steps << " steps";
    if (!smooth.empty()) {
        const double first = smooth[std::min<std::size_t>(19, smooth.size() - 1)];
        out << ", smoothed loss " << first << " -> " << smooth.back();
    }
    out << "; checkpoint " << a.out << " (" << checkpoint_hash(result.checkpoint).substr(0, 16) << ")\n";
    return kOk;
}

struct SampleArgs {
    std::string checkpoint;
    std::optional<std::string> opening;
    std::string context;
    int steps = 50;
    GuidanceScales scales;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_sample(const SampleArgs& a, const std::string& effective_config, std::ostream& out) {
    a.scales.validate();
    LoadedStyle style = load_style(a.checkpoint);
    SampleOptions options;
    options.prompt = inference_bundle(style.checkpoint, a.opening, a.context);
    options.scales = a.scales;
    options.num_steps = a.steps;
    options.seed = a.seed;
    const Image image = sample(style.backend, {style.checkpoint.tokens, style.checkpoint.table}, options);
    write_png(a.out, image);
    const json meta = {{"command", "sample"},
                       {"checkpoint", a.checkpoint},
                       {"checkpoint_hash", style.hash},
                       {"prompt", build_inference_prompt(options.prompt, style.checkpoint.tokens)},
                       {"scales", scales_json(a.scales)},
                       {"steps", a.steps},
                       {"seed", a.seed},
                       {"effective_config", effective_config}};
    write_text(sidecar_of(a.out), meta.dump(2) + "\n");
    out << "sampled " << a.out << " (" << a.steps << " steps, seed " << a.seed << ")\n";
    return kOk;
}

struct TransferArgs {
    std::string checkpoint;
    std::string content;
    std::optional<std::string> opening;
    std::string context;
    std::string structure = "depth";
    std::string extractor_url;
    TransferConfig config;
    std::string out;
};

int cmd_transfer(const TransferArgs& a, const std::string& effective_config, std::ostream& out) {
    a.config.validate();
    const StructureModality modality = parse_modality(a.structure);
    LoadedStyle style = load_style(a.checkpoint);
    const PromptBundle bundle = inference_bundle(style.checkpoint, a.opening, a.context);
    const Image content = read_png(a.content);

    std::unique_ptr<StructureExtractor> extractor;
    if (!a.extractor_url.empty()) {
        HttpClientOptions opts;
        opts.base_url = a.extractor_url;
        extractor = std::make_unique<HttpStructureExtractor>(opts);
    } else {
        extractor = std::make_unique<BuiltinStructureExtractor>();
    }
    const TransferResult result = transfer(style.backend, {style.checkpoint.tokens, style.checkpoint.table}, content,
                                           bundle, a.config, extractor.get(), modality);
    write_png(a.out, result.image);
    json meta = {{"command", "transfer"},
                 {"checkpoint", a.checkpoint},
                 {"checkpoint_hash", style.hash},
                 {"content", a.content},
                 {"prompt", build_inference_prompt(bundle, style.checkpoint.tokens)},
                 {"strength", a.config.strength},
                 {"start_timestep", result.start_timestep},
                 {"steps", result.timesteps.size()},
                 {"structure",
                  {{"modality", std::string(to_string(modality))},
                   {"extractor", modality == StructureModality::None ? "none"
                                 : a.extractor_url.empty()          ? "builtin"
                                                                    : a.extractor_url}}},
                 {"scales", scales_json(a.config.scales)},
                 {"seed", a.config.seed},
                 {"effective_config", effective_config}};
    write_text(sidecar_of(a.out), meta.dump(2) + "\n");
    out << "transferred " << a.content << " -> " << a.out << " (t=" << result.start_timestep << ", structure "
        << to_string(modality) << ")\n";
    return kOk;
}

struct MixArgs {
    std::vector<std::string> sources;  // NAME=PATH
    std::string assign;
    std::string base_token;
    std::string out;
};

int cmd_mix(const MixArgs& a, const std::string& effective_config, std::ostream& out) {
    if (a.sources.empty()) throw ConfigError("mix needs at least one --checkpoint NAME=PATH source");
    std::vector<NamedTable<float>> tables;
    std::vector<std::pair<std::string, StyleCheckpoint>> loaded;
    std::set<std::string> names;
    for (const auto& spec : a.sources) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
            throw ConfigError("checkpoint source '" + spec + "' must look like NAME=PATH");
        }
        const std::string name = spec.substr(0, eq);
        if (!names.insert(name).second) throw ConfigError("duplicate source name '" + name + "'");
        StyleCheckpoint ckpt = load_checkpoint(spec.substr(eq + 1));
        if (!loaded.empty()) {
            const auto& first = loaded.front().second.metadata;
            if (ckpt.metadata.backend != first.backend || ckpt.metadata.backend_seed != first.backend_seed) {
                throw ValidationError("checkpoint '" + name + "' was trained on a different backend");
            }
        }
        tables.emplace_back(name, ckpt.table);
        loaded.emplace_back(name, std::move(ckpt));
    }
    const auto& reference = loaded.front().second;
    const auto assignment = parse_assignment(a.assign, reference.table.num_stages());

    StyleCheckpoint mixed{a.base_token.empty() ? reference.tokens
                                               : MultiStageTokenSet::derive(a.base_token, reference.table.num_stages()),
                          mix_styles(tables, assignment), {}};
    mixed.metadata.backend = reference.metadata.backend;
    mixed.metadata.backend_seed = reference.metadata.backend_seed;
    mixed.metadata.initializer = reference.metadata.initializer;
    mixed.metadata.suffix_template = reference.metadata.suffix_template;
    mixed.metadata.loss_history_digest = digest_loss_history({});
    if (auto it = reference.metadata.extra.find("opening"); it != reference.metadata.extra.end()) {
        mixed.metadata.extra["opening"] = it->second;
    }
    std::string sources;
    for (const auto& [name, ckpt] : loaded) {
        if (!sources.empty()) sources += ",";
        sources += name + "=" + checkpoint_hash(ckpt);
    }
    mixed.metadata.extra["mix_assignment"] = a.assign;
    mixed.metadata.extra["mix_sources"] = sources;
    mixed.metadata.extra["effective_config"] = effective_config;
    save_checkpoint(mixed, a.out);
    out << "mixed " << loaded.size() << " styles with '" << a.assign << "' -> " << a.out << "\n";
    return kOk;
}

struct EvalArgs {
    std::string manifest;
    std::string report;
    std::uint64_t metric_seed = 0;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    const auto rows = read_manifest(a.manifest);
    const ToyEmbeddingModel embedder(a.metric_seed);
    const ToyFeatureExtractor extractor(a.metric_seed + 1);
    const ScoreTable table = evaluate_manifest(rows, embedder, extractor);
    write_text(a.report, report_tsv(table));
    auto json_path = std::filesystem::path(a.report);
    json_path += ".json";
    write_text(json_path, report_json(table));
    std::size_t failed = 0;
    for (const auto& r : table.rows) failed += r.error ? 1 : 0;
    out << "evaluated " << table.rows.size() << " rows (" << failed << " failed) -> " << a.report << "\n";
    return kOk;
}

void error_record(std::ostream& err, std::string_view kind, int code, std::string_view message) {
    err << json{{"error", kind}, {"exit_code", code}, {"message", message}}.dump() << std::endl;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err, std::istream& in) {
    CLI::App app{"Multi-stage style embeddings for diffusion models: caption, train, sample, transfer, mix, eval"};
    app.set_config("--config", "", "sectioned key=value config file; flags override it");
    app.require_subcommand(1);

    CaptionArgs cap;
    auto* caption = app.add_subcommand("caption", "caption a style image and write its sidecar");
    caption->add_option("--image", cap.image, "style image (PNG)")->required();
    caption->add_option("--id", cap.id, "image id (defaults to the file name)");
    caption->add_option("--fixtures", cap.fixtures, "offline captions: id<TAB>caption per line");
    caption->add_option("--captioner-url", cap.url, "captioning service base URL");
    caption->add_option("--captioner-path", cap.endpoint, "captioning endpoint path")->capture_default_str();
    caption->add_option("--retries", cap.retries, "extra attempts on transport failure")->capture_default_str();
    caption->add_option("--instruction", cap.instruction, "instruction sent with the image")->capture_default_str();
    caption->add_option("--refine", cap.refine, "refined caption (skips the interactive prompt)");
    caption->add_flag("--no-prompt", cap.no_prompt, "keep the automatic caption without asking");

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "fit per-stage style embeddings");
    train_cmd->add_option("--image", tr.images, "style image(s) (PNG)")->required();
    train_cmd->add_option("--caption-inline", tr.captions, "context caption(s) instead of sidecars");
    train_cmd->add_option("--out", tr.out, "checkpoint path")->required();
    train_cmd->add_option("--log", tr.log, "JSON-lines progress log");
    train_cmd->add_option("--backend", tr.backend, "diffusion backend")->capture_default_str();
    train_cmd->add_option("--backend-seed", tr.backend_seed, "backend weight seed")->capture_default_str();
    train_cmd->add_option("--stages", tr.config.num_stages, "number of stages T")->capture_default_str();
    train_cmd->add_option("--steps", tr.config.steps, "optimisation steps")->capture_default_str();
    train_cmd->add_option("--lr", tr.config.learning_rate, "Adam learning rate")->capture_default_str();
    train_cmd->add_option("--batch-size", tr.config.batch_size, "examples per step")->capture_default_str();
    train_cmd->add_option("--seed", tr.config.seed, "training seed")->capture_default_str();
    train_cmd->add_option("--opening", tr.config.opening, "prompt opening text")->capture_default_str();
    train_cmd->add_option("--initializer", tr.config.initializer, "word whose embedding seeds every stage")
        ->capture_default_str();
    train_cmd->add_option("--base-token", tr.config.base_token, "style placeholder")->capture_default_str();
    train_cmd->add_option("--suffix-template", tr.config.suffix_template, "style suffix with one {style} slot")
        ->capture_default_str();

    SampleArgs sa;
    auto* sample_cmd = app.add_subcommand("sample", "generate an image with a trained style");
    sample_cmd->add_option("--checkpoint", sa.checkpoint, "style checkpoint")->required();
    sample_cmd->add_option("--prompt-opening", sa.opening, "opening text (default: the training opening)");
    sample_cmd->add_option("--prompt-context", sa.context, "context text, e.g. 'of a house'");
    sample_cmd->add_option("--steps", sa.steps, "denoising steps")->capture_default_str();
    sample_cmd->add_option("--lambda-n", sa.scales.lambda_n, "classifier-free scale")->capture_default_str();
    sample_cmd->add_option("--lambda-s", sa.scales.lambda_s, "style guidance scale")->capture_default_str();
    sample_cmd->add_option("--lambda-c", sa.scales.lambda_c, "context guidance scale")->capture_default_str();
    sample_cmd->add_option("--seed", sa.seed, "sampling seed")->capture_default_str();
    sample_cmd->add_option("--out", sa.out, "output PNG")->required();

    TransferArgs ta;
    auto* transfer_cmd = app.add_subcommand("transfer", "restyle a content image");
    transfer_cmd->add_option("--checkpoint", ta.checkpoint, "style checkpoint")->required();
    transfer_cmd->add_option("--content", ta.content, "content image (PNG)")->required();
    transfer_cmd->add_option("--prompt-opening", ta.opening, "opening text (default: the training opening)");
    transfer_cmd->add_option("--prompt-context", ta.context, "context text describing the content");
    transfer_cmd->add_option("--strength", ta.config.strength, "re-noising strength in (0, 1]")->capture_default_str();
    transfer_cmd->add_option("--structure", ta.structure, "structure condition")
        ->check(CLI::IsMember({"depth", "edge", "seg", "none"}))
        ->capture_default_str();
    transfer_cmd->add_option("--extractor-url", ta.extractor_url, "structure extraction service base URL");
    transfer_cmd->add_option("--steps", ta.config.num_steps, "maximum denoising steps")->capture_default_str();
    transfer_cmd->add_option("--lambda-n", ta.config.scales.lambda_n, "classifier-free scale")->capture_default_str();
    transfer_cmd->add_option("--lambda-s", ta.config.scales.lambda_s, "style guidance scale")->capture_default_str();
    transfer_cmd->add_option("--lambda-c", ta.config.scales.lambda_c, "context guidance scale")->capture_default_str();
    transfer_cmd->add_option("--seed", ta.config.seed, "noise seed")->capture_default_str();
    transfer_cmd->add_option("--out", ta.out, "output PNG")->required();

    MixArgs ma;
    auto* mix_cmd = app.add_subcommand("mix", "assemble a style from per-stage sources");
    mix_cmd->add_option("--checkpoint", ma.sources, "source as NAME=PATH (repeat)")->required();
    mix_cmd->add_option("--assign", ma.assign, "stage assignment, e.g. 0-2:A,3-5:B")->required();
    mix_cmd->add_option("--base-token", ma.base_token, "placeholder for the mixed style (default: first source's)");
    mix_cmd->add_option("--out", ma.out, "mixed checkpoint path")->required();

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("eval", "score generated images against prompts and styles");
    eval_cmd->add_option("--manifest", ea.manifest, "TSV of image_path, prompt, style_path")->required();
    eval_cmd->add_option("--report", ea.report, "TSV report path (a .json twin is written too)")->required();
    eval_cmd->add_option("--metric-seed", ea.metric_seed, "toy metric backend seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        error_record(err, "config", kConfigError, e.what());
        return kConfigError;
    }

    try {
        std::string effective;
        for (const auto* sub : app.get_subcommands()) effective = sub->config_to_str(true, false);
        if (caption->parsed()) return cmd_caption(cap, out, in);
        if (train_cmd->parsed()) return cmd_train(tr, effective, out);
        if (sample_cmd->parsed()) return cmd_sample(sa, effective, out);
        if (transfer_cmd->parsed()) return cmd_transfer(ta, effective, out);
        if (mix_cmd->parsed()) return cmd_mix(ma, effective, out);
        if (eval_cmd->parsed()) return cmd_eval(ea, out);
    } catch (const Error& e) {
        const int code = exit_code_for(e.kind());
        error_record(err, to_string(e.kind()), code, e.what());
        return code;
    } catch (const std::exception& e) {
        error_record(err, "internal", kFailure, e.what());
        return kFailure;
    }
    return kFailure;
}

}  // namespace stylestage::cli
