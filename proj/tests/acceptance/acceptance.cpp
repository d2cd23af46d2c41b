// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include "stylestage/guidance.hpp"
#include "stylestage/metrics.hpp"
#include "stylestage/persistence.hpp"
#include "stylestage/prompts.hpp"
#include "stylestage/sampler.hpp"
#include "stylestage/styletransfer.hpp"
#include "stylestage/trainer.hpp"

#include "../support.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

using namespace stylestage;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

// Accumulates failures without stopping at the first one.
class Checker {
public:
    void expect(bool ok, const std::string& what) {
        if (!ok && failures_.size() < 5) failures_.push_back(what);
        if (!ok) ++count_;
    }
    Verdict verdict(const std::string& summary) const {
        if (count_ == 0) return {true, summary};
        std::string d = std::to_string(count_) + " failure(s): ";
        for (std::size_t i = 0; i < failures_.size(); ++i) d += (i ? "; " : "") + failures_[i];
        return {false, d};
    }

private:
    std::vector<std::string> failures_;
    int count_ = 0;
};

double max_abs(const Vector& a, const Vector& b) { return (a - b).cwiseAbs().maxCoeff(); }

StyleDataset one_image(double phase, const std::string& context) {
    StyleDataset d;
    d.examples.push_back(testing::style_example("style.png", testing::pattern_image(256, 256, phase), context));
    return d;
}

Verdict guidance_algebra() {
    Checker c;
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> scale(0.0, 10.0);
    const TensorShape shape{4, 8, 8};
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        auto draw = [&] { return NoiseTensor(shape, testing::random_vector(rng, shape.size())); };
        const GuidanceInputs in{draw(), draw(), draw(), draw()};
        const double lam = scale(rng);
        const double ls = scale(rng);
        const double lc = scale(rng);

        const double a = max_abs(compose_guidance(in, {1.0, 0.0, 0.0}).values, in.full.values);
        const GuidanceInputs same{in.full, in.full, in.full, in.full};
        const double b = max_abs(compose_guidance(same, {scale(rng), ls, lc}).values, in.full.values);
        const Vector doubled = in.null.values + 2.0 * lam * (in.full.values - in.null.values);
        const double cc = max_abs(compose_guidance(in, {0.0, lam, lam}).values, doubled);
        const Vector sum =
            compose_guidance_v1(in, ls, lc).values + compose_guidance_v2(in, ls, lc).values - in.null.values;
        const double d = max_abs(compose_guidance(in, {0.0, ls, lc}).values, sum);
        worst = std::max({worst, a, b, cc, d});
        c.expect(a <= 1e-6, "(a) trial " + std::to_string(trial));
        c.expect(b <= 1e-6, "(b) trial " + std::to_string(trial));
        c.expect(cc <= 1e-6, "(c) trial " + std::to_string(trial));
        c.expect(d <= 1e-6, "(d) trial " + std::to_string(trial));
    }
    std::ostringstream s;
    s << "400 identity checks, max abs error " << worst;
    return c.verdict(s.str());
}

Verdict stage_partition() {
    Checker c;
    int scans = 0;
    for (int t_max : {50, 1000}) {
        for (int T = 1; T <= 10; ++T) {
            const StageSchedule schedule(T, t_max);
            std::vector<int> sizes(static_cast<std::size_t>(T), 0);
            int previous = 0;
            for (int t = 0; t < t_max; ++t) {
                const int k = schedule.stage_of(t);
                c.expect(k >= 0 && k < T, "stage out of range");
                c.expect(k == previous || k == previous + 1, "non-contiguous step at t=" + std::to_string(t));
                if (t == 0) c.expect(k == 0, "t=0 not in stage 0");
                previous = k;
                ++sizes[static_cast<std::size_t>(k)];
            }
            c.expect(previous == T - 1, "last stage unused for T=" + std::to_string(T));
            const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
            c.expect(*hi - *lo <= 1, "unbalanced chunks for T=" + std::to_string(T));
            c.expect(*lo > 0, "empty stage for T=" + std::to_string(T));
            ++scans;
        }
    }
    return c.verdict(std::to_string(scans) + " exhaustive scans");
}

Verdict gradient_isolation() {
    Checker c;
    const Backend backend = toy_backend(9);
    const auto dataset = one_image(0.4, "of a house by a river");
    TrainConfig config;
    config.seed = 2;
    TrainState state = TrainState::prepare(backend, dataset, config);
    StageEmbeddingTable table = initial_table(backend, config);
    std::mt19937_64 rng(31);
    std::normal_distribution<double> normal;
    double worst_rel = 0.0;
    for (int step = 0; step < 50; ++step) {
        const StageEmbeddingTable before = table;
        const auto record = train_step(state, backend, table, dataset, config, rng);
        for (int k = 0; k < table.num_stages(); ++k) {
            if (k == record.stage) continue;
            c.expect(std::memcmp(table[k].data(), before[k].data(), sizeof(float) * table.dim()) == 0,
                     "stage " + std::to_string(k) + " moved at step " + std::to_string(step));
        }

        NoiseTensor eps(backend.latent_shape());
        for (Eigen::Index i = 0; i < eps.values.size(); ++i) eps.values(i) = normal(rng);
        const int t = record.t;
        const Vector base = before[record.stage].cast<double>();
        const auto analytic = stage_loss_and_gradient(backend, state.tokens, config, dataset.examples[0],
                                                      state.latents[0], t, eps, base);
        const double h = 1e-4;
        Vector numeric(table.dim());
        for (Eigen::Index i = 0; i < table.dim(); ++i) {
            Vector plus = base;
            Vector minus = base;
            plus(i) += h;
            minus(i) -= h;
            numeric(i) = (stage_loss_and_gradient(backend, state.tokens, config, dataset.examples[0],
                                                  state.latents[0], t, eps, plus).loss -
                          stage_loss_and_gradient(backend, state.tokens, config, dataset.examples[0],
                                                  state.latents[0], t, eps, minus).loss) /
                         (2 * h);
        }
        const double rel =
            (analytic.gradient - numeric).norm() / std::max(analytic.gradient.norm(), numeric.norm());
        worst_rel = std::max(worst_rel, rel);
        c.expect(rel < 1e-4, "finite-difference mismatch at step " + std::to_string(step));
    }
    std::ostringstream s;
    s << "50 steps, inactive stages bit-unchanged, worst FD relative error " << worst_rel;
    return c.verdict(s.str());
}

Verdict toy_convergence() {
    Checker c;
    const std::clock_t cpu0 = std::clock();
    const Backend backend = toy_backend(0);
    TrainConfig config;
    config.num_stages = 6;
    config.steps = 200;
    config.seed = 0;
    const auto result = train(backend, one_image(0.0, "of a house by a river"), config);
    const double cpu = static_cast<double>(std::clock() - cpu0) / CLOCKS_PER_SEC;
    const auto s = smoothed(result.losses(), 20);
    const double drop = 1.0 - s.back() / s[19];
    c.expect(drop >= 0.20, "smoothed loss dropped only " + std::to_string(100 * drop) + "%");
    c.expect(cpu < 60.0, "CPU time " + std::to_string(cpu) + " s");
    std::ostringstream out;
    out << "smoothed loss " << s[19] << " -> " << s.back() << " (" << 100 * drop << "% drop), CPU " << cpu << " s";
    return c.verdict(out.str());
}

Verdict metric_oracles() {
    Checker c;
    auto brute = [](const Vector& a, const Vector& b) {
        long double dot = 0, na = 0, nb = 0;
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            dot += static_cast<long double>(a(i)) * b(i);
            na += static_cast<long double>(a(i)) * a(i);
            nb += static_cast<long double>(b(i)) * b(i);
        }
        return static_cast<double>(std::max(100.0L * dot / std::sqrt(na * nb), 0.0L));
    };
    std::mt19937_64 rng(55);
    const ToyEmbeddingModel embedder(3);
    double worst = 0.0;
    for (int f = 0; f < 10; ++f) {
        const Image img = testing::pattern_image(256, 256, 0.7 * f);
        const Image sty = testing::pattern_image(256, 256, 5.0 - 0.3 * f);
        const std::string prompt = "a painting of fixture " + std::to_string(f);
        const Vector ei = embedder.embed_image(img);
        const Vector et = embedder.embed_text(prompt);
        const Vector es = embedder.embed_image(sty);
        worst = std::max(worst, std::abs(text_score(ei, et) - brute(ei, et)));
        worst = std::max(worst, std::abs(image_score(ei, es) - brute(ei, es)));
        const Vector ra = testing::random_vector(rng, 64);
        const Vector rb = testing::random_vector(rng, 64);
        worst = std::max(worst, std::abs(text_score(ra, rb) - brute(ra, rb)));
    }
    c.expect(worst <= 1e-9, "cosine oracle mismatch " + std::to_string(worst));

    const Image flat = testing::step_edge_image(256, 256, 0, 0.35, 0.35);
    const double self = style_score(flat, flat, ToyFeatureExtractor(1), all_patch_pairs());
    c.expect(self == 49.0, "constant-colour self style score is not exactly 49");

    const auto o = patch_origins(448, 448);
    const std::array<PatchOrigin, 5> expected{PatchOrigin{0, 0}, PatchOrigin{224, 0}, PatchOrigin{0, 224},
                                              PatchOrigin{224, 224}, PatchOrigin{112, 112}};
    c.expect(o == expected, "448x448 patch origins differ");
    std::ostringstream s;
    s << "30 cosine comparisons (max diff " << worst << "), self style score " << self << ", patch origins exact";
    return c.verdict(s.str());
}

Verdict style_mixing() {
    Checker c;
    const Backend backend = toy_backend(4);
    TrainConfig config;
    config.steps = 60;
    config.seed = 1;
    const auto a = train(backend, one_image(0.0, "of a house"), config).checkpoint;
    config.seed = 2;
    const auto b = train(backend, one_image(2.5, "of a lighthouse"), config).checkpoint;
    for (int k = 0; k < 6; ++k) c.expect(a.table[k] != b.table[k], "sources coincide at stage " + std::to_string(k));

    std::map<int, std::string> assignment;
    for (int k = 0; k < 6; ++k) assignment[k] = k <= 2 ? "A" : "B";
    const auto mixed = mix_styles<float>({{"A", a.table}, {"B", b.table}}, assignment);
    for (int k = 0; k < 6; ++k) {
        const auto& source = k <= 2 ? a.table[k] : b.table[k];
        c.expect(std::memcmp(mixed[k].data(), source.data(), sizeof(float) * mixed.dim()) == 0,
                 "mixed stage " + std::to_string(k) + " differs from its source");
    }

    const StyleEmbedding style{a.tokens, mixed};
    SampleOptions options;
    options.num_steps = 50;
    int traced = 0;
    sample(backend, style, options, nullptr, [&](const StepTrace& tr) {
        ++traced;
        const int k = mixed.schedule().stage_of(tr.t);
        const auto& expected = k <= 2 ? a.table[k] : b.table[k];
        c.expect(tr.injected == expected, "t=" + std::to_string(tr.t) + " injected the wrong source");
    });
    c.expect(traced == 50, "trace has " + std::to_string(traced) + " steps");
    return c.verdict("stages 0-2 from A and 3-5 from B, 50 traced sampling steps");
}

Verdict transfer_degeneracy() {
    Checker c;
    const Backend backend = toy_backend(2);
    TrainConfig tc;
    tc.steps = 40;
    const auto ck = train(backend, one_image(0.0, "of a house"), tc).checkpoint;
    const StyleEmbedding style{ck.tokens, ck.table};
    const Image content = testing::pattern_image(256, 256, 1.3);

    TransferConfig zero;
    zero.strength = 0.01;
    const auto degenerate = transfer(backend, style, content, PromptBundle{}, zero);
    const Image round_trip = backend.codec->decode(backend.codec->encode(content));
    const double residual = max_abs(degenerate.image.values, round_trip.values);
    c.expect(degenerate.start_timestep == 0, "strength 0.01 did not map to t=0");
    c.expect(residual <= kToyCodecTolerance, "t=0 residual " + std::to_string(residual));

    TransferConfig config;
    config.strength = 0.8;
    config.seed = 3;
    const auto plain = transfer(backend, style, content, PromptBundle{}, config);
    const auto depth = transfer(backend, style, content, PromptBundle{}, config, nullptr, StructureModality::Depth);
    const double distance = (plain.image.values - depth.image.values).norm();
    c.expect(distance > 0.0, "structure conditioning had no effect");
    std::ostringstream s;
    s << "t=0 residual " << residual << " <= " << kToyCodecTolerance << ", structure distance " << distance;
    return c.verdict(s.str());
}

Verdict determinism_and_persistence() {
    Checker c;
    testing::TempDir dir;
    auto run = [&](const std::string& tag) {
        const Backend backend = toy_backend(7);
        TrainConfig config;
        config.steps = 80;
        config.seed = 11;
        const auto result = train(backend, one_image(0.5, "of a harbour"), config, 7);
        const auto path = dir / (tag + ".ssckpt");
        save_checkpoint(result.checkpoint, path);
        const auto loaded = load_checkpoint(path);
        SampleOptions options;
        options.prompt.context = "of a harbour";
        options.seed = 21;
        options.num_steps = 25;
        const Image img = sample(toy_backend(7), StyleEmbedding{loaded.tokens, loaded.table}, options);
        write_png(dir / (tag + ".png"), img);
        std::ifstream ck_in(path, std::ios::binary);
        std::ifstream png_in(dir / (tag + ".png"), std::ios::binary);
        return std::pair<std::string, std::string>{std::string(std::istreambuf_iterator<char>(ck_in), {}),
                                                    std::string(std::istreambuf_iterator<char>(png_in), {})};
    };
    const auto first = run("first");
    const auto second = run("second");
    c.expect(first.first == second.first, "checkpoint bytes differ");
    c.expect(first.second == second.second, "image bytes differ");

    int detected = 0;
    const std::string& good = first.first;
    for (std::size_t i = 0; i < good.size(); ++i) {
        std::string bad = good;
        bad[i] = bad[i] == 'x' ? 'y' : 'x';
        try {
            parse_checkpoint(bad);
        } catch (const IntegrityError&) {
            ++detected;
        } catch (const VersionError&) {
            ++detected;
        } catch (const TruncatedError&) {
            ++detected;
        }
    }
    c.expect(detected == static_cast<int>(good.size()),
             std::to_string(good.size() - detected) + " corrupted byte position(s) loaded silently");
    return c.verdict("identical checkpoint and PNG bytes, " + std::to_string(detected) + "/" +
                     std::to_string(good.size()) + " single-byte corruptions detected");
}

Verdict prompt_round_trip() {
    Checker c;
    const std::vector<std::string> openings{"a painting", "a photo", "an illustration", "A sketch"};
    const std::vector<std::string> words{"of", "a", "house", "woman", "in", "blue", "dress", "river", "by", "two"};
    const std::vector<std::string> templates{"in the style of {style}", "{style} style", "by {style}"};
    std::mt19937_64 rng(2024);
    auto pick = [&](const auto& v) { return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)]; };
    auto squash = [](const std::string& s) {
        std::istringstream in(s);
        std::string out;
        for (std::string w; in >> w;) out += (out.empty() ? "" : " ") + w;
        return out;
    };
    for (int trial = 0; trial < 100; ++trial) {
        const int T = std::uniform_int_distribution<int>(1, 10)(rng);
        const auto tokens = MultiStageTokenSet::derive("<style>", T);
        PromptBundle bundle;
        bundle.opening = pick(openings);
        const int n = std::uniform_int_distribution<int>(0, 8)(rng);
        for (int i = 0; i < n; ++i) bundle.context += pick(words) + " ";
        bundle.style_suffix_template = pick(templates);
        const int k = std::uniform_int_distribution<int>(0, T - 1)(rng);
        const std::string prompt = build_training_prompt(bundle, tokens, k);

        std::string suffix = bundle.style_suffix_template;
        suffix.replace(suffix.find("{style}"), 7, tokens.stage_tokens[static_cast<std::size_t>(k)]);
        const auto parts = split_for_guidance(prompt, bundle.style_suffix_template);
        c.expect(parts.context == squash(bundle.opening + " " + bundle.context), "context mismatch");
        c.expect(parts.style == squash(suffix), "style suffix mismatch");

        std::istringstream in(prompt);
        int own = 0;
        int other = 0;
        for (std::string w; in >> w;) {
            for (int j = 0; j < T; ++j) {
                if (w == tokens.stage_tokens[static_cast<std::size_t>(j)]) (j == k ? own : other)++;
            }
        }
        c.expect(own == 1 && other == 0, "stage token count wrong in '" + prompt + "'");
    }
    return c.verdict("100 randomized bundles");
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"guidance algebra", guidance_algebra},
        {"stage partition", stage_partition},
        {"gradient isolation", gradient_isolation},
        {"toy convergence", toy_convergence},
        {"metric oracles", metric_oracles},
        {"style mixing", style_mixing},
        {"transfer degeneracy", transfer_degeneracy},
        {"determinism and persistence", determinism_and_persistence},
        {"prompt round trip", prompt_round_trip},
    };
    const std::vector<double> budgets{5.0, 1.0, 0.0, 60.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (budgets[i] > 0.0 && seconds >= budgets[i]) {
            v.pass = false;
            v.detail += "; exceeded the " + std::to_string(budgets[i]) + " s budget";
        }
        failed += v.pass ? 0 : 1;
        std::printf("criterion %zu %s: %s (%.3f s) %s\n", i + 1, criteria[i].first.c_str(), v.pass ? "PASS" : "FAIL",
                    seconds, v.detail.c_str());
    }
    std::fflush(stdout);
    return failed == 0 ? 0 : 1;
}
