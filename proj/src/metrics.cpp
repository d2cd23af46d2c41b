#include "stylestage/metrics.hpp"

#include "stylestage/digest.hpp"

#include <json.hpp>

#include <cctype>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

namespace stylestage {

std::array<PatchOrigin, 5> patch_origins(int width, int height, int patch) {
    if (width < patch || height < patch) {
        throw ValidationError("image " + std::to_string(width) + "x" + std::to_string(height) +
                              " is smaller than the " + std::to_string(patch) + " pixel patch");
    }
    const int right = width - patch;
    const int bottom = height - patch;
    return {PatchOrigin{0, 0}, PatchOrigin{right, 0}, PatchOrigin{0, bottom}, PatchOrigin{right, bottom},
            PatchOrigin{right / 2, bottom / 2}};
}

Image crop(const Image& image, PatchOrigin origin, int size) {
    if (origin.x < 0 || origin.y < 0 || origin.x + size > image.shape.width || origin.y + size > image.shape.height) {
        throw RangeError("crop outside image bounds");
    }
    Image out(TensorShape{image.shape.channels, size, size});
    for (int c = 0; c < image.shape.channels; ++c) {
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) out.at(c, y, x) = image.at(c, origin.y + y, origin.x + x);
        }
    }
    return out;
}

PairSet all_patch_pairs() {
    PairSet pairs;
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) pairs.emplace_back(i, j);
    }
    return pairs;
}

std::vector<Vector> gram_features(const FeatureExtractor& extractor, const Image& patch) {
    std::vector<Vector> grams;
    for (const Matrix& f : extractor.feature_maps(patch)) {
        if (f.cols() == 0) throw ValidationError("feature map has no positions");
        const Matrix gram = (f * f.transpose()) / static_cast<double>(f.cols());
        grams.emplace_back(Eigen::Map<const Vector>(gram.data(), gram.size()));
    }
    if (static_cast<int>(grams.size()) != extractor.num_layers() || grams.empty()) {
        throw ValidationError("feature extractor returned the wrong number of layers");
    }
    return grams;
}

double style_score(const Image& image, const Image& style, const FeatureExtractor& extractor, const PairSet& pairs) {
    if (pairs.empty()) throw ValidationError("patch pair set is empty");
    auto patch_grams = [&](const Image& img) {
        std::vector<std::vector<Vector>> out;
        for (const auto& origin : patch_origins(img.shape.width, img.shape.height)) {
            out.push_back(gram_features(extractor, crop(img, origin, kPatchSize)));
        }
        return out;
    };
    const auto grams_i = patch_grams(image);
    const auto grams_s = patch_grams(style);
    const int layers = extractor.num_layers();
    double layer_sum = 0.0;
    for (int l = 0; l < layers; ++l) {
        double pair_sum = 0.0;
        for (const auto& [i, j] : pairs) {
            if (i < 0 || i >= 5 || j < 0 || j >= 5) throw RangeError("patch pair index out of range");
            pair_sum += cosine(grams_i[static_cast<std::size_t>(i)][static_cast<std::size_t>(l)],
                               grams_s[static_cast<std::size_t>(j)][static_cast<std::size_t>(l)]);
        }
        layer_sum += pair_sum / static_cast<double>(pairs.size());
    }
    return 50.0 - layer_sum / layers;
}

namespace {

Matrix gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * normal(rng);
    return m;
}

}  // namespace

ToyFeatureExtractor::ToyFeatureExtractor(std::uint64_t seed, int num_layers, int channels) {
    if (num_layers < 1 || channels < 1) throw ValidationError("feature extractor needs layers and channels");
    std::mt19937_64 rng(seed);
    int in = 3;
    for (int l = 0; l < num_layers; ++l) {
        weights_.push_back(gaussian(rng, channels, in * 9, 1.0 / std::sqrt(in * 9.0)));
        biases_.push_back(gaussian(rng, channels, 1, 0.5));
        in = channels;
    }
}

std::vector<Matrix> ToyFeatureExtractor::feature_maps(const Image& patch) const {
    std::vector<Matrix> maps;
    int channels = patch.shape.channels;
    int h = patch.shape.height;
    int w = patch.shape.width;
    // Current activations, channel-major like Image.
    Vector act = patch.values;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        if (weights_[l].cols() != channels * 9) throw ValidationError("feature extractor input channel mismatch");
        if (h < 3 || w < 3) throw ValidationError("patch too small for the feature extractor");
        const int oh = (h - 3) / 2 + 1;
        const int ow = (w - 3) / 2 + 1;
        Matrix columns(channels * 9, oh * ow);
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const int col = oy * ow + ox;
                int row = 0;
                for (int c = 0; c < channels; ++c) {
                    for (int ky = 0; ky < 3; ++ky) {
                        for (int kx = 0; kx < 3; ++kx) {
                            columns(row++, col) = act((static_cast<Eigen::Index>(c) * h + 2 * oy + ky) * w + 2 * ox + kx);
                        }
                    }
                }
            }
        }
        Matrix out = weights_[l] * columns;
        out.colwise() += biases_[l];
        out = out.array().tanh().matrix();
        maps.push_back(out);
        channels = static_cast<int>(out.rows());
        h = oh;
        w = ow;
        // Row-major copy of (channels x positions) is the channel-major layout.
        act.resize(out.size());
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(act.data(), out.rows(),
                                                                                         out.cols()) = out;
    }
    return maps;
}

ToyEmbeddingModel::ToyEmbeddingModel(std::uint64_t seed, int dim) {
    if (dim < 1) throw ValidationError("embedding dimension must be positive");
    std::mt19937_64 rng(seed);
    image_proj_ = gaussian(rng, dim, 49, 1.0 / 7.0);
    text_proj_ = gaussian(rng, dim, 65, 1.0 / 8.0);
}

Vector ToyEmbeddingModel::embed_image(const Image& image) const {
    const int w = image.shape.width;
    const int h = image.shape.height;
    if (image.shape.channels != 3 || w < 4 || h < 4) throw ValidationError("cannot embed image " + image.shape.str());
    Vector features(49);
    for (int c = 0; c < 3; ++c) {
        for (int gy = 0; gy < 4; ++gy) {
            for (int gx = 0; gx < 4; ++gx) {
                double sum = 0.0;
                const int y0 = gy * h / 4, y1 = (gy + 1) * h / 4;
                const int x0 = gx * w / 4, x1 = (gx + 1) * w / 4;
                for (int y = y0; y < y1; ++y) {
                    for (int x = x0; x < x1; ++x) sum += image.at(c, y, x);
                }
                features((c * 4 + gy) * 4 + gx) = sum / ((y1 - y0) * (x1 - x0)) - 0.5;
            }
        }
    }
    features(48) = 1.0;
    return image_proj_ * features;
}

Vector ToyEmbeddingModel::embed_text(std::string_view text) const {
    Vector bag = Vector::Zero(65);
    std::istringstream words{std::string(text)};
    std::string word;
    while (words >> word) {
        for (char& ch : word) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        bag(static_cast<Eigen::Index>(fnv1a(word) % 64)) += 1.0;
    }
    bag(64) = 1.0;
    return text_proj_ * bag;
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read manifest " + path.string());
    const auto base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_relative() ? base / fp : fp;
    };
    std::vector<ManifestRow> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        std::vector<std::string> fields;
        std::istringstream ls(line);
        std::string field;
        while (std::getline(ls, field, '\t')) fields.push_back(field);
        if (fields.size() != 3) {
            throw ConfigError("manifest line " + std::to_string(lineno) + " needs 3 tab-separated fields, got " +
                              std::to_string(fields.size()));
        }
        rows.push_back({resolve(fields[0]), fields[1], resolve(fields[2])});
    }
    return rows;
}

ScoreTable evaluate_manifest(const std::vector<ManifestRow>& manifest, const EmbeddingModel& embedder,
                             const FeatureExtractor& extractor) {
    ScoreTable table;
    for (const auto& row : manifest) {
        ScoreRow out;
        out.source = row;
        try {
            const Image image = read_png(row.image_path);
            const Image style = read_png(row.style_path);
            const Vector e_image = embedder.embed_image(image);
            out.text_score = text_score(e_image, embedder.embed_text(row.prompt));
            out.image_score = image_score(e_image, embedder.embed_image(style));
            out.style_score = style_score(image, style, extractor);
        } catch (const Error& e) {
            out.error = std::string(to_string(e.kind())) + ": " + e.what();
        }
        table.rows.push_back(std::move(out));
    }
    for (const auto& r : table.rows) {
        if (r.error) continue;
        ++table.means.rows;
        table.means.text_score += r.text_score;
        table.means.image_score += r.image_score;
        table.means.style_score += r.style_score;
    }
    if (table.means.rows > 0) {
        const auto n = static_cast<double>(table.means.rows);
        table.means.text_score /= n;
        table.means.image_score /= n;
        table.means.style_score /= n;
    }
    return table;
}

std::string report_tsv(const ScoreTable& table) {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "image\tprompt\tstyle\ttext_score\timage_score\tstyle_score\terror\n";
    for (const auto& r : table.rows) {
        out << r.source.image_path.string() << '\t' << r.source.prompt << '\t' << r.source.style_path.string() << '\t';
        if (r.error) {
            out << "\t\t\t" << *r.error << '\n';
        } else {
            out << r.text_score << '\t' << r.image_score << '\t' << r.style_score << "\t\n";
        }
    }
    out << "mean\t\t\t";
    if (table.means.rows > 0) {
        out << table.means.text_score << '\t' << table.means.image_score << '\t' << table.means.style_score;
    } else {
        out << "\t\t";
    }
    out << '\t' << "rows=" << table.means.rows << '\n';
    return out.str();
}

std::string report_json(const ScoreTable& table) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : table.rows) {
        nlohmann::json j = {{"image", r.source.image_path.string()},
                            {"prompt", r.source.prompt},
                            {"style", r.source.style_path.string()}};
        if (r.error) {
            j["error"] = *r.error;
        } else {
            j["text_score"] = r.text_score;
            j["image_score"] = r.image_score;
            j["style_score"] = r.style_score;
        }
        rows.push_back(std::move(j));
    }
    nlohmann::json means = {{"rows", table.means.rows}};
    if (table.means.rows > 0) {
        means["text_score"] = table.means.text_score;
        means["image_score"] = table.means.image_score;
        means["style_score"] = table.means.style_score;
    }
    return nlohmann::json{{"rows", rows}, {"means", means}}.dump(2) + "\n";
}

}  // namespace stylestage
