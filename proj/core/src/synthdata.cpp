#include "mmct/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "mmct/errors.hpp"

namespace mmct {

namespace {

void validate_gen_config(const GenConfig& cfg) {
    auto fail = [](const std::string& msg) { throw InvalidConfig(msg); };
    if (cfg.num_classes < 2) {
        fail("num_classes: must be >= 2 (got " + std::to_string(cfg.num_classes) + ")");
    }
    if (cfg.samples_per_class < 1) fail("samples_per_class: must be >= 1");
    if (cfg.image_dim < 2) {
        fail("image_dim: must be >= 2 (got " + std::to_string(cfg.image_dim) + ")");
    }
    if (cfg.caption_dim < 2) {
        fail("caption_dim: must be >= 2 (got " + std::to_string(cfg.caption_dim) + ")");
    }
    if (cfg.num_tags < 1) fail("num_tags: must be >= 1");
    if (cfg.tags_per_class < 1 || cfg.tags_per_class > cfg.num_tags) {
        fail("tags_per_class: must be in [1, num_tags] (got " +
             std::to_string(cfg.tags_per_class) + ")");
    }
    if (!(cfg.noise_std > 0.0)) fail("noise_std: must be > 0");
    if (cfg.tag_flip_prob < 0.0 || cfg.tag_flip_prob > 1.0) {
        fail("tag_flip_prob: must be in [0, 1]");
    }
    if (cfg.modal_correlation < 0.0 || cfg.modal_correlation > 1.0) {
        fail("modal_correlation: must be in [0, 1]");
    }
}

/// Rows are unit-norm so each coordinate of M*z with z ~ N(0, I) is N(0, 1).
Matrix random_mixing_matrix(std::size_t rows, std::size_t cols, SeededRng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.values) v = rng.normal();
    for (std::size_t r = 0; r < rows; ++r) {
        double norm = 0.0;
        for (std::size_t c = 0; c < cols; ++c) norm += m.at(r, c) * m.at(r, c);
        norm = std::sqrt(norm);
        for (std::size_t c = 0; c < cols; ++c) m.at(r, c) /= norm;
    }
    return m;
}

} // namespace

SplitDataset generate(const GenConfig& cfg) {
    validate_gen_config(cfg);
    SeededRng rng(cfg.seed);

    const std::size_t latent_dim = std::min(cfg.image_dim, cfg.caption_dim);
    const Matrix image_mix = random_mixing_matrix(cfg.image_dim, latent_dim, rng);
    const Matrix caption_mix = random_mixing_matrix(cfg.caption_dim, latent_dim, rng);

    std::vector<Vector> image_protos, caption_protos;
    std::vector<std::vector<std::size_t>> class_tags;
    std::vector<std::size_t> tag_indices(cfg.num_tags);
    std::iota(tag_indices.begin(), tag_indices.end(), 0);
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
        image_protos.push_back(l2_normalize(rng.normal_vector(cfg.image_dim)));
        caption_protos.push_back(l2_normalize(rng.normal_vector(cfg.caption_dim)));
        auto shuffled = tag_indices;
        rng.shuffle(shuffled);
        shuffled.resize(cfg.tags_per_class);
        class_tags.push_back(std::move(shuffled));
    }

    const double shared_w = std::sqrt(cfg.modal_correlation);
    const double private_w = std::sqrt(1.0 - cfg.modal_correlation);

    SplitDataset out;
    for (Dataset* d : {&out.train, &out.test}) {
        d->num_classes = cfg.num_classes;
        d->num_tags = cfg.num_tags;
        d->image_dim = cfg.image_dim;
        d->caption_dim = cfg.caption_dim;
    }

    std::size_t global = 0;
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
        Vector base_tags(cfg.num_tags, 0.0);
        for (std::size_t t : class_tags[c]) base_tags[t] = 1.0;
        for (std::size_t s = 0; s < cfg.samples_per_class; ++s, ++global) {
            const Vector z = rng.normal_vector(latent_dim);
            const Vector eps_image = rng.normal_vector(cfg.image_dim);
            const Vector eps_caption = rng.normal_vector(cfg.caption_dim);
            const Vector shared_image = matvec(image_mix, z);
            const Vector shared_caption = matvec(caption_mix, z);

            Sample sample;
            sample.class_id = static_cast<std::int64_t>(c);
            sample.image.resize(cfg.image_dim);
            for (std::size_t i = 0; i < cfg.image_dim; ++i) {
                sample.image[i] =
                    image_protos[c][i] +
                    cfg.noise_std * (shared_w * shared_image[i] + private_w * eps_image[i]);
            }
            sample.caption.resize(cfg.caption_dim);
            for (std::size_t i = 0; i < cfg.caption_dim; ++i) {
                sample.caption[i] = caption_protos[c][i] +
                                    cfg.noise_std * (shared_w * shared_caption[i] +
                                                     private_w * eps_caption[i]);
            }
            sample.tags = base_tags;
            for (std::size_t t = 0; t < cfg.num_tags; ++t) {
                if (rng.uniform() < cfg.tag_flip_prob) {
                    sample.tags[t] = 1.0 - sample.tags[t];
                }
            }
            Dataset& split = (global % 10 == 9) ? out.test : out.train;
            split.samples.push_back(std::move(sample));
        }
    }
    return out;
}

Vector augment(const Vector& v, const AugConfig& cfg, SeededRng& rng) {
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = v[i] + cfg.noise_std * rng.normal();
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (rng.uniform() < cfg.dropout_prob) out[i] = 0.0;
    }
    return out;
}

namespace {

using nlohmann::json;

json sample_to_json(const Sample& s) {
    json tags = json::array();
    for (double t : s.tags) tags.push_back(static_cast<int>(t));
    return json{{"class_id", s.class_id},
                {"image", s.image},
                {"caption", s.caption},
                {"tags", std::move(tags)}};
}

Sample sample_from_json(const json& j, const Dataset& meta) {
    Sample s;
    s.class_id = j.at("class_id").get<std::int64_t>();
    if (s.class_id < 0 || s.class_id >= static_cast<std::int64_t>(meta.num_classes)) {
        throw FormatError("sample class_id out of range: " +
                          std::to_string(s.class_id));
    }
    s.image = j.at("image").get<Vector>();
    s.caption = j.at("caption").get<Vector>();
    for (int t : j.at("tags")) {
        if (t != 0 && t != 1) throw FormatError("sample tags must be 0/1");
        s.tags.push_back(static_cast<double>(t));
    }
    if (s.image.size() != meta.image_dim || s.caption.size() != meta.caption_dim ||
        s.tags.size() != meta.num_tags) {
        throw FormatError("sample field sizes do not match dataset dims");
    }
    return s;
}

json gen_config_to_json(const GenConfig& cfg) {
    return json{{"num_classes", cfg.num_classes},
                {"samples_per_class", cfg.samples_per_class},
                {"image_dim", cfg.image_dim},
                {"caption_dim", cfg.caption_dim},
                {"num_tags", cfg.num_tags},
                {"tags_per_class", cfg.tags_per_class},
                {"noise_std", cfg.noise_std},
                {"tag_flip_prob", cfg.tag_flip_prob},
                {"modal_correlation", cfg.modal_correlation},
                {"seed", cfg.seed}};
}

} // namespace

void save_dataset(const SplitDataset& data, const GenConfig& cfg,
                  const std::string& path) {
    json doc;
    doc["version"] = 1;
    doc["kind"] = "dataset";
    doc["generator"] = gen_config_to_json(cfg);
    doc["num_classes"] = data.train.num_classes;
    doc["num_tags"] = data.train.num_tags;
    doc["image_dim"] = data.train.image_dim;
    doc["caption_dim"] = data.train.caption_dim;
    json train = json::array();
    for (const Sample& s : data.train.samples) train.push_back(sample_to_json(s));
    json test = json::array();
    for (const Sample& s : data.test.samples) test.push_back(sample_to_json(s));
    doc["train"] = std::move(train);
    doc["test"] = std::move(test);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << doc.dump() << '\n';
    if (!out) throw IoError("write failed: " + path);
}

SplitDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError("dataset is not valid JSON: " + std::string(e.what()));
    }
    try {
        if (doc.at("kind").get<std::string>() != "dataset") {
            throw FormatError("file is not a dataset (kind mismatch)");
        }
        const int version = doc.at("version").get<int>();
        if (version != 1) {
            throw FormatError("dataset version " + std::to_string(version) +
                              " unsupported, expected 1");
        }
        SplitDataset data;
        for (Dataset* d : {&data.train, &data.test}) {
            d->num_classes = doc.at("num_classes").get<std::size_t>();
            d->num_tags = doc.at("num_tags").get<std::size_t>();
            d->image_dim = doc.at("image_dim").get<std::size_t>();
            d->caption_dim = doc.at("caption_dim").get<std::size_t>();
        }
        for (const json& j : doc.at("train")) {
            data.train.samples.push_back(sample_from_json(j, data.train));
        }
        for (const json& j : doc.at("test")) {
            data.test.samples.push_back(sample_from_json(j, data.test));
        }
        return data;
    } catch (const json::exception& e) {
        throw FormatError("dataset JSON missing or mistyped field: " +
                          std::string(e.what()));
    }
}

} // namespace mmct
