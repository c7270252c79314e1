#include "mmct/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmct/errors.hpp"

namespace mmct {

namespace {

RetrievalReport rank_direction(std::span<const Vector> queries,
                               std::span<const Vector> targets,
                               std::span<const std::size_t> k_list) {
    const std::size_t n = queries.size();
    std::vector<std::size_t> ranks(n);
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) scores[j] = dot(queries[i], targets[j]);
        const double s_true = scores[i];
        std::size_t rank = 1;
        for (std::size_t j = 0; j < n; ++j) {
            if (scores[j] > s_true || (scores[j] == s_true && j < i)) ++rank;
        }
        ranks[i] = rank;
    }

    RetrievalReport report;
    for (std::size_t k : k_list) {
        std::size_t hits = 0;
        for (std::size_t r : ranks) {
            if (r <= k) ++hits;
        }
        report.r_at[k] = 100.0 * static_cast<double>(hits) / static_cast<double>(n);
    }
    std::vector<std::size_t> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    report.med_r = static_cast<double>(sorted[(n - 1) / 2]); // lower median
    return report;
}

} // namespace

RetrievalPair retrieval_eval(std::span<const Vector> image_feats,
                             std::span<const Vector> caption_feats,
                             std::span<const std::size_t> k_list) {
    if (image_feats.empty()) throw EmptyTestSet("retrieval requires a nonempty set");
    if (image_feats.size() != caption_feats.size()) {
        throw DimensionMismatch("feature counts differ: " +
                                std::to_string(image_feats.size()) + " images vs " +
                                std::to_string(caption_feats.size()) + " captions");
    }
    RetrievalPair pair;
    pair.image_to_text = rank_direction(image_feats, caption_feats, k_list);
    pair.text_to_image = rank_direction(caption_feats, image_feats, k_list);
    return pair;
}

namespace {

struct Standardizer {
    Vector mean;
    Vector scale; // 1 / std, with near-constant dims mapped to 0-centered

    explicit Standardizer(std::span<const Vector> feats) {
        const std::size_t d = feats.front().size();
        const double n = static_cast<double>(feats.size());
        mean.assign(d, 0.0);
        for (const Vector& f : feats) add_scaled(mean, f, 1.0 / n);
        Vector var(d, 0.0);
        for (const Vector& f : feats) {
            for (std::size_t i = 0; i < d; ++i) {
                const double c = f[i] - mean[i];
                var[i] += c * c / n;
            }
        }
        scale.assign(d, 0.0);
        for (std::size_t i = 0; i < d; ++i) {
            const double sd = std::sqrt(var[i]);
            scale[i] = sd > 1e-8 ? 1.0 / sd : 1.0;
        }
    }

    Vector apply(const Vector& f) const {
        Vector out(f.size());
        for (std::size_t i = 0; i < f.size(); ++i) {
            out[i] = (f[i] - mean[i]) * scale[i];
        }
        return out;
    }
};

void check_feature_dims(std::span<const Vector> feats, std::size_t d,
                        const char* what) {
    for (const Vector& f : feats) {
        if (f.size() != d) {
            throw DimensionMismatch(std::string(what) +
                                    " features have inconsistent dims");
        }
    }
}

/// One full-batch heavy-ball GD fit of an affine map X -> logits with the
/// given gradient callback filling (grad_w, grad_b) and returning the
/// gradient inf-norm. Shared by the probe and the tagging head.
template <typename GradFn>
void gd_fit(Matrix& w, Vector& b, const ProbeConfig& cfg, GradFn&& grad_fn) {
    Matrix vel_w(w.rows, w.cols);
    Vector vel_b(b.size(), 0.0);
    Matrix grad_w(w.rows, w.cols);
    Vector grad_b(b.size(), 0.0);
    for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
        std::fill(grad_w.values.begin(), grad_w.values.end(), 0.0);
        std::fill(grad_b.begin(), grad_b.end(), 0.0);
        const double inf_norm = grad_fn(grad_w, grad_b);
        if (inf_norm < cfg.tol) break;
        for (std::size_t i = 0; i < w.values.size(); ++i) {
            vel_w.values[i] = cfg.momentum * vel_w.values[i] + grad_w.values[i];
            w.values[i] -= cfg.lr * vel_w.values[i];
        }
        for (std::size_t i = 0; i < b.size(); ++i) {
            vel_b[i] = cfg.momentum * vel_b[i] + grad_b[i];
            b[i] -= cfg.lr * vel_b[i];
        }
    }
}

double inf_norm_of(const Matrix& w, const Vector& b) {
    double m = 0.0;
    for (double v : w.values) m = std::max(m, std::abs(v));
    for (double v : b) m = std::max(m, std::abs(v));
    return m;
}

double dot_row(const Matrix& m, std::size_t row, const Vector& x) {
    const double* r = m.values.data() + row * m.cols;
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) s += r[j] * x[j];
    return s;
}

} // namespace

double linear_probe(std::span<const Vector> train_feats,
                    std::span<const std::int64_t> train_labels,
                    std::span<const Vector> test_feats,
                    std::span<const std::int64_t> test_labels,
                    const ProbeConfig& cfg) {
    if (train_feats.empty()) throw EmptyBatch("probe requires train features");
    if (test_feats.empty()) throw EmptyTestSet("probe requires test features");
    if (train_feats.size() != train_labels.size() ||
        test_feats.size() != test_labels.size()) {
        throw DimensionMismatch("feature and label counts differ");
    }
    const std::size_t d = train_feats.front().size();
    check_feature_dims(train_feats, d, "train");
    check_feature_dims(test_feats, d, "test");

    std::int64_t max_label = 0;
    for (std::int64_t l : train_labels) {
        if (l < 0) throw DegenerateLabels("negative label");
        max_label = std::max(max_label, l);
    }
    const std::size_t c = static_cast<std::size_t>(max_label) + 1;
    std::vector<std::size_t> counts(c, 0);
    for (std::int64_t l : train_labels) ++counts[static_cast<std::size_t>(l)];
    for (std::size_t k = 0; k < c; ++k) {
        if (counts[k] == 0) {
            throw DegenerateLabels("class " + std::to_string(k) +
                                   " absent from train labels");
        }
    }
    for (std::int64_t l : test_labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= c) {
            throw DegenerateLabels("test label " + std::to_string(l) +
                                   " outside train classes");
        }
    }

    const Standardizer std_izer{train_feats};
    std::vector<Vector> x_train(train_feats.size());
    for (std::size_t i = 0; i < train_feats.size(); ++i) {
        x_train[i] = std_izer.apply(train_feats[i]);
    }

    Matrix w(c, d);
    Vector b(c, 0.0);
    const double inv_n = 1.0 / static_cast<double>(x_train.size());
    gd_fit(w, b, cfg, [&](Matrix& grad_w, Vector& grad_b) {
        Vector p(c);
        for (std::size_t i = 0; i < x_train.size(); ++i) {
            for (std::size_t k = 0; k < c; ++k) {
                p[k] = dot_row(w, k, x_train[i]) + b[k];
            }
            const double m = *std::max_element(p.begin(), p.end());
            double z = 0.0;
            for (double& v : p) {
                v = std::exp(v - m);
                z += v;
            }
            for (std::size_t k = 0; k < c; ++k) {
                const double r =
                    (p[k] / z -
                     (k == static_cast<std::size_t>(train_labels[i]) ? 1.0 : 0.0)) *
                    inv_n;
                grad_b[k] += r;
                for (std::size_t j = 0; j < d; ++j) {
                    grad_w.at(k, j) += r * x_train[i][j];
                }
            }
        }
        if (cfg.l2 > 0.0) {
            for (std::size_t i = 0; i < w.values.size(); ++i) {
                grad_w.values[i] += cfg.l2 * w.values[i];
            }
        }
        return inf_norm_of(grad_w, grad_b);
    });

    std::size_t correct = 0;
    for (std::size_t i = 0; i < test_feats.size(); ++i) {
        const Vector x = std_izer.apply(test_feats[i]);
        std::size_t best = 0;
        double best_score = dot_row(w, 0, x) + b[0];
        for (std::size_t k = 1; k < c; ++k) {
            const double s = dot_row(w, k, x) + b[k];
            if (s > best_score) { // ties keep the lowest class index
                best_score = s;
                best = k;
            }
        }
        if (best == static_cast<std::size_t>(test_labels[i])) ++correct;
    }
    return 100.0 * static_cast<double>(correct) /
           static_cast<double>(test_feats.size());
}

double topk_iou(const Vector& scores, const Vector& gt_tags, std::size_t k) {
    if (scores.size() != gt_tags.size()) {
        throw DimensionMismatch("scores have size " + std::to_string(scores.size()) +
                                ", tags " + std::to_string(gt_tags.size()));
    }
    if (k == 0 || k > scores.size()) {
        throw InvalidDimension("top-K must satisfy 1 <= K <= num_tags (got " +
                               std::to_string(k) + ")");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&scores](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b; // ties by ascending tag index
    });

    std::size_t inter = 0;
    std::size_t gt_count = 0;
    for (double t : gt_tags) {
        if (t != 0.0) ++gt_count;
    }
    for (std::size_t i = 0; i < k; ++i) {
        if (gt_tags[order[i]] != 0.0) ++inter;
    }
    const std::size_t uni = k + gt_count - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::map<std::size_t, double> tagging_miou(std::span<const Vector> feats,
                                           std::span<const Vector> gt_tags,
                                           std::span<const std::size_t> k_list,
                                           const ProbeConfig& cfg) {
    if (feats.empty()) throw EmptyTestSet("tagging requires a nonempty set");
    if (feats.size() != gt_tags.size()) {
        throw DimensionMismatch("feature and tag counts differ");
    }
    const std::size_t d = feats.front().size();
    check_feature_dims(feats, d, "tagging");
    const std::size_t t = gt_tags.front().size();
    check_feature_dims(gt_tags, t, "tag");

    const Standardizer std_izer{feats};
    std::vector<Vector> x(feats.size());
    for (std::size_t i = 0; i < feats.size(); ++i) x[i] = std_izer.apply(feats[i]);

    // T independent logistic regressions, fit jointly.
    Matrix w(t, d);
    Vector b(t, 0.0);
    const double inv_n = 1.0 / static_cast<double>(x.size());
    gd_fit(w, b, cfg, [&](Matrix& grad_w, Vector& grad_b) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            for (std::size_t tag = 0; tag < t; ++tag) {
                const double z = dot_row(w, tag, x[i]) + b[tag];
                const double sig = 1.0 / (1.0 + std::exp(-z));
                const double r = (sig - gt_tags[i][tag]) * inv_n;
                grad_b[tag] += r;
                for (std::size_t j = 0; j < d; ++j) {
                    grad_w.at(tag, j) += r * x[i][j];
                }
            }
        }
        if (cfg.l2 > 0.0) {
            for (std::size_t i = 0; i < w.values.size(); ++i) {
                grad_w.values[i] += cfg.l2 * w.values[i];
            }
        }
        return inf_norm_of(grad_w, grad_b);
    });

    std::map<std::size_t, double> miou;
    Vector scores(t);
    for (std::size_t k : k_list) {
        double sum = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            for (std::size_t tag = 0; tag < t; ++tag) {
                scores[tag] = dot_row(w, tag, x[i]) + b[tag];
            }
            sum += topk_iou(scores, gt_tags[i], k);
        }
        miou[k] = sum / static_cast<double>(x.size());
    }
    return miou;
}

EvalReport evaluate_model(const EncoderParams& image_query,
                          const EncoderParams& caption_query, const Dataset& train,
                          const Dataset& test, const EvalConfig& cfg) {
    if (test.samples.empty()) throw EmptyTestSet("evaluation requires a test split");

    std::vector<Vector> image_inter, caption_inter;
    image_inter.reserve(test.samples.size());
    caption_inter.reserve(test.samples.size());
    for (const Sample& s : test.samples) {
        image_inter.push_back(forward(image_query, s.image).inter);
        caption_inter.push_back(forward(caption_query, s.caption).inter);
    }

    std::vector<Vector> train_backbone, test_backbone;
    std::vector<std::int64_t> train_labels, test_labels;
    train_backbone.reserve(train.samples.size());
    for (const Sample& s : train.samples) {
        train_backbone.push_back(backbone_forward(image_query, s.image));
        train_labels.push_back(s.class_id);
    }
    std::vector<Vector> test_tags;
    test_backbone.reserve(test.samples.size());
    for (const Sample& s : test.samples) {
        test_backbone.push_back(backbone_forward(image_query, s.image));
        test_labels.push_back(s.class_id);
        test_tags.push_back(s.tags);
    }

    EvalReport report;
    report.retrieval = retrieval_eval(image_inter, caption_inter, cfg.retrieval_k);
    report.probe_top1 =
        linear_probe(train_backbone, train_labels, test_backbone, test_labels,
                     cfg.probe);
    report.miou_at = tagging_miou(test_backbone, test_tags, cfg.tag_k, cfg.probe);
    return report;
}

} // namespace mmct
