#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "mmct/encoder.hpp"
#include "mmct/numerics.hpp"
#include "mmct/synthdata.hpp"

namespace mmct {

/// Full-batch gradient descent with heavy-ball momentum for the linear
/// probe and the tagging head; stops when the gradient inf-norm drops
/// below tol or at max_iters.
struct ProbeConfig {
    double lr = 0.5;
    double momentum = 0.9;
    double tol = 1e-6;
    double l2 = 0.0;
    std::size_t max_iters = 1500;
};

struct RetrievalReport {
    std::map<std::size_t, double> r_at; // K -> percentage in [0, 100]
    double med_r = 0.0;                 // lower median of 1-based ranks
};

struct RetrievalPair {
    RetrievalReport image_to_text;
    RetrievalReport text_to_image;
};

/// Cosine-similarity retrieval over index-paired unit features, both
/// directions. Ranks break ties by ascending index; Med r takes the lower
/// of the two middle values for even counts.
RetrievalPair retrieval_eval(std::span<const Vector> image_feats,
                             std::span<const Vector> caption_feats,
                             std::span<const std::size_t> k_list);

/// Multinomial logistic regression on frozen features (train-fit feature
/// standardization, zero init); returns test top-1 accuracy in percent.
/// Ties in the argmax go to the lowest class index.
double linear_probe(std::span<const Vector> train_feats,
                    std::span<const std::int64_t> train_labels,
                    std::span<const Vector> test_feats,
                    std::span<const std::int64_t> test_labels,
                    const ProbeConfig& cfg);

/// IOU between the top-k scored tag indices (ties by ascending index) and
/// the ground-truth tag set.
double topk_iou(const Vector& scores, const Vector& gt_tags, std::size_t k);

/// One-vs-all logistic tag predictor trained on the given features, scored
/// in-sample: mean topk_iou per K.
std::map<std::size_t, double> tagging_miou(std::span<const Vector> feats,
                                           std::span<const Vector> gt_tags,
                                           std::span<const std::size_t> k_list,
                                           const ProbeConfig& cfg);

struct EvalConfig {
    std::vector<std::size_t> retrieval_k = {1, 5, 10};
    std::vector<std::size_t> tag_k = {5, 10};
    ProbeConfig probe;
};

struct EvalReport {
    RetrievalPair retrieval;
    double probe_top1 = 0.0;
    std::map<std::size_t, double> miou_at;
};

/// Full protocol against frozen query encoders: retrieval on the test
/// split's inter-modal features (raw inputs, no augmentation), linear
/// probe on un-normalized image backbone features (fit on train, scored on
/// test), tagging on test backbone features.
EvalReport evaluate_model(const EncoderParams& image_query,
                          const EncoderParams& caption_query, const Dataset& train,
                          const Dataset& test, const EvalConfig& cfg);

} // namespace mmct
