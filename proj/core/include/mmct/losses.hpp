#pragma once

#include <span>
#include <vector>

#include "mmct/numerics.hpp"
#include "mmct/queue.hpp"

namespace mmct {

struct LossConfig {
    double tau = 0.07;     // InfoNCE temperature
    double alpha = 0.2;    // hinge margin
    double epsilon = 2.0;  // tag-overlap threshold (strict >)
    double lambda_ii = 1.0;
    double lambda_tag = 1.0;
    double lambda_cc = 1.0;
    double lambda_ic = 1e-4;
    double lambda_ci = 1e-4;
};

struct LossGrad {
    double value = 0.0;
    Vector grad; // with respect to the query feature
};

/// Key plus optional tag vector (empty = no tags, never a positive).
struct TaggedKey {
    Vector key;
    Vector tags;
};

/// -log[ exp(q.k+/tau) / sum_j exp(q.k_j/tau) ], sum over pos + negs.
/// No negatives gives exactly 0 with a zero gradient.
LossGrad info_nce(const Vector& query, const Vector& pos_key,
                  std::span<const Vector> neg_keys, double tau);

/// Tag-supervised variant: positives P = {pos} plus every queue key whose
/// tag dot with query_tags strictly exceeds epsilon; loss is the mean of
/// -log softmax over p in P, denominator always the full key set. With no
/// qualifying queue entry this is bit-identical to info_nce.
LossGrad tag_supervised_nce(const Vector& query, const Vector& query_tags,
                            const Vector& pos_key,
                            std::span<const TaggedKey> queue_entries, double tau,
                            double epsilon);

/// sum_j max(0, alpha - q.k+ + q.k_j) over negatives only; subgradient 0 at
/// the hinge point (strictly-positive terms contribute).
LossGrad hinge_ranking(const Vector& query, const Vector& pos_key,
                       std::span<const Vector> neg_keys, double alpha);

/// Per-sample features from the four query/key paths. Empty caption-side
/// vectors are legal when has_caption is false.
struct SampleFeatures {
    Vector q_ii; // image query, intra head
    Vector q_ic; // image query, inter head
    Vector k_ii; // image key, intra head
    Vector k_ci; // image key, inter head
    Vector q_cc; // caption query, intra head
    Vector q_ci; // caption query, inter head
    Vector k_cc; // caption key, intra head
    Vector k_ic; // caption key, inter head
    Vector tags; // binary; may be empty when has_tags is false
    bool has_caption = true;
    bool has_tags = true;
};

/// Gradients with respect to the four query features of one sample. Empty
/// vectors mean no loss term touched that path.
struct FeatureGrads {
    Vector q_ii;
    Vector q_ic;
    Vector q_cc;
    Vector q_ci;
};

struct LossBreakdown {
    double j_ii = 0.0;
    double j_tag = 0.0;
    double j_cc = 0.0;
    double j_ic = 0.0;
    double j_ci = 0.0;
    double total = 0.0; // sum of lambda_x * j_x, exactly
    std::vector<FeatureGrads> grads; // one per batch sample, lambda/N scaled
};

/// All five terms over one batch against queue snapshots. Each j_x is the
/// arithmetic mean over the full batch; samples missing a modality (or
/// tags) contribute 0 to the affected terms. Terms with lambda == 0 are
/// skipped entirely and reported as 0.
///
/// Negatives: J_ii/J_tag use image-queue intra keys, J_cc caption-queue
/// intra keys, J_ic caption-queue inter keys, J_ci image-queue inter keys.
LossBreakdown combined_loss(std::span<const SampleFeatures> batch,
                            std::span<const QueueEntry> image_queue,
                            std::span<const QueueEntry> caption_queue,
                            const LossConfig& cfg);

} // namespace mmct
