#include "mmct/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "mmct/errors.hpp"

namespace mmct {

namespace {

void check_key_dims(const Vector& query, const Vector* key) {
    if (key->size() != query.size()) {
        throw DimensionMismatch("key has size " + std::to_string(key->size()) +
                                ", expected " + std::to_string(query.size()));
    }
}

/// Multi-positive InfoNCE over keys (keys[0] = the instance positive).
/// value = logsumexp_j(s_j) - (1/|P|) sum_{p in P} s_p with s_j = q.k_j/tau;
/// grad  = (sum_j softmax_j k_j - (1/|P|) sum_{p in P} k_p) / tau.
LossGrad nce_core(const Vector& query, std::span<const Vector* const> keys,
                  std::span<const std::size_t> positives, double tau) {
    if (tau <= 0.0) throw InvalidConfig("tau must be positive");
    std::vector<double> logits(keys.size());
    for (std::size_t j = 0; j < keys.size(); ++j) {
        check_key_dims(query, keys[j]);
        logits[j] = dot(query, *keys[j]) / tau;
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double s : logits) z += std::exp(s - m);
    const double lse = m + std::log(z);

    const double inv_p = 1.0 / static_cast<double>(positives.size());
    double pos_mean = 0.0;
    for (std::size_t p : positives) pos_mean += logits[p];
    pos_mean *= inv_p;

    LossGrad out;
    out.value = lse - pos_mean;
    out.grad.assign(query.size(), 0.0);
    for (std::size_t j = 0; j < keys.size(); ++j) {
        const double pj = std::exp(logits[j] - m) / z;
        add_scaled(out.grad, *keys[j], pj / tau);
    }
    for (std::size_t p : positives) add_scaled(out.grad, *keys[p], -inv_p / tau);
    return out;
}

LossGrad hinge_core(const Vector& query, const Vector& pos_key,
                    std::span<const Vector* const> neg_keys, double alpha) {
    check_key_dims(query, &pos_key);
    const double s_pos = dot(query, pos_key);
    LossGrad out;
    out.grad.assign(query.size(), 0.0);
    for (const Vector* neg : neg_keys) {
        check_key_dims(query, neg);
        const double margin = alpha - s_pos + dot(query, *neg);
        if (margin > 0.0) { // subgradient 0 at the hinge point
            out.value += margin;
            add_scaled(out.grad, *neg, 1.0);
            add_scaled(out.grad, pos_key, -1.0);
        }
    }
    return out;
}

std::vector<const Vector*> with_positive_first(const Vector& pos_key,
                                               std::span<const Vector> neg_keys) {
    std::vector<const Vector*> keys;
    keys.reserve(neg_keys.size() + 1);
    keys.push_back(&pos_key);
    for (const Vector& k : neg_keys) keys.push_back(&k);
    return keys;
}

constexpr std::size_t kPosIndex[1] = {0};

} // namespace

LossGrad info_nce(const Vector& query, const Vector& pos_key,
                  std::span<const Vector> neg_keys, double tau) {
    return nce_core(query, with_positive_first(pos_key, neg_keys), kPosIndex, tau);
}

LossGrad tag_supervised_nce(const Vector& query, const Vector& query_tags,
                            const Vector& pos_key,
                            std::span<const TaggedKey> queue_entries, double tau,
                            double epsilon) {
    std::vector<const Vector*> keys;
    keys.reserve(queue_entries.size() + 1);
    keys.push_back(&pos_key);
    std::vector<std::size_t> positives = {0};
    for (const TaggedKey& entry : queue_entries) {
        keys.push_back(&entry.key);
        if (!entry.tags.empty() && dot(query_tags, entry.tags) > epsilon) {
            positives.push_back(keys.size() - 1);
        }
    }
    return nce_core(query, keys, positives, tau);
}

LossGrad hinge_ranking(const Vector& query, const Vector& pos_key,
                       std::span<const Vector> neg_keys, double alpha) {
    std::vector<const Vector*> negs;
    negs.reserve(neg_keys.size());
    for (const Vector& k : neg_keys) negs.push_back(&k);
    return hinge_core(query, pos_key, negs, alpha);
}

LossBreakdown combined_loss(std::span<const SampleFeatures> batch,
                            std::span<const QueueEntry> image_queue,
                            std::span<const QueueEntry> caption_queue,
                            const LossConfig& cfg) {
    if (batch.empty()) throw EmptyBatch("combined_loss requires a nonempty batch");
    const double inv_n = 1.0 / static_cast<double>(batch.size());

    std::vector<const Vector*> img_inter, cap_inter;
    img_inter.reserve(image_queue.size());
    for (const QueueEntry& e : image_queue) img_inter.push_back(&e.inter_key);
    cap_inter.reserve(caption_queue.size());
    for (const QueueEntry& e : caption_queue) cap_inter.push_back(&e.inter_key);

    // Shared buffer for the NCE key sets: slot 0 is rewritten per sample.
    std::vector<const Vector*> img_keys(1 + image_queue.size(), nullptr);
    for (std::size_t j = 0; j < image_queue.size(); ++j) {
        img_keys[1 + j] = &image_queue[j].intra_key;
    }
    std::vector<const Vector*> cap_keys(1 + caption_queue.size(), nullptr);
    for (std::size_t j = 0; j < caption_queue.size(); ++j) {
        cap_keys[1 + j] = &caption_queue[j].intra_key;
    }

    LossBreakdown out;
    out.grads.resize(batch.size());
    std::vector<std::size_t> positives;

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const SampleFeatures& s = batch[i];
        FeatureGrads& g = out.grads[i];

        if (cfg.lambda_ii > 0.0 || (cfg.lambda_tag > 0.0 && s.has_tags)) {
            img_keys[0] = &s.k_ii;
            Vector acc(s.q_ii.size(), 0.0);
            if (cfg.lambda_ii > 0.0) {
                LossGrad r = nce_core(s.q_ii, img_keys, kPosIndex, cfg.tau);
                out.j_ii += r.value;
                add_scaled(acc, r.grad, cfg.lambda_ii);
            }
            if (cfg.lambda_tag > 0.0 && s.has_tags) {
                positives.assign(1, 0);
                for (std::size_t j = 0; j < image_queue.size(); ++j) {
                    const auto& qtags = image_queue[j].tags;
                    if (qtags && dot(s.tags, *qtags) > cfg.epsilon) {
                        positives.push_back(1 + j);
                    }
                }
                LossGrad r = nce_core(s.q_ii, img_keys, positives, cfg.tau);
                out.j_tag += r.value;
                add_scaled(acc, r.grad, cfg.lambda_tag);
            }
            for (double& v : acc) v *= inv_n;
            g.q_ii = std::move(acc);
        }

        if (s.has_caption) {
            if (cfg.lambda_cc > 0.0) {
                cap_keys[0] = &s.k_cc;
                LossGrad r = nce_core(s.q_cc, cap_keys, kPosIndex, cfg.tau);
                out.j_cc += r.value;
                for (double& v : r.grad) v *= cfg.lambda_cc * inv_n;
                g.q_cc = std::move(r.grad);
            }
            if (cfg.lambda_ic > 0.0) {
                LossGrad r = hinge_core(s.q_ic, s.k_ic, cap_inter, cfg.alpha);
                out.j_ic += r.value;
                for (double& v : r.grad) v *= cfg.lambda_ic * inv_n;
                g.q_ic = std::move(r.grad);
            }
            if (cfg.lambda_ci > 0.0) {
                LossGrad r = hinge_core(s.q_ci, s.k_ci, img_inter, cfg.alpha);
                out.j_ci += r.value;
                for (double& v : r.grad) v *= cfg.lambda_ci * inv_n;
                g.q_ci = std::move(r.grad);
            }
        }
    }

    out.j_ii *= inv_n;
    out.j_tag *= inv_n;
    out.j_cc *= inv_n;
    out.j_ic *= inv_n;
    out.j_ci *= inv_n;
    out.total = cfg.lambda_ii * out.j_ii + cfg.lambda_tag * out.j_tag +
                cfg.lambda_cc * out.j_cc + cfg.lambda_ic * out.j_ic +
                cfg.lambda_ci * out.j_ci;
    for (double v : {out.j_ii, out.j_tag, out.j_cc, out.j_ic, out.j_ci, out.total}) {
        if (!std::isfinite(v)) {
            throw NonFiniteFunction("loss evaluated to a non-finite value");
        }
    }
    return out;
}

} // namespace mmct
