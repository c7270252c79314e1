#include "mmct/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <optional>

#include "json.hpp"
#include "mmct/errors.hpp"

namespace mmct {

double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double base_lr) {
    if (total_steps == 0) throw InvalidConfig("total_steps must be positive");
    if (step > total_steps) {
        throw InvalidConfig("step " + std::to_string(step) + " exceeds total_steps " +
                            std::to_string(total_steps));
    }
    const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

void sgd_update(EncoderParams& params, const EncoderParams& grads,
                EncoderParams& velocity, double lr, double momentum,
                double weight_decay) {
    auto pv = param_views(params);
    auto gv = param_views(grads);
    auto vv = param_views(velocity);
    if (pv.size() != gv.size() || pv.size() != vv.size()) {
        throw DimensionMismatch("params, grads, and velocity shapes differ");
    }
    for (std::size_t i = 0; i < pv.size(); ++i) {
        if (pv[i].size() != gv[i].size() || pv[i].size() != vv[i].size()) {
            throw DimensionMismatch("params, grads, and velocity shapes differ");
        }
        for (std::size_t j = 0; j < pv[i].size(); ++j) {
            const double g = gv[i][j];
            if (!std::isfinite(g)) {
                throw NonFiniteGradient("non-finite gradient entry in parameter array " +
                                        std::to_string(i));
            }
            vv[i][j] = momentum * vv[i][j] + g + weight_decay * pv[i][j];
            pv[i][j] -= lr * vv[i][j];
        }
    }
}

bool caption_active(const LossConfig& cfg) {
    return cfg.lambda_cc > 0.0 || cfg.lambda_ic > 0.0 || cfg.lambda_ci > 0.0;
}

TrainState make_train_state(const TrainerInit& init) {
    SeededRng rng(init.seed);
    EncoderParams image_query = init_encoder(init.image_encoder, rng);
    EncoderParams caption_query = init_encoder(init.caption_encoder, rng);
    TrainState state{
        .image = make_momentum_pair(std::move(image_query), init.ema_momentum),
        .caption = make_momentum_pair(std::move(caption_query), init.ema_momentum),
        .image_queue = KeyQueue(init.queue_capacity),
        .caption_queue = KeyQueue(init.queue_capacity),
        .image_velocity = {},
        .caption_velocity = {},
        .step = 0,
        .rng = rng,
        .epoch_start_rng_state = rng.state(),
        .needs_queue_warmup = false,
    };
    state.image_velocity = zeros_like(state.image.query);
    state.caption_velocity = zeros_like(state.caption.query);
    return state;
}

LossBreakdown train_step(TrainState& state, const Dataset& data,
                         std::span<const std::size_t> batch, const TrainConfig& cfg,
                         std::uint64_t total_steps) {
    if (batch.empty()) throw EmptyBatch("train_step requires a nonempty batch");
    const bool cap = caption_active(cfg.loss);

    const std::vector<QueueEntry> image_snap = state.image_queue.snapshot();
    const std::vector<QueueEntry> caption_snap = state.caption_queue.snapshot();

    std::vector<SampleFeatures> feats(batch.size());
    std::vector<ForwardCache> image_caches(batch.size());
    std::vector<ForwardCache> caption_caches(cap ? batch.size() : 0);
    std::vector<QueueEntry> image_entries, caption_entries;
    image_entries.reserve(batch.size());
    if (cap) caption_entries.reserve(batch.size());

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Sample& s = data.samples.at(batch[i]);
        const Vector image_q_view = augment(s.image, cfg.augment, state.rng);
        const Vector image_k_view = augment(s.image, cfg.augment, state.rng);
        SampleFeatures& f = feats[i];

        FeaturePair iq = forward(state.image.query, image_q_view, &image_caches[i]);
        FeaturePair ik = forward(state.image.key, image_k_view);
        f.q_ii = std::move(iq.intra);
        f.q_ic = std::move(iq.inter);
        f.k_ii = ik.intra;
        f.k_ci = ik.inter;
        f.tags = s.tags;
        f.has_tags = !s.tags.empty();
        f.has_caption = cap;
        image_entries.push_back(QueueEntry{
            .intra_key = std::move(ik.intra),
            .inter_key = std::move(ik.inter),
            .tags = s.tags.empty() ? std::nullopt : std::optional<Vector>(s.tags),
            .source_id = static_cast<std::int64_t>(batch[i]),
        });

        if (cap) {
            const Vector caption_q_view = augment(s.caption, cfg.augment, state.rng);
            const Vector caption_k_view = augment(s.caption, cfg.augment, state.rng);
            FeaturePair cq = forward(state.caption.query, caption_q_view,
                                     &caption_caches[i]);
            FeaturePair ck = forward(state.caption.key, caption_k_view);
            f.q_cc = std::move(cq.intra);
            f.q_ci = std::move(cq.inter);
            f.k_cc = ck.intra;
            f.k_ic = ck.inter;
            caption_entries.push_back(QueueEntry{
                .intra_key = std::move(ck.intra),
                .inter_key = std::move(ck.inter),
                .tags = std::nullopt,
                .source_id = static_cast<std::int64_t>(batch[i]),
            });
        }
    }

    LossBreakdown lb = combined_loss(feats, image_snap, caption_snap, cfg.loss);

    EncoderParams image_grad = zeros_like(state.image.query);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const FeatureGrads& g = lb.grads[i];
        if (g.q_ii.empty() && g.q_ic.empty()) continue;
        accumulate(image_grad,
                   backward(state.image.query, image_caches[i], g.q_ii, g.q_ic));
    }
    const double lr_image =
        cosine_lr(state.step, total_steps, cfg.optim.lr_image);
    sgd_update(state.image.query, image_grad, state.image_velocity, lr_image,
               cfg.optim.sgd_momentum, cfg.optim.weight_decay);

    if (cap) {
        EncoderParams caption_grad = zeros_like(state.caption.query);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const FeatureGrads& g = lb.grads[i];
            if (g.q_cc.empty() && g.q_ci.empty()) continue;
            accumulate(caption_grad,
                       backward(state.caption.query, caption_caches[i], g.q_cc, g.q_ci));
        }
        const double lr_text =
            cosine_lr(state.step, total_steps, cfg.optim.lr_text);
        sgd_update(state.caption.query, caption_grad, state.caption_velocity, lr_text,
                   cfg.optim.sgd_momentum, cfg.optim.weight_decay);
    }

    momentum_update(state.image);
    if (cap) momentum_update(state.caption);

    state.image_queue.enqueue(image_entries);
    if (cap) state.caption_queue.enqueue(caption_entries);

    ++state.step;
    return lb;
}

namespace {

std::size_t steps_per_epoch(std::size_t n, std::size_t batch_size) {
    return (n + batch_size - 1) / batch_size;
}

/// Key pass over one epoch's worth of batches using a throwaway rng started
/// from the stored epoch-start state: reproduces the last completed epoch's
/// shuffle and augmentations, computes keys with the current (frozen) key
/// encoders, and enqueues them. Nothing else in the state changes.
void warmup_queues(TrainState& state, const Dataset& train, const TrainConfig& cfg) {
    SeededRng replay = SeededRng::from_state(state.rng.seed(),
                                             state.epoch_start_rng_state);
    const bool cap = caption_active(cfg.loss);
    const std::size_t n = train.samples.size();
    std::vector<std::size_t> indices(n);
    std::iota(indices.begin(), indices.end(), 0);
    replay.shuffle(indices);

    for (std::size_t start = 0; start < n; start += cfg.optim.batch_size) {
        const std::size_t end = std::min(n, start + cfg.optim.batch_size);
        std::vector<QueueEntry> image_entries, caption_entries;
        image_entries.reserve(end - start);
        for (std::size_t i = start; i < end; ++i) {
            const Sample& s = train.samples[indices[i]];
            (void)augment(s.image, cfg.augment, replay); // query view, unused here
            FeaturePair ik =
                forward(state.image.key, augment(s.image, cfg.augment, replay));
            image_entries.push_back(QueueEntry{
                .intra_key = std::move(ik.intra),
                .inter_key = std::move(ik.inter),
                .tags = s.tags.empty() ? std::nullopt : std::optional<Vector>(s.tags),
                .source_id = static_cast<std::int64_t>(indices[i]),
            });
            if (cap) {
                (void)augment(s.caption, cfg.augment, replay);
                FeaturePair ck = forward(state.caption.key,
                                         augment(s.caption, cfg.augment, replay));
                caption_entries.push_back(QueueEntry{
                    .intra_key = std::move(ck.intra),
                    .inter_key = std::move(ck.inter),
                    .tags = std::nullopt,
                    .source_id = static_cast<std::int64_t>(indices[i]),
                });
            }
        }
        state.image_queue.enqueue(image_entries);
        if (cap) state.caption_queue.enqueue(caption_entries);
    }
}

} // namespace

std::vector<EpochMetrics> train_loop(TrainState& state, const Dataset& train,
                                     const TrainConfig& cfg,
                                     std::size_t stop_after_epochs) {
    if (train.samples.empty()) throw EmptyBatch("training set is empty");
    if (cfg.optim.batch_size == 0) throw InvalidConfig("optim.batch_size: must be >= 1");

    const std::size_t n = train.samples.size();
    const std::size_t spe = steps_per_epoch(n, cfg.optim.batch_size);
    const std::uint64_t total_steps =
        static_cast<std::uint64_t>(cfg.optim.epochs) * spe;

    if (state.step % spe != 0) {
        throw InvalidConfig("checkpoint step " + std::to_string(state.step) +
                            " is not an epoch boundary (" + std::to_string(spe) +
                            " steps per epoch)");
    }
    const std::size_t epochs_done = static_cast<std::size_t>(state.step / spe);
    if (epochs_done > cfg.optim.epochs) {
        throw InvalidConfig("checkpoint has completed " + std::to_string(epochs_done) +
                            " epochs but optim.epochs is " +
                            std::to_string(cfg.optim.epochs));
    }
    const std::size_t last = std::min(cfg.optim.epochs, stop_after_epochs);

    if (state.needs_queue_warmup) {
        if (epochs_done < last) warmup_queues(state, train, cfg);
        state.needs_queue_warmup = false;
    }

    std::vector<EpochMetrics> rows;
    std::vector<std::size_t> indices(n);
    for (std::size_t epoch = epochs_done; epoch < last; ++epoch) {
        state.epoch_start_rng_state = state.rng.state();
        std::iota(indices.begin(), indices.end(), 0);
        state.rng.shuffle(indices);

        EpochMetrics row;
        row.epoch = epoch + 1;
        row.lr_image = cosine_lr(state.step, total_steps, cfg.optim.lr_image);
        row.lr_text = cosine_lr(state.step, total_steps, cfg.optim.lr_text);

        std::size_t steps = 0;
        for (std::size_t start = 0; start < n; start += cfg.optim.batch_size) {
            const std::size_t end = std::min(n, start + cfg.optim.batch_size);
            const std::span<const std::size_t> batch(indices.data() + start,
                                                     end - start);
            const LossBreakdown lb = train_step(state, train, batch, cfg, total_steps);
            row.j_ii += lb.j_ii;
            row.j_tag += lb.j_tag;
            row.j_cc += lb.j_cc;
            row.j_ic += lb.j_ic;
            row.j_ci += lb.j_ci;
            row.total += lb.total;
            ++steps;
        }
        const double inv = 1.0 / static_cast<double>(steps);
        row.j_ii *= inv;
        row.j_tag *= inv;
        row.j_cc *= inv;
        row.j_ic *= inv;
        row.j_ci *= inv;
        row.total *= inv;
        rows.push_back(row);
    }
    return rows;
}

namespace {

using nlohmann::json;

void params_to_json(json& dst, const std::string& prefix, const EncoderParams& p) {
    const auto names = param_names(p);
    const auto views = param_views(p);
    for (std::size_t i = 0; i < names.size(); ++i) {
        dst[prefix + names[i]] = std::vector<double>(views[i].begin(), views[i].end());
    }
}

void params_from_json(const json& src, const std::string& prefix, EncoderParams& p) {
    const auto names = param_names(p);
    auto views = param_views(p);
    for (std::size_t i = 0; i < names.size(); ++i) {
        const std::string key = prefix + names[i];
        if (!src.contains(key)) {
            throw FormatError("checkpoint missing parameter array: " + key);
        }
        const auto values = src.at(key).get<std::vector<double>>();
        if (values.size() != views[i].size()) {
            throw FormatError("checkpoint array " + key + " has length " +
                              std::to_string(values.size()) + ", expected " +
                              std::to_string(views[i].size()));
        }
        std::copy(values.begin(), values.end(), views[i].begin());
    }
}

std::uint64_t u64_from_string(const json& j, const char* field) {
    if (!j.is_string()) {
        throw FormatError(std::string("checkpoint rng.") + field +
                          " must be a decimal string");
    }
    try {
        return std::stoull(j.get<std::string>());
    } catch (const std::exception&) {
        throw FormatError(std::string("checkpoint rng.") + field +
                          " is not a valid unsigned integer");
    }
}

json read_checkpoint_doc(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError("checkpoint is not valid JSON: " + std::string(e.what()));
    }
    try {
        if (doc.at("kind").get<std::string>() != "checkpoint") {
            throw FormatError("file is not a checkpoint (kind mismatch)");
        }
        const int version = doc.at("version").get<int>();
        if (version != 1) {
            throw VersionMismatch("checkpoint version " + std::to_string(version) +
                                  " unsupported, expected 1");
        }
    } catch (const json::exception& e) {
        throw FormatError("checkpoint JSON missing or mistyped field: " +
                          std::string(e.what()));
    }
    return doc;
}

} // namespace

void save_checkpoint(const TrainState& state, const std::string& config_echo_json,
                     const std::string& path) {
    json doc;
    doc["version"] = 1;
    doc["kind"] = "checkpoint";
    try {
        doc["config"] = json::parse(config_echo_json);
    } catch (const json::parse_error& e) {
        throw FormatError("config echo is not valid JSON: " + std::string(e.what()));
    }
    doc["step"] = state.step;
    doc["rng"] = json{{"seed", std::to_string(state.rng.seed())},
                      {"state", std::to_string(state.rng.state())},
                      {"epoch_start_state",
                       std::to_string(state.epoch_start_rng_state)}};
    json params;
    params_to_json(params, "image_query.", state.image.query);
    params_to_json(params, "image_key.", state.image.key);
    params_to_json(params, "caption_query.", state.caption.query);
    params_to_json(params, "caption_key.", state.caption.key);
    doc["params"] = std::move(params);
    json velocities;
    params_to_json(velocities, "image.", state.image_velocity);
    params_to_json(velocities, "caption.", state.caption_velocity);
    doc["velocities"] = std::move(velocities);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << doc.dump() << '\n';
    if (!out) throw IoError("write failed: " + path);
}

std::string read_checkpoint_config(const std::string& path) {
    const json doc = read_checkpoint_doc(path);
    if (!doc.contains("config")) throw FormatError("checkpoint missing config echo");
    return doc.at("config").dump();
}

TrainState load_checkpoint(const std::string& path, const TrainerInit& init) {
    const json doc = read_checkpoint_doc(path);
    TrainState state = make_train_state(init);
    try {
        const json& params = doc.at("params");
        params_from_json(params, "image_query.", state.image.query);
        params_from_json(params, "image_key.", state.image.key);
        params_from_json(params, "caption_query.", state.caption.query);
        params_from_json(params, "caption_key.", state.caption.key);
        const json& velocities = doc.at("velocities");
        params_from_json(velocities, "image.", state.image_velocity);
        params_from_json(velocities, "caption.", state.caption_velocity);
        state.step = doc.at("step").get<std::uint64_t>();
        const json& rng = doc.at("rng");
        state.rng = SeededRng::from_state(u64_from_string(rng.at("seed"), "seed"),
                                          u64_from_string(rng.at("state"), "state"));
        state.epoch_start_rng_state =
            u64_from_string(rng.at("epoch_start_state"), "epoch_start_state");
    } catch (const json::exception& e) {
        throw FormatError("checkpoint JSON missing or mistyped field: " +
                          std::string(e.what()));
    }
    state.needs_queue_warmup = state.step > 0;
    return state;
}

} // namespace mmct
