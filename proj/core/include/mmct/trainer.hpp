#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mmct/encoder.hpp"
#include "mmct/losses.hpp"
#include "mmct/numerics.hpp"
#include "mmct/queue.hpp"
#include "mmct/synthdata.hpp"

namespace mmct {

struct OptimConfig {
    double lr_image = 0.03;
    double lr_text = 0.03;
    double sgd_momentum = 0.9;
    double weight_decay = 1e-4;
    std::size_t batch_size = 64;
    std::size_t epochs = 50;
};

/// base_lr * 0.5 * (1 + cos(pi * step / total_steps)).
double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double base_lr);

/// v <- momentum * v + g + weight_decay * p;  p <- p - lr * v.
void sgd_update(EncoderParams& params, const EncoderParams& grads,
                EncoderParams& velocity, double lr, double momentum,
                double weight_decay);

/// True when any caption-dependent loss term is weighted; when false the
/// caption pair is completely frozen (no augment/forward/update/enqueue).
bool caption_active(const LossConfig& cfg);

struct TrainState {
    MomentumPair image;
    MomentumPair caption;
    KeyQueue image_queue;
    KeyQueue caption_queue;
    EncoderParams image_velocity;
    EncoderParams caption_velocity;
    std::uint64_t step = 0;
    SeededRng rng;
    // Rng state at the start of the most recent epoch; lets a restored run
    // replay that epoch's shuffle and augmentations to refill the queues.
    std::uint64_t epoch_start_rng_state = 0;
    bool needs_queue_warmup = false;
};

struct TrainerInit {
    EncoderConfig image_encoder;
    EncoderConfig caption_encoder;
    double ema_momentum = 0.999;
    std::size_t queue_capacity = 256;
    std::uint64_t seed = 1;
};

/// Fresh state: query encoders initialized from the seed (image first),
/// keys as copies, zero velocities, empty queues, step 0.
TrainState make_train_state(const TrainerInit& init);

struct TrainConfig {
    LossConfig loss;
    OptimConfig optim;
    AugConfig augment;
};

/// One full step over the given sample indices: augment each sample twice
/// per modality, embed the query views (with caches) and key views, run
/// combined_loss against pre-enqueue queue snapshots, backpropagate to the
/// query encoders only, SGD with cosine lr, EMA both pairs, enqueue the key
/// features (image entries carry tags), increment step.
LossBreakdown train_step(TrainState& state, const Dataset& data,
                         std::span<const std::size_t> batch, const TrainConfig& cfg,
                         std::uint64_t total_steps);

struct EpochMetrics {
    std::size_t epoch = 0; // 1-based across the whole schedule
    double lr_image = 0.0; // lr at the first step of the epoch
    double lr_text = 0.0;
    double j_ii = 0.0; // per-term means over the epoch's steps
    double j_tag = 0.0;
    double j_cc = 0.0;
    double j_ic = 0.0;
    double j_ci = 0.0;
    double total = 0.0;
};

/// Runs epochs from state.step / steps_per_epoch up to
/// min(cfg.optim.epochs, stop_after_epochs), seeded-shuffling each epoch
/// (the last batch may be short). A restored state first refills the queues
/// by replaying the last completed epoch's key pass on a throwaway rng
/// stream (params, velocities, step, and the live rng are untouched).
/// Returns one metrics row per epoch actually run.
std::vector<EpochMetrics> train_loop(
    TrainState& state, const Dataset& train, const TrainConfig& cfg,
    std::size_t stop_after_epochs = std::numeric_limits<std::size_t>::max());

/// Checkpoint JSON (version 1): config echo, step, rng (seed/state/
/// epoch_start_state as decimal strings), named flat parameter arrays for
/// all four encoders, and the two velocity sets. Queues are not serialized.
void save_checkpoint(const TrainState& state, const std::string& config_echo_json,
                     const std::string& path);

/// Config echo stored in a checkpoint, as a compact JSON string. Throws
/// VersionMismatch when the file's version is not 1.
std::string read_checkpoint_config(const std::string& path);

/// Rebuilds a state with the given geometry and overwrites every parameter,
/// velocity, rng field, and the step counter from the file. Queues restore
/// empty; needs_queue_warmup is set when step > 0.
TrainState load_checkpoint(const std::string& path, const TrainerInit& init);

} // namespace mmct
