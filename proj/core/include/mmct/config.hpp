#pragma once

#include <cstdint>
#include <string>

#include "mmct/encoder.hpp"
#include "mmct/evaluator.hpp"
#include "mmct/losses.hpp"
#include "mmct/synthdata.hpp"
#include "mmct/trainer.hpp"

namespace mmct {

struct EncoderSettings {
    std::size_t hidden = 64;       // backbone hidden width
    std::size_t backbone_out = 64; // backbone output width
    std::size_t intra_dim = 16;
    std::size_t inter_dim = 64;
    std::size_t head_hidden = 0;   // 0 = backbone_out
    bool shared_head = false;
    double ema_momentum = 0.999;
};

struct QueueSettings {
    std::size_t capacity = 256;
};

/// One JSON document drives a whole run. Every key is optional (defaults
/// below); unknown keys anywhere are hard errors. The single top-level seed
/// feeds both the generator and the trainer.
struct RunConfig {
    std::uint64_t seed = 1;
    GenConfig data;
    EncoderSettings encoder;
    LossConfig loss;
    OptimConfig optim;
    AugConfig augment;
    QueueSettings queue;
    EvalConfig eval;
};

/// Strict parse + validation; errors name the offending field path.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

/// Compact JSON with every field explicit and keys sorted; parsing it back
/// reproduces the config exactly. This is the echo embedded in checkpoints
/// and reports.
std::string canonical_config_json(const RunConfig& cfg);

void validate_config(const RunConfig& cfg);

/// Resume contract: two configs are compatible when their canonical echoes
/// agree on everything except optim.epochs.
bool resume_compatible(const std::string& echo_a, const std::string& echo_b);

TrainerInit trainer_init_from(const RunConfig& cfg);
TrainConfig train_config_from(const RunConfig& cfg);

} // namespace mmct
