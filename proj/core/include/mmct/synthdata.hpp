#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmct/numerics.hpp"

namespace mmct {

struct GenConfig {
    std::size_t num_classes = 8;
    std::size_t samples_per_class = 250;
    std::size_t image_dim = 32;
    std::size_t caption_dim = 24;
    std::size_t num_tags = 20;
    std::size_t tags_per_class = 4;
    double noise_std = 0.25;
    double tag_flip_prob = 0.05;
    // Fraction of per-sample noise variance drawn from a latent shared by
    // the two modalities (0 = fully independent noise, 1 = fully shared).
    // Shared noise is what gives each instance a cross-modal identity that
    // retrieval can recover; per-coordinate marginals stay N(0, noise_std^2)
    // for every setting. 0.7 keeps instance retrieval learnable without
    // making it solvable by cross-modal alignment alone.
    double modal_correlation = 0.7;
    std::uint64_t seed = 42;
};

struct Sample {
    Vector image;   // image_dim
    Vector caption; // caption_dim
    Vector tags;    // num_tags, entries 0/1
    std::int64_t class_id = 0;
};

struct Dataset {
    std::vector<Sample> samples;
    std::size_t num_classes = 0;
    std::size_t num_tags = 0;
    std::size_t image_dim = 0;
    std::size_t caption_dim = 0;
};

struct SplitDataset {
    Dataset train;
    Dataset test;
};

/// Gaussian-mixture multimodal generator: per class one unit-norm prototype
/// per modality and a fixed tag subset; per sample prototype + noise and a
/// tag_flip_prob-noised copy of the class tags. Every 10th sample by global
/// index goes to the test split.
SplitDataset generate(const GenConfig& cfg);

struct AugConfig {
    double noise_std = 0.1;
    double dropout_prob = 0.1;
};

/// Additive Gaussian noise, then independent coordinate zeroing. Always
/// consumes one normal plus one uniform draw per coordinate so the rng
/// stream shape does not depend on the parameter values.
Vector augment(const Vector& v, const AugConfig& cfg, SeededRng& rng);

/// Dataset JSON round-trip (schema documented in the README; version 1).
void save_dataset(const SplitDataset& data, const GenConfig& cfg,
                  const std::string& path);
SplitDataset load_dataset(const std::string& path);

} // namespace mmct
