#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mmct/numerics.hpp"

namespace mmct {

struct AffineLayer {
    Matrix weight; // out x in
    Vector bias;   // out
};

/// Two-layer projection head: affine -> relu -> affine.
struct Head {
    AffineLayer hidden;
    AffineLayer out;
};

struct EncoderConfig {
    std::vector<std::size_t> backbone_dims; // input, hidden..., output
    std::size_t intra_dim = 16;
    std::size_t inter_dim = 64;
    std::size_t head_hidden = 0;  // 0 -> backbone output width
    bool shared_head = false;     // single head feeds both outputs
};

/// MLP backbone plus two projection heads. With shared_head the intra head
/// is the only head and serves both output paths (inter_head is unused and
/// empty); otherwise the heads are parameter-disjoint.
struct EncoderParams {
    std::vector<AffineLayer> backbone;
    Head intra_head;
    Head inter_head;
    bool shared_head = false;

    std::size_t input_dim() const { return backbone.front().weight.cols; }
    std::size_t backbone_out_dim() const { return backbone.back().weight.rows; }
    std::size_t intra_dim() const { return intra_head.out.weight.rows; }
    std::size_t inter_dim() const {
        return shared_head ? intra_dim() : inter_head.out.weight.rows;
    }
};

struct FeaturePair {
    Vector intra; // unit norm
    Vector inter; // unit norm
};

struct HeadCache {
    Vector hidden_pre;
    Vector hidden_post;
    Vector out_raw;   // before normalization
    double out_norm = 0.0;
    Vector out_unit;
};

struct ForwardCache {
    Vector input;
    std::vector<Vector> pre;  // pre-activation per backbone layer
    std::vector<Vector> post; // layer inputs: post[0] = input, post[i] = activated pre[i-1]
    Vector backbone_out;
    HeadCache intra;
    HeadCache inter; // unused when shared_head
};

/// Glorot-uniform weights in [-s, s] with s = sqrt(6 / (fan_in + fan_out));
/// biases zero. Draw order: backbone layers, intra head, inter head.
EncoderParams init_encoder(const EncoderConfig& cfg, SeededRng& rng);

/// All-zero parameters with the same shapes (gradient / velocity buffers).
EncoderParams zeros_like(const EncoderParams& params);

/// Backbone output only (pre-head, un-normalized); the representation used
/// by the linear probe and the tagging head.
Vector backbone_forward(const EncoderParams& params, const Vector& x);

FeaturePair forward(const EncoderParams& params, const Vector& x,
                    ForwardCache* cache = nullptr);

/// Gradients of (grad_intra . intra + grad_inter . inter) with respect to
/// every parameter, including through the output normalization. Empty grad
/// vectors are treated as zero.
EncoderParams backward(const EncoderParams& params, const ForwardCache& cache,
                       const Vector& grad_intra, const Vector& grad_inter);

/// acc += s * g, elementwise over all parameters.
void accumulate(EncoderParams& acc, const EncoderParams& g, double s = 1.0);

/// Query encoder and its EMA-tracked key shadow.
struct MomentumPair {
    EncoderParams query;
    EncoderParams key;
    double m = 0.999;
};

/// Key starts as a deep copy of the query.
MomentumPair make_momentum_pair(EncoderParams query, double m);

/// key <- m * key + (1 - m) * query, elementwise. Query untouched.
void momentum_update(MomentumPair& pair);

/// Mutable views over every parameter array, in a fixed order (backbone
/// weights/biases, intra head, inter head). The order matches param_names.
std::vector<std::span<double>> param_views(EncoderParams& params);
std::vector<std::span<const double>> param_views(const EncoderParams& params);
std::vector<std::string> param_names(const EncoderParams& params);

std::size_t param_count(const EncoderParams& params);
Vector flatten_params(const EncoderParams& params);
void unflatten_params(EncoderParams& params, std::span<const double> flat);

} // namespace mmct
