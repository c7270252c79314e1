#include "mmct/encoder.hpp"

#include <cmath>

#include "mmct/errors.hpp"

namespace mmct {

namespace {

AffineLayer glorot_layer(std::size_t out, std::size_t in, SeededRng& rng) {
    AffineLayer layer;
    layer.weight = Matrix(out, in);
    const double s = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& w : layer.weight.values) w = rng.uniform(-s, s);
    layer.bias.assign(out, 0.0);
    return layer;
}

Vector affine(const AffineLayer& layer, const Vector& x) {
    Vector y = matvec(layer.weight, x);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += layer.bias[i];
    return y;
}

Vector relu(const Vector& x) {
    Vector y = x;
    for (double& v : y) v = v > 0.0 ? v : 0.0;
    return y;
}

Head make_head(std::size_t in, std::size_t hidden, std::size_t out, SeededRng& rng) {
    Head head;
    head.hidden = glorot_layer(hidden, in, rng);
    head.out = glorot_layer(out, hidden, rng);
    return head;
}

Vector head_forward(const Head& head, const Vector& x, HeadCache* cache) {
    Vector hidden_pre = affine(head.hidden, x);
    Vector hidden_post = relu(hidden_pre);
    Vector out_raw = affine(head.out, hidden_post);
    const double norm = l2_norm(out_raw);
    Vector out_unit = l2_normalize(out_raw);
    if (cache) {
        cache->hidden_pre = hidden_pre;
        cache->hidden_post = hidden_post;
        cache->out_raw = out_raw;
        cache->out_norm = norm;
        cache->out_unit = out_unit;
    }
    return out_unit;
}

/// Gradient of x/||x|| applied to g: (g - (g.y) y) / ||x||, y = x/||x||.
Vector normalize_backward(const Vector& g, const HeadCache& cache) {
    const double gy = dot(g, cache.out_unit);
    Vector out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        out[i] = (g[i] - gy * cache.out_unit[i]) / cache.out_norm;
    }
    return out;
}

void check_head_cache(const Head& head, const HeadCache& cache, const char* name) {
    if (cache.hidden_pre.size() != head.hidden.weight.rows ||
        cache.out_raw.size() != head.out.weight.rows || cache.out_norm <= 0.0) {
        throw StaleCache(std::string("forward cache does not match ") + name +
                         " head shapes");
    }
}

} // namespace

EncoderParams init_encoder(const EncoderConfig& cfg, SeededRng& rng) {
    if (cfg.backbone_dims.size() < 2) {
        throw InvalidDimension("backbone needs at least input and output dims");
    }
    for (std::size_t d : cfg.backbone_dims) {
        if (d == 0) throw InvalidDimension("backbone dims must be positive");
    }
    if (cfg.intra_dim == 0 || cfg.inter_dim == 0) {
        throw InvalidDimension("head output dims must be positive");
    }
    if (cfg.shared_head && cfg.intra_dim != cfg.inter_dim) {
        throw InvalidDimension("shared head requires intra_dim == inter_dim");
    }
    EncoderParams params;
    params.shared_head = cfg.shared_head;
    for (std::size_t i = 0; i + 1 < cfg.backbone_dims.size(); ++i) {
        params.backbone.push_back(
            glorot_layer(cfg.backbone_dims[i + 1], cfg.backbone_dims[i], rng));
    }
    const std::size_t bout = cfg.backbone_dims.back();
    const std::size_t hidden = cfg.head_hidden == 0 ? bout : cfg.head_hidden;
    params.intra_head = make_head(bout, hidden, cfg.intra_dim, rng);
    if (!cfg.shared_head) {
        params.inter_head = make_head(bout, hidden, cfg.inter_dim, rng);
    }
    return params;
}

EncoderParams zeros_like(const EncoderParams& params) {
    EncoderParams z = params;
    for (auto view : param_views(z)) {
        for (double& v : view) v = 0.0;
    }
    return z;
}

Vector backbone_forward(const EncoderParams& params, const Vector& x) {
    if (x.size() != params.input_dim()) {
        throw DimensionMismatch("encoder input has size " + std::to_string(x.size()) +
                                ", expected " + std::to_string(params.input_dim()));
    }
    Vector h = x;
    for (std::size_t i = 0; i < params.backbone.size(); ++i) {
        h = affine(params.backbone[i], h);
        if (i + 1 < params.backbone.size()) h = relu(h);
    }
    return h;
}

FeaturePair forward(const EncoderParams& params, const Vector& x, ForwardCache* cache) {
    if (x.size() != params.input_dim()) {
        throw DimensionMismatch("encoder input has size " + std::to_string(x.size()) +
                                ", expected " + std::to_string(params.input_dim()));
    }
    std::vector<Vector> pre;
    std::vector<Vector> post;
    post.push_back(x);
    for (std::size_t i = 0; i < params.backbone.size(); ++i) {
        Vector p = affine(params.backbone[i], post.back());
        pre.push_back(p);
        post.push_back(i + 1 < params.backbone.size() ? relu(p) : p);
    }
    const Vector& bout = post.back();

    FeaturePair out;
    if (cache) {
        cache->input = x;
        cache->pre = pre;
        cache->post = post;
        cache->backbone_out = bout;
    }
    out.intra = head_forward(params.intra_head, bout, cache ? &cache->intra : nullptr);
    if (params.shared_head) {
        out.inter = out.intra;
        if (cache) cache->inter = HeadCache{};
    } else {
        out.inter =
            head_forward(params.inter_head, bout, cache ? &cache->inter : nullptr);
    }
    return out;
}

namespace {

/// Head backward with correct input for the hidden-layer weight grad.
Vector head_backward_full(const Head& head, const HeadCache& cache,
                          const Vector& grad_unit, const Vector& head_input,
                          Head& grads) {
    Vector g_raw = normalize_backward(grad_unit, cache);
    outer_accumulate(grads.out.weight, g_raw, cache.hidden_post);
    add_scaled(grads.out.bias, g_raw, 1.0);
    Vector g_post = matvec_transpose(head.out.weight, g_raw);
    for (std::size_t i = 0; i < g_post.size(); ++i) {
        if (cache.hidden_pre[i] <= 0.0) g_post[i] = 0.0;
    }
    outer_accumulate(grads.hidden.weight, g_post, head_input);
    add_scaled(grads.hidden.bias, g_post, 1.0);
    return matvec_transpose(head.hidden.weight, g_post);
}

} // namespace

EncoderParams backward(const EncoderParams& params, const ForwardCache& cache,
                       const Vector& grad_intra, const Vector& grad_inter) {
    if (cache.post.size() != params.backbone.size() + 1 ||
        cache.pre.size() != params.backbone.size() ||
        cache.backbone_out.size() != params.backbone_out_dim()) {
        throw StaleCache("forward cache does not match backbone shapes");
    }
    for (std::size_t i = 0; i < params.backbone.size(); ++i) {
        if (cache.post[i].size() != params.backbone[i].weight.cols ||
            cache.pre[i].size() != params.backbone[i].weight.rows) {
            throw StaleCache("forward cache does not match backbone shapes");
        }
    }
    check_head_cache(params.intra_head, cache.intra, "intra");
    if (!params.shared_head && !grad_inter.empty()) {
        check_head_cache(params.inter_head, cache.inter, "inter");
    }
    if (!grad_intra.empty() && grad_intra.size() != params.intra_dim()) {
        throw DimensionMismatch("intra grad has size " +
                                std::to_string(grad_intra.size()) + ", expected " +
                                std::to_string(params.intra_dim()));
    }
    if (!grad_inter.empty() && grad_inter.size() != params.inter_dim()) {
        throw DimensionMismatch("inter grad has size " +
                                std::to_string(grad_inter.size()) + ", expected " +
                                std::to_string(params.inter_dim()));
    }

    EncoderParams grads = zeros_like(params);
    Vector g_bout(params.backbone_out_dim(), 0.0);

    if (params.shared_head) {
        // One head serves both outputs; normalization backward is linear in
        // the incoming grad, so the two contributions sum before the pass.
        Vector g(params.intra_dim(), 0.0);
        if (!grad_intra.empty()) add_scaled(g, grad_intra, 1.0);
        if (!grad_inter.empty()) add_scaled(g, grad_inter, 1.0);
        Vector gi = head_backward_full(params.intra_head, cache.intra, g,
                                       cache.backbone_out, grads.intra_head);
        add_scaled(g_bout, gi, 1.0);
    } else {
        if (!grad_intra.empty()) {
            Vector gi = head_backward_full(params.intra_head, cache.intra, grad_intra,
                                           cache.backbone_out, grads.intra_head);
            add_scaled(g_bout, gi, 1.0);
        }
        if (!grad_inter.empty()) {
            Vector gi = head_backward_full(params.inter_head, cache.inter, grad_inter,
                                           cache.backbone_out, grads.inter_head);
            add_scaled(g_bout, gi, 1.0);
        }
    }

    Vector g = g_bout;
    for (std::size_t i = params.backbone.size(); i-- > 0;) {
        // No activation after the last layer; ReLU mask otherwise.
        if (i + 1 < params.backbone.size()) {
            for (std::size_t j = 0; j < g.size(); ++j) {
                if (cache.pre[i][j] <= 0.0) g[j] = 0.0;
            }
        }
        outer_accumulate(grads.backbone[i].weight, g, cache.post[i]);
        add_scaled(grads.backbone[i].bias, g, 1.0);
        if (i > 0) g = matvec_transpose(params.backbone[i].weight, g);
    }
    return grads;
}

void accumulate(EncoderParams& acc, const EncoderParams& g, double s) {
    auto av = param_views(acc);
    auto gv = param_views(const_cast<EncoderParams&>(g));
    if (av.size() != gv.size()) throw DimensionMismatch("parameter set shapes differ");
    for (std::size_t i = 0; i < av.size(); ++i) {
        if (av[i].size() != gv[i].size()) {
            throw DimensionMismatch("parameter array shapes differ");
        }
        for (std::size_t j = 0; j < av[i].size(); ++j) av[i][j] += s * gv[i][j];
    }
}

MomentumPair make_momentum_pair(EncoderParams query, double m) {
    MomentumPair pair;
    pair.key = query;
    pair.query = std::move(query);
    pair.m = m;
    return pair;
}

void momentum_update(MomentumPair& pair) {
    auto kv = param_views(pair.key);
    auto qv = param_views(pair.query);
    for (std::size_t i = 0; i < kv.size(); ++i) {
        for (std::size_t j = 0; j < kv[i].size(); ++j) {
            kv[i][j] = pair.m * kv[i][j] + (1.0 - pair.m) * qv[i][j];
        }
    }
}

namespace {

template <typename Params, typename Span>
std::vector<Span> views_impl(Params& params) {
    std::vector<Span> out;
    auto push_layer = [&out](auto& layer) {
        out.push_back(Span(layer.weight.values));
        out.push_back(Span(layer.bias));
    };
    for (auto& layer : params.backbone) push_layer(layer);
    push_layer(params.intra_head.hidden);
    push_layer(params.intra_head.out);
    if (!params.shared_head) {
        push_layer(params.inter_head.hidden);
        push_layer(params.inter_head.out);
    }
    return out;
}

} // namespace

std::vector<std::span<double>> param_views(EncoderParams& params) {
    return views_impl<EncoderParams, std::span<double>>(params);
}

std::vector<std::span<const double>> param_views(const EncoderParams& params) {
    return views_impl<const EncoderParams, std::span<const double>>(params);
}

std::vector<std::string> param_names(const EncoderParams& params) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < params.backbone.size(); ++i) {
        names.push_back("backbone." + std::to_string(i) + ".weight");
        names.push_back("backbone." + std::to_string(i) + ".bias");
    }
    for (const char* part : {"hidden.weight", "hidden.bias", "out.weight", "out.bias"}) {
        names.push_back(std::string("intra_head.") + part);
    }
    if (!params.shared_head) {
        for (const char* part :
             {"hidden.weight", "hidden.bias", "out.weight", "out.bias"}) {
            names.push_back(std::string("inter_head.") + part);
        }
    }
    return names;
}

std::size_t param_count(const EncoderParams& params) {
    std::size_t n = 0;
    for (auto view : param_views(params)) n += view.size();
    return n;
}

Vector flatten_params(const EncoderParams& params) {
    Vector flat;
    flat.reserve(param_count(params));
    for (auto view : param_views(params)) {
        flat.insert(flat.end(), view.begin(), view.end());
    }
    return flat;
}

void unflatten_params(EncoderParams& params, std::span<const double> flat) {
    if (flat.size() != param_count(params)) {
        throw DimensionMismatch("flat parameter vector has size " +
                                std::to_string(flat.size()) + ", expected " +
                                std::to_string(param_count(params)));
    }
    std::size_t off = 0;
    for (auto view : param_views(params)) {
        for (double& v : view) v = flat[off++];
    }
}

} // namespace mmct
