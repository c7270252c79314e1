#include "mmct/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"
#include "mmct/errors.hpp"

namespace mmct {

namespace {

using nlohmann::json;

/// Tracks which keys of one JSON object were consumed so leftovers can be
/// reported as unknown, with full field paths.
class Fields {
public:
    Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) {
            throw InvalidConfig(label() + ": expected an object");
        }
    }

    void read_u64(const char* key, std::uint64_t& dst) {
        if (const json* v = take(key)) {
            if (!v->is_number_unsigned()) {
                throw InvalidConfig(at(key) + ": expected a nonnegative integer");
            }
            dst = v->get<std::uint64_t>();
        }
    }

    void read_size(const char* key, std::size_t& dst) {
        std::uint64_t tmp = dst;
        read_u64(key, tmp);
        dst = static_cast<std::size_t>(tmp);
    }

    void read_double(const char* key, double& dst) {
        if (const json* v = take(key)) {
            if (!v->is_number()) throw InvalidConfig(at(key) + ": expected a number");
            dst = v->get<double>();
        }
    }

    void read_bool(const char* key, bool& dst) {
        if (const json* v = take(key)) {
            if (!v->is_boolean()) throw InvalidConfig(at(key) + ": expected a boolean");
            dst = v->get<bool>();
        }
    }

    void read_size_list(const char* key, std::vector<std::size_t>& dst) {
        if (const json* v = take(key)) {
            if (!v->is_array()) {
                throw InvalidConfig(at(key) + ": expected an array of integers");
            }
            dst.clear();
            for (const json& e : *v) {
                if (!e.is_number_unsigned()) {
                    throw InvalidConfig(at(key) + ": expected nonnegative integers");
                }
                dst.push_back(e.get<std::size_t>());
            }
        }
    }

    const json* sub(const char* key) { return take(key); }

    std::string at(const char* key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

    void finish() const {
        for (const auto& item : obj_.items()) {
            if (!used_.contains(item.key())) {
                throw InvalidConfig(at(item.key().c_str()) + ": unknown key");
            }
        }
    }

private:
    std::string label() const { return path_.empty() ? "config" : path_; }

    const json* take(const char* key) {
        used_.insert(key);
        const auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    const json& obj_;
    std::string path_;
    std::set<std::string> used_;
};

void parse_data(const json& j, GenConfig& cfg) {
    Fields f(j, "data");
    f.read_size("num_classes", cfg.num_classes);
    f.read_size("samples_per_class", cfg.samples_per_class);
    f.read_size("image_dim", cfg.image_dim);
    f.read_size("caption_dim", cfg.caption_dim);
    f.read_size("num_tags", cfg.num_tags);
    f.read_size("tags_per_class", cfg.tags_per_class);
    f.read_double("noise_std", cfg.noise_std);
    f.read_double("tag_flip_prob", cfg.tag_flip_prob);
    f.read_double("modal_correlation", cfg.modal_correlation);
    f.finish();
}

void parse_encoder(const json& j, EncoderSettings& cfg) {
    Fields f(j, "encoder");
    f.read_size("hidden", cfg.hidden);
    f.read_size("backbone_out", cfg.backbone_out);
    f.read_size("intra_dim", cfg.intra_dim);
    f.read_size("inter_dim", cfg.inter_dim);
    f.read_size("head_hidden", cfg.head_hidden);
    f.read_bool("shared_head", cfg.shared_head);
    f.read_double("ema_momentum", cfg.ema_momentum);
    f.finish();
}

void parse_loss(const json& j, LossConfig& cfg) {
    Fields f(j, "loss");
    f.read_double("tau", cfg.tau);
    f.read_double("alpha", cfg.alpha);
    f.read_double("epsilon", cfg.epsilon);
    f.read_double("lambda_ii", cfg.lambda_ii);
    f.read_double("lambda_tag", cfg.lambda_tag);
    f.read_double("lambda_cc", cfg.lambda_cc);
    f.read_double("lambda_ic", cfg.lambda_ic);
    f.read_double("lambda_ci", cfg.lambda_ci);
    f.finish();
}

void parse_optim(const json& j, OptimConfig& cfg) {
    Fields f(j, "optim");
    f.read_double("lr_image", cfg.lr_image);
    f.read_double("lr_text", cfg.lr_text);
    f.read_double("sgd_momentum", cfg.sgd_momentum);
    f.read_double("weight_decay", cfg.weight_decay);
    f.read_size("batch_size", cfg.batch_size);
    f.read_size("epochs", cfg.epochs);
    f.finish();
}

void parse_augment(const json& j, AugConfig& cfg) {
    Fields f(j, "augment");
    f.read_double("noise_std", cfg.noise_std);
    f.read_double("dropout_prob", cfg.dropout_prob);
    f.finish();
}

void parse_queue(const json& j, QueueSettings& cfg) {
    Fields f(j, "queue");
    f.read_size("capacity", cfg.capacity);
    f.finish();
}

void parse_probe(const json& j, ProbeConfig& cfg) {
    Fields f(j, "eval.probe");
    f.read_double("lr", cfg.lr);
    f.read_double("momentum", cfg.momentum);
    f.read_double("tol", cfg.tol);
    f.read_double("l2", cfg.l2);
    f.read_size("max_iters", cfg.max_iters);
    f.finish();
}

void parse_eval(const json& j, EvalConfig& cfg) {
    Fields f(j, "eval");
    f.read_size_list("retrieval_k", cfg.retrieval_k);
    f.read_size_list("tag_k", cfg.tag_k);
    if (const json* p = f.sub("probe")) parse_probe(*p, cfg.probe);
    f.finish();
}

void check(bool ok, const std::string& msg) {
    if (!ok) throw InvalidConfig(msg);
}

std::string got(double v) { return " (got " + std::to_string(v) + ")"; }
std::string got(std::size_t v) { return " (got " + std::to_string(v) + ")"; }

void check_k_list(const std::vector<std::size_t>& ks, const std::string& name) {
    check(!ks.empty(), name + ": must not be empty");
    for (std::size_t i = 0; i < ks.size(); ++i) {
        check(ks[i] >= 1, name + ": values must be >= 1");
        if (i > 0) check(ks[i] > ks[i - 1], name + ": values must strictly increase");
    }
}

} // namespace

void validate_config(const RunConfig& cfg) {
    const GenConfig& d = cfg.data;
    check(d.num_classes >= 2, "data.num_classes: must be >= 2" + got(d.num_classes));
    check(d.samples_per_class >= 1, "data.samples_per_class: must be >= 1");
    check(d.image_dim >= 2, "data.image_dim: must be >= 2" + got(d.image_dim));
    check(d.caption_dim >= 2, "data.caption_dim: must be >= 2" + got(d.caption_dim));
    check(d.num_tags >= 1, "data.num_tags: must be >= 1");
    check(d.tags_per_class >= 1 && d.tags_per_class <= d.num_tags,
          "data.tags_per_class: must be in [1, num_tags]" + got(d.tags_per_class));
    check(d.noise_std > 0.0, "data.noise_std: must be > 0" + got(d.noise_std));
    check(d.tag_flip_prob >= 0.0 && d.tag_flip_prob <= 1.0,
          "data.tag_flip_prob: must be in [0, 1]" + got(d.tag_flip_prob));
    check(d.modal_correlation >= 0.0 && d.modal_correlation <= 1.0,
          "data.modal_correlation: must be in [0, 1]" + got(d.modal_correlation));

    const EncoderSettings& e = cfg.encoder;
    check(e.hidden >= 1, "encoder.hidden: must be >= 1");
    check(e.backbone_out >= 1, "encoder.backbone_out: must be >= 1");
    check(e.intra_dim >= 1, "encoder.intra_dim: must be >= 1");
    check(e.inter_dim >= 1, "encoder.inter_dim: must be >= 1");
    check(!e.shared_head || e.intra_dim == e.inter_dim,
          "encoder.inter_dim: must equal intra_dim when shared_head is true");
    check(e.ema_momentum >= 0.0 && e.ema_momentum < 1.0,
          "encoder.ema_momentum: must be in [0, 1)" + got(e.ema_momentum));

    const LossConfig& l = cfg.loss;
    check(l.tau > 0.0, "loss.tau: must be > 0" + got(l.tau));
    check(l.alpha >= 0.0, "loss.alpha: must be >= 0" + got(l.alpha));
    check(l.epsilon >= 0.0, "loss.epsilon: must be >= 0" + got(l.epsilon));
    check(l.lambda_ii >= 0.0, "loss.lambda_ii: must be >= 0");
    check(l.lambda_tag >= 0.0, "loss.lambda_tag: must be >= 0");
    check(l.lambda_cc >= 0.0, "loss.lambda_cc: must be >= 0");
    check(l.lambda_ic >= 0.0, "loss.lambda_ic: must be >= 0");
    check(l.lambda_ci >= 0.0, "loss.lambda_ci: must be >= 0");

    const OptimConfig& o = cfg.optim;
    check(o.lr_image > 0.0, "optim.lr_image: must be > 0" + got(o.lr_image));
    check(o.lr_text > 0.0, "optim.lr_text: must be > 0" + got(o.lr_text));
    check(o.sgd_momentum >= 0.0 && o.sgd_momentum < 1.0,
          "optim.sgd_momentum: must be in [0, 1)" + got(o.sgd_momentum));
    check(o.weight_decay >= 0.0, "optim.weight_decay: must be >= 0");
    check(o.batch_size >= 1, "optim.batch_size: must be >= 1");

    const AugConfig& a = cfg.augment;
    check(a.noise_std >= 0.0, "augment.noise_std: must be >= 0" + got(a.noise_std));
    check(a.dropout_prob >= 0.0 && a.dropout_prob < 1.0,
          "augment.dropout_prob: must be in [0, 1)" + got(a.dropout_prob));

    check(cfg.queue.capacity >= 1, "queue.capacity: must be >= 1");

    check_k_list(cfg.eval.retrieval_k, "eval.retrieval_k");
    check_k_list(cfg.eval.tag_k, "eval.tag_k");
    check(cfg.eval.tag_k.back() <= d.num_tags,
          "eval.tag_k: values must be <= data.num_tags" + got(cfg.eval.tag_k.back()));

    const ProbeConfig& p = cfg.eval.probe;
    check(p.lr > 0.0, "eval.probe.lr: must be > 0" + got(p.lr));
    check(p.momentum >= 0.0 && p.momentum < 1.0,
          "eval.probe.momentum: must be in [0, 1)" + got(p.momentum));
    check(p.tol > 0.0, "eval.probe.tol: must be > 0" + got(p.tol));
    check(p.l2 >= 0.0, "eval.probe.l2: must be >= 0" + got(p.l2));
    check(p.max_iters >= 1, "eval.probe.max_iters: must be >= 1");
}

RunConfig parse_run_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw InvalidConfig("config is not valid JSON: " + std::string(e.what()));
    }
    RunConfig cfg;
    Fields f(doc, "");
    f.read_u64("seed", cfg.seed);
    if (const json* j = f.sub("data")) parse_data(*j, cfg.data);
    if (const json* j = f.sub("encoder")) parse_encoder(*j, cfg.encoder);
    if (const json* j = f.sub("loss")) parse_loss(*j, cfg.loss);
    if (const json* j = f.sub("optim")) parse_optim(*j, cfg.optim);
    if (const json* j = f.sub("augment")) parse_augment(*j, cfg.augment);
    if (const json* j = f.sub("queue")) parse_queue(*j, cfg.queue);
    if (const json* j = f.sub("eval")) parse_eval(*j, cfg.eval);
    f.finish();
    cfg.data.seed = cfg.seed;
    validate_config(cfg);
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

std::string canonical_config_json(const RunConfig& cfg) {
    json doc;
    doc["seed"] = cfg.seed;
    doc["data"] = {{"num_classes", cfg.data.num_classes},
                   {"samples_per_class", cfg.data.samples_per_class},
                   {"image_dim", cfg.data.image_dim},
                   {"caption_dim", cfg.data.caption_dim},
                   {"num_tags", cfg.data.num_tags},
                   {"tags_per_class", cfg.data.tags_per_class},
                   {"noise_std", cfg.data.noise_std},
                   {"tag_flip_prob", cfg.data.tag_flip_prob},
                   {"modal_correlation", cfg.data.modal_correlation}};
    doc["encoder"] = {{"hidden", cfg.encoder.hidden},
                      {"backbone_out", cfg.encoder.backbone_out},
                      {"intra_dim", cfg.encoder.intra_dim},
                      {"inter_dim", cfg.encoder.inter_dim},
                      {"head_hidden", cfg.encoder.head_hidden},
                      {"shared_head", cfg.encoder.shared_head},
                      {"ema_momentum", cfg.encoder.ema_momentum}};
    doc["loss"] = {{"tau", cfg.loss.tau},
                   {"alpha", cfg.loss.alpha},
                   {"epsilon", cfg.loss.epsilon},
                   {"lambda_ii", cfg.loss.lambda_ii},
                   {"lambda_tag", cfg.loss.lambda_tag},
                   {"lambda_cc", cfg.loss.lambda_cc},
                   {"lambda_ic", cfg.loss.lambda_ic},
                   {"lambda_ci", cfg.loss.lambda_ci}};
    doc["optim"] = {{"lr_image", cfg.optim.lr_image},
                    {"lr_text", cfg.optim.lr_text},
                    {"sgd_momentum", cfg.optim.sgd_momentum},
                    {"weight_decay", cfg.optim.weight_decay},
                    {"batch_size", cfg.optim.batch_size},
                    {"epochs", cfg.optim.epochs}};
    doc["augment"] = {{"noise_std", cfg.augment.noise_std},
                      {"dropout_prob", cfg.augment.dropout_prob}};
    doc["queue"] = {{"capacity", cfg.queue.capacity}};
    doc["eval"] = {{"retrieval_k", cfg.eval.retrieval_k},
                   {"tag_k", cfg.eval.tag_k},
                   {"probe",
                    {{"lr", cfg.eval.probe.lr},
                     {"momentum", cfg.eval.probe.momentum},
                     {"tol", cfg.eval.probe.tol},
                     {"l2", cfg.eval.probe.l2},
                     {"max_iters", cfg.eval.probe.max_iters}}}};
    return doc.dump();
}

bool resume_compatible(const std::string& echo_a, const std::string& echo_b) {
    json a, b;
    try {
        a = json::parse(echo_a);
        b = json::parse(echo_b);
    } catch (const json::parse_error&) {
        return false;
    }
    for (json* j : {&a, &b}) {
        if (j->contains("optim") && (*j)["optim"].is_object()) {
            (*j)["optim"].erase("epochs");
        }
    }
    return a == b;
}

TrainerInit trainer_init_from(const RunConfig& cfg) {
    TrainerInit init;
    const std::size_t head_hidden =
        cfg.encoder.head_hidden == 0 ? cfg.encoder.backbone_out
                                     : cfg.encoder.head_hidden;
    for (EncoderConfig* enc : {&init.image_encoder, &init.caption_encoder}) {
        enc->intra_dim = cfg.encoder.intra_dim;
        enc->inter_dim = cfg.encoder.inter_dim;
        enc->head_hidden = head_hidden;
        enc->shared_head = cfg.encoder.shared_head;
    }
    init.image_encoder.backbone_dims = {cfg.data.image_dim, cfg.encoder.hidden,
                                        cfg.encoder.backbone_out};
    init.caption_encoder.backbone_dims = {cfg.data.caption_dim, cfg.encoder.hidden,
                                          cfg.encoder.backbone_out};
    init.ema_momentum = cfg.encoder.ema_momentum;
    init.queue_capacity = cfg.queue.capacity;
    init.seed = cfg.seed;
    return init;
}

TrainConfig train_config_from(const RunConfig& cfg) {
    return TrainConfig{.loss = cfg.loss, .optim = cfg.optim, .augment = cfg.augment};
}

} // namespace mmct
