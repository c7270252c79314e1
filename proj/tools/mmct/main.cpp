#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mmct/config.hpp"
#include "mmct/errors.hpp"
#include "mmct/evaluator.hpp"
#include "mmct/gradcheck.hpp"
#include "mmct/synthdata.hpp"
#include "mmct/trainer.hpp"

// Exit codes: 0 ok, 1 check failure, 2 config/usage error, 3 IO or file
// format error, 4 checkpoint version mismatch.

namespace {

using nlohmann::json;

void check_dataset_matches_config(const mmct::SplitDataset& data,
                                  const mmct::RunConfig& cfg) {
    const mmct::Dataset& d = data.train;
    auto mismatch = [](const char* field, std::size_t file, std::size_t config) {
        throw mmct::InvalidConfig(std::string("data.") + field + ": config says " +
                                  std::to_string(config) + " but dataset file has " +
                                  std::to_string(file));
    };
    if (d.image_dim != cfg.data.image_dim) {
        mismatch("image_dim", d.image_dim, cfg.data.image_dim);
    }
    if (d.caption_dim != cfg.data.caption_dim) {
        mismatch("caption_dim", d.caption_dim, cfg.data.caption_dim);
    }
    if (d.num_tags != cfg.data.num_tags) {
        mismatch("num_tags", d.num_tags, cfg.data.num_tags);
    }
    if (d.num_classes != cfg.data.num_classes) {
        mismatch("num_classes", d.num_classes, cfg.data.num_classes);
    }
}

int cmd_gen_data(const std::string& config_path, const std::string& out_path) {
    const mmct::RunConfig cfg = mmct::load_run_config(config_path);
    const mmct::SplitDataset data = mmct::generate(cfg.data);
    mmct::save_dataset(data, cfg.data, out_path);

    std::vector<std::size_t> train_counts(cfg.data.num_classes, 0);
    std::vector<std::size_t> test_counts(cfg.data.num_classes, 0);
    double tag_sum = 0.0;
    for (const mmct::Sample& s : data.train.samples) {
        ++train_counts[static_cast<std::size_t>(s.class_id)];
        for (double t : s.tags) tag_sum += t;
    }
    for (const mmct::Sample& s : data.test.samples) {
        ++test_counts[static_cast<std::size_t>(s.class_id)];
        for (double t : s.tags) tag_sum += t;
    }
    const std::size_t total = data.train.samples.size() + data.test.samples.size();
    std::printf("wrote %s: %zu samples (%zu train / %zu test), %zu classes\n",
                out_path.c_str(), total, data.train.samples.size(),
                data.test.samples.size(), cfg.data.num_classes);
    for (std::size_t c = 0; c < cfg.data.num_classes; ++c) {
        std::printf("  class %zu: %zu train / %zu test\n", c, train_counts[c],
                    test_counts[c]);
    }
    std::printf("  tags: %zu total, %.2f active per sample on average\n",
                cfg.data.num_tags, tag_sum / static_cast<double>(total));
    return 0;
}

void write_metrics_csv(const std::string& path,
                       const std::vector<mmct::EpochMetrics>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw mmct::IoError("cannot open for writing: " + path);
    out << "epoch,lr_image,lr_text,j_ii,j_tag,j_cc,j_ic,j_ci,total\n";
    char buf[512];
    for (const mmct::EpochMetrics& r : rows) {
        std::snprintf(buf, sizeof(buf),
                      "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      r.epoch, r.lr_image, r.lr_text, r.j_ii, r.j_tag, r.j_cc, r.j_ic,
                      r.j_ci, r.total);
        out << buf;
    }
    if (!out) throw mmct::IoError("write failed: " + path);
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw mmct::IoError("cannot open for writing: " + path);
    out << text;
    if (!out) throw mmct::IoError("write failed: " + path);
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_dir, const std::string& resume_path) {
    const mmct::RunConfig cfg = mmct::load_run_config(config_path);
    const std::string echo = mmct::canonical_config_json(cfg);
    const mmct::SplitDataset data = mmct::load_dataset(data_path);
    check_dataset_matches_config(data, cfg);

    const mmct::TrainerInit init = mmct::trainer_init_from(cfg);
    mmct::TrainState state = [&] {
        if (resume_path.empty()) return mmct::make_train_state(init);
        const std::string saved = mmct::read_checkpoint_config(resume_path);
        if (!mmct::resume_compatible(saved, echo)) {
            throw mmct::InvalidConfig(
                "config: does not match the checkpoint's config "
                "(only optim.epochs may differ on resume)");
        }
        return mmct::load_checkpoint(resume_path, init);
    }();

    const std::vector<mmct::EpochMetrics> rows =
        mmct::train_loop(state, data.train, mmct::train_config_from(cfg));
    for (const mmct::EpochMetrics& r : rows) {
        std::printf("epoch %zu/%zu  lr_image=%.5f lr_text=%.5f total=%.6f\n", r.epoch,
                    cfg.optim.epochs, r.lr_image, r.lr_text, r.total);
    }
    if (rows.empty()) std::printf("nothing to do: run already complete\n");

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw mmct::IoError("cannot create output directory: " + out_dir);
    write_metrics_csv(out_dir + "/metrics.csv", rows);
    mmct::save_checkpoint(state, echo, out_dir + "/checkpoint.json");
    json config_doc;
    config_doc["version"] = 1;
    config_doc["kind"] = "config";
    config_doc["config"] = json::parse(echo);
    write_text_file(out_dir + "/config.json", config_doc.dump(2) + "\n");
    std::printf("wrote %s/{metrics.csv,checkpoint.json,config.json}\n",
                out_dir.c_str());
    return 0;
}

json retrieval_to_json(const mmct::RetrievalReport& r) {
    json r_at;
    for (const auto& [k, v] : r.r_at) r_at[std::to_string(k)] = v;
    return json{{"r_at", std::move(r_at)}, {"med_r", r.med_r}};
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& out_path) {
    const std::string echo = mmct::read_checkpoint_config(checkpoint_path);
    mmct::RunConfig cfg;
    try {
        cfg = mmct::parse_run_config(echo);
    } catch (const mmct::InvalidConfig& e) {
        throw mmct::FormatError(std::string("checkpoint config echo is invalid: ") +
                                e.what());
    }
    const mmct::SplitDataset data = mmct::load_dataset(data_path);
    check_dataset_matches_config(data, cfg);
    const mmct::TrainState state =
        mmct::load_checkpoint(checkpoint_path, mmct::trainer_init_from(cfg));

    const mmct::EvalReport report = mmct::evaluate_model(
        state.image.query, state.caption.query, data.train, data.test, cfg.eval);

    json doc;
    doc["version"] = 1;
    doc["kind"] = "report";
    doc["config"] = json::parse(echo);
    doc["step"] = state.step;
    doc["retrieval"] = {
        {"image_to_text", retrieval_to_json(report.retrieval.image_to_text)},
        {"text_to_image", retrieval_to_json(report.retrieval.text_to_image)}};
    doc["probe"] = {{"top1", report.probe_top1}};
    json miou;
    for (const auto& [k, v] : report.miou_at) miou[std::to_string(k)] = v;
    doc["tagging"] = {{"miou_at", std::move(miou)}};
    write_text_file(out_path, doc.dump(2) + "\n");

    const auto& t2i = report.retrieval.text_to_image;
    const auto& i2t = report.retrieval.image_to_text;
    std::printf("text->image R@1=%.2f%% Med r=%g | image->text R@1=%.2f%% Med r=%g\n",
                t2i.r_at.begin()->second, t2i.med_r, i2t.r_at.begin()->second,
                i2t.med_r);
    std::printf("probe top1=%.2f%%\n", report.probe_top1);
    for (const auto& [k, v] : report.miou_at) {
        std::printf("mIOU@%zu=%.4f\n", k, v);
    }
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

int cmd_gradcheck(std::size_t trials, std::uint64_t seed, bool corrupt) {
    const std::vector<mmct::GradcheckResult> results =
        mmct::run_gradcheck({.trials = trials, .seed = seed, .corrupt = corrupt});
    bool all_pass = true;
    for (const mmct::GradcheckResult& r : results) {
        std::printf("%-8s max_rel_err=%.3e worst_instance=%" PRIu64 " [%s]\n",
                    r.name.c_str(), r.max_rel_err, r.worst_instance,
                    r.pass ? "ok" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    if (!all_pass) {
        std::printf("gradient check FAILED\n");
        return 1;
    }
    std::printf("all gradient checks passed (%zu trials)\n", trials);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multimodal contrastive training engine"};
    app.require_subcommand(1);

    std::string config_path, data_path, out_path, resume_path, checkpoint_path;
    std::size_t trials = 100;
    std::uint64_t seed = 1;
    bool corrupt = false;

    CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
    gen->add_option("--config", config_path, "Run config JSON")->required();
    gen->add_option("--out", out_path, "Output dataset JSON path")->required();

    CLI::App* train = app.add_subcommand("train", "Train encoders on a dataset");
    train->add_option("--config", config_path, "Run config JSON")->required();
    train->add_option("--data", data_path, "Dataset JSON path")->required();
    train->add_option("--out", out_path, "Output directory")->required();
    train->add_option("--resume", resume_path, "Checkpoint to continue from");

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a trained checkpoint");
    eval->add_option("--checkpoint", checkpoint_path, "Checkpoint JSON path")
        ->required();
    eval->add_option("--data", data_path, "Dataset JSON path")->required();
    eval->add_option("--out", out_path, "Output report JSON path")->required();

    CLI::App* gc = app.add_subcommand("gradcheck",
                                      "Check analytic gradients against "
                                      "finite differences");
    gc->add_option("--trials", trials, "Random instances per check")
        ->check(CLI::PositiveNumber);
    gc->add_option("--seed", seed, "Base seed for instance generation");
    gc->add_flag("--corrupt", corrupt)->group(""); // negative-control hook

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(config_path, out_path);
        if (train->parsed()) {
            return cmd_train(config_path, data_path, out_path, resume_path);
        }
        if (eval->parsed()) return cmd_eval(checkpoint_path, data_path, out_path);
        return cmd_gradcheck(trials, seed, corrupt);
    } catch (const mmct::VersionMismatch& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const mmct::InvalidConfig& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const mmct::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const mmct::FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
