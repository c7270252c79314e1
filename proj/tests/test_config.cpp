#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <string>

#include "mmct/config.hpp"
#include "mmct/errors.hpp"

using namespace mmct;

TEST_CASE("empty document yields the documented defaults") {
    const RunConfig cfg = parse_run_config("{}");
    CHECK(cfg.seed == 1);
    CHECK(cfg.data.num_classes == 8);
    CHECK(cfg.data.samples_per_class == 250);
    CHECK(cfg.data.image_dim == 32);
    CHECK(cfg.data.caption_dim == 24);
    CHECK(cfg.data.noise_std == 0.25);
    CHECK(cfg.encoder.hidden == 64);
    CHECK(cfg.encoder.intra_dim == 16);
    CHECK(cfg.encoder.inter_dim == 64);
    CHECK(cfg.encoder.ema_momentum == 0.999);
    CHECK(cfg.loss.tau == 0.07);
    CHECK(cfg.loss.alpha == 0.2);
    CHECK(cfg.loss.epsilon == 2.0);
    CHECK(cfg.loss.lambda_ic == 1e-4);
    CHECK(cfg.optim.lr_image == 0.03);
    CHECK(cfg.optim.sgd_momentum == 0.9);
    CHECK(cfg.optim.weight_decay == 1e-4);
    CHECK(cfg.optim.batch_size == 64);
    CHECK(cfg.optim.epochs == 50);
    CHECK(cfg.queue.capacity == 256);
    CHECK(cfg.eval.retrieval_k == std::vector<std::size_t>{1, 5, 10});
}

TEST_CASE("the top-level seed drives the generator seed") {
    const RunConfig cfg = parse_run_config("{\"seed\": 99}");
    CHECK(cfg.seed == 99);
    CHECK(cfg.data.seed == 99);
}

TEST_CASE("unknown keys are rejected with their full path") {
    CHECK_THROWS_WITH_AS(parse_run_config("{\"sede\": 3}"),
                         doctest::Contains("sede"), InvalidConfig);
    CHECK_THROWS_WITH_AS(parse_run_config("{\"loss\": {\"lambda_xx\": 1.0}}"),
                         doctest::Contains("loss.lambda_xx"), InvalidConfig);
    CHECK_THROWS_WITH_AS(
        parse_run_config("{\"eval\": {\"probe\": {\"lr_typo\": 0.1}}}"),
        doctest::Contains("eval.probe.lr_typo"), InvalidConfig);
    CHECK_THROWS_WITH_AS(parse_run_config("{\"data\": {\"sigma\": 0.2}}"),
                         doctest::Contains("data.sigma"), InvalidConfig);
}

TEST_CASE("malformed JSON and wrong types are config errors") {
    CHECK_THROWS_AS(parse_run_config("not json at all"), InvalidConfig);
    CHECK_THROWS_AS(parse_run_config("{\"loss\": {\"tau\": \"hot\"}}"),
                    InvalidConfig);
    CHECK_THROWS_AS(parse_run_config("{\"optim\": {\"epochs\": -1}}"),
                    InvalidConfig);
    CHECK_THROWS_AS(parse_run_config("{\"optim\": 7}"), InvalidConfig);
}

TEST_CASE("value constraints name the offending field") {
    CHECK_THROWS_WITH_AS(parse_run_config("{\"loss\": {\"tau\": 0.0}}"),
                         doctest::Contains("loss.tau"), InvalidConfig);
    CHECK_THROWS_WITH_AS(parse_run_config("{\"data\": {\"num_classes\": 1}}"),
                         doctest::Contains("data.num_classes"), InvalidConfig);
    CHECK_THROWS_WITH_AS(parse_run_config("{\"queue\": {\"capacity\": 0}}"),
                         doctest::Contains("queue.capacity"), InvalidConfig);
    CHECK_THROWS_WITH_AS(parse_run_config("{\"optim\": {\"batch_size\": 0}}"),
                         doctest::Contains("optim.batch_size"), InvalidConfig);
    CHECK_THROWS_WITH_AS(
        parse_run_config("{\"augment\": {\"dropout_prob\": 1.0}}"),
        doctest::Contains("augment.dropout_prob"), InvalidConfig);
    CHECK_THROWS_WITH_AS(
        parse_run_config("{\"encoder\": {\"ema_momentum\": 1.0}}"),
        doctest::Contains("encoder.ema_momentum"), InvalidConfig);
    CHECK_THROWS_WITH_AS(
        parse_run_config(
            "{\"encoder\": {\"shared_head\": true, \"intra_dim\": 8}}"),
        doctest::Contains("intra_dim"), InvalidConfig);
    CHECK_THROWS_WITH_AS(
        parse_run_config("{\"eval\": {\"tag_k\": [5, 30]}}"),
        doctest::Contains("eval.tag_k"), InvalidConfig);
    CHECK_THROWS_WITH_AS(
        parse_run_config("{\"eval\": {\"retrieval_k\": [5, 5]}}"),
        doctest::Contains("eval.retrieval_k"), InvalidConfig);
    CHECK_THROWS_WITH_AS(
        parse_run_config("{\"eval\": {\"retrieval_k\": []}}"),
        doctest::Contains("eval.retrieval_k"), InvalidConfig);
}

TEST_CASE("zero epochs is a legal schedule") {
    const RunConfig cfg = parse_run_config("{\"optim\": {\"epochs\": 0}}");
    CHECK(cfg.optim.epochs == 0);
}

TEST_CASE("canonical echo round-trips exactly") {
    const std::string doc =
        "{\"seed\": 7, \"loss\": {\"tau\": 0.05, \"lambda_ic\": 0.5},"
        " \"encoder\": {\"shared_head\": true, \"intra_dim\": 24,"
        " \"inter_dim\": 24}, \"optim\": {\"epochs\": 3}}";
    const RunConfig cfg = parse_run_config(doc);
    const std::string echo = canonical_config_json(cfg);
    const RunConfig back = parse_run_config(echo);
    CHECK(canonical_config_json(back) == echo);
    CHECK(back.loss.tau == 0.05);
    CHECK(back.loss.lambda_ic == 0.5);
    CHECK(back.encoder.shared_head);
    CHECK(back.seed == 7);

    // The echo of pure defaults is stable too.
    const std::string defaults = canonical_config_json(parse_run_config("{}"));
    CHECK(canonical_config_json(parse_run_config(defaults)) == defaults);
}

TEST_CASE("resume compatibility ignores only the epoch budget") {
    const std::string a =
        canonical_config_json(parse_run_config("{\"optim\": {\"epochs\": 3}}"));
    const std::string b =
        canonical_config_json(parse_run_config("{\"optim\": {\"epochs\": 9}}"));
    const std::string c = canonical_config_json(
        parse_run_config("{\"optim\": {\"epochs\": 3}, \"seed\": 4}"));
    CHECK(resume_compatible(a, b));
    CHECK(resume_compatible(a, a));
    CHECK_FALSE(resume_compatible(a, c));

    const std::string d = canonical_config_json(
        parse_run_config("{\"loss\": {\"tau\": 0.1}}"));
    CHECK_FALSE(resume_compatible(a, d));
}

TEST_CASE("trainer wiring resolves derived dimensions") {
    const RunConfig cfg = parse_run_config(
        "{\"seed\": 12, \"data\": {\"image_dim\": 20, \"caption_dim\": 14},"
        " \"encoder\": {\"hidden\": 30, \"backbone_out\": 26,"
        " \"head_hidden\": 0, \"intra_dim\": 6, \"inter_dim\": 10},"
        " \"queue\": {\"capacity\": 17}}");
    const TrainerInit init = trainer_init_from(cfg);
    CHECK(init.image_encoder.backbone_dims ==
          std::vector<std::size_t>{20, 30, 26});
    CHECK(init.caption_encoder.backbone_dims ==
          std::vector<std::size_t>{14, 30, 26});
    CHECK(init.image_encoder.head_hidden == 26); // 0 resolves to backbone_out
    CHECK(init.image_encoder.intra_dim == 6);
    CHECK(init.image_encoder.inter_dim == 10);
    CHECK(init.queue_capacity == 17);
    CHECK(init.seed == 12);
    CHECK(init.ema_momentum == 0.999);

    const TrainConfig tc = train_config_from(cfg);
    CHECK(tc.loss.tau == 0.07);
    CHECK(tc.optim.batch_size == 64);
    CHECK(tc.augment.noise_std == 0.1);
}

TEST_CASE("file loading separates IO from syntax errors") {
    CHECK_THROWS_AS(load_run_config("no_such_config.json"), IoError);
}
