#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "mmct/errors.hpp"
#include "mmct/evaluator.hpp"
#include "mmct/numerics.hpp"

using namespace mmct;

namespace {

// Reference rank computation: full sort of similarities with ties broken by
// ascending index, then 1-based position of the true pair.
std::vector<std::size_t> oracle_ranks(const std::vector<Vector>& queries,
                                      const std::vector<Vector>& keys) {
    std::vector<std::size_t> ranks;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        std::vector<std::size_t> order(keys.size());
        for (std::size_t j = 0; j < keys.size(); ++j) order[j] = j;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) {
                             const double sa = dot(queries[i], keys[a]);
                             const double sb = dot(queries[i], keys[b]);
                             if (sa != sb) return sa > sb;
                             return a < b;
                         });
        const auto pos = std::find(order.begin(), order.end(), i);
        ranks.push_back(
            static_cast<std::size_t>(pos - order.begin()) + 1);
    }
    return ranks;
}

double oracle_r_at(const std::vector<std::size_t>& ranks, std::size_t k) {
    std::size_t hits = 0;
    for (std::size_t r : ranks) {
        if (r <= k) ++hits;
    }
    return 100.0 * static_cast<double>(hits) /
           static_cast<double>(ranks.size());
}

double oracle_med_r(std::vector<std::size_t> ranks) {
    std::sort(ranks.begin(), ranks.end());
    return static_cast<double>(ranks[(ranks.size() - 1) / 2]);
}

std::vector<Vector> random_units(SeededRng& rng, std::size_t n,
                                 std::size_t dim) {
    std::vector<Vector> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(l2_normalize(rng.normal_vector(dim)));
    }
    return out;
}

} // namespace

TEST_CASE("perfectly aligned distinct pairs retrieve at rank one") {
    SeededRng rng(1);
    const std::vector<Vector> images = random_units(rng, 6, 8);
    const std::vector<Vector> captions = images;
    const std::vector<std::size_t> ks = {1, 5};
    const RetrievalPair out = retrieval_eval(images, captions, ks);
    CHECK(out.image_to_text.r_at.at(1) == 100.0);
    CHECK(out.text_to_image.r_at.at(1) == 100.0);
    CHECK(out.image_to_text.med_r == 1.0);
    CHECK(out.text_to_image.med_r == 1.0);
}

TEST_CASE("all-tied similarities resolve by ascending index") {
    // Four identical pairs: every similarity ties, so query i's true pair
    // lands at rank i+1. Ranks {1,2,3,4} give R@1 = 25 and lower-median 2.
    const Vector u = l2_normalize({1.0, 2.0, 3.0});
    const std::vector<Vector> images(4, u), captions(4, u);
    const std::vector<std::size_t> ks = {1, 2, 4};
    const RetrievalPair out = retrieval_eval(images, captions, ks);
    for (const RetrievalReport* r : {&out.image_to_text, &out.text_to_image}) {
        CHECK(r->r_at.at(1) == 25.0);
        CHECK(r->r_at.at(2) == 50.0);
        CHECK(r->r_at.at(4) == 100.0);
        CHECK(r->med_r == 2.0);
    }
}

TEST_CASE("four-pair report matches the exhaustive sort oracle") {
    SeededRng rng(2);
    const std::vector<Vector> images = random_units(rng, 4, 5);
    const std::vector<Vector> captions = random_units(rng, 4, 5);
    const std::vector<std::size_t> ks = {1, 2, 3, 4};
    const RetrievalPair out = retrieval_eval(images, captions, ks);

    const std::vector<std::size_t> i2t = oracle_ranks(images, captions);
    const std::vector<std::size_t> t2i = oracle_ranks(captions, images);
    for (std::size_t k : ks) {
        CHECK(out.image_to_text.r_at.at(k) == oracle_r_at(i2t, k));
        CHECK(out.text_to_image.r_at.at(k) == oracle_r_at(t2i, k));
    }
    CHECK(out.image_to_text.med_r == oracle_med_r(i2t));
    CHECK(out.text_to_image.med_r == oracle_med_r(t2i));
}

TEST_CASE("random instances match the oracle exactly") {
    SeededRng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng.below(15);
        const std::size_t dim = 3 + rng.below(5);
        const std::vector<Vector> images = random_units(rng, n, dim);
        const std::vector<Vector> captions = random_units(rng, n, dim);
        std::vector<std::size_t> ks;
        for (std::size_t k = 1; k <= n; k += 1 + rng.below(3)) ks.push_back(k);
        const RetrievalPair out = retrieval_eval(images, captions, ks);

        const std::vector<std::size_t> i2t = oracle_ranks(images, captions);
        const std::vector<std::size_t> t2i = oracle_ranks(captions, images);
        for (std::size_t k : ks) {
            REQUIRE(out.image_to_text.r_at.at(k) == oracle_r_at(i2t, k));
            REQUIRE(out.text_to_image.r_at.at(k) == oracle_r_at(t2i, k));
        }
        REQUIRE(out.image_to_text.med_r == oracle_med_r(i2t));
        REQUIRE(out.text_to_image.med_r == oracle_med_r(t2i));
    }
}

TEST_CASE("recall curves are monotone and saturate at R@N = 100") {
    SeededRng rng(4);
    const std::vector<Vector> images = random_units(rng, 12, 6);
    const std::vector<Vector> captions = random_units(rng, 12, 6);
    const std::vector<std::size_t> ks = {1, 2, 4, 8, 12};
    const RetrievalPair out = retrieval_eval(images, captions, ks);
    double prev = -1.0;
    for (std::size_t k : ks) {
        const double cur = out.text_to_image.r_at.at(k);
        CHECK(cur >= prev);
        prev = cur;
    }
    CHECK(out.text_to_image.r_at.at(12) == 100.0);
    CHECK(out.image_to_text.r_at.at(12) == 100.0);
}

TEST_CASE("random pairing lands near chance") {
    SeededRng rng(5);
    const std::vector<Vector> images = random_units(rng, 1000, 16);
    const std::vector<Vector> captions = random_units(rng, 1000, 16);
    const std::vector<std::size_t> ks = {1};
    const RetrievalPair out = retrieval_eval(images, captions, ks);
    // Expected R@1 is 0.1%; the median rank of an unrelated pair sits near
    // the middle of the 1000-item list.
    CHECK(out.text_to_image.r_at.at(1) <= 1.0);
    CHECK(out.text_to_image.med_r >= 350.0);
    CHECK(out.text_to_image.med_r <= 650.0);
}

TEST_CASE("retrieval order permutation leaves reports unchanged") {
    SeededRng rng(6);
    const std::size_t n = 10;
    std::vector<Vector> images = random_units(rng, n, 7);
    std::vector<Vector> captions = random_units(rng, n, 7);
    const std::vector<std::size_t> ks = {1, 3, 5};
    const RetrievalPair before = retrieval_eval(images, captions, ks);

    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    std::vector<Vector> pim(n), pcap(n);
    for (std::size_t i = 0; i < n; ++i) {
        pim[i] = images[perm[i]];
        pcap[i] = captions[perm[i]];
    }
    const RetrievalPair after = retrieval_eval(pim, pcap, ks);
    for (std::size_t k : ks) {
        CHECK(before.text_to_image.r_at.at(k) == after.text_to_image.r_at.at(k));
        CHECK(before.image_to_text.r_at.at(k) == after.image_to_text.r_at.at(k));
    }
    CHECK(before.text_to_image.med_r == after.text_to_image.med_r);
}

TEST_CASE("retrieval input validation") {
    CHECK_THROWS_AS(retrieval_eval({}, {}, std::vector<std::size_t>{1}),
                    EmptyTestSet);
    SeededRng rng(7);
    const std::vector<Vector> a = random_units(rng, 3, 4);
    const std::vector<Vector> b = random_units(rng, 4, 4);
    CHECK_THROWS_AS(retrieval_eval(a, b, std::vector<std::size_t>{1}),
                    DimensionMismatch);
}

TEST_CASE("linear probe separates linearly separable clusters") {
    SeededRng rng(8);
    std::vector<Vector> train_x, test_x;
    std::vector<std::int64_t> train_y, test_y;
    for (int i = 0; i < 60; ++i) {
        const int cls = i % 2;
        Vector v = rng.normal_vector(4, 0.3);
        v[0] += cls == 0 ? 3.0 : -3.0;
        if (i < 40) {
            train_x.push_back(v);
            train_y.push_back(cls);
        } else {
            test_x.push_back(v);
            test_y.push_back(cls);
        }
    }
    const double acc = linear_probe(train_x, train_y, test_x, test_y, {});
    CHECK(acc == 100.0);
}

TEST_CASE("linear probe on shuffled labels is near chance") {
    SeededRng rng(9);
    const std::size_t classes = 8;
    std::vector<Vector> train_x, test_x;
    std::vector<std::int64_t> train_y, test_y;
    for (int i = 0; i < 400; ++i) {
        train_x.push_back(rng.normal_vector(8));
        train_y.push_back(static_cast<std::int64_t>(rng.below(classes)));
    }
    for (int i = 0; i < 200; ++i) {
        test_x.push_back(rng.normal_vector(8));
        test_y.push_back(static_cast<std::int64_t>(rng.below(classes)));
    }
    const double acc = linear_probe(train_x, train_y, test_x, test_y, {});
    CHECK(acc >= 12.5 - 5.0);
    CHECK(acc <= 12.5 + 5.0);
}

TEST_CASE("linear probe on constant features predicts the majority class") {
    const Vector c = {1.0, 1.0};
    const std::vector<Vector> train_x(10, c);
    const std::vector<std::int64_t> train_y = {0, 0, 0, 0, 0, 0, 1, 1, 2, 2};
    const std::vector<Vector> test_x(5, c);
    const std::vector<std::int64_t> test_y = {0, 0, 0, 1, 2};
    const double acc = linear_probe(train_x, train_y, test_x, test_y, {});
    CHECK(acc == 60.0);
}

TEST_CASE("linear probe rejects degenerate labels") {
    const std::vector<Vector> x(4, Vector{1.0});
    const std::vector<Vector> tx(1, Vector{1.0});
    std::vector<std::int64_t> bad_hole = {0, 0, 2, 2}; // class 1 absent
    const std::vector<std::int64_t> ty = {0};
    CHECK_THROWS_AS(linear_probe(x, bad_hole, tx, ty, {}), DegenerateLabels);

    std::vector<std::int64_t> negative = {0, -1, 1, 1};
    CHECK_THROWS_AS(linear_probe(x, negative, tx, ty, {}), DegenerateLabels);

    std::vector<std::int64_t> ok = {0, 1, 0, 1};
    std::vector<std::int64_t> outside = {2};
    CHECK_THROWS_AS(linear_probe(x, ok, tx, outside, {}), DegenerateLabels);
}

TEST_CASE("topk_iou set arithmetic") {
    // Scores rank tags {0,1,2} on top.
    const Vector scores = {9.0, 8.0, 7.0, 0.1, 0.2, 0.3};

    SUBCASE("prediction equal to the ground truth") {
        const Vector gt = {1.0, 1.0, 1.0, 0.0, 0.0, 0.0};
        CHECK(topk_iou(scores, gt, 3) == 1.0);
    }
    SUBCASE("disjoint prediction") {
        const Vector gt = {0.0, 0.0, 0.0, 1.0, 1.0, 1.0};
        CHECK(topk_iou(scores, gt, 3) == 0.0);
    }
    SUBCASE("overlap of two with k = 5 and five true tags") {
        // pred = top-5 by score; gt has 5 tags, 2 shared: 2 / (5+5-2).
        const Vector s = {9, 8, 7, 6, 5, 0.1, 0.2, 0.3, 0.4, 0.5};
        const Vector gt = {1, 1, 0, 0, 0, 1, 1, 1, 0, 0};
        CHECK(topk_iou(s, gt, 5) == doctest::Approx(0.25).epsilon(1e-12));
    }
    SUBCASE("ties pick the lowest tag index") {
        const Vector tied = {1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
        const Vector gt = {1.0, 1.0, 0.0, 0.0, 0.0, 0.0};
        // top-2 of an all-tied score vector is {0, 1}.
        CHECK(topk_iou(tied, gt, 2) == 1.0);
    }
    SUBCASE("k bounds") {
        const Vector gt = {1.0, 0.0, 0.0, 0.0, 0.0, 0.0};
        CHECK_THROWS_AS(topk_iou(scores, gt, 0), InvalidDimension);
        CHECK_THROWS_AS(topk_iou(scores, gt, 7), InvalidDimension);
    }
}

TEST_CASE("tagging_miou recovers tags from tag-revealing features") {
    SeededRng rng(10);
    std::vector<Vector> feats;
    std::vector<Vector> gt;
    for (int i = 0; i < 120; ++i) {
        Vector tags(6, 0.0);
        // Exactly three active tags per sample.
        std::vector<std::size_t> idx = {0, 1, 2, 3, 4, 5};
        rng.shuffle(idx);
        for (int j = 0; j < 3; ++j) tags[idx[j]] = 1.0;
        Vector f = tags;
        for (double& v : f) v += 0.05 * rng.normal();
        feats.push_back(std::move(f));
        gt.push_back(std::move(tags));
    }
    const std::vector<std::size_t> ks = {3};
    const std::map<std::size_t, double> miou = tagging_miou(feats, gt, ks, {});
    CHECK(miou.at(3) > 0.9);
    CHECK(miou.at(3) <= 1.0);
}

TEST_CASE("evaluate_model produces a complete, deterministic report") {
    SeededRng rng(11);
    EncoderConfig img_cfg;
    img_cfg.backbone_dims = {10, 12, 10};
    img_cfg.intra_dim = 4;
    img_cfg.inter_dim = 8;
    EncoderConfig cap_cfg;
    cap_cfg.backbone_dims = {8, 12, 10};
    cap_cfg.intra_dim = 4;
    cap_cfg.inter_dim = 8;
    const EncoderParams image = init_encoder(img_cfg, rng);
    const EncoderParams caption = init_encoder(cap_cfg, rng);

    Dataset train, test;
    train.num_classes = test.num_classes = 3;
    train.num_tags = test.num_tags = 6;
    train.image_dim = test.image_dim = 10;
    train.caption_dim = test.caption_dim = 8;
    for (int i = 0; i < 90; ++i) {
        Sample s;
        s.class_id = i % 3;
        s.image = rng.normal_vector(10);
        s.image[0] += 2.0 * static_cast<double>(s.class_id);
        s.caption = rng.normal_vector(8);
        s.tags = Vector(6, 0.0);
        s.tags[static_cast<std::size_t>(s.class_id)] = 1.0;
        s.tags[3 + static_cast<std::size_t>(s.class_id) % 3] = 1.0;
        if (i < 60) {
            train.samples.push_back(std::move(s));
        } else {
            test.samples.push_back(std::move(s));
        }
    }

    EvalConfig cfg;
    cfg.retrieval_k = {1, 5};
    cfg.tag_k = {2, 4};
    const EvalReport a = evaluate_model(image, caption, train, test, cfg);
    const EvalReport b = evaluate_model(image, caption, train, test, cfg);

    CHECK(a.retrieval.text_to_image.r_at.size() == 2);
    CHECK(a.probe_top1 >= 0.0);
    CHECK(a.probe_top1 <= 100.0);
    REQUIRE(a.miou_at.size() == 2);
    for (const auto& [k, v] : a.miou_at) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(a.probe_top1 == b.probe_top1);
    CHECK(a.retrieval.text_to_image.med_r == b.retrieval.text_to_image.med_r);
    CHECK(a.miou_at == b.miou_at);

    Dataset empty_test = test;
    empty_test.samples.clear();
    CHECK_THROWS_AS(evaluate_model(image, caption, train, empty_test, cfg),
                    EmptyTestSet);
}
