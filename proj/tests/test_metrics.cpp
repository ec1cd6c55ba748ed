#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "stpc/metrics.hpp"

using namespace stpc;

TEST_CASE("the two-class example") {
    const ConfusionMatrix cm(2, {2, 0, 1, 1});
    CHECK(overall_accuracy(cm) == 0.75);
    CHECK(mean_accuracy(cm) == 0.75);
    CHECK(mean_iou(cm) == 7.0 / 12.0);
    const auto iou = class_iou(cm);
    CHECK(iou[0] == 2.0 / 3.0);
    CHECK(iou[1] == 0.5);
}

TEST_CASE("diagonal matrix scores one everywhere") {
    const ConfusionMatrix cm(3, {4, 0, 0, 0, 2, 0, 0, 0, 9});
    const auto m = compute_metrics(cm);
    CHECK(m.oa == 1.0);
    CHECK(m.macc == 1.0);
    CHECK(m.miou == 1.0);
}

TEST_CASE("constant predictor on balanced classes") {
    ConfusionMatrix cm(2);
    const std::vector<int> truth{0, 1, 0, 1, 0, 1};
    const std::vector<int> pred(6, 0);
    cm.accumulate(truth, pred);
    CHECK(overall_accuracy(cm) == 0.5);
    CHECK(mean_accuracy(cm) == 0.5);
}

TEST_CASE("absent classes are excluded from the means") {
    // class 2 never appears in truth or prediction
    const ConfusionMatrix cm(3, {2, 0, 0, 1, 1, 0, 0, 0, 0});
    const auto m = compute_metrics(cm);
    CHECK(m.macc == 0.75);
    CHECK(m.miou == 7.0 / 12.0);
    CHECK(std::isnan(m.class_iou[2]));
    CHECK(std::isnan(m.class_accuracy[2]));

    // predicted but never true: accuracy undefined, IoU defined and zero
    const ConfusionMatrix fp(2, {3, 1, 0, 0});
    const auto f = compute_metrics(fp);
    CHECK(std::isnan(f.class_accuracy[1]));
    CHECK(f.class_iou[1] == 0.0);
    CHECK(f.macc == 0.75);
    CHECK(f.miou == 0.375);
}

TEST_CASE("accumulate, ignore labels and additivity") {
    ConfusionMatrix cm(3);
    const std::vector<int> t1{0}, p1{0};
    cm.accumulate(t1, p1);
    CHECK(cm.at(0, 0) == 1);

    const std::vector<int> ignored{-1, -1}, any{2, 1};
    const auto before = cm;
    cm.accumulate(ignored, any);
    CHECK(cm == before);

    std::mt19937_64 rng(4);
    std::vector<int> ta(50), pa(50), tb(30), pb(30);
    for (auto* v : {&ta, &pa, &tb, &pb})
        for (int& x : *v) x = static_cast<int>(rng() % 3);
    ConfusionMatrix a(3), b(3), joint(3);
    a.accumulate(ta, pa);
    b.accumulate(tb, pb);
    std::vector<int> tj = ta, pj = pa;
    tj.insert(tj.end(), tb.begin(), tb.end());
    pj.insert(pj.end(), pb.begin(), pb.end());
    joint.accumulate(tj, pj);
    a.merge(b);
    CHECK(a == joint);
    CHECK(a.total() == 80);

    const std::vector<int> bad_truth{3}, bad_pred{0};
    CHECK_THROWS_AS(cm.accumulate(bad_truth, bad_pred), std::out_of_range);
    CHECK_THROWS_AS(cm.accumulate(bad_pred, bad_truth), std::out_of_range);
    const std::vector<int> two{0, 1};
    CHECK_THROWS(cm.accumulate(two, bad_pred));
}

TEST_CASE("empty matrix is an error") {
    const ConfusionMatrix cm(2);
    CHECK_THROWS_AS(overall_accuracy(cm), std::invalid_argument);
    CHECK_THROWS_AS(compute_metrics(cm), std::invalid_argument);
}

TEST_CASE("metric bounds and class permutation invariance") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t c = 2 + rng() % 5;
        std::vector<std::int64_t> counts(c * c);
        for (auto& v : counts) v = static_cast<std::int64_t>(rng() % 20);
        counts[0] += 1;
        const ConfusionMatrix cm(c, counts);
        const auto m = compute_metrics(cm);
        for (double v : {m.oa, m.macc, m.miou}) CHECK((v >= 0.0 && v <= 1.0));
        for (std::size_t k = 0; k < c; ++k) {
            if (std::isnan(m.class_iou[k])) continue;
            std::int64_t row = 0, col = 0;
            for (std::size_t j = 0; j < c; ++j) {
                row += cm.at(k, j);
                col += cm.at(j, k);
            }
            const double diag = static_cast<double>(cm.at(k, k));
            if (row) CHECK(m.class_iou[k] <= diag / static_cast<double>(row) + 1e-15);
            if (col) CHECK(m.class_iou[k] <= diag / static_cast<double>(col) + 1e-15);
        }

        std::vector<std::size_t> perm(c);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<std::int64_t> pc(c * c);
        for (std::size_t i = 0; i < c; ++i)
            for (std::size_t j = 0; j < c; ++j) pc[perm[i] * c + perm[j]] = cm.at(i, j);
        const auto pm = compute_metrics(ConfusionMatrix(c, pc));
        CHECK(pm.oa == m.oa);
        CHECK(pm.macc == doctest::Approx(m.macc).epsilon(1e-15));
        CHECK(pm.miou == doctest::Approx(m.miou).epsilon(1e-15));
    }
}

TEST_CASE("serialized forms") {
    const auto m = compute_metrics(ConfusionMatrix(2, {2, 0, 1, 1}));
    CHECK(metrics_csv_header(2) == "oa,macc,miou,iou_0,iou_1");
    CHECK(metrics_csv_row(m) == "0.75,0.75,0.58333333333333337,0.66666666666666663,0.5");
    CHECK(metrics_key_values(m) == "oa=0.75 macc=0.75 miou=0.58333333333333337 iou_0=0.66666666666666663 iou_1=0.5");
}
