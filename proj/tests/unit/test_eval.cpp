#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <omp.h>

#include <random>
#include <set>

#include "procplan/error.hpp"
#include "procplan/eval.hpp"

using namespace procplan;

namespace {

using Seqs = std::vector<ActionSequence>;

double iou_by_hand(const ActionSequence& p, const ActionSequence& g) {
    std::set<ActionId> a(p.begin(), p.end()), b(g.begin(), g.end()), u = a;
    u.insert(b.begin(), b.end());
    double inter = 0;
    for (ActionId x : a) inter += b.count(x);
    return inter / static_cast<double>(u.size());
}

std::vector<EvalSample> samples_from(const Seqs& gts) {
    std::vector<EvalSample> out;
    for (const auto& g : gts) out.push_back({PlanSequence{g, {}}, {{0.0}, {0.0}}});
    return out;
}

}  // namespace

TEST_CASE("metric fixtures") {
    const Seqs p1{{1, 2, 4}}, g1{{1, 2, 3}};
    CHECK(success_rate(p1, g1) == 0.0);
    CHECK(mean_accuracy(p1, g1) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(miou(p1, g1) == 0.5);

    const Seqs p2{{2, 1}}, g2{{1, 2}};
    CHECK(success_rate(p2, g2) == 0.0);
    CHECK(mean_accuracy(p2, g2) == 0.0);
    CHECK(miou(p2, g2) == 1.0);

    const Seqs same{{5, 6, 7}};
    CHECK(success_rate(same, same) == 1.0);
    CHECK(mean_accuracy(same, same) == 1.0);
    CHECK(miou(same, same) == 1.0);

    CHECK_THROWS_AS(success_rate(Seqs{{1, 2}}, Seqs{{1, 2, 3}}), Error);
    CHECK_THROWS_AS(mean_accuracy(Seqs{{1}}, Seqs{}), Error);
}

TEST_CASE("metric identities on random pairs") {
    std::mt19937_64 rng(123);
    std::uniform_int_distribution<ActionId> act(0, 6);
    std::uniform_int_distribution<std::size_t> len(2, 6);
    Seqs preds, gts;
    for (int i = 0; i < 20000; ++i) {
        const std::size_t T = len(rng);
        ActionSequence p(T), g(T);
        for (auto& x : p) x = act(rng);
        for (auto& x : g) x = act(rng);
        preds.push_back(p);
        gts.push_back(g);
        const Seqs one_p{p}, one_g{g};
        const double sr = success_rate(one_p, one_g), acc = mean_accuracy(one_p, one_g), iou = miou(one_p, one_g);
        CHECK((sr <= acc && acc >= 0.0 && acc <= 1.0));
        CHECK((sr < 1.0 || acc == 1.0));
        CHECK(iou == doctest::Approx(iou_by_hand(p, g)).epsilon(1e-15));
        if (acc == 1.0) CHECK(iou == 1.0);
    }
    CHECK(miou(preds, gts, MiouMode::per_batch, 1) == doctest::Approx(miou(preds, gts)).epsilon(1e-12));
}

TEST_CASE("per-batch mIoU unions sets within a batch") {
    const Seqs p{{1, 1}, {2, 2}, {3, 3}}, g{{1, 1}, {4, 4}, {3, 3}};
    // batch {0,1}: pred {1,2}, gt {1,4} -> 1/3; batch {2}: 1
    CHECK(miou(p, g, MiouMode::per_batch, 2) == doctest::Approx((1.0 / 3.0 + 1.0) / 2.0));
    CHECK(miou(p, g, MiouMode::per_sequence) == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(miou(p, g, MiouMode::per_batch, 0), Error);
}

TEST_CASE("evaluation runner") {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<ActionId> act(0, 9);
    Seqs gts;
    for (int i = 0; i < 300; ++i) gts.push_back({act(rng), act(rng), act(rng), act(rng)});
    const auto split = samples_from(gts);

    // Correct on even samples, seeded noise otherwise.
    const PlannerFn planner = [](const EvalSample& s, std::uint64_t seed) {
        Prediction p;
        p.steps = s.ground_truth.steps;
        std::mt19937_64 local(seed);
        if (local() % 2) p.steps[1] = (p.steps[1] + 1) % 10;
        p.predicted_start = s.ground_truth.front();
        p.predicted_end = s.ground_truth.back();
        p.fallback_used = p.steps != s.ground_truth.steps;
        return p;
    };

    omp_set_num_threads(4);
    EvalConfig cfg;
    const auto parallel = evaluate(planner, split, cfg, 77);
    const auto serial = evaluate_serial(planner, split, cfg, 77);
    CHECK(parallel.success_rate == serial.success_rate);
    CHECK(parallel.mean_accuracy == serial.mean_accuracy);
    CHECK(parallel.miou == serial.miou);
    CHECK(parallel.n_samples == 300);
    CHECK(parallel.fallbacks == static_cast<std::size_t>((1.0 - parallel.success_rate) * 300 + 0.5));
    CHECK(*parallel.start_accuracy == 1.0);
    CHECK(evaluate(planner, split, cfg, 77).success_rate == parallel.success_rate);
    CHECK(evaluate(planner, split, cfg, 78).success_rate != parallel.success_rate);

    SUBCASE("shuffled per-batch mIoU is seeded") {
        cfg.mode = MiouMode::per_batch;
        cfg.batch_size = 16;
        cfg.shuffle_batches = true;
        CHECK(evaluate(planner, split, cfg, 5).miou == evaluate_serial(planner, split, cfg, 5).miou);
    }
    SUBCASE("planner failures propagate") {
        const PlannerFn bad = [](const EvalSample&, std::uint64_t) -> Prediction {
            throw Error("no_walk", "boom");
        };
        CHECK_THROWS_AS(evaluate(bad, split, cfg, 1), Error);
    }
    SUBCASE("reports") {
        cfg.keep_records = true;
        const auto r = evaluate(planner, std::span<const EvalSample>(split).first(2), cfg, 1);
        CHECK(r.records.size() == 2);
        const auto json = report_to_json(r, nullptr);
        CHECK(json.find("\"success_rate\"") != std::string::npos);
        CHECK(json.find("\"records\"") != std::string::npos);
        const auto csv = report_to_csv(r);
        CHECK(csv.rfind("success_rate,mean_accuracy,miou,n_samples,fallbacks,start_accuracy,end_accuracy\n", 0) == 0);
    }
    CHECK_THROWS_AS(evaluate(planner, std::span<const EvalSample>(), cfg, 1), Error);
}
