// Acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero
// if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "procplan/corpus.hpp"
#include "procplan/diffusion.hpp"
#include "procplan/eval.hpp"
#include "procplan/graph.hpp"
#include "procplan/planner.hpp"
#include "procplan/retrieval.hpp"
#include "support/oracles.hpp"

using namespace procplan;

namespace {

using Clock = std::chrono::steady_clock;
using Ids = std::vector<ActionId>;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) detail = what;
        pass = pass && ok;
    }
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

// ---- graph suite shared by the retrieval and zero-shot checks ----------------

std::vector<FrequencyGraph> graph_suite() {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> nodes(1, 8);
    std::uniform_real_distribution<double> density(0.15, 0.6);
    std::vector<FrequencyGraph> out;
    while (out.size() < 200) {
        auto g = oracle::random_graph(rng, nodes(rng), density(rng));
        if (!g.counts().empty()) out.push_back(std::move(g));
    }
    return out;
}

/// Oracle walks from `s` of up to 6 nodes, grouped by end node, in final order.
std::map<ActionId, std::vector<oracle::Walk>> oracle_walks_from(const ProbabilisticGraph& g, ActionId s) {
    std::vector<oracle::Walk> all;
    for (ActionId e : g.nodes()) {
        auto w = oracle::all_walks_sorted(g, s, e, 6);
        all.insert(all.end(), w.begin(), w.end());
    }
    std::map<ActionId, std::vector<oracle::Walk>> by_end;
    for (auto& w : all) by_end[w.steps.back()].push_back(std::move(w));
    return by_end;
}

std::vector<oracle::Walk> within(const std::vector<oracle::Walk>& walks, std::size_t horizon) {
    std::vector<oracle::Walk> out;
    for (const auto& w : walks)
        if (w.steps.size() <= horizon) out.push_back(w);
    return out;
}

Ids fallback_oracle(ActionId s, ActionId e, std::size_t T) {
    Ids out(T - T / 2, s);
    out.insert(out.end(), T / 2, e);
    return out;
}

// ---- criteria -----------------------------------------------------------------

Outcome normalization() {
    Outcome o;
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<std::size_t> actions(2, 10), plans(1, 50);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const auto corpus = oracle::random_corpus(rng, actions(rng), plans(rng), 8);
        const auto g = normalize_probabilistic(build_frequency_graph(corpus));
        for (ActionId n : g.nodes()) {
            if (g.out_arcs(n).empty()) continue;
            double sum = 0.0;
            for (const Arc& a : g.out_arcs(n)) sum += a.weight;
            worst = std::max(worst, std::abs(sum - 1.0));
        }
    }
    const double dt = seconds_since(t0);
    o.require(worst <= 1e-9, fmt("max |row sum - 1| = %.3g", worst));
    o.require(dt < 5.0, fmt("took %.2f s", dt));
    o.detail = o.pass ? fmt("max |row sum - 1| = %.3g", worst) + fmt(", %.3f s", dt) : o.detail;
    return o;
}

Outcome retrieval_oracle(const std::vector<FrequencyGraph>& suite) {
    Outcome o;
    const auto t0 = Clock::now();
    std::size_t queries = 0;
    for (const auto& freq : suite) {
        const auto g = normalize_probabilistic(freq);
        for (ActionId s : g.nodes()) {
            const auto by_end = oracle_walks_from(g, s);
            for (ActionId e : g.nodes()) {
                const auto it = by_end.find(e);
                for (std::size_t T = 2; T <= 6; ++T) {
                    const auto expected_all = it == by_end.end() ? std::vector<oracle::Walk>{} : within(it->second, T);
                    for (std::size_t R = 1; R <= 5; ++R) {
                        ++queries;
                        const auto got = top_r_walks(g, s, e, T, R);
                        if (expected_all.empty()) {
                            o.require(got.empty(), "expected no walks");
                            continue;
                        }
                        const std::size_t avail = std::min(R, expected_all.size());
                        bool same = got.size() == R;
                        for (std::size_t i = 0; same && i < R; ++i) {
                            const auto& want = expected_all[i % avail];
                            same = got[i].steps == want.steps && got[i].probability == want.score;
                        }
                        o.require(same, "mismatch at query " + std::to_string(queries));
                    }
                }
            }
        }
    }
    const double dt = seconds_since(t0);
    o.require(dt < 60.0, fmt("took %.1f s", dt));
    if (o.pass) o.detail = std::to_string(queries) + " queries" + fmt(", %.1f s", dt);
    return o;
}

Outcome fallback_and_weights() {
    Outcome o;
    const ActionId s = 7, e = 3;
    const Ids first{s, s, s, e, e}, second{s, s, e, e, e};
    const std::vector<std::vector<Ids>> expected{{first}, {first, second}, {first, second, first}};
    for (std::size_t R = 1; R <= 3; ++R) {
        std::vector<Ids> got;
        for (const auto& p : fallback_paths(s, e, 5, R)) got.push_back(p.steps);
        o.require(got == expected[R - 1], "fallback R=" + std::to_string(R));
    }
    const std::vector<std::vector<double>> table{{1.0},
                                                 {2.0 / 3, 1.0 / 3},
                                                 {3.0 / 5, 1.0 / 5, 1.0 / 5},
                                                 {4.0 / 7, 1.0 / 7, 1.0 / 7, 1.0 / 7},
                                                 {5.0 / 9, 1.0 / 9, 1.0 / 9, 1.0 / 9, 1.0 / 9}};
    for (std::size_t R = 1; R <= 5; ++R) o.require(aggregation_weights(R) == table[R - 1], "weights R=" + std::to_string(R));
    if (o.pass) o.detail = "T=5, R=1..3 sequences and R=1..5 weights";
    return o;
}

Outcome metrics() {
    Outcome o;
    auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12; };
    const std::vector<ActionSequence> p1{{1, 2, 4}}, g1{{1, 2, 3}}, p2{{2, 1}}, g2{{1, 2}};
    o.require(close(success_rate(p1, g1), 0.0), "SR fixture 1");
    o.require(close(mean_accuracy(p1, g1), 2.0 / 3.0), "mAcc fixture 1");
    o.require(close(miou(p1, g1), 0.5), "mIoU fixture 1");
    o.require(close(mean_accuracy(p2, g2), 0.0), "mAcc fixture 2");
    o.require(close(miou(p2, g2), 1.0), "mIoU fixture 2");

    std::mt19937_64 rng(99);
    std::uniform_int_distribution<ActionId> act(0, 5);
    std::uniform_int_distribution<std::size_t> len(1, 6);
    std::size_t violations = 0;
    for (int i = 0; i < 100000; ++i) {
        const std::size_t T = len(rng);
        ActionSequence p(T), g(T);
        for (auto& x : p) x = act(rng);
        for (auto& x : g) x = act(rng);
        const std::vector<ActionSequence> ps{p}, gs{g};
        const double sr = success_rate(ps, gs), acc = mean_accuracy(ps, gs);
        if (sr > acc || ((sr == 1.0) != (acc == 1.0))) ++violations;
    }
    o.require(violations == 0, std::to_string(violations) + " SR/mAcc violations");
    if (o.pass) o.detail = "fixtures exact, 1e5 random pairs";
    return o;
}

class FixedDenoiser : public Denoiser {
public:
    explicit FixedDenoiser(Matrix x0) : x0_(std::move(x0)) {}
    Matrix predict(const Matrix&, std::size_t) const override { return x0_; }

private:
    Matrix x0_;
};

Outcome diffusion() {
    Outcome o;
    Rng rng(5);
    std::uniform_int_distribution<std::size_t> dim(1, 6), acts(2, 8), horizon(2, 6);

    // Projection idempotence on random layouts.
    for (int i = 0; i < 1000; ++i) {
        const std::size_t d = dim(rng), A = acts(rng), T = horizon(rng);
        Observation s(d), g(d);
        for (auto& v : s) v = std::normal_distribution<double>()(rng);
        for (auto& v : g) v = std::normal_distribution<double>()(rng);
        const auto templ = i % 2 ? build_step_template(s, g, T, A) : build_unconditioned_template(s, g, T, A);
        const Matrix x = gaussian_like(templ.rows(), templ.cols(), rng);
        const Matrix once = project_conditions(x, templ);
        o.require(project_conditions(once, templ) == once, "projection not idempotent");
    }

    // Forward-process moments, 1e4 samples, within 3 standard errors.
    const auto schedule = make_schedule(200);
    const std::size_t n = 80, samples = 10000;
    const Matrix x0(2, 3, 0.7);
    const double mu = std::sqrt(schedule.alpha_bar_at(n)) * 0.7, var = 1.0 - schedule.alpha_bar_at(n);
    std::vector<double> sum(6, 0.0), sum2(6, 0.0);
    for (std::size_t k = 0; k < samples; ++k) {
        const Matrix xn = forward_diffuse(x0, n, gaussian_like(2, 3, rng), schedule);
        for (std::size_t c = 0; c < 6; ++c) {
            sum[c] += xn.data()[c];
            sum2[c] += xn.data()[c] * xn.data()[c];
        }
    }
    for (std::size_t c = 0; c < 6; ++c) {
        const double m = sum[c] / samples, v = (sum2[c] - samples * m * m) / (samples - 1);
        o.require(std::abs(m - mu) <= 3.0 * std::sqrt(var / samples), "forward mean outside 3 sigma");
        o.require(std::abs(v - var) <= 3.0 * var * std::sqrt(2.0 / (samples - 1)), "forward variance outside 3 sigma");
    }

    // Oracle denoiser recovers the planted actions.
    for (int i = 0; i < 100; ++i) {
        const std::size_t d = dim(rng), A = acts(rng), T = horizon(rng);
        Observation s(d, 0.5), g(d, -0.5);
        Ids plan(T);
        for (auto& a : plan) a = std::uniform_int_distribution<ActionId>(0, static_cast<ActionId>(A - 1))(rng);
        RecommendationMatrix rec(T, A);
        for (std::size_t t = 0; t < T; ++t) rec(t, std::uniform_int_distribution<std::size_t>(0, A - 1)(rng)) = 1.0;
        const auto templ = i % 2 ? build_planning_template(s, g, rec) : build_unconditioned_template(s, g, T, A);
        const auto truth = with_actions(templ, PlanSequence{plan, {}});
        const FixedDenoiser exact(truth.values());
        const Matrix out = sample(exact, templ, make_schedule(1 + i % 50), rng);
        o.require(decode_actions(out, templ) == plan, "oracle sampling lost the plan");
    }

    // Reference denoiser gradients against central differences.
    const auto templ = build_planning_template({0.3, -0.2}, {0.1, 0.9}, RecommendationMatrix(3, 4, 0.25));
    MlpDenoiser den(templ.rows(), templ.cols(), {24, 16}, 6, 17);
    std::vector<ConditionMatrix> targets{with_actions(templ, PlanSequence{{0, 2, 3}, {}}),
                                         with_actions(templ, PlanSequence{{1, 1, 0}, {}})};
    std::vector<Matrix> noisy;
    for (const auto& t : targets) noisy.push_back(project_conditions(gaussian_like(t.rows(), t.cols(), rng), t));
    const std::vector<std::size_t> steps{4, 150};
    const auto weights = LossWeights::endpoints(3, kPlanningModelEndpointWeight);
    const auto [loss, grad] = loss_and_gradient(den, noisy, steps, targets, weights);
    auto params = den.network().parameters();
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i], h = 1e-5 * std::max(1.0, std::abs(keep));
        params[i] = keep + h;
        den.network().set_parameters(params);
        const double up = loss_and_gradient(den, noisy, steps, targets, weights).first;
        params[i] = keep - h;
        den.network().set_parameters(params);
        const double down = loss_and_gradient(den, noisy, steps, targets, weights).first;
        params[i] = keep;
        const double numeric = (up - down) / (2 * h);
        const double scale = std::max({std::abs(numeric), std::abs(grad[i]), 1e-6});
        worst = std::max(worst, std::abs(numeric - grad[i]) / scale);
    }
    den.network().set_parameters(params);
    o.require(worst <= 1e-4, fmt("gradient relative error %.3g", worst));
    if (o.pass) o.detail = fmt("max gradient relative error %.2g", worst);
    return o;
}

Outcome zero_shot_oracle(const std::vector<FrequencyGraph>& suite) {
    Outcome o;
    std::size_t queries = 0;
    for (const auto& freq : suite) {
        const auto g = normalize_probabilistic(freq);
        for (ActionId s : g.nodes()) {
            const auto by_end = oracle_walks_from(g, s);
            for (ActionId e : g.nodes())
                for (std::size_t T = 2; T <= 6; ++T) {
                    ++queries;
                    const auto it = by_end.find(e);
                    const auto walks = it == by_end.end() ? std::vector<oracle::Walk>{} : within(it->second, T);
                    const Ids expected = walks.empty() ? fallback_oracle(s, e, T)
                                                       : oracle::all_paddings(walks.front().steps, T).front();
                    o.require(zero_shot_plan(g, s, e, T).steps == expected, "zero-shot mismatch");
                }
        }
    }

    // Deterministic synthetic corpus with ground-truth endpoints.
    const auto data = generate_synthetic_corpus(disjoint_task_spec(5, 4, 200, 8, 0.0), 11);
    const auto g = normalize_probabilistic(build_frequency_graph(data.corpus));
    std::vector<ActionSequence> preds, gts;
    for (const auto& p : data.corpus.plans) {
        preds.push_back(zero_shot_plan(g, p.front(), p.back(), 4).steps);
        gts.push_back(p.steps);
    }
    const double sr = success_rate(preds, gts);
    o.require(sr == 1.0, fmt("synthetic SR %.3f", sr));
    if (o.pass) o.detail = std::to_string(queries) + " graph queries, synthetic SR " + fmt("%.2f", sr);
    return o;
}

// ---- end-to-end toy experiment ---------------------------------------------

struct ToyResult {
    double endpoint_accuracy = 0.0;
    double pipeline_sr = 0.0;
    double unconditioned_sr = 0.0;
    double gt_endpoint_sr = 0.0;
    double seconds = 0.0;
};

ToyResult toy_experiment() {
    const auto t0 = Clock::now();
    constexpr std::size_t T = 4, kTrain = 100, kTest = 50;
    const auto spec = disjoint_task_spec(5, 4, kTrain + kTest, 16, 0.0);
    const auto data = generate_synthetic_corpus(spec, 7);

    PlanCorpus train{data.corpus.vocabulary, {}};
    PlanCorpus test{data.corpus.vocabulary, {}};
    std::vector<ObservationPair> train_obs, test_obs;
    for (std::size_t i = 0; i < data.corpus.plans.size(); ++i) {
        (i < kTrain ? train : test).plans.push_back(data.corpus.plans[i]);
        (i < kTrain ? train_obs : test_obs).push_back(data.observations[i]);
    }
    const std::size_t A = train.num_actions(), d = spec.observation_dim;
    const auto graph = normalize_probabilistic(build_frequency_graph(train));

    auto make_spec = [&](ModelKind kind) {
        DiffusionModelSpec s;
        s.kind = kind;
        s.observation_dim = d;
        s.num_actions = A;
        s.horizon = T;
        s.diffusion_steps = 50;
        s.hidden = {128, 128};
        s.time_embedding_dim = 8;
        return s;
    };
    TrainConfig cfg;
    cfg.epochs = 400;
    cfg.batch_size = 25;
    cfg.learning_rate = 0.01;
    cfg.momentum = 0.9;
    cfg.seed = 3;

    const auto step = train_model(make_spec(ModelKind::step), make_step_dataset(train, train_obs, T), cfg);

    TrainingSetOptions opts;
    opts.retrieval.horizon = T;
    opts.seed = 4;
    const auto planning_set = make_planning_dataset(train, train_obs, graph, opts, &step);
    const auto planner = train_model(make_spec(ModelKind::planning), planning_set, cfg);
    const auto unconditioned =
        train_model(make_spec(ModelKind::unconditioned), make_unconditioned_dataset(train, train_obs, T), cfg);
    opts.endpoints = EndpointSource::ground_truth;
    const auto gt_planner =
        train_model(make_spec(ModelKind::planning), make_planning_dataset(train, train_obs, graph, opts, nullptr), cfg);

    std::vector<EvalSample> split;
    for (std::size_t i = 0; i < test.plans.size(); ++i) split.push_back({test.plans[i], test_obs[i]});
    EvalConfig ecfg;
    const std::uint64_t seed = 2025;

    ToyResult r;
    const auto pipeline = evaluate(
        [&](const EvalSample& s, std::uint64_t sd) {
            const auto out = plan(step, planner, graph, s.observations.start, s.observations.goal, opts.retrieval, sd);
            return Prediction{out.steps.steps, out.endpoints.start, out.endpoints.end, out.fallback_used};
        },
        split, ecfg, seed);
    r.pipeline_sr = pipeline.success_rate;
    r.endpoint_accuracy = 0.5 * (*pipeline.start_accuracy + *pipeline.end_accuracy);
    r.unconditioned_sr = evaluate(
                             [&](const EvalSample& s, std::uint64_t sd) {
                                 return Prediction{
                                     plan_unconditioned(unconditioned, s.observations.start, s.observations.goal, sd)
                                         .steps.steps,
                                     {}, {}, false};
                             },
                             split, ecfg, seed)
                             .success_rate;
    r.gt_endpoint_sr = evaluate(
                           [&](const EvalSample& s, std::uint64_t sd) {
                               const Endpoints e{s.ground_truth.front(), s.ground_truth.back()};
                               const auto out = plan_from_endpoints(gt_planner, graph, e, s.observations.start,
                                                                    s.observations.goal, opts.retrieval, sd);
                               return Prediction{out.steps.steps, {}, {}, out.fallback_used};
                           },
                           split, ecfg, seed)
                           .success_rate;
    r.seconds = seconds_since(t0);
    return r;
}

Outcome end_to_end(const ToyResult& r) {
    Outcome o;
    o.require(r.endpoint_accuracy >= 0.95, fmt("endpoint accuracy %.3f", r.endpoint_accuracy));
    o.require(r.pipeline_sr >= 0.90, fmt("pipeline SR %.3f", r.pipeline_sr));
    o.require(r.pipeline_sr >= r.unconditioned_sr, fmt("unconditioned SR %.3f above graph-conditioned", r.unconditioned_sr));
    o.require(r.gt_endpoint_sr >= r.pipeline_sr, fmt("GT-endpoint SR %.3f below predicted", r.gt_endpoint_sr));
    o.require(r.seconds < 600.0, fmt("took %.0f s", r.seconds));
    char buf[256];
    std::snprintf(buf, sizeof buf, "endpoint acc %.3f, SR %.3f, unconditioned SR %.3f, GT-endpoint SR %.3f, %.0f s",
                  r.endpoint_accuracy, r.pipeline_sr, r.unconditioned_sr, r.gt_endpoint_sr, r.seconds);
    if (o.pass)
        o.detail = buf;
    else
        o.detail += std::string(" (") + buf + ")";
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const bool toy_only = argc > 1 && std::string(argv[1]) == "--toy-only";
    std::vector<std::pair<std::string, std::function<Outcome()>>> checks;
    std::vector<FrequencyGraph> suite;
    if (!toy_only) {
        suite = graph_suite();
        checks = {{"normalization on random corpora", normalization},
                  {"retrieval equals exhaustive enumeration", [&] { return retrieval_oracle(suite); }},
                  {"fallback sequences and aggregation weights", fallback_and_weights},
                  {"metric fixtures and SR <= mAcc", metrics},
                  {"diffusion projection, moments, oracle sampling, gradients", diffusion},
                  {"zero-shot planner equals brute force", [&] { return zero_shot_oracle(suite); }}};
    }
    checks.push_back({"end-to-end toy experiment", [] { return end_to_end(toy_experiment()); }});

    int failures = 0;
    for (const auto& [name, fn] : checks) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
        failures += !o.pass;
    }
    return failures == 0 ? 0 : 1;
}
