// procplan: command-line front end for graph building, retrieval, diffusion
// training, planning and evaluation.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "procplan/corpus.hpp"
#include "procplan/error.hpp"
#include "procplan/eval.hpp"
#include "procplan/graph.hpp"
#include "procplan/io.hpp"
#include "procplan/planner.hpp"
#include "procplan/retrieval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace procplan;

namespace {

std::string out_dir = ".";

fs::path output_path(const std::string& explicit_path, const std::string& default_name) {
    fs::path p = explicit_path.empty() ? fs::path(out_dir) / default_name : fs::path(explicit_path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    return p;
}

/// Writes to `path` atomically, or to stdout when `path` is empty.
void emit(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    io::write_file_atomic(output_path(path, ""), text);
}

ActionId resolve_action(const ActionVocabulary& vocab, std::size_t num_actions, const std::string& text) {
    if (auto id = vocab.find(text)) return *id;
    if (!text.empty() && text.find_first_not_of("0123456789") == std::string::npos) {
        const auto id = std::stoull(text);
        if (id < num_actions) return static_cast<ActionId>(id);
    }
    throw Error("unknown_action", "unknown action: " + text);
}

json names_of(const std::vector<ActionId>& steps, const ActionVocabulary& vocab) {
    json out = json::array();
    for (ActionId a : steps) {
        if (a < vocab.size())
            out.push_back(vocab.name(a));
        else
            out.push_back(a);
    }
    return out;
}

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    return rows;
}

StoredGraph load_graph(const std::string& path) { return graph_from_json(io::read_text_file(path)); }

/// Corpus parsed against the graph's names so ids line up; plain parse when
/// the graph carries none.
PlanCorpus load_corpus_for(const std::string& path, const ActionVocabulary& vocab) {
    const auto text = io::read_text_file(path);
    return vocab.size() == 0 ? parse_corpus(text) : parse_corpus(text, vocab);
}

std::vector<ObservationPair> load_observations(const std::string& path) {
    return parse_observations(io::read_text_file(path));
}

DiffusionModel load_model(const std::string& path) { return model_from_json(io::read_text_file(path)); }

// ---- shared option groups ---------------------------------------------------

struct TrainFlags {
    std::size_t epochs = 300;
    std::size_t batch_size = 32;
    double learning_rate = 0.02;
    double momentum = 0.9;
    std::vector<std::size_t> hidden{256, 256};
    std::size_t time_dim = 16;
    std::size_t diffusion_steps = 200;
    std::size_t warmup = 0;
    double clip = 0.0;
    std::uint64_t seed = 0;
    std::string loss_trace;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
    cmd->add_option("--epochs", f.epochs, "Passes over the training set")->capture_default_str();
    cmd->add_option("--batch-size", f.batch_size, "Minibatch size")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--lr", f.learning_rate, "SGD learning rate")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--momentum", f.momentum, "SGD momentum")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--hidden", f.hidden, "Hidden layer widths")->delimiter(',')->capture_default_str();
    cmd->add_option("--time-dim", f.time_dim, "Step embedding width")->capture_default_str();
    cmd->add_option("--diffusion-steps", f.diffusion_steps, "Number of diffusion steps N")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--warmup", f.warmup, "Linear learning-rate warm-up steps")->capture_default_str();
    cmd->add_option("--clip", f.clip, "Gradient L2 clip (0 = off)")->capture_default_str();
    cmd->add_option("--seed", f.seed, "Random seed")->required();
    cmd->add_option("--loss-trace", f.loss_trace, "Write the per-step loss as CSV");
}

TrainConfig train_config(const TrainFlags& f) {
    TrainConfig c;
    c.epochs = f.epochs;
    c.batch_size = f.batch_size;
    c.learning_rate = f.learning_rate;
    c.momentum = f.momentum;
    c.seed = f.seed;
    c.warmup_steps = f.warmup;
    c.gradient_clip = f.clip;
    return c;
}

DiffusionModelSpec model_spec(ModelKind kind, std::size_t d, std::size_t actions, std::size_t horizon,
                              const TrainFlags& f) {
    DiffusionModelSpec s;
    s.kind = kind;
    s.observation_dim = d;
    s.num_actions = actions;
    s.horizon = horizon;
    s.diffusion_steps = f.diffusion_steps;
    s.hidden = f.hidden;
    s.time_embedding_dim = f.time_dim;
    return s;
}

void write_model(const std::string& out, const std::string& default_name, const DiffusionModel& model,
                 const TrainReport& report, const TrainFlags& f) {
    const auto path = output_path(out, default_name);
    io::write_file_atomic(path, model_to_json(model));
    if (!f.loss_trace.empty()) {
        std::ostringstream csv;
        csv.precision(17);
        csv << "step,loss\n";
        for (std::size_t i = 0; i < report.loss_trace.size(); ++i) csv << i << ',' << report.loss_trace[i] << '\n';
        io::write_file_atomic(output_path(f.loss_trace, ""), csv.str());
    }
    json summary{{"model", path.string()},
                 {"kind", to_string(model.spec().kind)},
                 {"steps", report.steps},
                 {"final_loss", report.loss_trace.empty() ? json(nullptr) : json(report.loss_trace.back())}};
    std::cout << summary.dump() << "\n";
}

std::size_t observation_dim(const std::vector<ObservationPair>& obs) {
    if (obs.empty()) throw Error("missing_observations", "observation file is empty");
    return obs.front().start.size();
}

// ---- planning pipeline ------------------------------------------------------

struct PipelineFlags {
    std::string graph;
    std::string step_model;
    std::string plan_model;
    std::size_t horizon = 0;
    std::size_t top_r = 0;
    bool zero_shot = false;
    bool gt_endpoints = false;
    bool unconditioned = false;
};

void add_pipeline_flags(CLI::App* cmd, PipelineFlags& f) {
    cmd->add_option("--graph", f.graph, "Graph JSON from build-graph");
    cmd->add_option("--step-model", f.step_model, "Trained step model");
    cmd->add_option("--plan-model", f.plan_model, "Trained planning (or unconditioned) model");
    cmd->add_option("--horizon", f.horizon, "Plan length T (default: from the models)");
    cmd->add_option("--top-r", f.top_r, "Recommendations R (default: from the planning model)");
    cmd->add_flag("--zero-shot", f.zero_shot, "Graph-only plan: the first padding of the most probable walk");
    cmd->add_flag("--gt-endpoints", f.gt_endpoints, "Use the given start/end actions instead of predicting them");
    cmd->add_flag("--unconditioned", f.unconditioned, "--plan-model is an unconditioned model (no graph)");
}

struct Pipeline {
    PipelineFlags flags;
    StoredGraph stored;
    ProbabilisticGraph graph;
    std::optional<DiffusionModel> step;
    std::optional<DiffusionModel> planner;
    RetrievalConfig retrieval;

    const ActionVocabulary& vocabulary() const { return stored.vocabulary; }
    std::size_t num_actions() const {
        if (planner) return planner->spec().num_actions;
        if (step) return step->spec().num_actions;
        return stored.counts.num_actions();
    }
};

Pipeline load_pipeline(const PipelineFlags& f) {
    Pipeline p;
    p.flags = f;
    if (f.zero_shot && f.unconditioned) throw Error("invalid_config", "--zero-shot and --unconditioned exclude each other");
    const bool needs_graph = !f.unconditioned;
    if (needs_graph && f.graph.empty()) throw Error("invalid_config", "--graph is required");
    if (!f.graph.empty()) {
        p.stored = load_graph(f.graph);
        p.graph = normalize_probabilistic(p.stored.counts);
    }
    if (!f.gt_endpoints && !f.unconditioned) {
        if (f.step_model.empty()) throw Error("missing_step_model", "--step-model is required unless --gt-endpoints");
        p.step = load_model(f.step_model);
    }
    if (!f.zero_shot) {
        if (f.plan_model.empty()) throw Error("invalid_config", "--plan-model is required unless --zero-shot");
        p.planner = load_model(f.plan_model);
        const auto want = f.unconditioned ? ModelKind::unconditioned : ModelKind::planning;
        if (p.planner->spec().kind != want)
            throw Error("wrong_model", "--plan-model holds a " + to_string(p.planner->spec().kind) + " model");
    }
    std::size_t horizon = f.horizon;
    if (horizon == 0) horizon = p.planner ? p.planner->spec().horizon : p.step ? p.step->spec().horizon : 0;
    if (horizon == 0) throw Error("invalid_config", "--horizon is required without a model");
    for (const auto* m : {p.step ? &*p.step : nullptr, p.planner ? &*p.planner : nullptr})
        if (m && m->spec().horizon != horizon)
            throw Error("dimension_mismatch", "model horizon " + std::to_string(m->spec().horizon) +
                                                  " differs from --horizon " + std::to_string(horizon));
    if (p.step && !f.graph.empty() && p.step->spec().num_actions != p.graph.num_actions())
        throw Error("dimension_mismatch", "step model and graph disagree on the number of actions");
    p.retrieval.horizon = horizon;
    p.retrieval.num_recommendations = f.top_r ? f.top_r : (p.planner ? p.planner->spec().num_recommendations : 1);
    p.retrieval.validate();
    return p;
}

struct PipelineOutput {
    PlanResult result;
    bool endpoints_predicted = false;
};

PipelineOutput run_pipeline(const Pipeline& p, const ObservationPair& obs, std::optional<Endpoints> given,
                            std::uint64_t seed) {
    PipelineOutput out;
    if (p.flags.unconditioned) {
        out.result = plan_unconditioned(*p.planner, obs.start, obs.goal, seed);
        return out;
    }
    Endpoints e;
    if (p.flags.gt_endpoints) {
        if (!given) throw Error("invalid_config", "--gt-endpoints needs start and end actions");
        e = *given;
    } else if (!p.flags.zero_shot) {
        out.result = plan(*p.step, *p.planner, p.graph, obs.start, obs.goal, p.retrieval, seed);
        out.endpoints_predicted = true;
        return out;
    } else {
        e = predict_endpoints(*p.step, obs.start, obs.goal, seed);
        out.endpoints_predicted = true;
    }
    if (p.flags.zero_shot) {
        RetrievalConfig one = p.retrieval;
        one.num_recommendations = 1;
        one.weights.reset();
        const auto rec = recommend(p.graph, e.start, e.end, one);
        out.result.steps = rec.selected.front();
        out.result.endpoints = e;
        out.result.recommendation = rec.matrix;
        out.result.fallback_used = rec.fallback_used;
        out.result.walks_found = rec.walks.size();
        return out;
    }
    out.result = plan_from_endpoints(*p.planner, p.graph, e, obs.start, obs.goal, p.retrieval, seed);
    return out;
}

// ---- subcommands ------------------------------------------------------------

struct BuildGraphArgs {
    std::string corpus, out;
};

void run_build_graph(const BuildGraphArgs& a) {
    const auto corpus = load_corpus(a.corpus);
    const auto g = build_frequency_graph(corpus);
    const auto path = output_path(a.out, "graph.json");
    io::write_file_atomic(path, graph_to_json(g, &corpus.vocabulary));
    std::cout << json{{"graph", path.string()}, {"nodes", g.nodes().size()}, {"edges", g.counts().size()}}.dump()
              << "\n";
}

struct QueryArgs {
    std::string graph, start, end, format = "json", scoring = "probability", out;
    std::size_t horizon = 4, top_r = 1;
};

void run_query(const QueryArgs& a) {
    const auto stored = load_graph(a.graph);
    const auto& vocab = stored.vocabulary;
    const std::size_t n = stored.counts.num_actions();
    const ActionId s = resolve_action(vocab, n, a.start), e = resolve_action(vocab, n, a.end);

    if (a.scoring == "minmax") {
        const auto walk = max_weight_walk(normalize_minmax(stored.counts), s, e, a.horizon);
        if (a.format == "csv") {
            std::ostringstream csv;
            csv.precision(17);
            csv << "rank,score,steps\n1," << walk.score << ',';
            const auto names = names_of(walk.steps, vocab);
            for (std::size_t i = 0; i < names.size(); ++i) csv << (i ? " " : "") << (names[i].is_string() ? names[i].get<std::string>() : names[i].dump());
            csv << '\n';
            emit(a.out, csv.str());
        } else {
            emit(a.out, json{{"scoring", "minmax"}, {"walk", names_of(walk.steps, vocab)}, {"score", walk.score}}.dump(2) + "\n");
        }
        return;
    }

    RetrievalConfig cfg;
    cfg.horizon = a.horizon;
    cfg.num_recommendations = a.top_r;
    const auto rec = recommend(normalize_probabilistic(stored.counts), s, e, cfg);
    const auto weights = aggregation_weights(a.top_r);

    if (a.format == "csv") {
        std::ostringstream csv;
        csv.precision(17);
        csv << "rank,probability,weight,steps,padded\n";
        for (std::size_t i = 0; i < rec.selected.size(); ++i) {
            auto join = [&](const std::vector<ActionId>& steps) {
                std::string s;
                for (ActionId x : steps) s += (s.empty() ? "" : " ") + (x < vocab.size() ? vocab.name(x) : std::to_string(x));
                return s;
            };
            csv << i + 1 << ',';
            if (!rec.fallback_used) csv << rec.walks[i].probability;
            csv << ',' << weights[i] << ',' << (rec.fallback_used ? "" : join(rec.walks[i].steps)) << ','
                << join(rec.selected[i].steps) << '\n';
        }
        emit(a.out, csv.str());
        return;
    }
    json walks = json::array();
    for (const auto& w : rec.walks) walks.push_back({{"steps", names_of(w.steps, vocab)}, {"probability", w.probability}});
    json selected = json::array();
    for (const auto& p : rec.selected) selected.push_back(names_of(p.steps, vocab));
    json out{{"start", a.start},        {"end", a.end},         {"horizon", a.horizon},
             {"top_r", a.top_r},        {"fallback_used", rec.fallback_used},
             {"walks", walks},          {"selected", selected}, {"weights", weights},
             {"matrix", matrix_json(rec.matrix)}};
    if (vocab.size() > 0) out["actions"] = vocab.names();
    emit(a.out, out.dump(2) + "\n");
}

struct GenArgs {
    std::uint64_t seed = 0;
    std::string spec;
    std::size_t tasks = 5, steps_per_task = 4, plans = 200, test_plans = 0, obs_dim = 16;
    double sigma = 0.0;
    std::string embedding = "gaussian";
    std::string corpus_out, observations_out, test_corpus_out, test_observations_out;
};

void run_gen_synthetic(const GenArgs& a) {
    SyntheticSpec spec = a.spec.empty() ? disjoint_task_spec(a.tasks, a.steps_per_task, a.plans, a.obs_dim, a.sigma)
                                        : parse_synthetic_spec(io::read_text_file(a.spec));
    if (a.spec.empty() && a.embedding == "identity") spec.embedding = EmbeddingKind::identity;
    const std::size_t train = spec.num_plans;
    spec.num_plans += a.test_plans;
    const auto data = generate_synthetic_corpus(spec, a.seed);

    auto slice = [&](std::size_t first, std::size_t last, PlanCorpus& c, std::vector<ObservationPair>& o) {
        c.vocabulary = data.corpus.vocabulary;
        c.plans.assign(data.corpus.plans.begin() + first, data.corpus.plans.begin() + last);
        o.assign(data.observations.begin() + first, data.observations.begin() + last);
    };
    PlanCorpus corpus;
    std::vector<ObservationPair> obs;
    slice(0, train, corpus, obs);
    const auto corpus_path = output_path(a.corpus_out, "corpus.jsonl");
    const auto obs_path = output_path(a.observations_out, "observations.jsonl");
    io::write_file_atomic(corpus_path, serialize_corpus(corpus));
    io::write_file_atomic(obs_path, serialize_observations(obs));
    json summary{{"corpus", corpus_path.string()}, {"observations", obs_path.string()}, {"plans", train}};
    if (a.test_plans > 0) {
        PlanCorpus test;
        std::vector<ObservationPair> test_obs;
        slice(train, spec.num_plans, test, test_obs);
        const auto tc = output_path(a.test_corpus_out, "test_corpus.jsonl");
        const auto to = output_path(a.test_observations_out, "test_observations.jsonl");
        io::write_file_atomic(tc, serialize_corpus(test));
        io::write_file_atomic(to, serialize_observations(test_obs));
        summary["test_corpus"] = tc.string();
        summary["test_observations"] = to.string();
    }
    std::cout << summary.dump() << "\n";
}

struct TrainStepArgs {
    std::string corpus, observations, out;
    std::size_t horizon = 4;
    TrainFlags train;
};

void run_train_step(const TrainStepArgs& a) {
    const auto corpus = load_corpus(a.corpus);
    const auto obs = load_observations(a.observations);
    const auto data = make_step_dataset(corpus, obs, a.horizon);
    TrainReport report;
    const auto spec = model_spec(ModelKind::step, observation_dim(obs), corpus.num_actions(), a.horizon, a.train);
    const auto model = train_model(spec, data, train_config(a.train), &report);
    write_model(a.out, "step_model.json", model, report, a.train);
}

struct TrainPlanArgs {
    std::string corpus, observations, graph, step_model, out;
    std::size_t horizon = 4, top_r = 1;
    bool gt_endpoints = false, gt_augment = false, unconditioned = false;
    TrainFlags train;
};

void run_train_plan(const TrainPlanArgs& a) {
    StoredGraph stored;
    if (!a.graph.empty()) stored = load_graph(a.graph);
    const auto corpus = load_corpus_for(a.corpus, stored.vocabulary);
    if (a.graph.empty()) stored.counts = build_frequency_graph(corpus);
    const auto obs = load_observations(a.observations);
    const std::size_t d = observation_dim(obs);
    TrainReport report;

    if (a.unconditioned) {
        const auto data = make_unconditioned_dataset(corpus, obs, a.horizon);
        const auto spec = model_spec(ModelKind::unconditioned, d, corpus.num_actions(), a.horizon, a.train);
        write_model(a.out, "plan_model.json", train_model(spec, data, train_config(a.train), &report), report, a.train);
        return;
    }
    const auto graph = normalize_probabilistic(stored.counts);
    TrainingSetOptions opts;
    opts.retrieval.horizon = a.horizon;
    opts.retrieval.num_recommendations = a.top_r;
    opts.endpoints = a.gt_endpoints ? EndpointSource::ground_truth : EndpointSource::predicted;
    opts.gt_augment = a.gt_augment;
    opts.seed = a.train.seed;
    std::optional<DiffusionModel> step;
    if (!a.step_model.empty()) step = load_model(a.step_model);
    const auto data = make_planning_dataset(corpus, obs, graph, opts, step ? &*step : nullptr);
    auto spec = model_spec(ModelKind::planning, d, corpus.num_actions(), a.horizon, a.train);
    spec.num_recommendations = a.top_r;
    write_model(a.out, "plan_model.json", train_model(spec, data, train_config(a.train), &report), report, a.train);
}

struct PlanArgs {
    PipelineFlags pipeline;
    std::uint64_t seed = 0;
    std::string start, end, observations, out;
    std::size_t index = 0;
    std::vector<double> start_obs, goal_obs;
};

void run_plan(const PlanArgs& a) {
    const auto p = load_pipeline(a.pipeline);
    ObservationPair obs;
    if (!a.observations.empty()) {
        const auto all = load_observations(a.observations);
        if (a.index >= all.size()) throw Error("invalid_config", "--index beyond the observation file");
        obs = all[a.index];
    } else {
        obs = {a.start_obs, a.goal_obs};
    }
    const bool needs_obs = !a.pipeline.zero_shot || !a.pipeline.gt_endpoints;
    if (needs_obs && obs.start.empty())
        throw Error("missing_observations", "give --observations/--index or --start-obs/--goal-obs");

    std::optional<Endpoints> given;
    if (!a.start.empty() || !a.end.empty()) {
        if (a.start.empty() || a.end.empty()) throw Error("invalid_config", "--start and --end go together");
        given = Endpoints{resolve_action(p.vocabulary(), p.num_actions(), a.start),
                          resolve_action(p.vocabulary(), p.num_actions(), a.end)};
    }
    const auto out = run_pipeline(p, obs, given, a.seed);
    const auto& vocab = p.vocabulary();
    json j{{"steps", names_of(out.result.steps.steps, vocab)},
           {"fallback_used", out.result.fallback_used},
           {"walks_found", out.result.walks_found},
           {"endpoints_predicted", out.endpoints_predicted},
           {"mode", a.pipeline.unconditioned ? "unconditioned" : a.pipeline.zero_shot ? "zero-shot" : "graph"}};
    if (!a.pipeline.unconditioned) {
        j["endpoints"] = names_of({out.result.endpoints.start, out.result.endpoints.end}, vocab);
        j["recommendation"] = matrix_json(out.result.recommendation);
    }
    emit(a.out, j.dump(2) + "\n");
}

struct EvalArgs {
    PipelineFlags pipeline;
    std::string pred, gt, corpus, observations, mode = "per-sequence", format = "json", out;
    std::size_t batch_size = 256;
    bool shuffle = false, records = false;
    std::uint64_t seed = 0;
};

void run_eval(const EvalArgs& a) {
    EvalConfig cfg;
    cfg.mode = a.mode == "per-batch" ? MiouMode::per_batch : MiouMode::per_sequence;
    cfg.batch_size = a.batch_size;
    cfg.shuffle_batches = a.shuffle;
    cfg.keep_records = a.records;

    MetricsReport report;
    ActionVocabulary vocab;
    if (!a.pred.empty() || !a.gt.empty()) {
        if (a.pred.empty() || a.gt.empty()) throw Error("invalid_config", "--pred and --gt go together");
        const auto gt_text = io::read_text_file(a.gt), pred_text = io::read_text_file(a.pred);
        vocab = parse_corpus(gt_text + "\n" + pred_text).vocabulary;
        const auto gts = parse_corpus(gt_text, vocab), preds = parse_corpus(pred_text, vocab);
        if (gts.plans.size() != preds.plans.size())
            throw Error("length_mismatch", "prediction and ground-truth files differ in length");
        std::vector<EvalSample> split;
        std::vector<Prediction> predictions;
        for (std::size_t i = 0; i < gts.plans.size(); ++i) {
            split.push_back({gts.plans[i], {}});
            predictions.push_back({preds.plans[i].steps, {}, {}, false});
        }
        report = score(predictions, split, cfg, a.seed);
    } else {
        if (a.corpus.empty() || a.observations.empty())
            throw Error("invalid_config", "give --pred/--gt, or --corpus and --observations with models");
        const auto p = load_pipeline(a.pipeline);
        vocab = p.vocabulary();
        const auto corpus = load_corpus_for(a.corpus, vocab);
        const auto obs = load_observations(a.observations);
        if (obs.size() != corpus.plans.size())
            throw Error("missing_observations", "observation file does not align with the corpus");
        std::vector<EvalSample> split;
        for (std::size_t i : horizon_plans(corpus, p.retrieval.horizon)) split.push_back({corpus.plans[i], obs[i]});
        const PlannerFn fn = [&p](const EvalSample& s, std::uint64_t seed) {
            const auto out = run_pipeline(p, s.observations, Endpoints{s.ground_truth.front(), s.ground_truth.back()}, seed);
            Prediction pred;
            pred.steps = out.result.steps.steps;
            pred.fallback_used = out.result.fallback_used;
            if (out.endpoints_predicted) {
                pred.predicted_start = out.result.endpoints.start;
                pred.predicted_end = out.result.endpoints.end;
            }
            return pred;
        };
        report = evaluate(fn, split, cfg, a.seed);
    }
    emit(a.out, a.format == "csv" ? report_to_csv(report) : report_to_json(report, &vocab));
}

struct HeatmapArgs {
    std::string corpus, out, format = "csv";
};

void run_heatmap(const HeatmapArgs& a) {
    const auto corpus = load_corpus(a.corpus);
    const auto h = transition_heatmap(corpus);
    const auto path = output_path(a.out, a.format == "json" ? "heatmap.json" : "heatmap.csv");
    if (a.format == "json")
        io::write_file_atomic(path, json{{"actions", corpus.vocabulary.names()}, {"matrix", matrix_json(h)}}.dump(2) + "\n");
    else
        io::write_file_atomic(path, heatmap_csv(h, corpus.vocabulary));
    std::cout << json{{"heatmap", path.string()}, {"actions", corpus.num_actions()}}.dump() << "\n";
}

struct DotArgs {
    std::string graph, center, label = "probability", format = "dot", out;
    std::size_t depth = 2;
};

void run_export_dot(const DotArgs& a) {
    const auto stored = load_graph(a.graph);
    DotOptions o;
    o.vocabulary = stored.vocabulary.size() ? &stored.vocabulary : nullptr;
    o.label = a.label == "count" ? DotLabel::count : a.label == "minmax" ? DotLabel::minmax : DotLabel::probability;
    if (!a.center.empty()) o.center = resolve_action(stored.vocabulary, stored.counts.num_actions(), a.center);
    o.depth = a.depth;
    emit(a.out, export_dot(stored.counts, o));
}

void print_error(const std::string& code, const std::string& message) {
    std::cerr << json{{"error", code}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Knowledge-enhanced procedure planning: graph retrieval and projected diffusion"};
    app.require_subcommand(1);
    app.fallthrough();  // root options such as --out-dir may follow the subcommand
    app.set_config("--config", "", "TOML/INI file of option defaults; command-line flags win");
    if (const char* env = std::getenv("PROCPLAN_OUT_DIR")) out_dir = env;
    app.add_option("--out-dir", out_dir, "Default directory for written artifacts (env PROCPLAN_OUT_DIR)");

    BuildGraphArgs bg;
    auto* build = app.add_subcommand("build-graph", "Count step transitions of a corpus into a graph file");
    build->add_option("--corpus", bg.corpus, "Plan corpus (JSONL)")->required()->check(CLI::ExistingFile);
    build->add_option("--out", bg.out, "Output graph JSON (default <out-dir>/graph.json)");
    build->callback([&] { run_build_graph(bg); });

    QueryArgs q;
    auto* query = app.add_subcommand("query", "Top-R walks between two actions and their aggregate");
    query->add_option("--graph", q.graph, "Graph JSON")->required()->check(CLI::ExistingFile);
    query->add_option("--start", q.start, "Start action name (or id)")->required();
    query->add_option("--end", q.end, "End action name (or id)")->required();
    query->add_option("--horizon", q.horizon, "Plan length T")->capture_default_str();
    query->add_option("--top-r", q.top_r, "Number of recommendations R")->capture_default_str();
    query->add_option("--format", q.format, "Output format")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
    query->add_option("--scoring", q.scoring, "probability (product) or minmax (sum)")
        ->check(CLI::IsMember({"probability", "minmax"}))
        ->capture_default_str();
    query->add_option("--out", q.out, "Write here instead of stdout");
    query->callback([&] { run_query(q); });

    GenArgs gen;
    auto* gs = app.add_subcommand("gen-synthetic", "Generate a synthetic corpus with observations");
    gs->add_option("--seed", gen.seed, "Random seed")->required();
    gs->add_option("--spec", gen.spec, "Synthetic spec JSON (overrides the task flags)")->check(CLI::ExistingFile);
    gs->add_option("--tasks", gen.tasks, "Disjoint task templates")->capture_default_str();
    gs->add_option("--steps-per-task", gen.steps_per_task, "Steps per template")->capture_default_str();
    gs->add_option("--plans", gen.plans, "Training plans")->capture_default_str();
    gs->add_option("--test-plans", gen.test_plans, "Extra held-out plans from the same generator")->capture_default_str();
    gs->add_option("--obs-dim", gen.obs_dim, "Observation dimension")->capture_default_str();
    gs->add_option("--sigma", gen.sigma, "Observation noise")->capture_default_str();
    gs->add_option("--embedding", gen.embedding, "Action embedding")
        ->check(CLI::IsMember({"gaussian", "identity"}))
        ->capture_default_str();
    gs->add_option("--corpus-out", gen.corpus_out, "Default <out-dir>/corpus.jsonl");
    gs->add_option("--observations-out", gen.observations_out, "Default <out-dir>/observations.jsonl");
    gs->add_option("--test-corpus-out", gen.test_corpus_out, "Default <out-dir>/test_corpus.jsonl");
    gs->add_option("--test-observations-out", gen.test_observations_out, "Default <out-dir>/test_observations.jsonl");
    gs->callback([&] { run_gen_synthetic(gen); });

    TrainStepArgs ts;
    auto* tstep = app.add_subcommand("train-step", "Train the endpoint (step) diffusion model");
    tstep->add_option("--corpus", ts.corpus, "Training corpus")->required()->check(CLI::ExistingFile);
    tstep->add_option("--observations", ts.observations, "Aligned observations")->required()->check(CLI::ExistingFile);
    tstep->add_option("--horizon", ts.horizon, "Plan length T")->capture_default_str();
    tstep->add_option("--out", ts.out, "Default <out-dir>/step_model.json");
    add_train_flags(tstep, ts.train);
    tstep->callback([&] { run_train_step(ts); });

    TrainPlanArgs tp;
    auto* tplan = app.add_subcommand("train-plan", "Train the graph-conditioned planning model");
    tplan->add_option("--corpus", tp.corpus, "Training corpus")->required()->check(CLI::ExistingFile);
    tplan->add_option("--observations", tp.observations, "Aligned observations")->required()->check(CLI::ExistingFile);
    tplan->add_option("--graph", tp.graph, "Graph JSON (default: built from the corpus)")->check(CLI::ExistingFile);
    tplan->add_option("--step-model", tp.step_model, "Step model for predicted endpoints")->check(CLI::ExistingFile);
    tplan->add_option("--horizon", tp.horizon, "Plan length T")->capture_default_str();
    tplan->add_option("--top-r", tp.top_r, "Recommendations R")->capture_default_str();
    tplan->add_flag("--gt-endpoints", tp.gt_endpoints, "Retrieve with ground-truth endpoints");
    tplan->add_flag("--gt-augment", tp.gt_augment, "Expand each sample over predicted/true endpoint pairs");
    tplan->add_flag("--unconditioned", tp.unconditioned, "Train without graph conditions");
    tplan->add_option("--out", tp.out, "Default <out-dir>/plan_model.json");
    add_train_flags(tplan, tp.train);
    tplan->callback([&] { run_train_plan(tp); });

    PlanArgs pa;
    auto* planc = app.add_subcommand("plan", "Plan one start/goal pair");
    add_pipeline_flags(planc, pa.pipeline);
    planc->add_option("--seed", pa.seed, "Sampling seed")->required();
    planc->add_option("--start", pa.start, "Start action (with --gt-endpoints)");
    planc->add_option("--end", pa.end, "End action (with --gt-endpoints)");
    planc->add_option("--observations", pa.observations, "Observation file")->check(CLI::ExistingFile);
    planc->add_option("--index", pa.index, "Row of the observation file")->capture_default_str();
    planc->add_option("--start-obs", pa.start_obs, "Start observation, comma separated")->delimiter(',');
    planc->add_option("--goal-obs", pa.goal_obs, "Goal observation, comma separated")->delimiter(',');
    planc->add_option("--out", pa.out, "Write here instead of stdout");
    planc->callback([&] { run_plan(pa); });

    EvalArgs ev;
    auto* evalc = app.add_subcommand("eval", "Score predictions or run the planner over a test split");
    add_pipeline_flags(evalc, ev.pipeline);
    evalc->add_option("--pred", ev.pred, "Predicted plans (JSONL corpus format)")->check(CLI::ExistingFile);
    evalc->add_option("--gt", ev.gt, "Ground-truth plans (JSONL corpus format)")->check(CLI::ExistingFile);
    evalc->add_option("--corpus", ev.corpus, "Test corpus")->check(CLI::ExistingFile);
    evalc->add_option("--observations", ev.observations, "Test observations")->check(CLI::ExistingFile);
    evalc->add_option("--mode", ev.mode, "mIoU mode")
        ->check(CLI::IsMember({"per-sequence", "per-batch"}))
        ->capture_default_str();
    evalc->add_option("--batch-size", ev.batch_size, "Batch size for per-batch mIoU")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    evalc->add_flag("--shuffle", ev.shuffle, "Shuffle samples before forming mIoU batches");
    evalc->add_flag("--records", ev.records, "Include per-sample records in the JSON report");
    evalc->add_option("--seed", ev.seed, "Seed for sampling and batch shuffling")->capture_default_str();
    evalc->add_option("--format", ev.format, "Output format")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
    evalc->add_option("--out", ev.out, "Write here instead of stdout");
    evalc->callback([&] { run_eval(ev); });

    HeatmapArgs hm;
    auto* heat = app.add_subcommand("heatmap", "Transition-probability matrix of a corpus");
    heat->add_option("--corpus", hm.corpus, "Plan corpus")->required()->check(CLI::ExistingFile);
    heat->add_option("--format", hm.format, "Output format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
    heat->add_option("--out", hm.out, "Default <out-dir>/heatmap.csv");
    heat->callback([&] { run_heatmap(hm); });

    DotArgs dot;
    auto* dotc = app.add_subcommand("export-dot", "Graphviz rendering of a graph or a neighbourhood");
    dotc->add_option("--graph", dot.graph, "Graph JSON")->required()->check(CLI::ExistingFile);
    dotc->add_option("--center", dot.center, "Restrict to the neighbourhood of this action");
    dotc->add_option("--depth", dot.depth, "Neighbourhood radius in hops")->capture_default_str();
    dotc->add_option("--label", dot.label, "Edge label")
        ->check(CLI::IsMember({"probability", "count", "minmax"}))
        ->capture_default_str();
    dotc->add_option("--format", dot.format, "Output format")->check(CLI::IsMember({"dot"}))->capture_default_str();
    dotc->add_option("--out", dot.out, "Write here instead of stdout");
    dotc->callback([&] { run_export_dot(dot); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("usage", e.what());
        return e.get_exit_code() ? e.get_exit_code() : 2;
    } catch (const Error& e) {
        print_error(e.code(), e.what());
        return 1;
    } catch (const std::exception& e) {
        print_error("internal", e.what());
        return 1;
    }
    return 0;
}
