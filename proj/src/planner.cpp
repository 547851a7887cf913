#include "procplan/planner.hpp"

#include <algorithm>

#include <json.hpp>

#include "procplan/error.hpp"

namespace procplan {

using nlohmann::json;

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finaliser over (seed, stream)
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

void check_observations(const Observation& start, const Observation& goal) {
    if (start.size() != goal.size() || start.empty())
        throw Error("dimension_mismatch", "start and goal observations must have the same nonzero dimension");
}

std::vector<RowKind> row_layout(std::size_t obs_dim, std::size_t num_actions, bool with_recommendation) {
    std::vector<RowKind> kinds(obs_dim, RowKind::observation);
    if (with_recommendation) kinds.insert(kinds.end(), num_actions, RowKind::recommendation);
    kinds.insert(kinds.end(), num_actions, RowKind::action);
    return kinds;
}

/// Observation rows: v_s in column 0, v_g in column T-1, zero padding between.
void write_observations(ConditionMatrix& grid, const Observation& start, const Observation& goal) {
    const std::size_t last = grid.cols() - 1;
    for (std::size_t r = 0; r < start.size(); ++r) {
        grid.values()(r, 0) = start[r];
        grid.values()(r, last) = goal[r];
        for (std::size_t c = 1; c < last; ++c) grid.set_role(r, c, CellRole::zero_pad);
    }
}

std::size_t first_action_row(const ConditionMatrix& layout) {
    const auto& kinds = layout.row_kinds();
    auto it = std::find(kinds.begin(), kinds.end(), RowKind::action);
    if (it == kinds.end()) throw Error("layout_mismatch", "grid has no action rows");
    return static_cast<std::size_t>(it - kinds.begin());
}

}  // namespace

// ---- layouts ----------------------------------------------------------------

ConditionMatrix build_step_template(const Observation& start, const Observation& goal, std::size_t horizon,
                                    std::size_t num_actions) {
    check_observations(start, goal);
    if (horizon < 2) throw Error("invalid_config", "horizon must be >= 2");
    ConditionMatrix grid(row_layout(start.size(), num_actions, false), horizon);
    write_observations(grid, start, goal);
    for (std::size_t r = start.size(); r < grid.rows(); ++r)
        for (std::size_t c = 1; c + 1 < horizon; ++c) grid.set_role(r, c, CellRole::zero_pad);
    return grid;
}

ConditionMatrix build_planning_template(const Observation& start, const Observation& goal,
                                        const RecommendationMatrix& recommendation) {
    check_observations(start, goal);
    const std::size_t horizon = recommendation.rows();
    const std::size_t num_actions = recommendation.cols();
    if (horizon < 2) throw Error("invalid_config", "horizon must be >= 2");
    ConditionMatrix grid(row_layout(start.size(), num_actions, true), horizon);
    write_observations(grid, start, goal);
    for (std::size_t a = 0; a < num_actions; ++a)
        for (std::size_t t = 0; t < horizon; ++t) grid.values()(start.size() + a, t) = recommendation(t, a);
    return grid;
}

ConditionMatrix build_unconditioned_template(const Observation& start, const Observation& goal,
                                             std::size_t horizon, std::size_t num_actions) {
    check_observations(start, goal);
    if (horizon < 2) throw Error("invalid_config", "horizon must be >= 2");
    ConditionMatrix grid(row_layout(start.size(), num_actions, false), horizon);
    write_observations(grid, start, goal);
    return grid;
}

ConditionMatrix with_actions(const ConditionMatrix& templ, const PlanSequence& plan) {
    if (plan.size() != templ.cols()) throw Error("length_mismatch", "plan length differs from the grid horizon");
    ConditionMatrix out = templ;
    const std::size_t first = first_action_row(templ);
    const std::size_t num_actions = templ.rows() - first;
    for (std::size_t t = 0; t < plan.size(); ++t) {
        if (plan.steps[t] >= num_actions) throw Error("unknown_action", "plan step outside the action space");
        for (std::size_t a = 0; a < num_actions; ++a)
            if (!out.is_condition(first + a, t)) out.values()(first + a, t) = plan.steps[t] == a ? 1.0 : 0.0;
    }
    return out;
}

std::vector<ActionId> decode_actions(const Matrix& grid, const ConditionMatrix& layout) {
    if (!grid.same_shape(layout.values())) throw Error("layout_mismatch", "grid does not match the layout");
    const std::size_t first = first_action_row(layout);
    std::vector<ActionId> out(grid.cols());
    for (std::size_t t = 0; t < grid.cols(); ++t) {
        std::size_t best = first;
        for (std::size_t r = first + 1; r < grid.rows(); ++r)
            if (grid(r, t) > grid(best, t)) best = r;
        out[t] = static_cast<ActionId>(best - first);
    }
    return out;
}

// ---- models -----------------------------------------------------------------

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::step: return "step";
        case ModelKind::planning: return "planning";
        case ModelKind::unconditioned: return "unconditioned";
    }
    return "unknown";
}

ModelKind model_kind_from_string(const std::string& text) {
    if (text == "step") return ModelKind::step;
    if (text == "planning") return ModelKind::planning;
    if (text == "unconditioned") return ModelKind::unconditioned;
    throw Error("malformed_model", "unknown model kind: " + text);
}

std::size_t DiffusionModelSpec::grid_rows() const {
    return observation_dim + num_actions * (kind == ModelKind::planning ? 2 : 1);
}

DiffusionModel::DiffusionModel(DiffusionModelSpec spec, std::uint64_t init_seed)
    : spec_(std::move(spec)), schedule_(make_schedule(spec_.diffusion_steps, spec_.beta_start, spec_.beta_end)) {
    if (spec_.observation_dim == 0 || spec_.num_actions == 0 || spec_.horizon < 2)
        throw Error("invalid_config", "model needs observation_dim > 0, num_actions > 0 and horizon >= 2");
    denoiser_ = MlpDenoiser(spec_.grid_rows(), spec_.horizon, spec_.hidden, spec_.time_embedding_dim, init_seed);
}

DiffusionModel::DiffusionModel(DiffusionModelSpec spec, MlpDenoiser denoiser)
    : spec_(std::move(spec)),
      schedule_(make_schedule(spec_.diffusion_steps, spec_.beta_start, spec_.beta_end)),
      denoiser_(std::move(denoiser)) {
    if (denoiser_.grid_rows() != spec_.grid_rows() || denoiser_.grid_cols() != spec_.horizon)
        throw Error("dimension_mismatch", "denoiser shape does not match the model header");
}

LossWeights DiffusionModel::loss_weights() const {
    return LossWeights::endpoints(spec_.horizon, spec_.kind == ModelKind::step ? kStepModelEndpointWeight
                                                                               : kPlanningModelEndpointWeight);
}

std::string model_to_json(const DiffusionModel& model) {
    const auto& s = model.spec();
    json j;
    j["format"] = "procplan-diffusion-model";
    j["version"] = 1;
    j["kind"] = to_string(s.kind);
    j["observation_dim"] = s.observation_dim;
    j["num_actions"] = s.num_actions;
    j["horizon"] = s.horizon;
    j["diffusion_steps"] = s.diffusion_steps;
    j["beta_start"] = s.beta_start;
    j["beta_end"] = s.beta_end;
    j["hidden"] = s.hidden;
    j["time_embedding_dim"] = s.time_embedding_dim;
    j["num_recommendations"] = s.num_recommendations;
    j["layer_sizes"] = model.denoiser().network().sizes();
    j["parameters"] = model.denoiser().network().parameters();
    return j.dump() + "\n";
}

DiffusionModel model_from_json(std::string_view text) {
    try {
        auto j = json::parse(text);
        if (j.value("format", std::string()) != "procplan-diffusion-model")
            throw Error("malformed_model", "not a procplan model checkpoint");
        if (!j.contains("parameters")) throw Error("untrained_model", "checkpoint has no parameter blob");
        DiffusionModelSpec s;
        s.kind = model_kind_from_string(j.at("kind").get<std::string>());
        s.observation_dim = j.at("observation_dim").get<std::size_t>();
        s.num_actions = j.at("num_actions").get<std::size_t>();
        s.horizon = j.at("horizon").get<std::size_t>();
        s.diffusion_steps = j.at("diffusion_steps").get<std::size_t>();
        s.beta_start = j.at("beta_start").get<double>();
        s.beta_end = j.at("beta_end").get<double>();
        s.hidden = j.at("hidden").get<std::vector<std::size_t>>();
        s.time_embedding_dim = j.at("time_embedding_dim").get<std::size_t>();
        s.num_recommendations = j.value("num_recommendations", std::size_t{1});
        DiffusionModel model(s, std::uint64_t{0});
        if (j.at("layer_sizes").get<std::vector<std::size_t>>() != model.denoiser().network().sizes())
            throw Error("dimension_mismatch", "layer sizes disagree with the model header");
        const auto params = j.at("parameters").get<std::vector<double>>();
        if (params.size() != model.denoiser().network().parameter_count())
            throw Error("dimension_mismatch", "parameter blob has the wrong length");
        model.denoiser().network().set_parameters(params);
        return model;
    } catch (const json::exception& e) {
        throw Error("malformed_model", std::string("malformed model checkpoint: ") + e.what());
    }
}

// ---- inference --------------------------------------------------------------

namespace {

void require_kind(const DiffusionModel& model, ModelKind kind) {
    if (model.spec().kind != kind)
        throw Error("wrong_model", "expected a " + to_string(kind) + " model, got " + to_string(model.spec().kind));
}

void require_dims(const DiffusionModel& model, const Observation& start, const Observation& goal) {
    check_observations(start, goal);
    if (start.size() != model.spec().observation_dim)
        throw Error("dimension_mismatch", "observation dimension " + std::to_string(start.size()) +
                                              " does not match the model (" +
                                              std::to_string(model.spec().observation_dim) + ")");
}

}  // namespace

Endpoints predict_endpoints(const DiffusionModel& step_model, const Observation& start, const Observation& goal,
                            std::uint64_t seed) {
    require_kind(step_model, ModelKind::step);
    require_dims(step_model, start, goal);
    const auto& s = step_model.spec();
    const ConditionMatrix templ = build_step_template(start, goal, s.horizon, s.num_actions);
    Rng rng(seed);
    const Matrix grid = sample(step_model.denoiser(), templ, step_model.schedule(), rng);
    const auto decoded = decode_actions(grid, templ);
    return {decoded.front(), decoded.back()};
}

PlanResult plan_from_endpoints(const DiffusionModel& planning_model, const ProbabilisticGraph& graph,
                               Endpoints endpoints, const Observation& start, const Observation& goal,
                               const RetrievalConfig& config, std::uint64_t seed) {
    require_kind(planning_model, ModelKind::planning);
    require_dims(planning_model, start, goal);
    const auto& s = planning_model.spec();
    if (config.horizon != s.horizon)
        throw Error("dimension_mismatch", "retrieval horizon differs from the planning model horizon");
    if (graph.num_actions() != s.num_actions)
        throw Error("dimension_mismatch", "graph action count differs from the planning model");

    Recommendation rec = recommend(graph, endpoints.start, endpoints.end, config);
    const ConditionMatrix templ = build_planning_template(start, goal, rec.matrix);
    Rng rng(seed);
    const Matrix grid = sample(planning_model.denoiser(), templ, planning_model.schedule(), rng);

    PlanResult out;
    out.steps.steps = decode_actions(grid, templ);
    out.endpoints = endpoints;
    out.recommendation = std::move(rec.matrix);
    out.fallback_used = rec.fallback_used;
    // Distinct walks, i.e. before the repetition fill.
    std::vector<std::vector<ActionId>> distinct;
    for (const auto& w : rec.walks)
        if (std::find(distinct.begin(), distinct.end(), w.steps) == distinct.end()) distinct.push_back(w.steps);
    out.walks_found = distinct.size();
    return out;
}

PlanResult plan(const DiffusionModel& step_model, const DiffusionModel& planning_model,
                const ProbabilisticGraph& graph, const Observation& start, const Observation& goal,
                const RetrievalConfig& config, std::uint64_t seed) {
    const Endpoints endpoints = predict_endpoints(step_model, start, goal, derive_seed(seed, 0));
    return plan_from_endpoints(planning_model, graph, endpoints, start, goal, config, derive_seed(seed, 1));
}

PlanResult plan_unconditioned(const DiffusionModel& model, const Observation& start, const Observation& goal,
                              std::uint64_t seed) {
    require_kind(model, ModelKind::unconditioned);
    require_dims(model, start, goal);
    const auto& s = model.spec();
    const ConditionMatrix templ = build_unconditioned_template(start, goal, s.horizon, s.num_actions);
    Rng rng(derive_seed(seed, 1));
    const Matrix grid = sample(model.denoiser(), templ, model.schedule(), rng);
    PlanResult out;
    out.steps.steps = decode_actions(grid, templ);
    out.endpoints = {out.steps.front(), out.steps.back()};
    return out;
}

PlanSequence zero_shot_plan(const ProbabilisticGraph& graph, ActionId start, ActionId end, std::size_t horizon) {
    RetrievalConfig config;
    config.horizon = horizon;
    config.num_recommendations = 1;
    return recommend(graph, start, end, config).selected.front();
}

// ---- training sets ----------------------------------------------------------

std::vector<std::size_t> horizon_plans(const PlanCorpus& corpus, std::size_t horizon) {
    auto idx = corpus.indices_with_length(horizon);
    if (idx.empty())
        throw Error("empty_dataset", "no plans of length " + std::to_string(horizon) + " in the corpus");
    return idx;
}

namespace {

void check_alignment(const PlanCorpus& corpus, std::span<const ObservationPair> observations) {
    if (observations.size() != corpus.plans.size())
        throw Error("missing_observations", "have " + std::to_string(observations.size()) +
                                                " observation pairs for " + std::to_string(corpus.plans.size()) +
                                                " plans");
}

}  // namespace

std::vector<ConditionMatrix> make_step_dataset(const PlanCorpus& corpus, std::span<const ObservationPair> observations,
                                               std::size_t horizon) {
    check_alignment(corpus, observations);
    std::vector<ConditionMatrix> out;
    for (std::size_t i : horizon_plans(corpus, horizon)) {
        const auto& obs = observations[i];
        out.push_back(with_actions(build_step_template(obs.start, obs.goal, horizon, corpus.num_actions()),
                                   corpus.plans[i]));
    }
    return out;
}

std::vector<ConditionMatrix> make_planning_dataset(const PlanCorpus& corpus,
                                                   std::span<const ObservationPair> observations,
                                                   const ProbabilisticGraph& graph,
                                                   const TrainingSetOptions& options,
                                                   const DiffusionModel* step_model) {
    check_alignment(corpus, observations);
    options.retrieval.validate();
    const bool need_prediction = options.endpoints == EndpointSource::predicted || options.gt_augment;
    if (need_prediction && step_model == nullptr)
        throw Error("missing_step_model", "predicted-endpoint conditioning needs a trained step model");
    if (graph.num_actions() != corpus.num_actions())
        throw Error("dimension_mismatch", "graph and corpus disagree on the number of actions");

    const std::size_t horizon = options.retrieval.horizon;
    std::vector<ConditionMatrix> out;
    for (std::size_t i : horizon_plans(corpus, horizon)) {
        const auto& obs = observations[i];
        const auto& plan = corpus.plans[i];
        const Endpoints truth{plan.front(), plan.back()};
        Endpoints predicted = truth;
        if (need_prediction) predicted = predict_endpoints(*step_model, obs.start, obs.goal, derive_seed(options.seed, i));

        std::vector<Endpoints> variants;
        if (options.gt_augment) {
            variants = {predicted, {predicted.start, truth.end}, {truth.start, predicted.end}, truth};
        } else {
            variants = {options.endpoints == EndpointSource::predicted ? predicted : truth};
        }
        for (const Endpoints& e : variants) {
            const auto rec = recommend(graph, e.start, e.end, options.retrieval);
            out.push_back(with_actions(build_planning_template(obs.start, obs.goal, rec.matrix), plan));
        }
    }
    return out;
}

std::vector<ConditionMatrix> make_unconditioned_dataset(const PlanCorpus& corpus,
                                                        std::span<const ObservationPair> observations,
                                                        std::size_t horizon) {
    check_alignment(corpus, observations);
    std::vector<ConditionMatrix> out;
    for (std::size_t i : horizon_plans(corpus, horizon)) {
        const auto& obs = observations[i];
        out.push_back(with_actions(build_unconditioned_template(obs.start, obs.goal, horizon, corpus.num_actions()),
                                   corpus.plans[i]));
    }
    return out;
}

TrainingSets make_training_sets(const PlanCorpus& corpus, std::span<const ObservationPair> observations,
                                const ProbabilisticGraph& graph, const TrainingSetOptions& options,
                                const DiffusionModel* step_model) {
    TrainingSets sets;
    sets.step = make_step_dataset(corpus, observations, options.retrieval.horizon);
    sets.planning = make_planning_dataset(corpus, observations, graph, options, step_model);
    return sets;
}

DiffusionModel train_model(const DiffusionModelSpec& spec, std::span<const ConditionMatrix> dataset,
                           const TrainConfig& config, TrainReport* report) {
    DiffusionModel model(spec, derive_seed(config.seed, 99));
    if (!dataset.empty() &&
        (dataset.front().rows() != spec.grid_rows() || dataset.front().cols() != spec.horizon))
        throw Error("dimension_mismatch", "training grids do not match the model spec");
    auto r = train(model.denoiser(), dataset, model.schedule(), model.loss_weights(), config);
    if (report) *report = std::move(r);
    return model;
}

}  // namespace procplan
