#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "procplan/corpus.hpp"
#include "procplan/diffusion.hpp"
#include "procplan/graph.hpp"
#include "procplan/retrieval.hpp"

namespace procplan {

// ---- grid layouts -----------------------------------------------------------
//
// Step model:     [ v_s  0 ... 0  v_g ]   observation rows (d)
//                 [ a_1  0 ... 0  a_T ]   action rows (|A|), interior zero-padded
//
// Planning model: [ v_s  0 ... 0  v_g ]
//                 [ ã_1  ã_2 ... ã_T  ]   recommendation rows (|A|), conditions
//                 [ a_1  a_2 ... a_T  ]   action rows (|A|)
//
// Unconditioned:  observation rows + action rows, all action cells free.

ConditionMatrix build_step_template(const Observation& start, const Observation& goal,
                                    std::size_t horizon, std::size_t num_actions);
ConditionMatrix build_planning_template(const Observation& start, const Observation& goal,
                                        const RecommendationMatrix& recommendation);
ConditionMatrix build_unconditioned_template(const Observation& start, const Observation& goal,
                                             std::size_t horizon, std::size_t num_actions);

/// Copy of `templ` with one-hot ground truth written into its action cells.
ConditionMatrix with_actions(const ConditionMatrix& templ, const PlanSequence& plan);

/// Per-column argmax over the action rows (lowest id wins ties).
std::vector<ActionId> decode_actions(const Matrix& grid, const ConditionMatrix& layout);

// ---- models -----------------------------------------------------------------

enum class ModelKind { step, planning, unconditioned };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& text);

struct DiffusionModelSpec {
    ModelKind kind = ModelKind::step;
    std::size_t observation_dim = 0;
    std::size_t num_actions = 0;
    std::size_t horizon = 0;
    std::size_t diffusion_steps = 200;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    std::vector<std::size_t> hidden = {256, 256};
    std::size_t time_embedding_dim = 16;
    /// Retrieval settings the planning model was trained with.
    std::size_t num_recommendations = 1;

    std::size_t grid_rows() const;
};

/// A denoiser together with the layout and schedule it was trained for.
class DiffusionModel {
public:
    DiffusionModel() = default;
    DiffusionModel(DiffusionModelSpec spec, std::uint64_t init_seed);
    DiffusionModel(DiffusionModelSpec spec, MlpDenoiser denoiser);

    const DiffusionModelSpec& spec() const { return spec_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    const MlpDenoiser& denoiser() const { return denoiser_; }
    MlpDenoiser& denoiser() { return denoiser_; }

    LossWeights loss_weights() const;

private:
    DiffusionModelSpec spec_;
    NoiseSchedule schedule_;
    MlpDenoiser denoiser_;
};

/// JSON checkpoint: header (kind, dimensions, schedule, layer sizes) and the
/// flat parameter array.
std::string model_to_json(const DiffusionModel& model);
DiffusionModel model_from_json(std::string_view text);

struct Endpoints {
    ActionId start = 0;
    ActionId end = 0;

    friend bool operator==(const Endpoints&, const Endpoints&) = default;
};

/// Samples the step-model grid and decodes columns 0 and T-1.
Endpoints predict_endpoints(const DiffusionModel& step_model, const Observation& start,
                            const Observation& goal, std::uint64_t seed);

struct PlanResult {
    PlanSequence steps;
    Endpoints endpoints;
    RecommendationMatrix recommendation;  // empty for unconditioned / zero-shot
    bool fallback_used = false;
    std::size_t walks_found = 0;
};

/// Planning model run with given endpoints (predicted or ground truth).
PlanResult plan_from_endpoints(const DiffusionModel& planning_model,
                               const ProbabilisticGraph& graph, Endpoints endpoints,
                               const Observation& start, const Observation& goal,
                               const RetrievalConfig& config, std::uint64_t seed);

/// Step model → retrieval → planning model.
PlanResult plan(const DiffusionModel& step_model, const DiffusionModel& planning_model,
                const ProbabilisticGraph& graph, const Observation& start, const Observation& goal,
                const RetrievalConfig& config, std::uint64_t seed);

/// Planning model conditioned on observations only.
PlanResult plan_unconditioned(const DiffusionModel& model, const Observation& start,
                              const Observation& goal, std::uint64_t seed);

/// First padded variant of the most probable walk, or the first fallback path.
PlanSequence zero_shot_plan(const ProbabilisticGraph& graph, ActionId start, ActionId end,
                            std::size_t horizon);

// ---- training sets ----------------------------------------------------------

enum class EndpointSource { predicted, ground_truth };

struct TrainingSetOptions {
    RetrievalConfig retrieval;
    /// Where recommendation endpoints come from.
    EndpointSource endpoints = EndpointSource::predicted;
    /// Expand each planning sample over {â_1, a_1} x {â_T, a_T}.
    bool gt_augment = false;
    std::uint64_t seed = 0;
};

/// Indices of the plans used for training at this horizon (length == horizon).
std::vector<std::size_t> horizon_plans(const PlanCorpus& corpus, std::size_t horizon);

std::vector<ConditionMatrix> make_step_dataset(const PlanCorpus& corpus,
                                               std::span<const ObservationPair> observations,
                                               std::size_t horizon);

/// Predicted endpoints need `step_model`; throws Error("missing_step_model")
/// otherwise.
std::vector<ConditionMatrix> make_planning_dataset(const PlanCorpus& corpus,
                                                   std::span<const ObservationPair> observations,
                                                   const ProbabilisticGraph& graph,
                                                   const TrainingSetOptions& options,
                                                   const DiffusionModel* step_model);

std::vector<ConditionMatrix> make_unconditioned_dataset(
    const PlanCorpus& corpus, std::span<const ObservationPair> observations, std::size_t horizon);

struct TrainingSets {
    std::vector<ConditionMatrix> step;
    std::vector<ConditionMatrix> planning;
};

TrainingSets make_training_sets(const PlanCorpus& corpus,
                                std::span<const ObservationPair> observations,
                                const ProbabilisticGraph& graph, const TrainingSetOptions& options,
                                const DiffusionModel* step_model);

/// Builds and trains a model of `spec.kind` on `dataset`.
DiffusionModel train_model(const DiffusionModelSpec& spec,
                           std::span<const ConditionMatrix> dataset, const TrainConfig& config,
                           TrainReport* report = nullptr);

}  // namespace procplan
