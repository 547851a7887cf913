#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "procplan/corpus.hpp"

namespace procplan {

using ActionSequence = std::vector<ActionId>;

/// Fraction of pairs that match exactly. Throws Error("length_mismatch") when
/// the counts or any pair's lengths differ.
double success_rate(std::span<const ActionSequence> preds, std::span<const ActionSequence> gts);

/// Mean over pairs of (matching positions / T).
double mean_accuracy(std::span<const ActionSequence> preds, std::span<const ActionSequence> gts);

enum class MiouMode { per_sequence, per_batch };

/// per_sequence: mean of |set(p) ∩ set(g)| / |set(p) ∪ set(g)| over pairs.
/// per_batch: consecutive batches of `batch_size` pairs; each batch scores the
/// IoU of the union of its predicted action sets against the union of its
/// ground-truth sets; batch scores are averaged.
double miou(std::span<const ActionSequence> preds, std::span<const ActionSequence> gts,
            MiouMode mode = MiouMode::per_sequence, std::size_t batch_size = 256);

double sequence_iou(const ActionSequence& pred, const ActionSequence& gt);

struct EvalSample {
    PlanSequence ground_truth;
    ObservationPair observations;
};

/// What a planner returns for one sample.
struct Prediction {
    ActionSequence steps;
    std::optional<ActionId> predicted_start;
    std::optional<ActionId> predicted_end;
    bool fallback_used = false;
};

using PlannerFn = std::function<Prediction(const EvalSample&, std::uint64_t seed)>;

struct EvalConfig {
    MiouMode mode = MiouMode::per_sequence;
    std::size_t batch_size = 256;
    /// Shuffle sample order before forming mIoU batches.
    bool shuffle_batches = false;
    bool keep_records = false;
};

struct SampleRecord {
    ActionSequence prediction;
    ActionSequence ground_truth;
    bool fallback_used = false;
};

struct MetricsReport {
    double success_rate = 0.0;
    double mean_accuracy = 0.0;
    double miou = 0.0;
    std::size_t n_samples = 0;
    std::size_t fallbacks = 0;
    /// Over samples whose planner reported endpoints.
    std::optional<double> start_accuracy;
    std::optional<double> end_accuracy;
    std::vector<SampleRecord> records;
};

/// Seed passed to the planner for sample `index`.
std::uint64_t sample_seed(std::uint64_t seed, std::size_t index);

/// Runs the planner over every sample (OpenMP, one sample per iteration) and
/// reduces in sample order. Deterministic per seed for any thread count.
MetricsReport evaluate(const PlannerFn& planner, std::span<const EvalSample> split,
                       const EvalConfig& config, std::uint64_t seed);

/// Single-threaded reference for evaluate().
MetricsReport evaluate_serial(const PlannerFn& planner, std::span<const EvalSample> split,
                              const EvalConfig& config, std::uint64_t seed);

/// Scores precomputed predictions.
MetricsReport score(std::span<const Prediction> predictions, std::span<const EvalSample> split,
                    const EvalConfig& config, std::uint64_t seed);

std::string report_to_json(const MetricsReport& report, const ActionVocabulary* vocabulary);
std::string report_to_csv(const MetricsReport& report);

}  // namespace procplan
