#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "procplan/corpus.hpp"
#include "procplan/graph.hpp"
#include "procplan/matrix.hpp"

namespace procplan {

/// A walk through the graph (nodes may repeat) with the product of its arc
/// probabilities.
struct ScoredWalk {
    std::vector<ActionId> steps;
    double probability = 0.0;

    friend bool operator==(const ScoredWalk&, const ScoredWalk&) = default;
};

/// Ranking used everywhere walks are ordered: higher score first, then shorter,
/// then lexicographically smaller id sequence.
bool walk_precedes(double score_a, const std::vector<ActionId>& a,
                   double score_b, const std::vector<ActionId>& b);

struct RetrievalConfig {
    std::size_t horizon = 4;
    std::size_t num_recommendations = 1;
    std::optional<std::vector<double>> weights;  // defaults to aggregation_weights(R)

    /// Throws Error on horizon < 2, R < 1, or explicit weights that are
    /// negative, not R long, or not summing to 1.
    void validate() const;
};

/// Every walk from `start` to `end` with 2..horizon nodes, ranked by
/// walk_precedes. Best-first expansion over partial walks; prefixes never
/// score below their extensions, so walks come out in final order.
std::vector<ScoredWalk> enumerate_walks(const ProbabilisticGraph& graph, ActionId start,
                                        ActionId end, std::size_t horizon);

/// Head of enumerate_walks, stopping after `count` walks.
std::vector<ScoredWalk> best_walks(const ProbabilisticGraph& graph, ActionId start,
                                   ActionId end, std::size_t horizon, std::size_t count);

/// min(R, available) best walks, then cycled to exactly R entries. Empty when
/// no walk connects the endpoints.
std::vector<ScoredWalk> top_r_walks(const ProbabilisticGraph& graph, ActionId start,
                                    ActionId end, std::size_t horizon, std::size_t r);

/// All distinct sequences of exactly `horizon` steps obtained by repeating walk
/// elements in place. Ordered by the number of copies of the earliest element,
/// descending (leftmost duplication first).
std::vector<PlanSequence> pad_walk(const std::vector<ActionId>& walk, std::size_t horizon);

/// First entry of pad_walk without enumerating the rest.
PlanSequence first_padding(const std::vector<ActionId>& walk, std::size_t horizon);

/// Endpoint-repetition plans used when the graph has no connecting walk:
/// [s^(T-M) e^M, s^M e^(T-M)] cycled to R entries, M = floor(T/2).
std::vector<PlanSequence> fallback_paths(ActionId start, ActionId end, std::size_t horizon,
                                         std::size_t r);

/// R/(2R-1) for the top walk and 1/(2R-1) for each of the others.
std::vector<double> aggregation_weights(std::size_t r);

/// T x |A|: row t is the weighted sum of one-hot(walks[i][t]).
using RecommendationMatrix = Matrix;

RecommendationMatrix aggregate(const std::vector<PlanSequence>& walks,
                               const std::vector<double>& weights, std::size_t num_actions);

struct Recommendation {
    RecommendationMatrix matrix;
    std::vector<ScoredWalk> walks;        // top_r_walks output, before padding
    std::vector<PlanSequence> selected;   // the length-T plans that were aggregated
    bool fallback_used = false;
};

Recommendation recommend(const ProbabilisticGraph& graph, ActionId start, ActionId end,
                         const RetrievalConfig& config);

struct SummedWalk {
    std::vector<ActionId> steps;
    double score = 0.0;  // sum of arc weights

    friend bool operator==(const SummedWalk&, const SummedWalk&) = default;
};

/// Among walks of 2..horizon nodes, the one with the largest sum of min-max
/// arc weights (ties as walk_precedes). Dynamic programme over (length, node).
/// Throws Error("no_walk") if none exists.
SummedWalk max_weight_walk(const MinMaxGraph& graph, ActionId start, ActionId end,
                           std::size_t horizon);

}  // namespace procplan
