#include "procplan/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <queue>
#include <set>

#include "procplan/error.hpp"

namespace procplan {

bool walk_precedes(double score_a, const std::vector<ActionId>& a, double score_b,
                   const std::vector<ActionId>& b) {
    if (score_a != score_b) return score_a > score_b;
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
}

void RetrievalConfig::validate() const {
    if (horizon < 2) throw Error("invalid_config", "horizon must be >= 2");
    if (num_recommendations < 1) throw Error("invalid_config", "number of recommendations must be >= 1");
    if (!weights) return;
    if (weights->size() != num_recommendations)
        throw Error("invalid_config", "expected one aggregation weight per recommendation");
    double total = 0.0;
    for (double w : *weights) {
        if (!(w >= 0.0)) throw Error("invalid_config", "aggregation weights must be >= 0");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error("invalid_config", "aggregation weights must sum to 1");
}

namespace {

void check_query(const WeightedGraph& graph, ActionId start, ActionId end, std::size_t horizon) {
    if (horizon < 2) throw Error("invalid_config", "horizon must be >= 2");
    if (!graph.has_node(start)) throw Error("unknown_node", "unknown start node " + std::to_string(start));
    if (!graph.has_node(end)) throw Error("unknown_node", "unknown end node " + std::to_string(end));
}

/// Fewest arcs from each node to `end` (max() when unreachable).
std::vector<std::size_t> hops_to(const WeightedGraph& graph, ActionId end) {
    const std::size_t n = graph.num_actions();
    std::vector<std::vector<ActionId>> reverse(n);
    for (ActionId u : graph.nodes())
        for (const Arc& arc : graph.out_arcs(u)) reverse[arc.to].push_back(u);
    std::vector<std::size_t> dist(n, std::numeric_limits<std::size_t>::max());
    std::deque<ActionId> queue{end};
    dist[end] = 0;
    while (!queue.empty()) {
        ActionId v = queue.front();
        queue.pop_front();
        for (ActionId u : reverse[v]) {
            if (dist[u] != std::numeric_limits<std::size_t>::max()) continue;
            dist[u] = dist[v] + 1;
            queue.push_back(u);
        }
    }
    return dist;
}

struct Partial {
    double probability;
    std::vector<ActionId> steps;
};

struct WorseFirst {
    bool operator()(const Partial& a, const Partial& b) const {
        return walk_precedes(b.probability, b.steps, a.probability, a.steps);
    }
};

}  // namespace

std::vector<ScoredWalk> best_walks(const ProbabilisticGraph& graph, ActionId start, ActionId end,
                                   std::size_t horizon, std::size_t count) {
    check_query(graph, start, end, horizon);
    std::vector<ScoredWalk> out;
    if (count == 0) return out;

    const auto dist = hops_to(graph, end);
    if (dist[start] == std::numeric_limits<std::size_t>::max()) return out;

    // Every extension multiplies by a probability <= 1, so no partial walk ranks
    // below its own extensions and completed walks pop in final order.
    std::priority_queue<Partial, std::vector<Partial>, WorseFirst> frontier;
    frontier.push({1.0, {start}});
    while (!frontier.empty()) {
        Partial top = frontier.top();
        frontier.pop();
        if (top.steps.size() >= 2 && top.steps.back() == end) {
            out.push_back({top.steps, top.probability});
            if (out.size() == count) break;
        }
        if (top.steps.size() == horizon) continue;
        const std::size_t length = top.steps.size() + 1;
        for (const Arc& arc : graph.out_arcs(top.steps.back())) {
            if (dist[arc.to] > horizon - length) continue;
            Partial next{top.probability * arc.weight, top.steps};
            next.steps.push_back(arc.to);
            frontier.push(std::move(next));
        }
    }
    return out;
}

std::vector<ScoredWalk> enumerate_walks(const ProbabilisticGraph& graph, ActionId start, ActionId end,
                                        std::size_t horizon) {
    return best_walks(graph, start, end, horizon, std::numeric_limits<std::size_t>::max());
}

std::vector<ScoredWalk> top_r_walks(const ProbabilisticGraph& graph, ActionId start, ActionId end,
                                    std::size_t horizon, std::size_t r) {
    auto found = best_walks(graph, start, end, horizon, r);
    if (found.empty()) return found;
    std::vector<ScoredWalk> out;
    out.reserve(r);
    for (std::size_t i = 0; i < r; ++i) out.push_back(found[i % found.size()]);
    return out;
}

namespace {

void compositions(const std::vector<ActionId>& walk, std::size_t index, std::size_t remaining,
                  std::vector<ActionId>& current, std::vector<PlanSequence>& out,
                  std::set<std::vector<ActionId>>& seen) {
    if (index + 1 == walk.size()) {
        current.insert(current.end(), remaining + 1, walk[index]);
        if (seen.insert(current).second) out.push_back({current, std::nullopt});
        current.resize(current.size() - remaining - 1);
        return;
    }
    for (std::size_t extra = remaining + 1; extra-- > 0;) {
        current.insert(current.end(), extra + 1, walk[index]);
        compositions(walk, index + 1, remaining - extra, current, out, seen);
        current.resize(current.size() - extra - 1);
    }
}

}  // namespace

std::vector<PlanSequence> pad_walk(const std::vector<ActionId>& walk, std::size_t horizon) {
    if (walk.empty()) throw Error("invalid_walk", "cannot pad an empty walk");
    if (walk.size() > horizon)
        throw Error("walk_too_long", "walk of " + std::to_string(walk.size()) + " steps exceeds horizon " +
                                         std::to_string(horizon));
    std::vector<PlanSequence> out;
    std::set<std::vector<ActionId>> seen;
    std::vector<ActionId> current;
    current.reserve(horizon);
    compositions(walk, 0, horizon - walk.size(), current, out, seen);
    return out;
}

PlanSequence first_padding(const std::vector<ActionId>& walk, std::size_t horizon) {
    if (walk.empty()) throw Error("invalid_walk", "cannot pad an empty walk");
    if (walk.size() > horizon)
        throw Error("walk_too_long", "walk of " + std::to_string(walk.size()) + " steps exceeds horizon " +
                                         std::to_string(horizon));
    PlanSequence out;
    out.steps.assign(horizon - walk.size(), walk.front());
    out.steps.insert(out.steps.end(), walk.begin(), walk.end());
    return out;
}

std::vector<PlanSequence> fallback_paths(ActionId start, ActionId end, std::size_t horizon, std::size_t r) {
    if (horizon < 2) throw Error("invalid_config", "horizon must be >= 2");
    if (r < 1) throw Error("invalid_config", "number of recommendations must be >= 1");
    const std::size_t m = horizon / 2;
    auto make = [&](std::size_t starts) {
        PlanSequence p;
        p.steps.assign(starts, start);
        p.steps.insert(p.steps.end(), horizon - starts, end);
        return p;
    };
    const PlanSequence variations[2] = {make(horizon - m), make(m)};
    std::vector<PlanSequence> out;
    for (std::size_t i = 0; i < r; ++i) out.push_back(variations[i % 2]);
    return out;
}

std::vector<double> aggregation_weights(std::size_t r) {
    if (r < 1) throw Error("invalid_config", "number of recommendations must be >= 1");
    const double denom = static_cast<double>(2 * r - 1);
    std::vector<double> w(r, 1.0 / denom);
    w[0] = static_cast<double>(r) / denom;
    return w;
}

RecommendationMatrix aggregate(const std::vector<PlanSequence>& walks, const std::vector<double>& weights,
                               std::size_t num_actions) {
    if (walks.empty()) throw Error("length_mismatch", "nothing to aggregate");
    if (walks.size() != weights.size())
        throw Error("length_mismatch", "expected one weight per walk");
    const std::size_t horizon = walks.front().size();
    RecommendationMatrix m(horizon, num_actions);
    for (std::size_t i = 0; i < walks.size(); ++i) {
        if (walks[i].size() != horizon) throw Error("length_mismatch", "walks differ in length");
        for (std::size_t t = 0; t < horizon; ++t) {
            ActionId a = walks[i].steps[t];
            if (a >= num_actions) throw Error("unknown_action", "walk step outside the action space");
            m(t, a) += weights[i];
        }
    }
    return m;
}

Recommendation recommend(const ProbabilisticGraph& graph, ActionId start, ActionId end,
                         const RetrievalConfig& config) {
    config.validate();
    const std::size_t n = graph.num_actions();
    if (start >= n || end >= n) throw Error("unknown_action", "endpoint outside the action space");

    Recommendation out;
    // Endpoints that never occur in the training plans have no walks; they take
    // the fallback route like any other disconnected pair.
    if (graph.has_node(start) && graph.has_node(end))
        out.walks = top_r_walks(graph, start, end, config.horizon, config.num_recommendations);
    if (out.walks.empty()) {
        out.fallback_used = true;
        out.selected = fallback_paths(start, end, config.horizon, config.num_recommendations);
    } else {
        for (const auto& walk : out.walks) out.selected.push_back(first_padding(walk.steps, config.horizon));
    }
    const auto weights = config.weights ? *config.weights : aggregation_weights(config.num_recommendations);
    out.matrix = aggregate(out.selected, weights, n);
    return out;
}

SummedWalk max_weight_walk(const MinMaxGraph& graph, ActionId start, ActionId end, std::size_t horizon) {
    check_query(graph, start, end, horizon);

    // best[v] over walks with exactly k nodes ending at v: largest integer
    // numerator sum, then lexicographically smallest sequence.
    struct Entry {
        bool valid = false;
        std::uint64_t numerator = 0;
        std::vector<ActionId> steps;
    };
    const std::size_t n = graph.num_actions();
    std::vector<Entry> current(n), next(n);
    current[start] = {true, 0, {start}};

    std::optional<Entry> best;
    for (std::size_t k = 2; k <= horizon; ++k) {
        for (auto& e : next) e.valid = false;
        for (ActionId u : graph.nodes()) {
            if (!current[u].valid) continue;
            for (const Arc& arc : graph.out_arcs(u)) {
                const std::uint64_t score = current[u].numerator + graph.numerator(arc);
                Entry& slot = next[arc.to];
                bool better = !slot.valid || score > slot.numerator;
                if (!better && score == slot.numerator) {
                    // Same length: lexicographic comparison of prefix then arc.to.
                    better = std::lexicographical_compare(current[u].steps.begin(), current[u].steps.end(),
                                                          slot.steps.begin(), slot.steps.end() - 1);
                }
                if (better) {
                    slot.valid = true;
                    slot.numerator = score;
                    slot.steps = current[u].steps;
                    slot.steps.push_back(arc.to);
                }
            }
        }
        std::swap(current, next);
        const Entry& candidate = current[end];
        // Shorter walks win ties, so a later length must be strictly better.
        if (candidate.valid && (!best || candidate.numerator > best->numerator)) best = candidate;
    }
    if (!best) throw Error("no_walk", "no walk from " + std::to_string(start) + " to " + std::to_string(end));
    return {best->steps,
            static_cast<double>(best->numerator) / static_cast<double>(graph.denominator())};
}

}  // namespace procplan
