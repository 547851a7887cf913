#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "procplan/corpus.hpp"

namespace procplan {

using EdgeKey = std::pair<ActionId, ActionId>;

/// Transition counts between actions. Nodes are the actions that appear in at
/// least one plan; ids range over the full vocabulary size.
class FrequencyGraph {
public:
    FrequencyGraph() = default;
    explicit FrequencyGraph(std::size_t num_actions) : num_actions_(num_actions) {}

    void add_node(ActionId node);
    /// Adds both endpoints as nodes and increments the edge count.
    void add_transition(ActionId from, ActionId to, std::uint64_t count = 1);

    std::size_t num_actions() const { return num_actions_; }
    const std::vector<ActionId>& nodes() const { return nodes_; }  // sorted
    bool has_node(ActionId node) const;
    const std::map<EdgeKey, std::uint64_t>& counts() const { return counts_; }
    std::uint64_t count(ActionId from, ActionId to) const;
    bool empty() const { return nodes_.empty(); }

    friend bool operator==(const FrequencyGraph&, const FrequencyGraph&) = default;

private:
    std::size_t num_actions_ = 0;
    std::vector<ActionId> nodes_;
    std::map<EdgeKey, std::uint64_t> counts_;
};

/// Every adjacent pair of every plan increments one edge count.
FrequencyGraph build_frequency_graph(const PlanCorpus& corpus);

struct Arc {
    ActionId to;
    double weight;
    std::uint64_t count;
};

/// Frozen weighted digraph with adjacency lists sorted by target id. Shared
/// representation behind the probabilistic and min-max graphs.
class WeightedGraph {
public:
    std::size_t num_actions() const { return out_.size(); }
    const std::vector<ActionId>& nodes() const { return nodes_; }
    bool has_node(ActionId node) const;
    std::span<const Arc> out_arcs(ActionId from) const;
    std::optional<double> weight(ActionId from, ActionId to) const;
    std::size_t num_edges() const;

protected:
    WeightedGraph() = default;
    WeightedGraph(const FrequencyGraph& counts, std::vector<std::vector<Arc>> out);

    std::vector<ActionId> nodes_;
    std::vector<bool> present_;
    std::vector<std::vector<Arc>> out_;
};

/// Probabilistic procedure knowledge graph: arc weight is the transition
/// probability count(e) / total outgoing count of its source.
class ProbabilisticGraph : public WeightedGraph {
public:
    ProbabilisticGraph() = default;
    explicit ProbabilisticGraph(const FrequencyGraph& counts);

    const FrequencyGraph& frequencies() const { return counts_; }
    std::optional<double> probability(ActionId from, ActionId to) const { return weight(from, to); }

private:
    FrequencyGraph counts_;
};

/// Counts rescaled globally to (c - min) / (max - min); all ones when every
/// count is equal.
class MinMaxGraph : public WeightedGraph {
public:
    MinMaxGraph() = default;
    explicit MinMaxGraph(const FrequencyGraph& counts);

    /// Arc weight is numerator(arc) / denominator(), both integers; lets walk
    /// scores be compared exactly.
    std::uint64_t numerator(const Arc& arc) const { return max_ == min_ ? 1 : arc.count - min_; }
    std::uint64_t denominator() const { return max_ == min_ ? 1 : max_ - min_; }
    std::uint64_t min_count() const { return min_; }
    std::uint64_t max_count() const { return max_; }

private:
    std::uint64_t min_ = 0;
    std::uint64_t max_ = 0;
};

ProbabilisticGraph normalize_probabilistic(const FrequencyGraph& graph);
MinMaxGraph normalize_minmax(const FrequencyGraph& graph);

// ---- persistence / export ---------------------------------------------------

/// `{"actions": [names...], "nodes": [ids...], "edges": [{"from", "to", "count"}]}`.
/// "actions" is omitted when `vocabulary` is null.
std::string graph_to_json(const FrequencyGraph& graph, const ActionVocabulary* vocabulary);

struct StoredGraph {
    FrequencyGraph counts;
    ActionVocabulary vocabulary;  // empty if the file carried no names
};

StoredGraph graph_from_json(std::string_view text);

enum class DotLabel { probability, count, minmax };

struct DotOptions {
    DotLabel label = DotLabel::probability;
    const ActionVocabulary* vocabulary = nullptr;
    std::optional<ActionId> center;  // restrict to the k-hop neighbourhood of this node
    std::size_t depth = 2;
    std::string graph_name = "procedure";
};

/// Nodes within `depth` hops of `center`, following arcs in either direction.
std::vector<ActionId> neighborhood(const FrequencyGraph& graph, ActionId center, std::size_t depth);

/// Throws Error("unknown_node") if the neighbourhood centre is not a graph node.
std::string export_dot(const FrequencyGraph& graph, const DotOptions& options);

}  // namespace procplan
