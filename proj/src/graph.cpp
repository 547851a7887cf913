#include "procplan/graph.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <deque>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "procplan/error.hpp"

namespace procplan {

using nlohmann::json;

// ---- frequency graph --------------------------------------------------------

void FrequencyGraph::add_node(ActionId node) {
    if (node >= num_actions_) num_actions_ = static_cast<std::size_t>(node) + 1;
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), node);
    if (it == nodes_.end() || *it != node) nodes_.insert(it, node);
}

void FrequencyGraph::add_transition(ActionId from, ActionId to, std::uint64_t count) {
    if (count == 0) return;
    add_node(from);
    add_node(to);
    counts_[{from, to}] += count;
}

bool FrequencyGraph::has_node(ActionId node) const {
    return std::binary_search(nodes_.begin(), nodes_.end(), node);
}

std::uint64_t FrequencyGraph::count(ActionId from, ActionId to) const {
    auto it = counts_.find({from, to});
    return it == counts_.end() ? 0 : it->second;
}

FrequencyGraph build_frequency_graph(const PlanCorpus& corpus) {
    corpus.validate();
    FrequencyGraph graph(corpus.num_actions());
    for (const auto& plan : corpus.plans) {
        for (ActionId a : plan.steps) graph.add_node(a);
        for (std::size_t t = 0; t + 1 < plan.size(); ++t) graph.add_transition(plan.steps[t], plan.steps[t + 1]);
    }
    return graph;
}

// ---- weighted graphs --------------------------------------------------------

WeightedGraph::WeightedGraph(const FrequencyGraph& counts, std::vector<std::vector<Arc>> out)
    : nodes_(counts.nodes()), present_(counts.num_actions(), false), out_(std::move(out)) {
    for (ActionId n : nodes_) present_[n] = true;
}

bool WeightedGraph::has_node(ActionId node) const {
    return node < present_.size() && present_[node];
}

std::span<const Arc> WeightedGraph::out_arcs(ActionId from) const {
    if (from >= out_.size()) return {};
    return out_[from];
}

std::optional<double> WeightedGraph::weight(ActionId from, ActionId to) const {
    for (const Arc& arc : out_arcs(from))
        if (arc.to == to) return arc.weight;
    return std::nullopt;
}

std::size_t WeightedGraph::num_edges() const {
    std::size_t n = 0;
    for (const auto& arcs : out_) n += arcs.size();
    return n;
}

namespace {

std::vector<std::vector<Arc>> count_arcs(const FrequencyGraph& g) {
    std::vector<std::vector<Arc>> out(g.num_actions());
    // std::map iteration order keeps each list sorted by target id.
    for (const auto& [edge, count] : g.counts()) out[edge.first].push_back({edge.second, 0.0, count});
    return out;
}

std::vector<std::vector<Arc>> probability_arcs(const FrequencyGraph& g) {
    if (g.empty()) throw Error("empty_graph", "cannot normalise an empty graph");
    auto out = count_arcs(g);
    for (auto& arcs : out) {
        std::uint64_t total = 0;
        for (const Arc& a : arcs) total += a.count;
        for (Arc& a : arcs) a.weight = static_cast<double>(a.count) / static_cast<double>(total);
    }
    return out;
}

std::vector<std::vector<Arc>> minmax_arcs(const FrequencyGraph& g) {
    if (g.empty()) throw Error("empty_graph", "cannot normalise an empty graph");
    auto out = count_arcs(g);
    std::uint64_t lo = std::numeric_limits<std::uint64_t>::max();
    std::uint64_t hi = 0;
    for (const auto& [edge, count] : g.counts()) {
        lo = std::min(lo, count);
        hi = std::max(hi, count);
    }
    for (auto& arcs : out)
        for (Arc& a : arcs)
            a.weight = hi == lo ? 1.0
                                : static_cast<double>(a.count - lo) / static_cast<double>(hi - lo);
    return out;
}

}  // namespace

ProbabilisticGraph::ProbabilisticGraph(const FrequencyGraph& counts)
    : WeightedGraph(counts, probability_arcs(counts)), counts_(counts) {}

MinMaxGraph::MinMaxGraph(const FrequencyGraph& counts) : WeightedGraph(counts, minmax_arcs(counts)) {
    min_ = std::numeric_limits<std::uint64_t>::max();
    for (const auto& [edge, count] : counts.counts()) {
        min_ = std::min(min_, count);
        max_ = std::max(max_, count);
    }
    if (counts.counts().empty()) min_ = max_ = 0;
}

ProbabilisticGraph normalize_probabilistic(const FrequencyGraph& graph) {
    return ProbabilisticGraph(graph);
}

MinMaxGraph normalize_minmax(const FrequencyGraph& graph) {
    return MinMaxGraph(graph);
}

// ---- persistence ------------------------------------------------------------

std::string graph_to_json(const FrequencyGraph& graph, const ActionVocabulary* vocabulary) {
    json j = json::object();
    if (vocabulary) j["actions"] = vocabulary->names();
    j["nodes"] = graph.nodes();
    json edges = json::array();
    for (const auto& [edge, count] : graph.counts())
        edges.push_back({{"from", edge.first}, {"to", edge.second}, {"count", count}});
    j["edges"] = std::move(edges);
    return j.dump(1) + "\n";
}

StoredGraph graph_from_json(std::string_view text) {
    StoredGraph out;
    try {
        auto j = json::parse(text);
        std::size_t num_actions = 0;
        if (j.contains("actions")) {
            out.vocabulary = ActionVocabulary(j["actions"].get<std::vector<std::string>>());
            num_actions = out.vocabulary.size();
        }
        auto nodes = j.at("nodes").get<std::vector<ActionId>>();
        for (ActionId n : nodes) num_actions = std::max<std::size_t>(num_actions, n + 1);
        out.counts = FrequencyGraph(num_actions);
        for (ActionId n : nodes) out.counts.add_node(n);
        for (const auto& e : j.at("edges")) {
            auto from = e.at("from").get<ActionId>();
            auto to = e.at("to").get<ActionId>();
            auto count = e.at("count").get<std::uint64_t>();
            if (!out.counts.has_node(from) || !out.counts.has_node(to))
                throw Error("malformed_graph", "edge references a node missing from \"nodes\"");
            if (count == 0) throw Error("malformed_graph", "edge counts must be >= 1");
            out.counts.add_transition(from, to, count);
        }
    } catch (const json::exception& e) {
        throw Error("malformed_graph", std::string("malformed graph file: ") + e.what());
    }
    if (!out.vocabulary.names().empty() && out.counts.num_actions() > out.vocabulary.size())
        throw Error("malformed_graph", "node id outside the action list");
    return out;
}

// ---- DOT export ---------------------------------------------------------------

std::vector<ActionId> neighborhood(const FrequencyGraph& graph, ActionId center, std::size_t depth) {
    if (!graph.has_node(center)) throw Error("unknown_node", "unknown node: " + std::to_string(center));
    std::vector<std::vector<ActionId>> adjacent(graph.num_actions());
    for (const auto& [edge, count] : graph.counts()) {
        adjacent[edge.first].push_back(edge.second);
        adjacent[edge.second].push_back(edge.first);
    }
    std::vector<std::size_t> dist(graph.num_actions(), std::numeric_limits<std::size_t>::max());
    std::deque<ActionId> queue{center};
    dist[center] = 0;
    while (!queue.empty()) {
        ActionId u = queue.front();
        queue.pop_front();
        if (dist[u] == depth) continue;
        for (ActionId v : adjacent[u]) {
            if (dist[v] != std::numeric_limits<std::size_t>::max()) continue;
            dist[v] = dist[u] + 1;
            queue.push_back(v);
        }
    }
    std::vector<ActionId> out;
    for (ActionId n : graph.nodes())
        if (dist[n] != std::numeric_limits<std::size_t>::max()) out.push_back(n);
    return out;
}

namespace {

bool plain_identifier(const std::string& s) {
    if (s.empty() || std::isdigit(static_cast<unsigned char>(s[0]))) return false;
    return std::all_of(s.begin(), s.end(),
                       [](unsigned char c) { return std::isalnum(c) || c == '_'; });
}

std::string dot_id(const std::string& s) {
    if (plain_identifier(s)) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

std::string fixed3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

}  // namespace

std::string export_dot(const FrequencyGraph& graph, const DotOptions& options) {
    if (graph.empty()) throw Error("empty_graph", "cannot export an empty graph");
    std::vector<ActionId> nodes = options.center ? neighborhood(graph, *options.center, options.depth)
                                                 : graph.nodes();
    std::vector<bool> keep(graph.num_actions(), false);
    for (ActionId n : nodes) keep[n] = true;

    auto name = [&](ActionId id) {
        if (options.vocabulary && id < options.vocabulary->size()) return dot_id(options.vocabulary->name(id));
        return std::to_string(id);
    };

    std::optional<ProbabilisticGraph> prob;
    std::optional<MinMaxGraph> minmax;
    if (options.label == DotLabel::probability) prob.emplace(graph);
    if (options.label == DotLabel::minmax) minmax.emplace(graph);

    std::ostringstream out;
    out << "digraph " << dot_id(options.graph_name) << " {\n";
    for (ActionId n : nodes) out << "  " << name(n) << ";\n";
    for (const auto& [edge, count] : graph.counts()) {
        if (!keep[edge.first] || !keep[edge.second]) continue;
        std::string label;
        switch (options.label) {
            case DotLabel::probability: label = fixed3(*prob->weight(edge.first, edge.second)); break;
            case DotLabel::minmax: label = fixed3(*minmax->weight(edge.first, edge.second)); break;
            case DotLabel::count: label = std::to_string(count); break;
        }
        out << "  " << name(edge.first) << " -> " << name(edge.second) << " [label=\"" << label << "\"];\n";
    }
    out << "}\n";
    return out.str();
}

}  // namespace procplan
