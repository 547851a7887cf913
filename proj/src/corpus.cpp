#include "procplan/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "procplan/error.hpp"
#include "procplan/io.hpp"

namespace procplan {

using nlohmann::json;

// ---- vocabulary -------------------------------------------------------------

ActionVocabulary::ActionVocabulary(std::vector<std::string> names) {
    for (auto& name : names) {
        if (index_.contains(name)) throw Error("duplicate_action", "duplicate action name: " + name);
        intern(name);
    }
}

ActionId ActionVocabulary::intern(std::string_view name) {
    std::string key(name);
    if (auto it = index_.find(key); it != index_.end()) return it->second;
    auto id = static_cast<ActionId>(names_.size());
    names_.push_back(key);
    index_.emplace(std::move(key), id);
    return id;
}

ActionId ActionVocabulary::id(std::string_view name) const {
    if (auto found = find(name)) return *found;
    throw Error("unknown_action", "unknown action: " + std::string(name));
}

std::optional<ActionId> ActionVocabulary::find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

const std::string& ActionVocabulary::name(ActionId id) const {
    if (id >= names_.size()) throw Error("unknown_action", "action id out of range: " + std::to_string(id));
    return names_[id];
}

// ---- corpus -----------------------------------------------------------------

void PlanCorpus::validate() const {
    if (plans.empty()) throw Error("empty_corpus", "empty corpus");
    for (std::size_t i = 0; i < plans.size(); ++i) {
        const auto& plan = plans[i];
        if (plan.size() < 2)
            throw Error("plan_too_short", "plan too short: plan " + std::to_string(i) + " has " +
                                              std::to_string(plan.size()) + " step(s)");
        for (ActionId a : plan.steps)
            if (a >= vocabulary.size())
                throw Error("unknown_action", "plan " + std::to_string(i) + " references unknown id " +
                                                  std::to_string(a));
    }
}

std::vector<std::size_t> PlanCorpus::indices_with_length(std::size_t horizon) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < plans.size(); ++i)
        if (plans[i].size() == horizon) out.push_back(i);
    return out;
}

namespace {

std::string at_line(std::size_t line, const std::string& what) {
    return "line " + std::to_string(line) + ": " + what;
}

template <typename Intern>
PlanCorpus parse_corpus_impl(std::string_view text, ActionVocabulary vocabulary, Intern intern) {
    PlanCorpus corpus;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); }))
            continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error("malformed_record", at_line(line_no, std::string("malformed record: ") + e.what()));
        }
        if (!record.is_object() || !record.contains("steps") || !record["steps"].is_array())
            throw Error("malformed_record", at_line(line_no, "malformed record: expected {\"steps\": [...]}"));
        PlanSequence plan;
        if (record.contains("task") && !record["task"].is_null()) {
            if (!record["task"].is_string())
                throw Error("malformed_record", at_line(line_no, "malformed record: task must be a string"));
            plan.task = record["task"].get<std::string>();
        }
        for (const auto& step : record["steps"]) {
            if (!step.is_string())
                throw Error("malformed_record", at_line(line_no, "malformed record: steps must be strings"));
            plan.steps.push_back(intern(vocabulary, step.get<std::string>(), line_no));
        }
        if (plan.steps.empty())
            throw Error("malformed_record", at_line(line_no, "malformed record: empty step list"));
        if (plan.steps.size() < 2)
            throw Error("plan_too_short", at_line(line_no, "plan too short"));
        corpus.plans.push_back(std::move(plan));
    }
    if (corpus.plans.empty()) throw Error("empty_corpus", "empty corpus");
    corpus.vocabulary = std::move(vocabulary);
    return corpus;
}

}  // namespace

PlanCorpus parse_corpus(std::string_view text) {
    return parse_corpus_impl(text, ActionVocabulary{},
                             [](ActionVocabulary& v, const std::string& name, std::size_t) {
                                 return v.intern(name);
                             });
}

PlanCorpus parse_corpus(std::string_view text, const ActionVocabulary& vocabulary) {
    return parse_corpus_impl(text, vocabulary,
                             [](ActionVocabulary& v, const std::string& name, std::size_t line) {
                                 auto id = v.find(name);
                                 if (!id) throw Error("unknown_action", at_line(line, "unknown action: " + name));
                                 return *id;
                             });
}

PlanCorpus load_corpus(const std::filesystem::path& path) {
    return parse_corpus(io::read_text_file(path));
}

std::string serialize_corpus(const PlanCorpus& corpus) {
    std::string out;
    for (const auto& plan : corpus.plans) {
        json record = json::object();
        if (plan.task) record["task"] = *plan.task;
        json steps = json::array();
        for (ActionId a : plan.steps) steps.push_back(corpus.vocabulary.name(a));
        record["steps"] = std::move(steps);
        out += record.dump();
        out += '\n';
    }
    return out;
}

std::string serialize_vocabulary(const ActionVocabulary& vocabulary) {
    return json(vocabulary.names()).dump() + "\n";
}

ActionVocabulary parse_vocabulary(std::string_view text) {
    json names;
    try {
        names = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error("malformed_vocabulary", e.what());
    }
    if (!names.is_array()) throw Error("malformed_vocabulary", "vocabulary must be a JSON array of names");
    return ActionVocabulary(names.get<std::vector<std::string>>());
}

std::string serialize_observations(const std::vector<ObservationPair>& observations) {
    std::string out;
    for (const auto& pair : observations) {
        out += json{{"start", pair.start}, {"goal", pair.goal}}.dump();
        out += '\n';
    }
    return out;
}

std::vector<ObservationPair> parse_observations(std::string_view text) {
    std::vector<ObservationPair> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto record = json::parse(line);
            ObservationPair pair{record.at("start").get<Observation>(), record.at("goal").get<Observation>()};
            if (pair.start.size() != pair.goal.size())
                throw Error("malformed_record", at_line(line_no, "start/goal dimension mismatch"));
            if (!out.empty() && out.front().start.size() != pair.start.size())
                throw Error("malformed_record", at_line(line_no, "observation dimension changes"));
            out.push_back(std::move(pair));
        } catch (const json::exception& e) {
            throw Error("malformed_record", at_line(line_no, std::string("malformed observation: ") + e.what()));
        }
    }
    return out;
}

// ---- heatmap ----------------------------------------------------------------

Matrix transition_heatmap(const PlanCorpus& corpus) {
    corpus.validate();
    const std::size_t n = corpus.num_actions();
    Matrix counts(n, n);
    for (const auto& plan : corpus.plans)
        for (std::size_t t = 0; t + 1 < plan.size(); ++t) counts(plan.steps[t], plan.steps[t + 1]) += 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        double total = 0.0;
        for (double c : counts.row(i)) total += c;
        if (total == 0.0) continue;
        for (double& c : counts.row(i)) c /= total;
    }
    return counts;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string heatmap_csv(const Matrix& heatmap, const ActionVocabulary& vocabulary) {
    if (heatmap.rows() != vocabulary.size() || heatmap.cols() != vocabulary.size())
        throw Error("shape_mismatch", "heatmap does not match vocabulary size");
    std::ostringstream out;
    out.precision(17);
    out << "from";
    for (const auto& name : vocabulary.names()) out << ',' << csv_field(name);
    out << '\n';
    for (std::size_t i = 0; i < heatmap.rows(); ++i) {
        out << csv_field(vocabulary.name(static_cast<ActionId>(i)));
        for (double v : heatmap.row(i)) out << ',' << v;
        out << '\n';
    }
    return out.str();
}

// ---- synthetic data ---------------------------------------------------------

void SyntheticSpec::validate() const {
    if (noise_sigma < 0.0 || !std::isfinite(noise_sigma))
        throw Error("invalid_spec", "noise sigma must be finite and >= 0");
    if (templates.empty()) throw Error("invalid_spec", "no plan templates");
    if (num_plans == 0) throw Error("invalid_spec", "num_plans must be positive");
    if (observation_dim == 0) throw Error("invalid_spec", "observation dimension must be positive");
    double total = 0.0;
    ActionVocabulary names;
    for (const auto& t : templates) {
        if (t.steps.size() < 2) throw Error("invalid_spec", "template '" + t.task + "' has fewer than 2 steps");
        if (!(t.probability >= 0.0)) throw Error("invalid_spec", "template probabilities must be >= 0");
        total += t.probability;
        for (const auto& s : t.steps) names.intern(s);
    }
    if (!(total > 0.0)) throw Error("invalid_spec", "template probabilities sum to zero");
    if (embedding == EmbeddingKind::identity && observation_dim != names.size())
        throw Error("invalid_spec", "identity embedding needs observation_dim == number of actions");
}

SyntheticSpec disjoint_task_spec(std::size_t num_tasks, std::size_t steps_per_task, std::size_t num_plans,
                                 std::size_t observation_dim, double noise_sigma) {
    SyntheticSpec spec;
    spec.num_plans = num_plans;
    spec.observation_dim = observation_dim;
    spec.noise_sigma = noise_sigma;
    for (std::size_t k = 0; k < num_tasks; ++k) {
        PlanTemplate t;
        t.task = "task" + std::to_string(k);
        for (std::size_t i = 0; i < steps_per_task; ++i)
            t.steps.push_back("t" + std::to_string(k) + "_s" + std::to_string(i));
        spec.templates.push_back(std::move(t));
    }
    return spec;
}

SyntheticSpec parse_synthetic_spec(std::string_view json_text) {
    SyntheticSpec spec;
    try {
        auto j = json::parse(json_text);
        spec.num_plans = j.value("num_plans", spec.num_plans);
        spec.observation_dim = j.value("observation_dim", spec.observation_dim);
        spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
        auto embedding = j.value("embedding", std::string("gaussian"));
        if (embedding == "identity")
            spec.embedding = EmbeddingKind::identity;
        else if (embedding == "gaussian")
            spec.embedding = EmbeddingKind::gaussian;
        else
            throw Error("invalid_spec", "unknown embedding: " + embedding);
        for (const auto& t : j.at("templates")) {
            PlanTemplate tmpl;
            tmpl.task = t.value("task", std::string());
            tmpl.steps = t.at("steps").get<std::vector<std::string>>();
            tmpl.probability = t.value("probability", 1.0);
            spec.templates.push_back(std::move(tmpl));
        }
    } catch (const json::exception& e) {
        throw Error("invalid_spec", std::string("malformed synthetic spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

Observation embed_action(const Matrix& embedding, ActionId action) {
    auto row = embedding.row(action);
    return Observation(row.begin(), row.end());
}

SyntheticDataset generate_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    SyntheticDataset out;
    auto& vocab = out.corpus.vocabulary;
    std::vector<std::vector<ActionId>> template_ids;
    std::vector<double> weights;
    for (const auto& t : spec.templates) {
        std::vector<ActionId> ids;
        for (const auto& s : t.steps) ids.push_back(vocab.intern(s));
        template_ids.push_back(std::move(ids));
        weights.push_back(t.probability);
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t n_actions = vocab.size();
    const std::size_t d = spec.observation_dim;

    out.embedding = Matrix(n_actions, d);
    if (spec.embedding == EmbeddingKind::identity) {
        for (std::size_t i = 0; i < n_actions; ++i) out.embedding(i, i) = 1.0;
    } else {
        for (double& v : out.embedding.data()) v = normal(rng);
    }

    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    auto observe = [&](ActionId a) {
        Observation obs = embed_action(out.embedding, a);
        if (spec.noise_sigma > 0.0)
            for (double& v : obs) v += spec.noise_sigma * normal(rng);
        return obs;
    };
    for (std::size_t i = 0; i < spec.num_plans; ++i) {
        std::size_t k = pick(rng);
        PlanSequence plan{template_ids[k], spec.templates[k].task.empty()
                                               ? std::nullopt
                                               : std::optional<std::string>(spec.templates[k].task)};
        ObservationPair pair;
        pair.start = observe(plan.front());
        pair.goal = observe(plan.back());
        out.corpus.plans.push_back(std::move(plan));
        out.observations.push_back(std::move(pair));
    }
    return out;
}

}  // namespace procplan
