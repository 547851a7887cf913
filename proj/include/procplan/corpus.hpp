#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "procplan/matrix.hpp"

namespace procplan {

using ActionId = std::uint32_t;

/// Bijection between action-step names and dense ids 0..size()-1.
/// Ids are assigned in first-seen order.
class ActionVocabulary {
public:
    ActionVocabulary() = default;
    explicit ActionVocabulary(std::vector<std::string> names);

    /// Returns the id of `name`, adding it if unseen.
    ActionId intern(std::string_view name);

    ActionId id(std::string_view name) const;
    std::optional<ActionId> find(std::string_view name) const;
    const std::string& name(ActionId id) const;

    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }

    friend bool operator==(const ActionVocabulary& a, const ActionVocabulary& b) {
        return a.names_ == b.names_;
    }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, ActionId> index_;
};

struct PlanSequence {
    std::vector<ActionId> steps;
    std::optional<std::string> task;

    std::size_t size() const { return steps.size(); }
    ActionId front() const { return steps.front(); }
    ActionId back() const { return steps.back(); }

    friend bool operator==(const PlanSequence&, const PlanSequence&) = default;
};

/// Immutable once built; all plans reference `vocabulary`.
struct PlanCorpus {
    ActionVocabulary vocabulary;
    std::vector<PlanSequence> plans;

    std::size_t num_actions() const { return vocabulary.size(); }

    /// Throws Error if any plan is shorter than 2 or references an unknown id.
    void validate() const;

    /// Plans whose length equals `horizon`, in corpus order.
    std::vector<std::size_t> indices_with_length(std::size_t horizon) const;
};

using Observation = std::vector<double>;

struct ObservationPair {
    Observation start;
    Observation goal;

    friend bool operator==(const ObservationPair&, const ObservationPair&) = default;
};

// ---- corpus I/O -------------------------------------------------------------

/// Line-delimited JSON: one `{"task": string?, "steps": [string, ...]}` per line.
/// Blank lines are skipped. Errors report the 1-based line number.
PlanCorpus parse_corpus(std::string_view text);
PlanCorpus load_corpus(const std::filesystem::path& path);

/// Parses using an existing vocabulary; unknown names are an error.
PlanCorpus parse_corpus(std::string_view text, const ActionVocabulary& vocabulary);

std::string serialize_corpus(const PlanCorpus& corpus);

/// JSON array of names, in id order.
std::string serialize_vocabulary(const ActionVocabulary& vocabulary);
ActionVocabulary parse_vocabulary(std::string_view text);

/// One `{"start": [...], "goal": [...]}` per line, aligned with the corpus plans.
std::string serialize_observations(const std::vector<ObservationPair>& observations);
std::vector<ObservationPair> parse_observations(std::string_view text);

// ---- transition statistics --------------------------------------------------

/// |A| x |A| matrix; entry (i, j) is the fraction of transitions out of i that go
/// to j. Rows without outgoing transitions are all zero.
Matrix transition_heatmap(const PlanCorpus& corpus);

/// CSV, row i = from-action i. First line is a header of action names.
std::string heatmap_csv(const Matrix& heatmap, const ActionVocabulary& vocabulary);

// ---- synthetic data ---------------------------------------------------------

struct PlanTemplate {
    std::string task;
    std::vector<std::string> steps;
    double probability = 1.0;  // relative sampling weight
};

enum class EmbeddingKind { gaussian, identity };

struct SyntheticSpec {
    std::vector<PlanTemplate> templates;
    std::size_t num_plans = 100;
    std::size_t observation_dim = 16;
    double noise_sigma = 0.0;
    EmbeddingKind embedding = EmbeddingKind::gaussian;

    /// Throws Error on sigma < 0, no templates, template shorter than 2,
    /// nonpositive total weight or an identity embedding with dim != |A|.
    void validate() const;
};

/// `num_tasks` disjoint templates of `steps_per_task` distinct actions each,
/// named "t<k>_s<i>"; every template has equal probability.
SyntheticSpec disjoint_task_spec(std::size_t num_tasks, std::size_t steps_per_task,
                                 std::size_t num_plans, std::size_t observation_dim,
                                 double noise_sigma);

SyntheticSpec parse_synthetic_spec(std::string_view json_text);

struct SyntheticDataset {
    PlanCorpus corpus;
    std::vector<ObservationPair> observations;  // aligned with corpus.plans
    Matrix embedding;                           // |A| x d
};

/// Deterministic for a given seed. Observations are one-hot(a_1)·E + σ·N(0, 1)
/// and one-hot(a_T)·E + σ·N(0, 1).
SyntheticDataset generate_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed);

/// Noise-free observation of `action`: row `action` of the embedding.
Observation embed_action(const Matrix& embedding, ActionId action);

}  // namespace procplan
