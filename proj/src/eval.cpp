#include "procplan/eval.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "procplan/error.hpp"

namespace procplan {

using nlohmann::json;

namespace {

void check_pairs(std::span<const ActionSequence> preds, std::span<const ActionSequence> gts) {
    if (preds.size() != gts.size())
        throw Error("length_mismatch", "have " + std::to_string(preds.size()) + " predictions for " +
                                           std::to_string(gts.size()) + " ground truths");
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i].size() != gts[i].size())
            throw Error("length_mismatch", "pair " + std::to_string(i) + " differs in length");
}

double position_accuracy(const ActionSequence& pred, const ActionSequence& gt) {
    if (gt.empty()) return 1.0;
    std::size_t hits = 0;
    for (std::size_t t = 0; t < gt.size(); ++t) hits += pred[t] == gt[t];
    return static_cast<double>(hits) / static_cast<double>(gt.size());
}

double set_iou(const std::set<ActionId>& a, const std::set<ActionId>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = 0;
    for (ActionId x : a) inter += b.count(x);
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

}  // namespace

double success_rate(std::span<const ActionSequence> preds, std::span<const ActionSequence> gts) {
    check_pairs(preds, gts);
    if (preds.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == gts[i];
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double mean_accuracy(std::span<const ActionSequence> preds, std::span<const ActionSequence> gts) {
    check_pairs(preds, gts);
    if (preds.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) total += position_accuracy(preds[i], gts[i]);
    return total / static_cast<double>(preds.size());
}

double sequence_iou(const ActionSequence& pred, const ActionSequence& gt) {
    return set_iou({pred.begin(), pred.end()}, {gt.begin(), gt.end()});
}

double miou(std::span<const ActionSequence> preds, std::span<const ActionSequence> gts, MiouMode mode,
            std::size_t batch_size) {
    check_pairs(preds, gts);
    if (preds.empty()) return 0.0;
    if (mode == MiouMode::per_sequence) {
        double total = 0.0;
        for (std::size_t i = 0; i < preds.size(); ++i) total += sequence_iou(preds[i], gts[i]);
        return total / static_cast<double>(preds.size());
    }
    if (batch_size == 0) throw Error("invalid_config", "batch size must be >= 1");
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t first = 0; first < preds.size(); first += batch_size) {
        const std::size_t last = std::min(preds.size(), first + batch_size);
        std::set<ActionId> p, g;
        for (std::size_t i = first; i < last; ++i) {
            p.insert(preds[i].begin(), preds[i].end());
            g.insert(gts[i].begin(), gts[i].end());
        }
        total += set_iou(p, g);
        ++batches;
    }
    return total / static_cast<double>(batches);
}

std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) {
    std::uint64_t z = seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(index) + 1));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

MetricsReport score(std::span<const Prediction> predictions, std::span<const EvalSample> split,
                    const EvalConfig& config, std::uint64_t seed) {
    if (predictions.size() != split.size())
        throw Error("length_mismatch", "one prediction per sample required");
    if (split.empty()) throw Error("empty_dataset", "evaluation split is empty");

    std::vector<ActionSequence> preds, gts;
    preds.reserve(split.size());
    gts.reserve(split.size());
    for (std::size_t i = 0; i < split.size(); ++i) {
        preds.push_back(predictions[i].steps);
        gts.push_back(split[i].ground_truth.steps);
    }

    MetricsReport report;
    report.n_samples = split.size();
    report.success_rate = success_rate(preds, gts);
    report.mean_accuracy = mean_accuracy(preds, gts);
    if (config.mode == MiouMode::per_batch && config.shuffle_batches) {
        std::vector<std::size_t> order(split.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<ActionSequence> sp, sg;
        for (std::size_t i : order) {
            sp.push_back(preds[i]);
            sg.push_back(gts[i]);
        }
        report.miou = miou(sp, sg, config.mode, config.batch_size);
    } else {
        report.miou = miou(preds, gts, config.mode, config.batch_size);
    }

    std::size_t with_endpoints = 0, start_hits = 0, end_hits = 0;
    for (std::size_t i = 0; i < split.size(); ++i) {
        const auto& p = predictions[i];
        report.fallbacks += p.fallback_used;
        if (p.predicted_start && p.predicted_end) {
            ++with_endpoints;
            start_hits += *p.predicted_start == split[i].ground_truth.front();
            end_hits += *p.predicted_end == split[i].ground_truth.back();
        }
        if (config.keep_records) report.records.push_back({p.steps, gts[i], p.fallback_used});
    }
    if (with_endpoints > 0) {
        report.start_accuracy = static_cast<double>(start_hits) / static_cast<double>(with_endpoints);
        report.end_accuracy = static_cast<double>(end_hits) / static_cast<double>(with_endpoints);
    }
    return report;
}

MetricsReport evaluate(const PlannerFn& planner, std::span<const EvalSample> split, const EvalConfig& config,
                       std::uint64_t seed) {
    if (split.empty()) throw Error("empty_dataset", "evaluation split is empty");
    std::vector<Prediction> predictions(split.size());
    const auto n = static_cast<std::ptrdiff_t>(split.size());
    // Exceptions must not escape the parallel region; keep the first one.
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            const auto idx = static_cast<std::size_t>(i);
            predictions[idx] = planner(split[idx], sample_seed(seed, idx));
        } catch (...) {
#pragma omp critical(procplan_eval_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return score(predictions, split, config, seed);
}

MetricsReport evaluate_serial(const PlannerFn& planner, std::span<const EvalSample> split,
                              const EvalConfig& config, std::uint64_t seed) {
    if (split.empty()) throw Error("empty_dataset", "evaluation split is empty");
    std::vector<Prediction> predictions;
    predictions.reserve(split.size());
    for (std::size_t i = 0; i < split.size(); ++i) predictions.push_back(planner(split[i], sample_seed(seed, i)));
    return score(predictions, split, config, seed);
}

std::string report_to_json(const MetricsReport& report, const ActionVocabulary* vocabulary) {
    json j;
    j["success_rate"] = report.success_rate;
    j["mean_accuracy"] = report.mean_accuracy;
    j["miou"] = report.miou;
    j["n_samples"] = report.n_samples;
    j["fallbacks"] = report.fallbacks;
    j["start_accuracy"] = report.start_accuracy ? json(*report.start_accuracy) : json(nullptr);
    j["end_accuracy"] = report.end_accuracy ? json(*report.end_accuracy) : json(nullptr);
    if (!report.records.empty()) {
        auto names = [&](const ActionSequence& s) {
            json out = json::array();
            for (ActionId a : s) {
                if (vocabulary && a < vocabulary->size())
                    out.push_back(vocabulary->name(a));
                else
                    out.push_back(a);
            }
            return out;
        };
        json records = json::array();
        for (const auto& r : report.records)
            records.push_back({{"prediction", names(r.prediction)},
                               {"ground_truth", names(r.ground_truth)},
                               {"fallback_used", r.fallback_used}});
        j["records"] = std::move(records);
    }
    return j.dump(2) + "\n";
}

std::string report_to_csv(const MetricsReport& report) {
    std::ostringstream out;
    out.precision(17);
    out << "success_rate,mean_accuracy,miou,n_samples,fallbacks,start_accuracy,end_accuracy\n";
    out << report.success_rate << ',' << report.mean_accuracy << ',' << report.miou << ',' << report.n_samples
        << ',' << report.fallbacks << ',';
    if (report.start_accuracy) out << *report.start_accuracy;
    out << ',';
    if (report.end_accuracy) out << *report.end_accuracy;
    out << '\n';
    return out.str();
}

}  // namespace procplan
