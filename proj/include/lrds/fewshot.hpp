#pragma once

// Frozen-feature k-shot evaluation on the novel classes: linear and cosine
// classifiers fit on support features, a nearest-prototype classifier, and
// full-way top-1/top-5 scoring. Nothing here mutates the feature extractor.

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "lrds/data.hpp"
#include "lrds/model.hpp"

namespace lrds {

struct FeatureTable {
    int dim = 0;
    std::map<std::int64_t, std::vector<double>> features;  // instance id -> f
};

// Deterministic features for every novel support/query instance in the
// dataset. Model parameters are untouched.
FeatureTable embed_novel(const Model& model, const Dataset& data);

// The full-way task for one novel split: class list plus per-class support
// (always the stored 5) and query instance ids, all sorted ascending.
struct NovelTask {
    Split split = Split::novel_val;
    std::vector<std::int64_t> class_ids;
    struct PerClass {
        std::vector<std::int64_t> support;
        std::vector<std::int64_t> query;
    };
    std::vector<PerClass> classes;

    static NovelTask from_manifest(const BenchmarkManifest& m, Split split);
    int way() const { return static_cast<int>(class_ids.size()); }
    // k-shot support: the first k of the stored support list (k=1 uses the
    // deterministic index 0).
    std::vector<std::int64_t> support_for(int class_idx, int k) const;
};

struct ScoreTable {
    std::vector<std::int64_t> query_ids;
    std::vector<int> true_class;               // index into NovelTask::class_ids
    std::vector<std::vector<double>> scores;   // [query][way]
    bool degenerate_support = false;           // identical support across classes
};

struct FitOptions {
    double l2 = 1e-4;
    int max_iters = 1000;
    double grad_tol = 1e-6;
    double cosine_scale = 10.0;
};

struct LinearClassifier {
    Tensor weight;  // way x dim
    Tensor bias;    // way
    int iters = 0;
    double final_grad_norm = 0;
};
LinearClassifier fit_linear(const FeatureTable& table, const NovelTask& task, int k,
                            const FitOptions& opts = {});
ScoreTable score_linear(const LinearClassifier& clf, const FeatureTable& table,
                        const NovelTask& task, int k);

struct CosineClassifier {
    Tensor weight;  // way x dim
    double scale = 10.0;
    int iters = 0;
    double final_grad_norm = 0;
};
CosineClassifier fit_cosine(const FeatureTable& table, const NovelTask& task, int k,
                            const FitOptions& opts = {});
ScoreTable score_cosine(const CosineClassifier& clf, const FeatureTable& table,
                        const NovelTask& task, int k);

// Nearest class prototype (mean of the k support features, Euclidean).
ScoreTable prototype_classify(const FeatureTable& table, const NovelTask& task, int k);

struct Topk {
    double top1 = 0;  // percentages
    double top5 = 0;
};
// Ties rank by ascending class index.
Topk score_topk(const ScoreTable& table);

struct EvalReport {
    std::string regime = "full";
    int k_shot = 5;
    int way = 0;
    std::string classifier;  // linear | cosine | proto
    double top1 = 0;
    double top5 = 0;
    std::uint64_t seed = 0;
    std::string support_id;  // hash of the support instance ids
    bool degenerate_support = false;
};
std::string eval_csv(const std::vector<EvalReport>& rows, const std::string& command = "");
nlohmann::json eval_summary_json(const std::vector<EvalReport>& rows);

std::string support_set_id(const NovelTask& task, int k);

}  // namespace lrds
