#include "lrds/fewshot.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "lrds/error.hpp"

namespace lrds {

using nlohmann::json;

FeatureTable embed_novel(const Model& model, const Dataset& data) {
    FeatureTable table;
    table.dim = model.config.feature_dim;
    for (const auto& sample : data.samples) {
        bool any = false;
        for (const auto& obj : sample.objects)
            if (obj.subset == Subset::novel_support || obj.subset == Subset::novel_query) any = true;
        if (!any) continue;
        const Tensor map = model.feature_map(sample.image);
        for (const auto& obj : sample.objects) {
            if (obj.subset != Subset::novel_support && obj.subset != Subset::novel_query) continue;
            const Tensor f = model.region_feature_from_crop(model.aligned_crop(map, obj.region));
            table.features[obj.instance_id] = f.data;
        }
    }
    return table;
}

NovelTask NovelTask::from_manifest(const BenchmarkManifest& m, Split split) {
    check(split == Split::novel_val || split == Split::novel_test,
          "novel task split must be novel_val or novel_test");
    NovelTask task;
    task.split = split;
    std::map<std::int64_t, PerClass> by_class;
    for (const auto& c : m.categories)
        if (c.split == split) by_class[c.category_id] = PerClass{};
    for (const auto& inst : m.instances) {
        auto it = by_class.find(inst.category_id);
        if (it == by_class.end()) continue;
        if (inst.subset == Subset::novel_support) it->second.support.push_back(inst.instance_id);
        if (inst.subset == Subset::novel_query) it->second.query.push_back(inst.instance_id);
    }
    for (auto& [cid, cls] : by_class) {
        std::sort(cls.support.begin(), cls.support.end());
        std::sort(cls.query.begin(), cls.query.end());
        check(!cls.support.empty(), "novel category ", cid, " has no support instances");
        task.class_ids.push_back(cid);
        task.classes.push_back(std::move(cls));
    }
    return task;
}

std::vector<std::int64_t> NovelTask::support_for(int class_idx, int k) const {
    const auto& support = classes[static_cast<std::size_t>(class_idx)].support;
    check(k >= 1 && k <= static_cast<int>(support.size()), "k=", k, " outside stored support of ",
          support.size());
    return {support.begin(), support.begin() + k};
}

namespace {

const std::vector<double>& feature_of(const FeatureTable& table, std::int64_t id) {
    auto it = table.features.find(id);
    check(it != table.features.end(), "feature table is missing instance ", id);
    return it->second;
}

struct SupportSet {
    std::vector<std::vector<double>> x;  // n x dim
    std::vector<int> y;                  // class indices
    bool degenerate = false;
};

SupportSet gather_support(const FeatureTable& table, const NovelTask& task, int k) {
    SupportSet s;
    std::map<std::vector<double>, std::set<int>> seen;
    for (int c = 0; c < task.way(); ++c) {
        for (std::int64_t id : task.support_for(c, k)) {
            const auto& f = feature_of(table, id);
            s.x.push_back(f);
            s.y.push_back(c);
            seen[f].insert(c);
        }
    }
    for (const auto& [f, cls] : seen)
        if (cls.size() > 1) s.degenerate = true;
    return s;
}

ScoreTable make_score_table(const FeatureTable& table, const NovelTask& task,
                            const std::function<std::vector<double>(const std::vector<double>&)>& scorer,
                            bool degenerate) {
    ScoreTable out;
    out.degenerate_support = degenerate;
    for (int c = 0; c < task.way(); ++c) {
        for (std::int64_t id : task.classes[static_cast<std::size_t>(c)].query) {
            out.query_ids.push_back(id);
            out.true_class.push_back(c);
            out.scores.push_back(scorer(feature_of(table, id)));
        }
    }
    return out;
}

double squared_row_max(const std::vector<std::vector<double>>& x) {
    double best = 0;
    for (const auto& row : x) {
        double n = 0;
        for (double v : row) n += v * v;
        best = std::max(best, n);
    }
    return best;
}

}  // namespace

LinearClassifier fit_linear(const FeatureTable& table, const NovelTask& task, int k,
                            const FitOptions& opts) {
    const SupportSet s = gather_support(table, task, k);
    const int way = task.way();
    const int dim = table.dim;
    const int n = static_cast<int>(s.x.size());
    check(n > 0, "fit_linear: no support samples");

    LinearClassifier clf;
    clf.weight = Tensor({way, dim});
    clf.bias = Tensor({way});

    // Full-batch gradient descent on mean CE + (l2/2)||W||^2 with a step
    // bounded by the softmax Hessian: L <= 0.5 max||x||^2 + l2.
    const double step = 1.0 / (0.5 * squared_row_max(s.x) + opts.l2 + 0.5);
    Tensor gw({way, dim}), gb({way});
    for (int iter = 0; iter < opts.max_iters; ++iter) {
        gw.zero();
        gb.zero();
        for (int i = 0; i < n; ++i) {
            const auto& x = s.x[static_cast<std::size_t>(i)];
            std::vector<double> logits(static_cast<std::size_t>(way));
            for (int c = 0; c < way; ++c) {
                double acc = clf.bias[static_cast<std::size_t>(c)];
                const double* w = &clf.weight.data[static_cast<std::size_t>(c) * dim];
                for (int d = 0; d < dim; ++d) acc += w[d] * x[static_cast<std::size_t>(d)];
                logits[static_cast<std::size_t>(c)] = acc;
            }
            const double mx = *std::max_element(logits.begin(), logits.end());
            double denom = 0;
            for (double v : logits) denom += std::exp(v - mx);
            for (int c = 0; c < way; ++c) {
                const double p = std::exp(logits[static_cast<std::size_t>(c)] - mx) / denom;
                const double g = (p - (c == s.y[static_cast<std::size_t>(i)] ? 1.0 : 0.0)) / n;
                gb[static_cast<std::size_t>(c)] += g;
                double* gwc = &gw.data[static_cast<std::size_t>(c) * dim];
                for (int d = 0; d < dim; ++d) gwc[d] += g * x[static_cast<std::size_t>(d)];
            }
        }
        for (std::size_t i = 0; i < gw.data.size(); ++i) gw.data[i] += opts.l2 * clf.weight.data[i];
        double norm = 0;
        for (double v : gw.data) norm += v * v;
        for (double v : gb.data) norm += v * v;
        norm = std::sqrt(norm);
        clf.iters = iter + 1;
        clf.final_grad_norm = norm;
        if (norm < opts.grad_tol) break;
        for (std::size_t i = 0; i < gw.data.size(); ++i) clf.weight.data[i] -= step * gw.data[i];
        for (std::size_t i = 0; i < gb.data.size(); ++i) clf.bias.data[i] -= step * gb.data[i];
    }
    return clf;
}

ScoreTable score_linear(const LinearClassifier& clf, const FeatureTable& table,
                        const NovelTask& task, int k) {
    const SupportSet s = gather_support(table, task, k);
    const int way = task.way();
    const int dim = table.dim;
    return make_score_table(
        table, task,
        [&](const std::vector<double>& x) {
            std::vector<double> out(static_cast<std::size_t>(way));
            for (int c = 0; c < way; ++c) {
                double acc = clf.bias[static_cast<std::size_t>(c)];
                const double* w = &clf.weight.data[static_cast<std::size_t>(c) * dim];
                for (int d = 0; d < dim; ++d) acc += w[d] * x[static_cast<std::size_t>(d)];
                out[static_cast<std::size_t>(c)] = acc;
            }
            return out;
        },
        s.degenerate);
}

namespace {

std::vector<double> cosine_scores(const Tensor& weight, double scale, int way, int dim,
                                  const std::vector<double>& x) {
    double xn = 0;
    for (double v : x) xn += v * v;
    xn = std::sqrt(std::max(xn, 1e-12));
    std::vector<double> out(static_cast<std::size_t>(way));
    for (int c = 0; c < way; ++c) {
        const double* w = &weight.data[static_cast<std::size_t>(c) * dim];
        double dot = 0, wn = 0;
        for (int d = 0; d < dim; ++d) {
            dot += w[d] * x[static_cast<std::size_t>(d)];
            wn += w[d] * w[d];
        }
        wn = std::sqrt(std::max(wn, 1e-12));
        out[static_cast<std::size_t>(c)] = scale * dot / (wn * xn);
    }
    return out;
}

}  // namespace

CosineClassifier fit_cosine(const FeatureTable& table, const NovelTask& task, int k,
                            const FitOptions& opts) {
    const SupportSet s = gather_support(table, task, k);
    const int way = task.way();
    const int dim = table.dim;
    const int n = static_cast<int>(s.x.size());

    CosineClassifier clf;
    clf.scale = opts.cosine_scale;
    clf.weight = Tensor({way, dim});
    // Prototype initialization: per-class support mean.
    std::vector<int> counts(static_cast<std::size_t>(way), 0);
    for (int i = 0; i < n; ++i) {
        const int c = s.y[static_cast<std::size_t>(i)];
        counts[static_cast<std::size_t>(c)]++;
        for (int d = 0; d < dim; ++d)
            clf.weight.data[static_cast<std::size_t>(c) * dim + d] +=
                s.x[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)];
    }
    for (int c = 0; c < way; ++c)
        if (counts[static_cast<std::size_t>(c)] > 0)
            for (int d = 0; d < dim; ++d)
                clf.weight.data[static_cast<std::size_t>(c) * dim + d] /=
                    counts[static_cast<std::size_t>(c)];

    const double step = 0.5;
    Tensor gw({way, dim});
    for (int iter = 0; iter < opts.max_iters; ++iter) {
        gw.zero();
        for (int i = 0; i < n; ++i) {
            const auto& x = s.x[static_cast<std::size_t>(i)];
            const auto logits = cosine_scores(clf.weight, clf.scale, way, dim, x);
            const double mx = *std::max_element(logits.begin(), logits.end());
            double denom = 0;
            for (double v : logits) denom += std::exp(v - mx);
            double xn = 0;
            for (double v : x) xn += v * v;
            xn = std::sqrt(std::max(xn, 1e-12));
            for (int c = 0; c < way; ++c) {
                const double p = std::exp(logits[static_cast<std::size_t>(c)] - mx) / denom;
                const double g = (p - (c == s.y[static_cast<std::size_t>(i)] ? 1.0 : 0.0)) / n;
                double* wc = &clf.weight.data[static_cast<std::size_t>(c) * dim];
                double wn = 0, dot = 0;
                for (int d = 0; d < dim; ++d) {
                    wn += wc[d] * wc[d];
                    dot += wc[d] * x[static_cast<std::size_t>(d)];
                }
                wn = std::sqrt(std::max(wn, 1e-12));
                // d(scale * cos)/dw = scale * (x/(|w||x|) - cos * w/|w|^2)
                const double cosv = dot / (wn * xn);
                double* gwc = &gw.data[static_cast<std::size_t>(c) * dim];
                for (int d = 0; d < dim; ++d)
                    gwc[d] += g * clf.scale *
                              (x[static_cast<std::size_t>(d)] / (wn * xn) - cosv * wc[d] / (wn * wn));
            }
        }
        double norm = 0;
        for (double v : gw.data) norm += v * v;
        norm = std::sqrt(norm);
        clf.iters = iter + 1;
        clf.final_grad_norm = norm;
        if (norm < opts.grad_tol) break;
        for (std::size_t i = 0; i < gw.data.size(); ++i) clf.weight.data[i] -= step * gw.data[i];
    }
    return clf;
}

ScoreTable score_cosine(const CosineClassifier& clf, const FeatureTable& table,
                        const NovelTask& task, int k) {
    const SupportSet s = gather_support(table, task, k);
    const int way = task.way();
    const int dim = table.dim;
    return make_score_table(
        table, task,
        [&](const std::vector<double>& x) { return cosine_scores(clf.weight, clf.scale, way, dim, x); },
        s.degenerate);
}

ScoreTable prototype_classify(const FeatureTable& table, const NovelTask& task, int k) {
    const SupportSet s = gather_support(table, task, k);
    const int way = task.way();
    const int dim = table.dim;
    std::vector<std::vector<double>> proto(static_cast<std::size_t>(way),
                                           std::vector<double>(static_cast<std::size_t>(dim), 0));
    std::vector<int> counts(static_cast<std::size_t>(way), 0);
    for (std::size_t i = 0; i < s.x.size(); ++i) {
        const int c = s.y[i];
        counts[static_cast<std::size_t>(c)]++;
        for (int d = 0; d < dim; ++d) proto[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)] += s.x[i][static_cast<std::size_t>(d)];
    }
    for (int c = 0; c < way; ++c)
        for (int d = 0; d < dim; ++d)
            proto[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)] /= std::max(1, counts[static_cast<std::size_t>(c)]);
    return make_score_table(
        table, task,
        [&](const std::vector<double>& x) {
            std::vector<double> out(static_cast<std::size_t>(way));
            for (int c = 0; c < way; ++c) {
                double d2 = 0;
                for (int d = 0; d < dim; ++d) {
                    const double diff = x[static_cast<std::size_t>(d)] - proto[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)];
                    d2 += diff * diff;
                }
                out[static_cast<std::size_t>(c)] = -d2;
            }
            return out;
        },
        s.degenerate);
}

Topk score_topk(const ScoreTable& table) {
    check(!table.scores.empty(), "score_topk: no queries");
    const int way = static_cast<int>(table.scores.front().size());
    std::int64_t hit1 = 0, hit5 = 0;
    for (std::size_t q = 0; q < table.scores.size(); ++q) {
        const auto& row = table.scores[q];
        std::vector<int> order(static_cast<std::size_t>(way));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (row[static_cast<std::size_t>(a)] != row[static_cast<std::size_t>(b)])
                return row[static_cast<std::size_t>(a)] > row[static_cast<std::size_t>(b)];
            return a < b;  // ties by ascending class index
        });
        const int truth = table.true_class[q];
        for (int r = 0; r < std::min(way, 5); ++r) {
            if (order[static_cast<std::size_t>(r)] == truth) {
                if (r == 0) ++hit1;
                ++hit5;
                break;
            }
        }
    }
    Topk out;
    out.top1 = 100.0 * static_cast<double>(hit1) / static_cast<double>(table.scores.size());
    out.top5 = 100.0 * static_cast<double>(hit5) / static_cast<double>(table.scores.size());
    return out;
}

std::string support_set_id(const NovelTask& task, int k) {
    std::ostringstream os;
    for (int c = 0; c < task.way(); ++c)
        for (std::int64_t id : task.support_for(c, k)) os << id << ",";
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(os.str())));
    return buf;
}

std::string eval_csv(const std::vector<EvalReport>& rows, const std::string& command) {
    std::ostringstream os;
    if (!command.empty()) os << "# command: " << command << "\n";
    os << "regime,k_shot,way,classifier,top1,top5,seed,support_id,degenerate_support\n";
    for (const auto& r : rows) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s,%d,%d,%s,%.4f,%.4f,%llu,%s,%d", r.regime.c_str(),
                      r.k_shot, r.way, r.classifier.c_str(), r.top1, r.top5,
                      static_cast<unsigned long long>(r.seed), r.support_id.c_str(),
                      r.degenerate_support ? 1 : 0);
        os << buf << "\n";
    }
    return os.str();
}

json eval_summary_json(const std::vector<EvalReport>& rows) {
    json by_classifier = json::object();
    for (const auto& r : rows) {
        json& slot = by_classifier[r.classifier][std::to_string(r.k_shot) + "-shot"];
        slot["top1"] = r.top1;
        slot["top5"] = r.top5;
        slot["way"] = r.way;
        slot["regime"] = r.regime;
    }
    return json{{"results", by_classifier}};
}

}  // namespace lrds
