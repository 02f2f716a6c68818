#pragma once

// Training orchestration: per-batch weighted-sum loss over the active heads,
// SGD with momentum under a per-stage cosine schedule, and multi-stage plans
// (MTL applies every head at once, CL adds them one stage at a time; the
// rotation-pretrain preset runs a rotation-only stage first). The optimizer
// and the cosine schedule restart at every stage boundary.

#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "lrds/data.hpp"
#include "lrds/model.hpp"

namespace lrds {

double cosine_lr(double lr0, std::int64_t t, std::int64_t total_steps);

struct StageConfig {
    std::vector<HeadKind> heads;  // active set for the stage
    int epochs = 1;
    double lr0 = 0.1;
};

struct TrainingPlan {
    std::vector<StageConfig> stages;
    int batch_size = 8;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;

    // Checks stage/head consistency against the supervision config: stage 1
    // must include cls unless it is a rotation-only pretrain stage, and every
    // enabled head must appear in at least one stage.
    void validate(const SupervisionConfig& config) const;
};

// MTL: one stage, all enabled heads. CL: [cls], then one auxiliary head added
// per stage following config.cl_order. Equal epoch budget per stage.
std::vector<StageConfig> plan_stages(const SupervisionConfig& config, int epochs_per_stage,
                                     double lr0);
// Rotation-only stage followed by the stages above.
std::vector<StageConfig> rotation_pretrain_stages(const SupervisionConfig& config,
                                                  int pretrain_epochs, int epochs_per_stage,
                                                  double lr0);

struct LossBreakdown {
    double total = 0;
    std::map<HeadKind, double> head_loss;  // unweighted batch-mean L_s per head

    double weighted(HeadKind h, const SupervisionConfig& config) const;
};

// Batch loss L = L_cls + sum_s w_s L_s over the active heads, averaged over
// the batch images. with_grad accumulates parameter gradients of the weighted
// total. edit_seed drives the self-supervision editing draws. Throws when a
// head produces a non-finite term, naming the head.
LossBreakdown total_loss(Model& model, const Dataset& data, const std::vector<int>& batch,
                         const SupervisionConfig& config, const std::vector<HeadKind>& active,
                         bool with_grad, std::uint64_t edit_seed);

// Top-1 classification accuracy over instances of the subset (region
// features through the cls head), in [0, 100].
double cls_accuracy(const Model& model, const Dataset& data, Subset subset);

struct MetricsRow {
    std::int64_t step = 0;
    int stage = 0;
    std::string head;  // head name or "total"
    double loss = 0;
    double lr = 0;
    std::optional<double> acc;  // base-val accuracy, on the total row only
};
std::string metrics_csv(const std::vector<MetricsRow>& rows, const std::string& command = "");

struct EpochInfo {
    int stage = 0;
    int epoch = 0;
    std::int64_t step_end = 0;   // global step count after this epoch
    double mean_total = 0;
    std::map<HeadKind, double> mean_heads;
    double last_lr = 0;
    double base_val_acc = 0;
};

struct RunHooks {
    std::function<void(const EpochInfo&, Model&, nn::SgdMomentum&)> on_epoch_end;
    std::function<void(int stage, const StageConfig&, Model&)> on_stage_start;
    std::function<void(int stage, const StageConfig&, Model&)> on_stage_end;
    // Resume position: stage index and epochs already completed within it.
    int start_stage = 0;
    int start_epoch = 0;
    // Applied to the freshly created optimizer of start_stage (velocity restore).
    std::function<void(nn::SgdMomentum&)> restore_optimizer;
};

struct TrainResult {
    std::vector<MetricsRow> metrics;
    double final_train_loss = 0;  // mean batch loss of the last epoch
};

TrainResult run_stage(Model& model, const Dataset& data, const SupervisionConfig& config,
                      const TrainingPlan& plan, int stage_idx, const RunHooks& hooks = {});
TrainResult run_plan(Model& model, const Dataset& data, const SupervisionConfig& config,
                     const TrainingPlan& plan, const RunHooks& hooks = {});

// Training-state checkpoint: model parameters, optimizer velocity, and the
// (stage, epoch) position, in the shared checkpoint container.
void save_train_state(const std::string& path, Model& model, const nn::SgdMomentum& sgd,
                      int stage, int epochs_done, const std::string& command = "");
struct ResumeInfo {
    int stage = 0;
    int epochs_done = 0;
    std::vector<Tensor> velocity;
};
ResumeInfo load_train_state(const std::string& path, Model& model);

}  // namespace lrds
