#include "lrds/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "lrds/checkpoint.hpp"
#include "lrds/error.hpp"
#include "lrds/image.hpp"

namespace lrds {

double cosine_lr(double lr0, std::int64_t t, std::int64_t total_steps) {
    if (total_steps <= 0) return lr0;
    const double phase = static_cast<double>(t) / static_cast<double>(total_steps);
    return lr0 * 0.5 * (1.0 + std::cos(M_PI * phase));
}

void TrainingPlan::validate(const SupervisionConfig& config) const {
    config.validate();
    check(!stages.empty(), "training plan has no stages");
    check(batch_size >= 1, "training plan: batch size must be >= 1");
    std::set<HeadKind> covered;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const StageConfig& st = stages[i];
        check(!st.heads.empty(), "stage ", i + 1, " has no active heads");
        check(st.epochs >= 1, "stage ", i + 1, ": epochs must be >= 1");
        for (HeadKind h : st.heads) {
            check(config.heads.count(h) == 1, "stage ", i + 1, " activates head ", to_string(h),
                  " that is not enabled in the supervision config");
            covered.insert(h);
        }
    }
    const bool rotation_pretrain =
        stages.front().heads.size() == 1 && stages.front().heads.front() == HeadKind::rotation;
    if (!rotation_pretrain) {
        const auto& first = stages.front().heads;
        check(std::find(first.begin(), first.end(), HeadKind::cls) != first.end(),
              "stage 1 must include the cls head (rotation-pretrain is the only exception)");
    }
    for (HeadKind h : config.heads)
        check(covered.count(h) == 1, "enabled head ", to_string(h), " appears in no stage");
}

std::vector<StageConfig> plan_stages(const SupervisionConfig& config, int epochs_per_stage,
                                     double lr0) {
    config.validate();
    std::vector<StageConfig> stages;
    if (config.mode == SupervisionConfig::Mode::MTL) {
        StageConfig st;
        for (HeadKind h : all_heads())
            if (config.heads.count(h)) st.heads.push_back(h);
        st.epochs = epochs_per_stage;
        st.lr0 = lr0;
        stages.push_back(std::move(st));
    } else {
        StageConfig st;
        st.heads = {HeadKind::cls};
        st.epochs = epochs_per_stage;
        st.lr0 = lr0;
        stages.push_back(st);
        for (HeadKind h : config.cl_order) {
            StageConfig next = stages.back();
            next.heads.push_back(h);
            stages.push_back(std::move(next));
        }
    }
    return stages;
}

std::vector<StageConfig> rotation_pretrain_stages(const SupervisionConfig& config,
                                                  int pretrain_epochs, int epochs_per_stage,
                                                  double lr0) {
    check(config.heads.count(HeadKind::rotation) == 1,
          "rotation pretrain requires the rotation head to be enabled");
    std::vector<StageConfig> stages;
    stages.push_back(StageConfig{{HeadKind::rotation}, pretrain_epochs, lr0});
    for (auto& st : plan_stages(config, epochs_per_stage, lr0)) stages.push_back(std::move(st));
    return stages;
}

double LossBreakdown::weighted(HeadKind h, const SupervisionConfig& config) const {
    auto it = head_loss.find(h);
    return it == head_loss.end() ? 0.0 : config.weight(h) * it->second;
}

namespace {

bool head_active(const std::vector<HeadKind>& active, HeadKind h) {
    return std::find(active.begin(), active.end(), h) != active.end();
}

void check_finite(double v, HeadKind h) {
    check(std::isfinite(v), "non-finite loss from head ", to_string(h));
}

}  // namespace

LossBreakdown total_loss(Model& model, const Dataset& data, const std::vector<int>& batch,
                         const SupervisionConfig& config, const std::vector<HeadKind>& active,
                         bool with_grad, std::uint64_t edit_seed) {
    for (HeadKind h : active)
        check(config.heads.count(h) == 1, "total_loss: head ", to_string(h),
              " is active but not enabled in the supervision config");
    check(!batch.empty(), "total_loss: empty batch");

    LossBreakdown out;
    for (HeadKind h : active) out.head_loss[h] = 0.0;
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    const auto weight_scale = [&](HeadKind h) {
        return with_grad ? config.weight(h) * inv_batch : 0.0;
    };

    for (int idx : batch) {
        const TrainSample& sample = data.samples[static_cast<std::size_t>(idx)];
        Extractor::State state;
        const Tensor map =
            with_grad ? model.extractor.forward(sample.image, &state) : model.feature_map(sample.image);
        Tensor dmap(map.shape);
        bool map_grad_used = false;

        for (const auto& obj : sample.objects) {
            if (obj.subset != Subset::base_train) continue;
            const bool need_region =
                head_active(active, HeadKind::cls) || head_active(active, HeadKind::attribute) ||
                head_active(active, HeadKind::hierarchy) || head_active(active, HeadKind::part) ||
                head_active(active, HeadKind::bbox) || head_active(active, HeadKind::seg_region);
            if (!need_region) continue;
            const Tensor crop = model.aligned_crop(map, obj.region);
            const Tensor flat = flatten(crop);
            const Tensor f_pre = model.region_proj.forward(flat);
            const double f_scale = 1.0 / std::sqrt(static_cast<double>(model.config.feature_dim));
            Tensor f = nn::layer_norm(f_pre);
            f.scale(f_scale);
            Tensor df({model.config.feature_dim});
            Tensor dcrop(crop.shape);
            bool crop_grad_used = false;
            bool f_grad_used = false;
            Tensor* dfp = with_grad ? &df : nullptr;

            if (head_active(active, HeadKind::cls)) {
                check(obj.cls_label >= 0, "instance ", obj.instance_id,
                      ": no base-class label for the cls head");
                const double l = model.cls.forward(f, obj.cls_label, dfp, weight_scale(HeadKind::cls));
                check_finite(l, HeadKind::cls);
                out.head_loss[HeadKind::cls] += l;
                f_grad_used = true;
            }
            if (head_active(active, HeadKind::attribute) && !obj.masked.count(HeadKind::attribute) &&
                !obj.attr_bits.empty()) {
                const double l =
                    model.attribute.forward(f, obj.attr_bits, dfp, weight_scale(HeadKind::attribute));
                check_finite(l, HeadKind::attribute);
                out.head_loss[HeadKind::attribute] += l;
                f_grad_used = true;
            }
            if (head_active(active, HeadKind::hierarchy) && !obj.masked.count(HeadKind::hierarchy) &&
                obj.hier_valid) {
                const double l = model.hierarchy.forward(f, obj.hier_labels, dfp,
                                                         weight_scale(HeadKind::hierarchy));
                check_finite(l, HeadKind::hierarchy);
                out.head_loss[HeadKind::hierarchy] += l;
                f_grad_used = true;
            }
            if (head_active(active, HeadKind::part) && !obj.masked.count(HeadKind::part) &&
                !obj.part_bits.empty()) {
                const double l = model.part.forward(f, obj.part_bits, dfp, weight_scale(HeadKind::part));
                check_finite(l, HeadKind::part);
                out.head_loss[HeadKind::part] += l;
                f_grad_used = true;
            }
            if (head_active(active, HeadKind::bbox) && !obj.masked.count(HeadKind::bbox)) {
                const double l =
                    model.bbox.forward(f, obj.region, obj.tight, dfp, weight_scale(HeadKind::bbox));
                check_finite(l, HeadKind::bbox);
                out.head_loss[HeadKind::bbox] += l;
                f_grad_used = true;
            }
            if (head_active(active, HeadKind::seg_region) && !obj.masked.count(HeadKind::seg_region) &&
                obj.mask) {
                const auto cells = region_mask_targets(*obj.mask, obj.region, model.config.mask_res);
                const double l = model.seg_region.forward(crop, cells, with_grad ? &dcrop : nullptr,
                                                          weight_scale(HeadKind::seg_region));
                check_finite(l, HeadKind::seg_region);
                out.head_loss[HeadKind::seg_region] += l;
                crop_grad_used = true;
            }

            if (with_grad && (f_grad_used || crop_grad_used)) {
                if (f_grad_used) {
                    df.scale(f_scale);
                    const Tensor dpre = nn::layer_norm_backward(f_pre, df);
                    Tensor dflat = model.region_proj.backward(flat, dpre);
                    dcrop += reshape(dflat, crop.shape);
                }
                roi_align_backward(map.shape, obj.region, model.config.roi, dcrop, dmap);
                map_grad_used = true;
            }
        }

        if (head_active(active, HeadKind::seg_fcn) && !sample.masked.count(HeadKind::seg_fcn) &&
            sample.seg_fcn_labels) {
            const double l = model.seg_fcn.forward(map, *sample.seg_fcn_labels,
                                                   with_grad ? &dmap : nullptr,
                                                   weight_scale(HeadKind::seg_fcn));
            check_finite(l, HeadKind::seg_fcn);
            out.head_loss[HeadKind::seg_fcn] += l;
            map_grad_used = true;
        }
        if (head_active(active, HeadKind::stuff) && !sample.masked.count(HeadKind::stuff)) {
            const auto& labels = model.stuff.combined ? sample.stuff_combined : sample.stuff_plain;
            if (labels) {
                const double l = model.stuff.forward(map, *labels, with_grad ? &dmap : nullptr,
                                                     weight_scale(HeadKind::stuff));
                check_finite(l, HeadKind::stuff);
                out.head_loss[HeadKind::stuff] += l;
                map_grad_used = true;
            }
        }
        if (head_active(active, HeadKind::scene) && !sample.masked.count(HeadKind::scene) &&
            sample.scene_label) {
            const double l = model.scene.forward(map, *sample.scene_label,
                                                 with_grad ? &dmap : nullptr,
                                                 weight_scale(HeadKind::scene));
            check_finite(l, HeadKind::scene);
            out.head_loss[HeadKind::scene] += l;
            map_grad_used = true;
        }

        if (with_grad && map_grad_used) model.extractor.backward(state, dmap);

        // Self-supervision runs its own extractor pass over the edited image.
        // Draws are keyed per head so the active set does not shift streams.
        const std::uint64_t image_edit_seed =
            derive_seed(edit_seed, static_cast<std::uint64_t>(sample.image_id));
        if (head_active(active, HeadKind::rotation)) {
            Rng edit_rng(derive_seed(image_edit_seed, "rotation"));
            const int k = static_cast<int>(edit_rng.next_below(4));
            const Tensor rotated = rotate90(sample.image, k);
            Extractor::State rstate;
            const Tensor rmap = with_grad ? model.extractor.forward(rotated, &rstate)
                                          : model.feature_map(rotated);
            Tensor drmap(rmap.shape);
            const double l = model.rotation.forward(rmap, k, with_grad ? &drmap : nullptr,
                                                    weight_scale(HeadKind::rotation));
            check_finite(l, HeadKind::rotation);
            out.head_loss[HeadKind::rotation] += l;
            if (with_grad) model.extractor.backward(rstate, drmap);
        }
        if (head_active(active, HeadKind::patch_location)) {
            Rng edit_rng(derive_seed(image_edit_seed, "patch_location"));
            const PatchPair pair = patch_location_edit(sample.image, edit_rng);
            Extractor::State cstate, nstate;
            const Tensor cmap = with_grad ? model.extractor.forward(pair.center, &cstate)
                                          : model.feature_map(pair.center);
            const Tensor nmap = with_grad ? model.extractor.forward(pair.neighbor, &nstate)
                                          : model.feature_map(pair.neighbor);
            Tensor dcmap(cmap.shape), dnmap(nmap.shape);
            const double l = model.patch_location.forward(
                cmap, nmap, pair.label, with_grad ? &dcmap : nullptr, with_grad ? &dnmap : nullptr,
                weight_scale(HeadKind::patch_location));
            check_finite(l, HeadKind::patch_location);
            out.head_loss[HeadKind::patch_location] += l;
            if (with_grad) {
                model.extractor.backward(cstate, dcmap);
                model.extractor.backward(nstate, dnmap);
            }
        }
    }

    out.total = 0;
    for (auto& [h, l] : out.head_loss) {
        l *= inv_batch;
        out.total += config.weight(h) * l;
    }
    if (out.total > 1e6) {
        std::ostringstream os;
        os << "training diverged: total loss " << out.total << " (";
        for (const auto& [h, l] : out.head_loss) os << to_string(h) << "=" << l << " ";
        os << ")";
        raise(os.str());
    }
    return out;
}

double cls_accuracy(const Model& model, const Dataset& data, Subset subset) {
    std::int64_t correct = 0, total = 0;
    for (const auto& sample : data.samples) {
        bool needs_map = false;
        for (const auto& obj : sample.objects)
            if (obj.subset == subset && obj.cls_label >= 0) needs_map = true;
        if (!needs_map) continue;
        const Tensor map = model.feature_map(sample.image);
        for (const auto& obj : sample.objects) {
            if (obj.subset != subset || obj.cls_label < 0) continue;
            const Tensor f = model.region_feature_from_crop(model.aligned_crop(map, obj.region));
            const Tensor logits = model.cls.fc.forward(f);
            int best = 0;
            for (std::int64_t i = 1; i < logits.numel(); ++i)
                if (logits[static_cast<std::size_t>(i)] > logits[static_cast<std::size_t>(best)])
                    best = static_cast<int>(i);
            correct += best == obj.cls_label ? 1 : 0;
            ++total;
        }
    }
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

std::string metrics_csv(const std::vector<MetricsRow>& rows, const std::string& command) {
    std::ostringstream os;
    if (!command.empty()) os << "# command: " << command << "\n";
    os << "step,stage,head,loss,lr,acc\n";
    for (const auto& r : rows) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%lld,%d,%s,%.8g,%.8g,", static_cast<long long>(r.step),
                      r.stage, r.head.c_str(), r.loss, r.lr);
        os << buf;
        if (r.acc) {
            std::snprintf(buf, sizeof buf, "%.4f", *r.acc);
            os << buf;
        }
        os << "\n";
    }
    return os.str();
}

TrainResult run_stage(Model& model, const Dataset& data, const SupervisionConfig& config,
                      const TrainingPlan& plan, int stage_idx, const RunHooks& hooks) {
    const StageConfig& stage = plan.stages[static_cast<std::size_t>(stage_idx)];
    std::vector<int> pool = data.sample_indices_with_train_objects();
    if (pool.empty()) pool = data.all_indices();
    check(!pool.empty(), "run_stage: dataset is empty");

    const std::int64_t steps_per_epoch =
        (static_cast<std::int64_t>(pool.size()) + plan.batch_size - 1) / plan.batch_size;
    const std::int64_t total_steps = steps_per_epoch * stage.epochs;

    nn::SgdMomentum sgd(model.params(), plan.momentum, plan.weight_decay);
    const int first_epoch = stage_idx == hooks.start_stage ? hooks.start_epoch : 0;
    if (first_epoch > 0 && hooks.restore_optimizer) hooks.restore_optimizer(sgd);

    const std::uint64_t order_seed =
        derive_seed(derive_seed(plan.seed, "data_order"), static_cast<std::uint64_t>(stage_idx));
    const std::uint64_t edit_base =
        derive_seed(derive_seed(plan.seed, "edit"), static_cast<std::uint64_t>(stage_idx));

    TrainResult result;
    for (int epoch = first_epoch; epoch < stage.epochs; ++epoch) {
        std::vector<int> order = pool;
        Rng shuffle_rng(derive_seed(order_seed, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double epoch_total = 0;
        std::map<HeadKind, double> epoch_heads;
        double last_lr = 0;
        std::int64_t steps_done = 0;
        for (std::int64_t s = 0; s < steps_per_epoch; ++s) {
            const std::int64_t t = epoch * steps_per_epoch + s;
            const double lr = cosine_lr(stage.lr0, t, total_steps);
            last_lr = lr;
            std::vector<int> batch;
            for (int b = 0; b < plan.batch_size; ++b) {
                const std::size_t k = static_cast<std::size_t>(s) * plan.batch_size + b;
                if (k >= order.size()) break;
                batch.push_back(order[k]);
            }
            sgd.zero_grad();
            const LossBreakdown loss =
                total_loss(model, data, batch, config, stage.heads, true,
                           derive_seed(edit_base, static_cast<std::uint64_t>(t)));
            sgd.step(lr);
            epoch_total += loss.total;
            for (const auto& [h, l] : loss.head_loss) epoch_heads[h] += l;
            ++steps_done;
        }

        EpochInfo info;
        info.stage = stage_idx;
        info.epoch = epoch;
        info.step_end = (epoch + 1) * steps_per_epoch;
        info.mean_total = epoch_total / static_cast<double>(steps_done);
        for (auto& [h, l] : epoch_heads) info.mean_heads[h] = l / static_cast<double>(steps_done);
        info.last_lr = last_lr;
        info.base_val_acc = cls_accuracy(model, data, Subset::base_val);

        for (const auto& [h, l] : info.mean_heads)
            result.metrics.push_back(
                MetricsRow{info.step_end, stage_idx + 1, to_string(h), l, last_lr, std::nullopt});
        result.metrics.push_back(MetricsRow{info.step_end, stage_idx + 1, "total", info.mean_total,
                                            last_lr, info.base_val_acc});
        result.final_train_loss = info.mean_total;
        if (hooks.on_epoch_end) hooks.on_epoch_end(info, model, sgd);
    }
    return result;
}

TrainResult run_plan(Model& model, const Dataset& data, const SupervisionConfig& config,
                     const TrainingPlan& plan, const RunHooks& hooks) {
    plan.validate(config);
    TrainResult result;
    for (int s = hooks.start_stage; s < static_cast<int>(plan.stages.size()); ++s) {
        if (hooks.on_stage_start)
            hooks.on_stage_start(s, plan.stages[static_cast<std::size_t>(s)], model);
        const TrainResult stage_result = run_stage(model, data, config, plan, s, hooks);
        result.metrics.insert(result.metrics.end(), stage_result.metrics.begin(),
                              stage_result.metrics.end());
        result.final_train_loss = stage_result.final_train_loss;
        if (hooks.on_stage_end)
            hooks.on_stage_end(s, plan.stages[static_cast<std::size_t>(s)], model);
    }
    return result;
}

void save_train_state(const std::string& path, Model& model, const nn::SgdMomentum& sgd,
                      int stage, int epochs_done, const std::string& command) {
    nlohmann::json meta;
    meta["config"] = model.config.to_json();
    meta["config_hash"] = model.config.hash();
    meta["spaces"] = model.spaces.to_json();
    meta["train_state"] = nlohmann::json{{"stage", stage}, {"epochs_done", epochs_done}};
    if (!command.empty()) meta["command"] = command;
    std::vector<std::pair<std::string, const Tensor*>> arrays;
    const auto named = model.named_params();
    for (const auto& [name, p] : named) arrays.emplace_back(name, &p->value);
    const auto& vel = sgd.velocity();
    check(vel.size() == named.size(), "optimizer state does not match the model");
    for (std::size_t i = 0; i < named.size(); ++i)
        arrays.emplace_back("velocity." + named[i].first, &vel[i]);
    save_checkpoint(path, meta, arrays);
}

ResumeInfo load_train_state(const std::string& path, Model& model) {
    const Checkpoint ckpt = load_checkpoint(path);
    check(ckpt.meta.contains("train_state"), path, ": not a training-state checkpoint");
    check(ckpt.meta.at("config_hash").get<std::string>() == model.config.hash(), path,
          ": config hash mismatch");
    ResumeInfo info;
    info.stage = ckpt.meta["train_state"].at("stage").get<int>();
    info.epochs_done = ckpt.meta["train_state"].at("epochs_done").get<int>();
    for (auto& [name, p] : model.named_params()) {
        p->value = ckpt.require(name);
        info.velocity.push_back(ckpt.require("velocity." + name));
    }
    return info;
}

}  // namespace lrds
