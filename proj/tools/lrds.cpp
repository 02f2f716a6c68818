// Command-line entry point: build benchmarks from annotations, derive
// data-scarcity regimes, train region-classification models with auxiliary
// supervision, evaluate frozen features on the novel classes, and render
// reports. Every stochastic command takes an explicit --seed and writes the
// producing command line into its artifacts.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lrds/benchgen.hpp"
#include "lrds/fewshot.hpp"
#include "lrds/regimes.hpp"
#include "lrds/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lrds;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "cannot open '", path, "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
    if (const fs::path parent = fs::path(path).parent_path(); !parent.empty())
        fs::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    check(out.good(), "cannot open '", path, "' for writing");
    out << text;
    check(out.good(), "write to '", path, "' failed");
}

std::string joined_command(int argc, char** argv) {
    std::string cmd;
    for (int i = 0; i < argc; ++i) {
        if (i) cmd += " ";
        cmd += argv[i];
    }
    return cmd;
}

std::string data_root_fallback(const std::string& flag_value, const std::string& manifest_path) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("LRDS_DATA_ROOT")) return env;
    const fs::path parent = fs::path(manifest_path).parent_path();
    return parent.empty() ? std::string(".") : parent.string();
}

const json& require_key(const json& j, const std::string& key, const std::string& where) {
    check(j.contains(key), "config: missing key '", key, "' in ", where);
    return j[key];
}

// ---- build ----

struct BuildArgs {
    std::string fixture;
    std::string annotations;
    double gamma = 2.7;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_build(const BuildArgs& args, const std::string& command) {
    check(args.fixture.empty() != args.annotations.empty(),
          "provide exactly one of --fixture or --annotations");
    const RawAnnotationSet raw =
        args.fixture.empty() ? load_annotation_dir(args.annotations) : load_fixture(args.fixture);
    BuildResult result = build_manifest(raw, args.gamma, args.seed);
    BenchmarkManifest& m = result.manifest;
    m.command = command;

    if (!result.stuff_rasters.empty()) {
        const std::string stem = fs::path(args.out).stem().string();
        const fs::path dir = fs::path(args.out).parent_path() / (stem + ".stuff");
        fs::create_directories(dir);
        for (auto& [image_id, raster] : result.stuff_rasters) {
            const std::string rel = stem + ".stuff/" + std::to_string(image_id) + ".json";
            save_raster(raster, (fs::path(args.out).parent_path() / rel).string());
            for (auto& im : m.images)
                if (im.image_id == image_id) im.stuff_mask_uri = rel;
        }
    }

    const auto violations = validate_manifest(m);
    if (!violations.empty()) {
        for (const auto& v : violations) std::cerr << "violation: " << v << "\n";
        return 1;
    }
    save_manifest(m, args.out);

    std::map<Split, int> cat_counts;
    for (const auto& c : m.categories) cat_counts[c.split]++;
    std::cout << "manifest: " << args.out << "\n"
              << "categories: base " << cat_counts[Split::base] << ", novel-val "
              << cat_counts[Split::novel_val] << ", novel-test " << cat_counts[Split::novel_test]
              << ", dropped " << cat_counts[Split::dropped] << "\n"
              << "instances: base-train " << m.count_subset(Subset::base_train) << ", base-val "
              << m.count_subset(Subset::base_val) << ", support "
              << m.count_subset(Subset::novel_support) << ", query "
              << m.count_subset(Subset::novel_query) << "\n"
              << "hash: " << manifest_hash(m) << "\n";
    return 0;
}

// ---- regime ----

struct RegimeArgs {
    std::string manifest;
    std::string kind;
    double keep_ratio = 1.0;
    double fraction = 1.0;
    std::string head;
    std::uint64_t seed = 0;
    std::string out;
    std::string portion_csv_path;
};

int cmd_regime(const RegimeArgs& args, const std::string& command) {
    const BenchmarkManifest full = load_manifest(args.manifest);
    BenchmarkManifest derived;
    if (args.kind == "scarce-class") {
        derived = scarce_class(full, args.keep_ratio);
    } else if (args.kind == "scarce-image") {
        derived = scarce_image(full, args.keep_ratio, args.seed);
    } else if (args.kind == "scarce-class-adjust") {
        derived = scarce_class_adjust(full, args.keep_ratio, args.seed);
    } else if (args.kind == "supervision-fraction") {
        check(!args.head.empty(), "supervision-fraction requires --head");
        derived = subsample_supervision(full, head_from_string(args.head), args.fraction, args.seed);
    } else {
        raise("unknown regime kind '", args.kind, "'");
    }
    derived.command = command;
    const auto violations = validate_manifest(derived);
    if (!violations.empty()) {
        for (const auto& v : violations) std::cerr << "violation: " << v << "\n";
        return 1;
    }
    save_manifest(derived, args.out);

    const PortionRow row = instance_portion_report(derived, full);
    const std::string csv_path = args.portion_csv_path.empty()
                                     ? fs::path(args.out).replace_extension(".portion.csv").string()
                                     : args.portion_csv_path;
    write_file(csv_path, portion_csv({instance_portion_report(full, full), row}));
    std::cout << "manifest: " << args.out << "\n"
              << "portion: " << row.regime << " ratio " << row.ratio << " -> " << row.instances
              << " training instances (" << row.portion_pct << "%)\n"
              << "portion csv: " << csv_path << "\n";
    return 0;
}

// ---- fixture ----

struct FixtureArgs {
    std::string out;
    ToyFixtureOptions opts;
};

int cmd_fixture(const FixtureArgs& args) {
    write_file(args.out, toy_fixture_json(args.opts));
    std::cout << "fixture: " << args.out << "\n";
    return 0;
}

// ---- train ----

struct TrainArgs {
    std::string manifest;
    std::string config;
    std::string out_dir;
    std::string resume;
    std::string data_root;
    std::string heads;  // comma list overriding the config's enabled heads
    std::string mode;   // mtl | cl override
    int stages = 0;     // keep only the first N stages of the plan
};

ModelConfig model_config_from_json(const json& j) {
    ModelConfig cfg;
    if (j.contains("preset")) {
        const std::string preset = j["preset"].get<std::string>();
        if (preset == "tiny")
            cfg.extractor = tiny_extractor();
        else if (preset == "resnet18_stride8")
            cfg.extractor = resnet18_stride8();
        else
            raise("config: unknown model preset '", preset, "'");
    } else {
        cfg.extractor = ExtractorConfig::from_json(require_key(j, "extractor", "model"));
    }
    cfg.feature_dim = require_key(j, "feature_dim", "model").get<int>();
    if (j.contains("roi")) {
        cfg.roi.pooled = j["roi"].value("pooled", 7);
        cfg.roi.samples = j["roi"].value("samples", 2);
    }
    cfg.mask_res = j.value("mask_res", 14);
    cfg.stuff_combined = j.value("stuff_combined", false);
    cfg.crop_size = j.value("crop_size", 224);
    cfg.init_seed = j.value("init_seed", std::uint64_t{1});
    cfg.roi.stride = cfg.extractor.stride();
    return cfg;
}

int cmd_train(const TrainArgs& args, const std::string& command) {
    const BenchmarkManifest manifest = load_manifest(args.manifest);
    const auto violations = validate_manifest(manifest);
    if (!violations.empty()) {
        for (const auto& v : violations) std::cerr << "violation: " << v << "\n";
        return 1;
    }

    json cfg_doc;
    try {
        cfg_doc = json::parse(read_file(args.config));
    } catch (const json::exception& e) {
        raise(args.config, ": ", e.what());
    }
    const ModelConfig model_cfg = model_config_from_json(require_key(cfg_doc, "model", "top level"));
    SupervisionConfig sup =
        SupervisionConfig::from_json(require_key(cfg_doc, "supervision", "top level"));
    if (!args.heads.empty()) {
        sup.heads = {HeadKind::cls};
        std::vector<HeadKind> aux_order;
        std::stringstream list(args.heads);
        std::string name;
        while (std::getline(list, name, ',')) {
            const HeadKind h = head_from_string(name);
            if (sup.heads.insert(h).second && h != HeadKind::cls) aux_order.push_back(h);
        }
        sup.cl_order = aux_order;
    }
    if (!args.mode.empty()) {
        check(args.mode == "mtl" || args.mode == "cl", "--mode must be mtl or cl");
        sup.mode = args.mode == "mtl" ? SupervisionConfig::Mode::MTL : SupervisionConfig::Mode::CL;
    }
    if (sup.mode == SupervisionConfig::Mode::MTL) sup.cl_order.clear();
    sup.validate();
    const json& tr = require_key(cfg_doc, "train", "top level");

    TrainingPlan plan;
    const int epochs = require_key(tr, "epochs_per_stage", "train").get<int>();
    const double lr = require_key(tr, "lr", "train").get<double>();
    plan.batch_size = tr.value("batch_size", 8);
    plan.momentum = tr.value("momentum", 0.9);
    plan.weight_decay = tr.value("weight_decay", 0.0);
    plan.seed = require_key(tr, "seed", "train").get<std::uint64_t>();
    const int pretrain_epochs = tr.value("rotation_pretrain_epochs", 0);
    plan.stages = pretrain_epochs > 0 ? rotation_pretrain_stages(sup, pretrain_epochs, epochs, lr)
                                      : plan_stages(sup, epochs, lr);
    if (args.stages > 0) {
        check(args.stages <= static_cast<int>(plan.stages.size()), "--stages ", args.stages,
              " exceeds the plan's ", plan.stages.size(), " stages");
        plan.stages.resize(static_cast<std::size_t>(args.stages));
        // A truncated curriculum never reaches the late heads; restrict the
        // config to what actually runs so the plan validates.
        std::set<HeadKind> used;
        for (const auto& st : plan.stages) used.insert(st.heads.begin(), st.heads.end());
        sup.heads = used;
        std::erase_if(sup.cl_order, [&](HeadKind h) { return !used.count(h); });
    }
    plan.validate(sup);

    const std::string root = data_root_fallback(args.data_root, args.manifest);
    DatasetOptions dopts;
    dopts.resize_short = tr.value("resize_short", 0);
    dopts.raster_root = root;
    const HeadSpaces spaces = HeadSpaces::from_manifest(manifest);
    const Dataset data =
        Dataset::from_manifest(manifest, spaces, model_cfg, default_image_loader(root), dopts);

    Model model = Model::build(model_cfg, spaces);
    fs::create_directories(args.out_dir);

    RunHooks hooks;
    ResumeInfo resume;
    if (!args.resume.empty()) {
        resume = load_train_state(args.resume, model);
        hooks.start_stage = resume.stage;
        hooks.start_epoch = resume.epochs_done;
        hooks.restore_optimizer = [&resume](nn::SgdMomentum& sgd) { sgd.velocity() = resume.velocity; };
        std::cout << "resuming from stage " << resume.stage + 1 << " epoch " << resume.epochs_done
                  << "\n";
    }
    hooks.on_epoch_end = [&](const EpochInfo& info, Model& m, nn::SgdMomentum& sgd) {
        char name[64];
        std::snprintf(name, sizeof name, "state_s%d_e%d.bin", info.stage + 1, info.epoch + 1);
        save_train_state((fs::path(args.out_dir) / name).string(), m, sgd, info.stage,
                         info.epoch + 1, command);
        std::cout << "stage " << info.stage + 1 << " epoch " << info.epoch + 1 << ": loss "
                  << info.mean_total << ", base-val acc " << info.base_val_acc << "%\n";
    };

    const TrainResult result = run_plan(model, data, sup, plan, hooks);
    model.save((fs::path(args.out_dir) / "model.bin").string(), command);
    const std::string metrics_path = (fs::path(args.out_dir) / "metrics.csv").string();
    std::string metrics = metrics_csv(result.metrics, command + " [config " + model_cfg.hash() + "]");
    if (!args.resume.empty() && fs::exists(metrics_path)) {
        // Continue the existing log: keep only this run's data rows.
        std::istringstream lines(metrics);
        std::string line, tail;
        while (std::getline(lines, line))
            if (!line.empty() && line[0] != '#' && line.rfind("step,", 0) != 0) tail += line + "\n";
        metrics = read_file(metrics_path) + "# resumed: " + command + "\n" + tail;
    }
    write_file(metrics_path, metrics);
    std::cout << "model: " << (fs::path(args.out_dir) / "model.bin").string() << "\n"
              << "metrics: " << (fs::path(args.out_dir) / "metrics.csv").string() << "\n";
    return 0;
}

// ---- eval ----

struct EvalArgs {
    std::string manifest;
    std::string checkpoint;
    std::string classifier = "linear";
    int k_shot = 5;
    std::string novel_split = "test";
    std::uint64_t seed = 0;
    std::string out;
    std::string summary;
    std::string data_root;
};

int cmd_eval(const EvalArgs& args, const std::string& command) {
    const BenchmarkManifest manifest = load_manifest(args.manifest);
    check(args.k_shot == 1 || args.k_shot == 5, "--k-shot must be 1 or 5");
    Model model = Model::load(args.checkpoint);

    const std::string root = data_root_fallback(args.data_root, args.manifest);
    DatasetOptions dopts;
    dopts.raster_root = root;
    const Dataset data = Dataset::from_manifest(manifest, model.spaces, model.config,
                                                default_image_loader(root), dopts);
    const FeatureTable table = embed_novel(model, data);
    const Split split = args.novel_split == "val" ? Split::novel_val : Split::novel_test;
    const NovelTask task = NovelTask::from_manifest(manifest, split);

    ScoreTable scores;
    std::string fit_note;
    const FitOptions fit_opts;
    const auto describe_fit = [&](int iters, double grad_norm) {
        char buf[160];
        std::snprintf(buf, sizeof buf, " [fit l2=%g grad_tol=%g max_iters=%d iters=%d grad_norm=%.2e]",
                      fit_opts.l2, fit_opts.grad_tol, fit_opts.max_iters, iters, grad_norm);
        fit_note = buf;
    };
    if (args.classifier == "linear") {
        const LinearClassifier clf = fit_linear(table, task, args.k_shot, fit_opts);
        describe_fit(clf.iters, clf.final_grad_norm);
        scores = score_linear(clf, table, task, args.k_shot);
    } else if (args.classifier == "cosine") {
        const CosineClassifier clf = fit_cosine(table, task, args.k_shot, fit_opts);
        describe_fit(clf.iters, clf.final_grad_norm);
        scores = score_cosine(clf, table, task, args.k_shot);
    } else if (args.classifier == "proto") {
        scores = prototype_classify(table, task, args.k_shot);
    } else {
        raise("unknown classifier '", args.classifier, "' (linear|cosine|proto)");
    }
    const Topk topk = score_topk(scores);

    EvalReport report;
    report.regime = manifest.is_full() ? "full" : manifest.regime->op;
    report.k_shot = args.k_shot;
    report.way = task.way();
    report.classifier = args.classifier;
    report.top1 = topk.top1;
    report.top5 = topk.top5;
    report.seed = args.seed;
    report.support_id = support_set_id(task, args.k_shot);
    report.degenerate_support = scores.degenerate_support;
    if (report.degenerate_support)
        std::cerr << "warning: identical support features across classes\n";

    // Append to an existing report CSV when present.
    std::vector<EvalReport> rows{report};
    const std::string csv =
        eval_csv(rows, command + " [config " + model.config.hash() + "]" + fit_note);
    if (fs::exists(args.out)) {
        std::string existing = read_file(args.out);
        std::istringstream lines(csv);
        std::string line, tail;
        while (std::getline(lines, line))
            if (!line.empty() && line[0] != '#' && line.rfind("regime,", 0) != 0)
                tail += line + "\n";
        write_file(args.out, existing + tail);
    } else {
        write_file(args.out, csv);
    }
    if (!args.summary.empty()) write_file(args.summary, eval_summary_json(rows).dump(2) + "\n");

    std::cout << args.classifier << " " << args.k_shot << "-shot " << task.way() << "-way: top-1 "
              << topk.top1 << "%, top-5 " << topk.top5 << "%\n"
              << "report: " << args.out << "\n";
    return 0;
}

// ---- report ----

struct ReportArgs {
    std::vector<std::string> eval_csvs;
    std::vector<std::string> metrics_csvs;
    std::string out_dir;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable parse_csv(const std::string& text) {
    CsvTable table;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::istringstream ls(line);
        std::string field;
        while (std::getline(ls, field, ',')) fields.push_back(field);
        if (table.header.empty())
            table.header = std::move(fields);
        else
            table.rows.push_back(std::move(fields));
    }
    return table;
}

int column_of(const CsvTable& t, const std::string& name) {
    for (std::size_t i = 0; i < t.header.size(); ++i)
        if (t.header[i] == name) return static_cast<int>(i);
    raise("csv is missing column '", name, "'");
}

struct Bar {
    std::string label;
    double value = 0;
};

void write_bar_chart(const std::string& svg_path, const std::string& sidecar_path,
                     const std::string& title, const std::vector<Bar>& bars, double value_max) {
    const int width = 720, height = 360, margin = 48;
    const double px_per_unit = (height - 2.0 * margin) / value_max;
    const double slot = bars.empty() ? 0 : static_cast<double>(width - 2 * margin) / bars.size();

    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
        << "'>\n<text x='" << margin << "' y='24' font-size='15'>" << title << "</text>\n";
    json sidecar;
    sidecar["title"] = title;
    sidecar["px_per_unit"] = px_per_unit;
    sidecar["bars"] = json::array();
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const double bar_h = bars[i].value * px_per_unit;
        const double x = margin + slot * static_cast<double>(i) + slot * 0.15;
        const double y = height - margin - bar_h;
        svg << "<rect x='" << x << "' y='" << y << "' width='" << slot * 0.7 << "' height='"
            << bar_h << "' fill='#4878a8'/>\n";
        svg << "<text x='" << x << "' y='" << height - margin + 16 << "' font-size='10'>"
            << bars[i].label << "</text>\n";
        sidecar["bars"].push_back(json{{"label", bars[i].label},
                                       {"value", bars[i].value},
                                       {"height_px", bar_h}});
    }
    svg << "<line x1='" << margin << "' y1='" << height - margin << "' x2='" << width - margin
        << "' y2='" << height - margin << "' stroke='black'/>\n</svg>\n";
    write_file(svg_path, svg.str());
    write_file(sidecar_path, sidecar.dump(2) + "\n");
}

int cmd_report(const ReportArgs& args) {
    check(!args.eval_csvs.empty() || !args.metrics_csvs.empty(),
          "report: provide at least one --eval or --metrics csv");
    fs::create_directories(args.out_dir);

    if (!args.eval_csvs.empty()) {
        // Summary table: one row per (regime, classifier, k).
        std::map<std::string, std::array<double, 2>> summary;  // key -> top1/top5
        std::vector<Bar> bars;
        for (const auto& path : args.eval_csvs) {
            const CsvTable t = parse_csv(read_file(path));
            const int c_regime = column_of(t, "regime");
            const int c_k = column_of(t, "k_shot");
            const int c_clf = column_of(t, "classifier");
            const int c_top1 = column_of(t, "top1");
            const int c_top5 = column_of(t, "top5");
            for (const auto& row : t.rows) {
                const std::string key = row[static_cast<std::size_t>(c_regime)] + "," +
                                        row[static_cast<std::size_t>(c_clf)] + "," +
                                        row[static_cast<std::size_t>(c_k)];
                summary[key] = {std::stod(row[static_cast<std::size_t>(c_top1)]),
                                std::stod(row[static_cast<std::size_t>(c_top5)])};
            }
        }
        std::ostringstream table;
        table << "regime,classifier,k_shot,top1,top5\n";
        for (const auto& [key, vals] : summary) {
            table << key << "," << vals[0] << "," << vals[1] << "\n";
            bars.push_back(Bar{key + " top1", vals[0]});
            bars.push_back(Bar{key + " top5", vals[1]});
        }
        write_file((fs::path(args.out_dir) / "summary.csv").string(), table.str());
        write_bar_chart((fs::path(args.out_dir) / "accuracy.svg").string(),
                        (fs::path(args.out_dir) / "accuracy.json").string(),
                        "novel-set accuracy (%)", bars, 100.0);
        std::cout << "summary: " << (fs::path(args.out_dir) / "summary.csv").string() << "\n";
    }

    if (!args.metrics_csvs.empty()) {
        std::vector<Bar> bars;
        double max_loss = 1e-9;
        for (const auto& path : args.metrics_csvs) {
            const CsvTable t = parse_csv(read_file(path));
            const int c_step = column_of(t, "step");
            const int c_head = column_of(t, "head");
            const int c_loss = column_of(t, "loss");
            for (const auto& row : t.rows) {
                if (row[static_cast<std::size_t>(c_head)] != "total") continue;
                const double loss = std::stod(row[static_cast<std::size_t>(c_loss)]);
                bars.push_back(Bar{"step " + row[static_cast<std::size_t>(c_step)], loss});
                max_loss = std::max(max_loss, loss);
            }
        }
        write_bar_chart((fs::path(args.out_dir) / "loss.svg").string(),
                        (fs::path(args.out_dir) / "loss.json").string(), "training loss per epoch",
                        bars, max_loss);
        std::cout << "loss chart: " << (fs::path(args.out_dir) / "loss.svg").string() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"long-tail few-shot benchmark toolkit"};
    app.require_subcommand(1);
    const std::string command = joined_command(argc, argv);

    BuildArgs build_args;
    auto* build = app.add_subcommand("build", "build a benchmark manifest from annotations");
    build->add_option("--fixture", build_args.fixture, "synthetic fixture JSON");
    build->add_option("--annotations", build_args.annotations, "ADE-style annotation directory");
    build->add_option("--gamma", build_args.gamma, "context ratio")->capture_default_str();
    build->add_option("--seed", build_args.seed, "global seed")->required();
    build->add_option("--out", build_args.out, "output manifest path")->required();

    RegimeArgs regime_args;
    auto* regime = app.add_subcommand("regime", "derive a data-scarcity regime manifest");
    regime->add_option("--manifest", regime_args.manifest, "full manifest")->required();
    regime
        ->add_option("--kind", regime_args.kind,
                     "scarce-class | scarce-image | scarce-class-adjust | supervision-fraction")
        ->required();
    regime->add_option("--keep-ratio", regime_args.keep_ratio, "kept fraction of classes/images");
    regime->add_option("--fraction", regime_args.fraction, "labeled fraction for supervision-fraction");
    regime->add_option("--head", regime_args.head, "head for supervision-fraction");
    regime->add_option("--seed", regime_args.seed, "seed")->required();
    regime->add_option("--out", regime_args.out, "output manifest path")->required();
    regime->add_option("--portion-csv", regime_args.portion_csv_path, "portion report path");

    FixtureArgs fixture_args;
    auto* fixture = app.add_subcommand("fixture", "generate a synthetic fixture");
    fixture->add_option("--out", fixture_args.out, "output fixture path")->required();
    fixture->add_option("--base-classes", fixture_args.opts.base_classes);
    fixture->add_option("--base-instances", fixture_args.opts.base_instances_per_class);
    fixture->add_option("--objects-per-image", fixture_args.opts.objects_per_image);
    fixture->add_option("--novel-classes", fixture_args.opts.novel_classes);
    fixture->add_option("--novel-instances", fixture_args.opts.novel_per_class);
    fixture->add_option("--image-size", fixture_args.opts.image_size);
    fixture->add_option("--seed", fixture_args.opts.seed);
    fixture->add_flag("--stuff", fixture_args.opts.with_stuff, "include stuff regions");

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "train a model per config");
    train->add_option("--manifest", train_args.manifest)->required();
    train->add_option("--config", train_args.config, "training config JSON")->required();
    train->add_option("--out", train_args.out_dir, "output directory")->required();
    train->add_option("--resume", train_args.resume, "training-state checkpoint");
    train->add_option("--data-root", train_args.data_root, "image/raster root (or $LRDS_DATA_ROOT)");
    train->add_option("--heads", train_args.heads, "comma list overriding the enabled heads");
    train->add_option("--mode", train_args.mode, "mtl | cl override");
    train->add_option("--stages", train_args.stages, "run only the first N plan stages");

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "k-shot evaluation of a trained model");
    eval->add_option("--manifest", eval_args.manifest)->required();
    eval->add_option("--checkpoint", eval_args.checkpoint)->required();
    eval->add_option("--classifier", eval_args.classifier, "linear | cosine | proto")
        ->capture_default_str();
    eval->add_option("--k-shot", eval_args.k_shot, "1 or 5")->capture_default_str();
    eval->add_option("--novel-split", eval_args.novel_split, "val | test")->capture_default_str();
    eval->add_option("--seed", eval_args.seed, "seed recorded in the report")->required();
    eval->add_option("--out", eval_args.out, "report CSV path")->required();
    eval->add_option("--summary", eval_args.summary, "summary JSON path");
    eval->add_option("--data-root", eval_args.data_root);

    ReportArgs report_args;
    auto* report = app.add_subcommand("report", "render charts and summary tables from CSVs");
    report->add_option("--eval", report_args.eval_csvs, "eval report CSVs");
    report->add_option("--metrics", report_args.metrics_csvs, "training metrics CSVs");
    report->add_option("--out", report_args.out_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (build->parsed()) return cmd_build(build_args, command);
        if (regime->parsed()) return cmd_regime(regime_args, command);
        if (fixture->parsed()) return cmd_fixture(fixture_args);
        if (train->parsed()) return cmd_train(train_args, command);
        if (eval->parsed()) return cmd_eval(eval_args, command);
        if (report->parsed()) return cmd_report(report_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
