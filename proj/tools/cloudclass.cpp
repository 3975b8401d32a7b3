// cloudclass: dataset generation, training and evaluation for cluttered
// point-cloud object classification with background-aware models.
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cloudclass/bench/evaluate.hpp"
#include "cloudclass/bench/train.hpp"
#include "cloudclass/models/grad_suite.hpp"
#include "cloudclass/pipeline/generate.hpp"
#include "cloudclass/pipeline/synth.hpp"

namespace fs = std::filesystem;
using namespace cloudclass;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

struct SynthArgs {
    std::string classes = "box,cylinder,sphere-cap,l-bracket";
    std::size_t objects = 5;
    std::size_t scenes = 10;
    std::string out;
    std::uint64_t seed = 0;
    std::size_t points = 600;
    double density = 600.0;
    bool no_walls = false;
};

int run_synth(const SynthArgs& args) {
    pipeline::SynthConfig cfg;
    cfg.classes.clear();
    std::stringstream ss(args.classes);
    std::string cls;
    while (std::getline(ss, cls, ',')) cfg.classes.push_back(cls);
    cfg.objects_per_scene = args.objects;
    cfg.points_per_object = args.points;
    cfg.background_density = args.density;
    cfg.walls = !args.no_walls;
    cfg.validate();

    fs::create_directories(args.out);
    const auto table = cfg.class_table();
    const auto scenes = pipeline::synth_scenes(cfg, args.scenes, args.seed);
    for (const auto& scene : scenes) pipeline::write_scene(scene, table, args.out);
    pipeline::write_class_table(table, args.out);
    std::cout << "wrote " << scenes.size() << " scenes (" << cfg.objects_per_scene
              << " objects each) to " << args.out << "\n";
    return kExitOk;
}

struct GenerateArgs {
    std::string scenes;
    std::string variant;
    std::string out;
    std::uint64_t seed = 0;
    std::uint32_t samples = 5;
    double train_frac = 0.8;
    std::uint64_t split_id = 0;
};

int run_generate(const GenerateArgs& args) {
    const VariantTag tag = parse_variant(args.variant);
    ClassTable table;
    if (fs::exists(fs::path(args.scenes) / "classes.json"))
        table = pipeline::read_class_table(args.scenes);
    const auto scenes = pipeline::read_scene_dir(args.scenes, table);

    auto spec = pipeline::PerturbSpec::for_variant(tag);
    spec.samples_per_object = args.samples;
    const auto result = pipeline::generate_variant(scenes, tag, spec, args.seed, args.out, table,
                                                   args.train_frac, args.split_id);
    std::size_t train = 0;
    for (const auto& e : result.manifest.entries) train += e.split == Split::kTrain;
    std::cout << "variant " << args.variant << ": " << result.manifest.entries.size()
              << " objects (" << train << " train, "
              << result.manifest.entries.size() - train << " test), " << result.discarded
              << " samples discarded by the retention rule\n"
              << "manifest: " << (fs::path(args.out) / "manifest.tsv").string() << "\n";
    return kExitOk;
}

struct TrainArgs {
    std::string manifest;
    std::string model = "bga-pnpp";
    std::string out;
    std::string config;
    std::string variant;
    std::size_t epochs = 60;
    std::size_t batch = 16;
    double lambda = 0.5;
    double lr = 1e-3;
    std::size_t points = 256;
    std::uint64_t seed = 0;
    bool full_scale = false;
};

int run_train(const TrainArgs& args) {
    std::optional<VariantTag> filter;
    if (!args.variant.empty()) filter = parse_variant(args.variant);
    const auto data = bench::Dataset::load(args.manifest, Split::kTrain, filter);
    if (data.size() == 0) throw ValidationError("train split is empty");

    models::ModelConfig cfg;
    if (!args.config.empty()) {
        cfg = models::load_config(args.config);
    } else {
        const auto variant = models::parse_model_variant(args.model);
        cfg = args.full_scale ? models::default_config(variant, data.table.size())
                              : models::desk_config(variant, data.table.size(), args.points);
    }
    cfg.lambda = args.lambda;
    cfg.validate();

    bench::TrainConfig tc;
    tc.epochs = args.epochs;
    tc.batch_size = args.batch;
    tc.lr = args.lr;
    tc.seed = args.seed;

    models::Network<float> net(cfg, args.seed);
    std::cout << "training " << models::model_variant_name(cfg.variant) << " on " << data.size()
              << " objects, " << cfg.num_points << " points, "
              << net.parameter_count() << " parameters\n";
    const auto logs = bench::train(net, data, tc);
    for (const auto& log : logs)
        std::cout << "epoch " << log.epoch << ": loss " << log.l_total << " (class "
                  << log.l_class << ", seg " << log.l_seg << "), train OA " << log.train_oa
                  << "%, " << log.seconds << "s\n";

    fs::create_directories(args.out);
    const auto ckpt = fs::path(args.out) / "model.sobw";
    net.save(ckpt);
    bench::write_train_log(logs, fs::path(args.out) / "train_log.csv");
    std::cout << "checkpoint: " << ckpt.string() << "\n";
    return kExitOk;
}

struct EvalArgs {
    std::string checkpoint;
    std::string manifest;
    std::string split = "test";
    std::string out;
    std::string class_map; // xeval only
    std::uint64_t seed = 0;
    std::size_t batch = 16;
};

int run_eval(const EvalArgs& args, bool cross) {
    const auto net = models::Network<float>::load(args.checkpoint);
    const auto data = bench::Dataset::load(args.manifest, parse_split(args.split));
    if (data.size() == 0) throw ValidationError("evaluation split is empty");

    bench::EvalOutput result;
    if (cross) {
        std::ifstream f(args.class_map);
        if (!f) throw IoError("cannot open class map '" + args.class_map + "'");
        const auto j = nlohmann::json::parse(f);
        std::map<std::uint32_t, std::uint32_t> map;
        for (const auto& [name, target] : j.items())
            map[data.table.id_of(name)] = target.get<std::uint32_t>();
        result = bench::cross_evaluate(*net, data, map, args.batch, args.seed);
    } else {
        result = bench::evaluate(*net, data, args.batch, args.seed);
    }

    std::cout << "objects: " << result.metrics.object_count
              << " (excluded: " << result.metrics.excluded_count << ")\n"
              << "overall accuracy:    " << result.metrics.overall_accuracy << "%\n"
              << "mean class accuracy: " << result.metrics.mean_class_accuracy << "%\n";
    if (result.metrics.mask_accuracy)
        std::cout << "mask accuracy:       " << *result.metrics.mask_accuracy << "%\n";
    if (!args.out.empty()) {
        bench::export_report(result, {}, args.out);
        std::cout << "report: " << args.out << "\n";
    }
    return kExitOk;
}

int run_gradcheck(double tol, std::size_t samples) {
    auto suite = models::full_grad_suite();
    bool ok = true;
    std::cout << "gradient check (central differences, delta 1e-3, double precision)\n";
    for (auto& entry : suite) {
        (void)samples;
        const bool pass = entry.report.passed(tol);
        ok &= pass;
        std::printf("  %-28s max_rel_err %.3e  [%s]\n", entry.name.c_str(),
                    entry.report.max_rel_err, pass ? "ok" : "FAIL");
    }
    std::cout << (ok ? "all gradients within tolerance\n" : "gradient check FAILED\n");
    return ok ? kExitOk : kExitValidation;
}

int run_report(const std::string& metrics_path, const std::string& out) {
    std::ifstream f(metrics_path);
    if (!f) throw IoError("cannot open '" + metrics_path + "'");
    const auto metrics = bench::metrics_from_json(nlohmann::json::parse(f));
    fs::create_directories(out);
    bench::write_confusion_csv(metrics, fs::path(out) / "confusion.csv");
    {
        std::ofstream summary(fs::path(out) / "summary.txt");
        summary << "objects: " << metrics.object_count << "\n"
                << "excluded: " << metrics.excluded_count << "\n"
                << "overall_accuracy: " << metrics.overall_accuracy << "\n"
                << "mean_class_accuracy: " << metrics.mean_class_accuracy << "\n";
        if (metrics.mask_accuracy) summary << "mask_accuracy: " << *metrics.mask_accuracy << "\n";
        for (const auto& absent : metrics.absent_classes)
            summary << "absent_class: " << absent << "\n";
    }
    std::cout << "wrote " << (fs::path(out) / "confusion.csv").string() << " and summary.txt\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cloudclass: cluttered point-cloud classification workbench"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate procedural labeled scenes");
    synth_cmd->add_option("--classes", synth.classes, "comma-separated shape classes");
    synth_cmd->add_option("--objects", synth.objects, "objects per scene");
    synth_cmd->add_option("--scenes", synth.scenes, "number of scenes");
    synth_cmd->add_option("--out", synth.out, "output directory")->required();
    synth_cmd->add_option("--seed", synth.seed, "global seed");
    synth_cmd->add_option("--points", synth.points, "surface points per object");
    synth_cmd->add_option("--density", synth.density, "background points per square meter");
    synth_cmd->add_flag("--no-walls", synth.no_walls, "omit the wall planes");

    GenerateArgs gen;
    auto* gen_cmd = app.add_subcommand("generate", "build a dataset variant from scenes");
    gen_cmd->add_option("--scenes", gen.scenes, "scene directory (*.sobs)")->required();
    gen_cmd->add_option("--variant", gen.variant, "OBJ_ONLY|OBJ_BG|PB_T25|PB_T25_R|PB_T50_R|PB_T50_RS")
        ->required();
    gen_cmd->add_option("--out", gen.out, "output directory")->required();
    gen_cmd->add_option("--seed", gen.seed, "global seed");
    gen_cmd->add_option("--samples", gen.samples, "perturbed samples per object");
    gen_cmd->add_option("--train-frac", gen.train_frac, "object-level train fraction");
    gen_cmd->add_option("--split-id", gen.split_id, "which scene split to draw");

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "train a model on a manifest's train split");
    train_cmd->add_option("--manifest", tr.manifest, "manifest.tsv path")->required();
    train_cmd->add_option("--model", tr.model, "pointnet|pnpp|dgcnn|bga-pnpp|bga-dgcnn");
    train_cmd->add_option("--out", tr.out, "output directory")->required();
    train_cmd->add_option("--config", tr.config, "model config JSON (overrides --model)");
    train_cmd->add_option("--variant", tr.variant, "train on this variant only");
    train_cmd->add_option("--epochs", tr.epochs, "epoch budget");
    train_cmd->add_option("--batch", tr.batch, "batch size (>= 2)");
    train_cmd->add_option("--lambda", tr.lambda, "segmentation loss weight");
    train_cmd->add_option("--lr", tr.lr, "Adam learning rate");
    train_cmd->add_option("--points", tr.points, "points per object");
    train_cmd->add_option("--seed", tr.seed, "global seed");
    train_cmd->add_flag("--full-scale", tr.full_scale, "full-scale widths (1024 points)");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--checkpoint", ev.checkpoint, "model.sobw path")->required();
    eval_cmd->add_option("--manifest", ev.manifest, "manifest.tsv path")->required();
    eval_cmd->add_option("--split", ev.split, "train|test");
    eval_cmd->add_option("--out", ev.out, "report directory");
    eval_cmd->add_option("--seed", ev.seed, "evaluation resampling seed");
    eval_cmd->add_option("--batch", ev.batch, "batch size");

    EvalArgs xe;
    auto* xeval_cmd = app.add_subcommand("xeval", "evaluate across datasets via a class map");
    xeval_cmd->add_option("--checkpoint", xe.checkpoint, "model.sobw path")->required();
    xeval_cmd->add_option("--manifest", xe.manifest, "manifest.tsv path")->required();
    xeval_cmd->add_option("--class-map", xe.class_map,
                          "JSON: {\"dataset class name\": model class id}")
        ->required();
    xeval_cmd->add_option("--split", xe.split, "train|test");
    xeval_cmd->add_option("--out", xe.out, "report directory");
    xeval_cmd->add_option("--seed", xe.seed, "evaluation resampling seed");
    xeval_cmd->add_option("--batch", xe.batch, "batch size");

    double gc_tol = 1e-4;
    std::size_t gc_samples = 4;
    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gc_cmd->add_option("--tol", gc_tol, "max relative error tolerance");
    gc_cmd->add_option("--samples", gc_samples, "sampled elements per tensor");

    std::string rep_metrics, rep_out;
    auto* rep_cmd = app.add_subcommand("report", "regenerate report files from metrics.json");
    rep_cmd->add_option("--metrics", rep_metrics, "metrics.json path")->required();
    rep_cmd->add_option("--out", rep_out, "output directory")->required();

    try {
        app.parse(argc, argv);
        if (synth_cmd->parsed()) return run_synth(synth);
        if (gen_cmd->parsed()) return run_generate(gen);
        if (train_cmd->parsed()) return run_train(tr);
        if (eval_cmd->parsed()) return run_eval(ev, false);
        if (xeval_cmd->parsed()) return run_eval(xe, true);
        if (gc_cmd->parsed()) return run_gradcheck(gc_tol, gc_samples);
        if (rep_cmd->parsed()) return run_report(rep_metrics, rep_out);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
}
