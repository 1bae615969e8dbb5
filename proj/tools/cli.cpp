#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "kinet/catalog.hpp"
#include "kinet/dataset.hpp"
#include "kinet/interpret.hpp"
#include "kinet/nn/checkpoint.hpp"
#include "kinet/oracle.hpp"
#include "kinet/render.hpp"
#include "kinet/trainer.hpp"

namespace kinet::cli {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

std::ofstream open_text(const fs::path& path) {
    if (path.has_parent_path()) ensure_dir(path.parent_path());
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f.precision(17);
    return f;
}

// Input image for the viz commands: an image file, or a structure file
// rendered at the given scale.
struct InputArgs {
    std::string image;
    std::string structure;
    double scale = 1.0;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--image", image, "Input PNG or PPM image (256x256)");
        cmd->add_option("--structure", structure, "Structure file to render instead of --image");
        cmd->add_option("--scale", scale, "Render scale for --structure")->default_val(1.0)->check(CLI::Range(0.01, 1.0));
    }

    Image load() const {
        if (image.empty() == structure.empty()) throw UsageError("exactly one of --image or --structure is required");
        Image img = image.empty() ? render(load_structure(structure), scale) : read_image(image);
        if (img.width() != kImageSize || img.height() != kImageSize)
            throw std::runtime_error((image.empty() ? structure : image) + ": expected a 256x256 image");
        return img;
    }

    std::string stem() const { return fs::path(image.empty() ? structure : image).stem().string(); }
};

nn::Model<float> load_model(const std::string& path) {
    const nn::NetworkSpec expected{};
    return nn::load_checkpoint(path, &expected).model;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
    std::string file;
    bool json = false;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
    const Structure s = load_structure(a.file);
    const Verdict v = classify_stability(s);
    const auto dangling = s.dangling_joints();
    if (a.json) {
        nlohmann::json doc{{"structure", s.name()},
                           {"classification", std::string(to_string(v.classification))},
                           {"label", binary_label(v)},
                           {"nullity_given", v.nullity_given},
                           {"nullity_generic", v.nullity_generic},
                           {"mechanism_dof", v.mechanism_dof},
                           {"bodies", v.body_count},
                           {"constraints", v.constraint_count},
                           {"connected", v.connected},
                           {"dangling_joints", dangling}};
        out << doc.dump(2) << "\n";
        return 0;
    }
    out << to_string(v.classification) << "\n"
        << "structure " << s.name() << "\n"
        << "label " << binary_label(v) << "\n"
        << "nullity_given " << v.nullity_given << "\n"
        << "nullity_generic " << v.nullity_generic << "\n"
        << "mechanism_dof " << v.mechanism_dof << "\n"
        << "bodies " << v.body_count << "\n"
        << "constraints " << v.constraint_count << "\n"
        << "connected " << (v.connected ? "true" : "false") << "\n";
    for (int id : dangling) out << "dangling_joint " << id << "\n";
    return 0;
}

std::vector<std::pair<std::string, const CatalogEntry*>> select_entries(const std::string& set,
                                                                          const std::string& names) {
    const Catalog& cat = builtin_catalog();
    std::vector<std::pair<std::string, const CatalogEntry*>> out;
    if (set == "training" || set == "all") {
        for (const auto& e : cat.training_examples) out.emplace_back("training", &e);
    }
    if (set == "holdout" || set == "all") {
        for (const auto& e : cat.holdout_examples) out.emplace_back("holdout", &e);
    }
    if (!names.empty()) {
        std::vector<std::pair<std::string, const CatalogEntry*>> picked;
        for (const std::string& n : split_list(names)) {
            auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.second->structure.name() == n; });
            if (it == out.end()) throw UsageError("--structures: '" + n + "' is not in the " + set + " catalog");
            picked.push_back(*it);
        }
        out = std::move(picked);
    }
    return out;
}

struct CatalogArgs {
    std::string out;
    std::string set = "all";
};

int cmd_catalog(const CatalogArgs& a, std::ostream& out) {
    const auto entries = select_entries(a.set, "");
    if (!a.out.empty()) ensure_dir(a.out);
    for (const auto& [set, e] : entries) {
        out << set << " " << e->structure.name() << " " << (e->intended_label ? "unstable" : "stable") << "\n";
        if (!a.out.empty()) save_structure(e->structure, fs::path(a.out) / (e->structure.name() + ".json"));
    }
    return 0;
}

struct GenArgs {
    std::string out;
    std::uint64_t seed = 0;
    std::string set = "training";
    std::string grid = "full";
    std::string structures;
    std::string split_mode;
    bool ppm = false;
    int jobs = 1;
};

int cmd_gen_dataset(const GenArgs& a, std::ostream& out) {
    std::vector<CatalogEntry> entries;
    for (const auto& p : select_entries(a.set, a.structures)) entries.push_back(*p.second);
    BuildOptions opts;
    opts.split_mode = a.split_mode.empty() ? (a.set == "holdout" ? SplitMode::Holdout : SplitMode::ByImage)
                                           : parse_split_mode(a.split_mode);
    opts.ppm = a.ppm;
    opts.jobs = a.jobs;
    const Manifest m = build_dataset(entries, a.grid == "desk" ? AugmentationGrid::desk() : AugmentationGrid::full(),
                                     {}, a.seed, a.out, opts);
    out << "images " << m.samples.size() << "\n";
    for (Split s : {Split::Train, Split::Val, Split::Test, Split::Holdout}) {
        if (m.count(s)) out << to_string(s) << " " << m.count(s) << "\n";
    }
    out << "manifest " << (fs::path(a.out) / "manifest.csv").string() << "\n";
    return 0;
}

struct TrainArgs {
    std::string manifest;
    std::string resume;
    TrainConfig cfg;
    std::string checkpoint_dir = "checkpoints";
    std::string metrics = "metrics.csv";
    bool no_timing = false;
};

int cmd_train(TrainArgs a, std::ostream& out) {
    const Manifest m = read_manifest(a.manifest);
    a.cfg.checkpoint_dir = a.checkpoint_dir;
    a.cfg.metrics_path = a.metrics;
    a.cfg.record_timing = !a.no_timing;
    TrainState state;
    if (a.resume.empty()) {
        state = initial_state(nn::NetworkSpec{}, a.cfg);
    } else {
        bool exact = false;
        state = resume_state(a.resume, a.cfg, &exact);
        out << "resumed epoch " << state.epoch << (exact ? " (exact)" : " (non-exact: optimizer moments reset)") << "\n";
    }
    out << std::setprecision(6);
    train(state, m, a.cfg, [&](const EpochRecord& r, const nn::Model<float>&) {
        out << "epoch " << r.epoch << " train_loss " << r.train_loss << " train_acc " << r.train_acc << " val_loss "
            << r.val_loss << " val_acc " << r.val_acc << "\n"
            << std::flush;
        return true;
    });
    return 0;
}

struct EvalArgs {
    std::string checkpoint;
    std::string manifest;
    std::string split = "test";
    std::string predictions;
    int jobs = 1;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    const nn::Model<float> model = load_model(a.checkpoint);
    const Manifest m = read_manifest(a.manifest);
    const EvalResult r = evaluate(model, m, parse_split(a.split), a.jobs);
    out << std::setprecision(17) << "split " << a.split << "\n"
        << "images " << r.predictions.size() << "\n"
        << "loss " << r.loss << "\n"
        << "accuracy " << r.accuracy << "\n";
    if (!a.predictions.empty()) {
        std::ofstream f = open_text(a.predictions);
        f << "path,structure_name,label,probability,predicted\n";
        for (const Prediction& p : r.predictions) {
            f << p.sample->path.generic_string() << "," << p.sample->structure_name << "," << p.sample->label << ","
              << p.probability << "," << p.predicted << "\n";
        }
    }
    return 0;
}

struct VizActArgs {
    std::string checkpoint;
    InputArgs input;
    std::vector<int> layers;
    std::string out = ".";
};

int cmd_viz_activations(VizActArgs a, std::ostream& out) {
    const nn::Model<float> model = load_model(a.checkpoint);
    const Image img = a.input.load();
    if (a.layers.empty()) {
        for (int l = 0; l < model.spec.blocks(); ++l) a.layers.push_back(l);
    }
    ensure_dir(a.out);
    std::ofstream meta = open_text(fs::path(a.out) / "activations.txt");
    for (int layer : a.layers) {
        const ActivationSheet s = intermediate_activations(model, img, layer);
        const fs::path file = fs::path(a.out) / ("activations_L" + std::to_string(layer) + ".png");
        write_png(s.sheet, file);
        meta << "layer " << layer << " channels " << s.channels << " panel " << s.panel_width << "x" << s.panel_height
             << " means";
        for (double v : s.channel_means) meta << " " << v;
        meta << "\n";
        out << file.string() << "\n";
    }
    return 0;
}

struct VizFilterArgs {
    std::string checkpoint;
    int layer = 0;
    std::vector<int> filters;
    AscentOptions ascent;
    std::string out = ".";
};

int cmd_viz_filter(VizFilterArgs a, std::ostream& out) {
    const nn::Model<float> model = load_model(a.checkpoint);
    check_conv_layer(model, a.layer);
    if (a.filters.empty()) {
        for (int f = 0; f < model.conv[static_cast<std::size_t>(a.layer)].out; ++f) a.filters.push_back(f);
    }
    ensure_dir(a.out);
    std::ofstream meta = open_text(fs::path(a.out) / ("filters_L" + std::to_string(a.layer) + ".txt"));
    for (int f : a.filters) {
        const FilterPattern p = maximize_filter(model, a.layer, f, a.ascent);
        const fs::path file =
            fs::path(a.out) / ("filter_L" + std::to_string(a.layer) + "_F" + std::to_string(f) + ".png");
        write_png(p.image, file);
        meta << "layer " << a.layer << " filter " << f << " steps " << a.ascent.steps << " step_size "
             << a.ascent.step_size << " seed " << a.ascent.seed << " dead " << (p.dead ? 1 : 0) << " scores";
        for (double s : p.scores) meta << " " << s;
        meta << "\n";
        out << file.string() << (p.dead ? " (dead filter)" : "") << "\n";
    }
    return 0;
}

struct VizCamArgs {
    std::string checkpoint;
    InputArgs input;
    std::string name;
    bool post_pool = false;
    std::string out = ".";
};

int cmd_viz_cam(const VizCamArgs& a, std::ostream& out) {
    const nn::Model<float> model = load_model(a.checkpoint);
    const Image img = a.input.load();
    CamOptions opt;
    opt.post_pool = a.post_pool;
    const Heatmap h = class_activation_heatmap(model, img, opt);
    const std::string name = a.name.empty() ? a.input.stem() : a.name;
    ensure_dir(a.out);
    const fs::path file = fs::path(a.out) / ("cam_" + name + ".png");
    write_png(overlay(img, h.upsampled), file);
    std::ofstream meta = open_text(fs::path(a.out) / ("cam_" + name + ".txt"));
    meta << "source " << (a.post_pool ? "post_pool" : "pre_pool") << "\n"
         << "grid " << h.grid_width << "x" << h.grid_height << "\n"
         << "logit " << h.logit << "\n"
         << "probability " << h.probability << "\n"
         << "predicted " << h.predicted << "\n"
         << "score " << h.score << "\n"
         << "weights";
    for (double w : h.weights) meta << " " << w;
    meta << "\nheat";
    for (double v : h.grid) meta << " " << v;
    meta << "\n";
    out << file.string() << " predicted " << (h.predicted ? "unstable" : "stable") << " p " << h.probability << "\n";
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Kinematic analysis workbench for plane bar structures"};
    app.name("kinet");
    app.require_subcommand(1);

    AnalyzeArgs analyze;
    auto* c_analyze = app.add_subcommand("analyze", "Classify a structure file with the exact rigidity oracle");
    c_analyze->add_option("file", analyze.file, "Structure file (JSON)")->required();
    c_analyze->add_flag("--json", analyze.json, "Print a JSON document instead of text");

    CatalogArgs catalog;
    auto* c_catalog = app.add_subcommand("catalog", "List built-in structures and optionally write them as files");
    c_catalog->add_option("--out", catalog.out, "Directory for <name>.json files (default: list only)");
    c_catalog->add_option("--set", catalog.set, "Which structures")
        ->default_val("all")
        ->check(CLI::IsMember({"training", "holdout", "all"}));

    GenArgs gen;
    auto* c_gen = app.add_subcommand("gen-dataset", "Render the augmented dataset and its manifest");
    c_gen->add_option("--out", gen.out, "Output directory")->required();
    c_gen->add_option("--seed", gen.seed, "Split seed")->default_val(0);
    c_gen->add_option("--catalog", gen.set, "Structure set")
        ->default_val("training")
        ->check(CLI::IsMember({"training", "holdout", "all"}));
    c_gen->add_option("--grid", gen.grid, "full (729 per structure) or desk (27)")
        ->default_val("full")
        ->check(CLI::IsMember({"full", "desk"}));
    c_gen->add_option("--structures", gen.structures, "Comma-separated subset of the chosen set (default: all)");
    c_gen->add_option("--split-mode", gen.split_mode,
                      "by-image, by-structure or holdout (default: holdout for --catalog holdout, else by-image)")
        ->check(CLI::IsMember({"by-image", "by-structure", "holdout"}));
    c_gen->add_flag("--ppm", gen.ppm, "Write binary PPM instead of PNG");
    c_gen->add_option("--jobs", gen.jobs, "Rendering threads")->default_val(1)->check(CLI::PositiveNumber);

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "Train the network on a manifest's train split");
    c_train->add_option("--manifest", tr.manifest, "Dataset manifest.csv")->required();
    c_train->add_option("--epochs", tr.cfg.epochs, "Final epoch number (>= 1)")->required()->check(CLI::PositiveNumber);
    c_train->add_option("--batch-size", tr.cfg.batch_size, "Mini-batch size")->default_val(32)->check(CLI::PositiveNumber);
    c_train->add_option("--seed", tr.cfg.seed, "Seed for init, shuffling and dropout")->default_val(0);
    c_train->add_option("--lr", tr.cfg.adam.lr, "Adam learning rate")->default_val(1e-3);
    c_train->add_option("--checkpoint-dir", tr.checkpoint_dir, "Checkpoint directory")->default_val("checkpoints");
    c_train->add_option("--metrics", tr.metrics, "Metrics CSV path")->default_val("metrics.csv");
    c_train->add_option("--resume", tr.resume, "Continue from this checkpoint (uses its .opt sidecar when present)");
    c_train->add_flag("--no-timing", tr.no_timing, "Write 0 in the seconds column so metrics are byte-reproducible");
    c_train->add_option("--jobs", tr.cfg.jobs, "Validation threads")->default_val(1)->check(CLI::PositiveNumber);

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint on one split of a manifest");
    c_eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
    c_eval->add_option("--manifest", ev.manifest, "Dataset manifest.csv")->required();
    c_eval->add_option("--split", ev.split, "Split to evaluate")
        ->default_val("test")
        ->check(CLI::IsMember({"train", "val", "test", "holdout"}));
    c_eval->add_option("--predictions", ev.predictions, "Write per-image predictions CSV here");
    c_eval->add_option("--jobs", ev.jobs, "Evaluation threads")->default_val(1)->check(CLI::PositiveNumber);

    VizActArgs va;
    auto* c_va = app.add_subcommand("viz-activations", "Write per-layer activation sheets for one image");
    c_va->add_option("--checkpoint", va.checkpoint, "Checkpoint file")->required();
    va.input.add_to(c_va);
    c_va->add_option("--layer", va.layers, "Conv layer index, repeatable (default: all)");
    c_va->add_option("--out", va.out, "Output directory")->default_val(".");

    VizFilterArgs vf;
    auto* c_vf = app.add_subcommand("viz-filter", "Gradient-ascent input patterns for conv filters");
    c_vf->add_option("--checkpoint", vf.checkpoint, "Checkpoint file")->required();
    c_vf->add_option("--layer", vf.layer, "Conv layer index")->default_val(0);
    c_vf->add_option("--filter", vf.filters, "Filter index, repeatable (default: all in the layer)");
    c_vf->add_option("--steps", vf.ascent.steps, "Ascent steps")->default_val(30)->check(CLI::NonNegativeNumber);
    c_vf->add_option("--step-size", vf.ascent.step_size, "Step size on the RMS-normalized gradient")
        ->default_val(10.0 / 255.0);
    c_vf->add_option("--seed", vf.ascent.seed, "Seed for the initial noise")->default_val(0);
    c_vf->add_option("--out", vf.out, "Output directory")->default_val(".");

    VizCamArgs vc;
    auto* c_vc = app.add_subcommand("viz-cam", "Class activation heatmap overlay for one image");
    c_vc->add_option("--checkpoint", vc.checkpoint, "Checkpoint file")->required();
    vc.input.add_to(c_vc);
    c_vc->add_option("--name", vc.name, "Output name (default: input file stem)");
    c_vc->add_flag("--post-pool", vc.post_pool, "Use the pooled 4x4 map instead of the 8x8 conv output");
    c_vc->add_option("--out", vc.out, "Output directory")->default_val(".");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*c_analyze) return cmd_analyze(analyze, out);
        if (*c_catalog) return cmd_catalog(catalog, out);
        if (*c_gen) return cmd_gen_dataset(gen, out);
        if (*c_train) return cmd_train(tr, out);
        if (*c_eval) return cmd_eval(ev, out);
        if (*c_va) return cmd_viz_activations(va, out);
        if (*c_vf) return cmd_viz_filter(vf, out);
        if (*c_vc) return cmd_viz_cam(vc, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace kinet::cli
