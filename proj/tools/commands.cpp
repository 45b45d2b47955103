#include "commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "drnet/atomic_file.hpp"
#include "drnet/error.hpp"
#include "drnet/image.hpp"
#include "drnet/metrics.hpp"
#include "drnet/network.hpp"
#include "drnet/preclass.hpp"
#include "drnet/synth.hpp"
#include "drnet/trainer.hpp"

namespace drnet::cli {
namespace {

namespace fs = std::filesystem;

// A module failure already mapped to an exit code.
struct Failure {
    int code;
    std::string message;
};

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ArgumentError*>(&e)) return kConfig;
    if (dynamic_cast<const NumericError*>(&e) || dynamic_cast<const GenerationError*>(&e)) return kNumeric;
    if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const IoError*>(&e) ||
        dynamic_cast<const LoadError*>(&e) || dynamic_cast<const ShapeError*>(&e) ||
        dynamic_cast<const SelectionError*>(&e))
        return kData;
    return 1;
}

// Runs `fn`, tagging any error with the module it came from.
template <class Fn>
auto stage(const char* module, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Failure&) {
        throw;
    } catch (const std::exception& e) {
        throw Failure{exit_code_for(e), std::string(module) + ": " + e.what()};
    }
}

struct Options {
    std::string config;
    std::uint64_t seed = 1;

    // synthetic pair
    std::size_t size = 128;
    std::size_t height = 0;
    std::size_t width = 0;
    double change_fraction = 0.05;
    double looks = 4.0;
    double contrast = 2.0;

    // inputs and outputs
    std::string i1 = "i1.pgm";
    std::string i2 = "i2.pgm";
    std::string truth = "truth.pgm";
    std::string pred = "map.pgm";
    std::string out_dir = ".";
    std::string out;
    std::string save;
    std::string checkpoint;
    std::string csv;

    // pipeline
    std::string op = "log_ratio";
    std::string labels = "fcm";
    bool balance = false;
    double fraction = 0.06;
    std::string conv = "deformable";
    std::string pool = "residual";
    std::size_t s = 4;
    std::size_t epochs = 50;
    std::size_t batch = 128;
    double lr = 1e-2;
    double momentum = 0.9;

    std::string which;
    std::size_t nt = 65536;
};

void add_seed(CLI::App* c, Options& o) {
    c->add_option("--seed", o.seed, "Seed fanned out to the data, weight, sampling, shuffle and clustering streams")
        ->capture_default_str();
}

void add_config(CLI::App* c, Options& o) {
    c->add_option("--config", o.config, "File of key=value lines (# comments); command-line flags take precedence");
}

void add_synth(CLI::App* c, Options& o) {
    c->add_option("--size", o.size, "Square image extent in pixels")->capture_default_str();
    c->add_option("--height", o.height, "Image height (overrides --size)");
    c->add_option("--width", o.width, "Image width (overrides --size)");
    c->add_option("--change-fraction", o.change_fraction, "Target fraction of changed pixels, in (0, 0.3]")
        ->capture_default_str();
    c->add_option("--looks", o.looks, "Speckle looks L (gamma shape, mean 1)")->capture_default_str();
    c->add_option("--contrast", o.contrast, "Reflectance multiplier inside changed regions")->capture_default_str();
}

void add_pair_inputs(CLI::App* c, Options& o) {
    c->add_option("--i1", o.i1, "First acquisition (PGM P5)")->capture_default_str();
    c->add_option("--i2", o.i2, "Second acquisition (PGM P5)")->capture_default_str();
}

void add_operator(CLI::App* c, Options& o) {
    c->add_option("--operator", o.op, "Difference operator")
        ->check(CLI::IsMember({"log_ratio", "log-ratio", "mean_ratio", "mean-ratio"}))
        ->capture_default_str();
}

void add_training(CLI::App* c, Options& o) {
    add_operator(c, o);
    c->add_option("--truth", o.truth, "Ground-truth change mask (PGM P5)")->capture_default_str();
    c->add_option("--labels", o.labels, "Training label source: fcm pre-classification or the truth mask")
        ->check(CLI::IsMember({"fcm", "truth"}))
        ->capture_default_str();
    c->add_flag("--balance", o.balance, "Draw half of the samples from each class, most confident first");
    c->add_option("--fraction", o.fraction, "Fraction of all pixels used as training samples")->capture_default_str();
    c->add_option("--s", o.s, "Residual pooling subset count")->capture_default_str();
    c->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
    c->add_option("--batch", o.batch, "Minibatch size")->capture_default_str();
    c->add_option("--lr", o.lr, "SGD learning rate")->capture_default_str();
    c->add_option("--momentum", o.momentum, "SGD momentum")->capture_default_str();
    c->add_option("--out-dir", o.out_dir, "Output directory")->capture_default_str();
}

void add_variant(CLI::App* c, Options& o) {
    c->add_option("--conv", o.conv, "Convolution type")
        ->check(CLI::IsMember({"regular", "deformable"}))
        ->capture_default_str();
    c->add_option("--pool", o.pool, "Pooling type")
        ->check(CLI::IsMember({"vanilla", "stacked", "residual"}))
        ->capture_default_str();
}

// Fills options not given on the command line from the config file.
void apply_config(CLI::App* cmd, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigINI().from_config(in);
    } catch (const CLI::Error& e) {
        throw ConfigError("config file '" + path + "': " + e.what());
    }
    for (const CLI::ConfigItem& item : items) {
        std::string key = item.name;
        std::replace(key.begin(), key.end(), '_', '-');
        if (!item.parents.empty() || key == "config") throw ConfigError("config file: unsupported key '" + item.fullname() + "'");
        CLI::Option* opt = cmd->get_option_no_throw("--" + key);
        if (!opt) throw ConfigError("config file: unknown key '" + item.name + "' for " + cmd->get_name());
        if (opt->count() > 0) continue;
        try {
            opt->add_result(item.inputs);
            opt->run_callback();
        } catch (const CLI::Error& e) {
            throw ConfigError("config file: key '" + item.name + "': " + e.what());
        }
    }
}

std::string manifest(CLI::App* cmd) {
    std::ostringstream m;
    m << "# resolved settings for '" << cmd->get_name() << "'\n";
    std::istringstream lines(cmd->config_to_str(true, false));
    for (std::string line; std::getline(lines, line);)
        if (line.rfind("config=", 0) != 0) m << line << "\n";
    return m.str();
}

SynthParams synth_params(const Options& o) {
    SynthParams p;
    p.height = o.height ? o.height : o.size;
    p.width = o.width ? o.width : o.size;
    p.change_fraction = o.change_fraction;
    p.looks = o.looks;
    p.contrast = o.contrast;
    p.validate();
    return p;
}

NetworkConfig network_config(const Options& o) {
    NetworkConfig c;
    c.conv_type = parse_conv_type(o.conv);
    c.pool_type = parse_pool_type(o.pool);
    c.s = o.s;
    c.validate();
    return c;
}

ExperimentConfig experiment_config(const Options& o, const NetworkConfig& net) {
    ExperimentConfig c;
    c.net = net;
    c.di = parse_di_operator(o.op);
    c.labels_from_truth = o.labels == "truth";
    c.balance = o.balance;
    c.fraction = o.fraction;
    c.seed = o.seed;
    c.train.epochs = o.epochs;
    c.train.batch = o.batch;
    c.train.sgd.lr = o.lr;
    c.train.sgd.momentum = o.momentum;
    c.train.seed = o.seed;
    if (!(o.fraction > 0.0 && o.fraction <= 1.0)) throw ArgumentError("--fraction must be in (0, 1]");
    if (o.epochs == 0) throw ArgumentError("--epochs must be positive");
    if (o.batch == 0) throw ArgumentError("--batch must be positive");
    if (!(o.lr > 0.0) || !std::isfinite(o.lr)) throw ArgumentError("--lr must be positive and finite");
    if (!(o.momentum >= 0.0 && o.momentum < 1.0)) throw ArgumentError("--momentum must be in [0, 1)");
    return c;
}

ImagePair read_pair(const Options& o) {
    ImagePair pair;
    pair.i1 = read_pgm(o.i1).image;
    pair.i2 = read_pgm(o.i2).image;
    pair.meta.seed = o.seed;
    pair.validate();
    return pair;
}

ChangeMask read_truth(const Options& o, const ImagePair& pair) {
    ChangeMask truth = read_mask(o.truth);
    require_same_extents(truth.height, truth.width, pair.height(), pair.width(), "truth mask");
    return truth;
}

fs::path out_path(const Options& o, const char* name) { return fs::path(o.out_dir) / name; }

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

std::string csv_field(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

// One training run on a prepared pair; returns the CSV row body FP,FN,OE,PCC,status.
std::string experiment_row(const ImagePair& pair, const ChangeMask& truth, const ExperimentConfig& cfg,
                           const std::vector<Sample>& samples, std::ostream& err, const std::string& tag) {
    try {
        cfg.net.validate();
        const ExperimentResult r = run_experiment(pair, truth, cfg, samples);
        return std::to_string(r.metrics.fp) + "," + std::to_string(r.metrics.fn) + "," +
               std::to_string(r.metrics.oe) + "," + r.metrics.pcc_text() + ",ok";
    } catch (const Error& e) {
        err << tag << ": " << e.what() << "\n";
        const char* kind = dynamic_cast<const ConfigError*>(&e) ? "skip" : "error";
        return std::string(",,,,") + kind + ":" + csv_field(e.what());
    }
}

int cmd_generate(const Options& o, CLI::App* cmd, std::ostream& out) {
    const SynthParams params = stage("dataio-synth", [&] { return synth_params(o); });
    const SynthResult r = stage("dataio-synth", [&] {
        Rng rng(o.seed, Stream::data);
        return generate_pair(params, rng);
    });
    stage("dataio-synth", [&] {
        ensure_dir(o.out_dir);
        write_pgm(r.pair.i1, out_path(o, "i1.pgm"), 65535);
        write_pgm(r.pair.i2, out_path(o, "i2.pgm"), 65535);
        write_mask(r.truth, out_path(o, "truth.pgm"));
        write_file_atomic(out_path(o, "manifest.txt"), manifest(cmd));
    });
    out << "wrote " << params.height << "x" << params.width << " pair to " << o.out_dir << " ("
        << r.truth.count_changed() << " changed pixels)\n";
    return kOk;
}

int cmd_di(const Options& o, std::ostream& out) {
    const DiOperator op = stage("cli", [&] { return parse_di_operator(o.op); });
    const ImagePair pair = stage("dataio-synth", [&] { return read_pair(o); });
    DifferenceImage di = stage("di-preclass", [&] { return difference_image(pair, op); });
    const std::string path = o.out.empty() ? "di.pgm" : o.out;
    stage("dataio-synth", [&] {
        for (double& v : di.values.pixels) v *= 65535.0;
        write_pgm(di.values, path, 65535);
    });
    out << "wrote " << to_string(op) << " difference image to " << path << "\n";
    return kOk;
}

int cmd_preclassify(const Options& o, std::ostream& out) {
    const DiOperator op = stage("cli", [&] { return parse_di_operator(o.op); });
    const ImagePair pair = stage("dataio-synth", [&] { return read_pair(o); });
    const LabelField labels = stage("di-preclass", [&] {
        Rng rng(o.seed, Stream::clustering);
        return fcm_preclassify(difference_image(pair, op), FcmOptions{}, rng);
    });
    const std::string path = o.out.empty() ? "labels.pgm" : o.out;
    stage("dataio-synth", [&] {
        Image img(labels.height, labels.width);
        for (std::size_t k = 0; k < labels.size(); ++k) {
            const Label l = labels.labels[k];
            img.pixels[k] = l == Label::changed ? 255.0 : l == Label::uncertain ? 128.0 : 0.0;
        }
        write_pgm(img, path, 255);
    });
    out << "unchanged=" << labels.count(Label::unchanged) << " uncertain=" << labels.count(Label::uncertain)
        << " changed=" << labels.count(Label::changed) << "\n";
    return kOk;
}

int cmd_run(const Options& o, CLI::App* cmd, std::ostream& out) {
    const NetworkConfig net_cfg = stage("network", [&] { return network_config(o); });
    const ExperimentConfig cfg = stage("cli", [&] { return experiment_config(o, net_cfg); });
    const ImagePair pair = stage("dataio-synth", [&] { return read_pair(o); });
    const ChangeMask truth = stage("dataio-synth", [&] { return read_truth(o, pair); });
    const std::vector<Sample> samples =
        stage("di-preclass", [&] { return experiment_samples(pair, &truth, cfg); });
    Network net;
    const ExperimentResult r =
        stage("train-eval", [&] { return run_experiment(pair, truth, cfg, samples, &net); });
    const std::string variant = to_string(cfg.net.conv_type) + "+" + to_string(cfg.net.pool_type);
    stage("dataio-synth", [&] {
        ensure_dir(o.out_dir);
        write_mask(r.map, out_path(o, "map.pgm"));
        write_file_atomic(out_path(o, "metrics.csv"),
                          metrics_csv_header() + "\n" + metrics_csv_line(o.i1, variant, r.metrics) + "\n");
        write_file_atomic(out_path(o, "loss.csv"), loss_trace_csv(r.trace));
        write_file_atomic(out_path(o, "manifest.txt"), manifest(cmd));
    });
    if (!o.save.empty()) stage("network", [&] { save(net, o.save); });
    out << variant << ": " << metrics_text(r.metrics) << " (" << r.samples << " samples, " << r.changed_samples
        << " changed)\n";
    return kOk;
}

int cmd_ablate(const Options& o, CLI::App* cmd, std::ostream& out, std::ostream& err) {
    const ExperimentConfig base = stage("cli", [&] {
        NetworkConfig net;
        net.s = o.s;
        return experiment_config(o, net);
    });
    const ImagePair pair = stage("dataio-synth", [&] { return read_pair(o); });
    const ChangeMask truth = stage("dataio-synth", [&] { return read_truth(o, pair); });
    const std::vector<Sample> samples =
        stage("di-preclass", [&] { return experiment_samples(pair, &truth, base); });
    std::string csv = "variant,FP,FN,OE,PCC,status\n";
    for (int row = 1; row <= kAblationRows; ++row) {
        ExperimentConfig cfg = base;
        cfg.net = ablation_variant(row, base.net);
        const std::string body = experiment_row(pair, truth, cfg, samples, err, "variant " + std::to_string(row));
        csv += std::to_string(row) + "," + body + "\n";
        out << "#" << row << " " << ablation_label(row) << ": " << body << "\n";
    }
    stage("dataio-synth", [&] {
        ensure_dir(o.out_dir);
        write_file_atomic(out_path(o, "ablation.csv"), csv);
        write_file_atomic(out_path(o, "manifest.txt"), manifest(cmd));
    });
    return kOk;
}

int cmd_sweep(const Options& o, CLI::App* cmd, std::ostream& out, std::ostream& err) {
    const ExperimentConfig base = stage("cli", [&] {
        NetworkConfig net;
        net.conv_type = parse_conv_type(o.conv);
        net.pool_type = parse_pool_type(o.pool);
        net.s = o.s;
        if (o.which == "samples") net.validate();
        return experiment_config(o, net);
    });
    const ImagePair pair = stage("dataio-synth", [&] { return read_pair(o); });
    const ChangeMask truth = stage("dataio-synth", [&] { return read_truth(o, pair); });

    std::string csv = o.which + ",FP,FN,OE,PCC,status\n";
    auto emit = [&](const std::string& value, const std::string& body) {
        csv += value + "," + body + "\n";
        out << o.which << "=" << value << ": " << body << "\n";
    };
    if (o.which == "samples") {
        for (const char* f : {"0.02", "0.04", "0.06", "0.08", "0.10"}) {
            ExperimentConfig cfg = base;
            cfg.fraction = std::stod(f);
            const auto samples = stage("di-preclass", [&] { return experiment_samples(pair, &truth, cfg); });
            emit(f, experiment_row(pair, truth, cfg, samples, err, std::string("fraction ") + f));
        }
    } else {
        const auto samples = stage("di-preclass", [&] { return experiment_samples(pair, &truth, base); });
        for (std::size_t s = 1; s <= 5; ++s) {
            ExperimentConfig cfg = base;
            cfg.net.s = s;
            emit(std::to_string(s), experiment_row(pair, truth, cfg, samples, err, "s=" + std::to_string(s)));
        }
    }
    stage("dataio-synth", [&] {
        ensure_dir(o.out_dir);
        write_file_atomic(out_path(o, ("sweep_" + o.which + ".csv").c_str()), csv);
        write_file_atomic(out_path(o, "manifest.txt"), manifest(cmd));
    });
    return kOk;
}

int cmd_predict(const Options& o, std::ostream& out) {
    const Network net = stage("network", [&] { return load(o.checkpoint); });
    const ImagePair pair = stage("dataio-synth", [&] { return read_pair(o); });
    const ChangeMask map = stage("train-eval", [&] { return predict_map(net, pair); });
    const std::string path = o.out.empty() ? "map.pgm" : o.out;
    stage("dataio-synth", [&] { write_mask(map, path); });
    out << "wrote change map to " << path << " (" << map.count_changed() << " changed pixels)\n";
    return kOk;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
    const ChangeMask pred = stage("dataio-synth", [&] { return read_mask(o.pred); });
    const ChangeMask truth = stage("dataio-synth", [&] { return read_mask(o.truth); });
    const MetricsReport m = stage("train-eval", [&] { return evaluate(pred, truth); });
    if (!o.out.empty())
        stage("dataio-synth", [&] {
            write_file_atomic(o.out, metrics_csv_header() + "\n" + metrics_csv_line(o.truth, o.pred, m) + "\n");
        });
    out << metrics_text(m) << "\n";
    return kOk;
}

int cmd_validate_table(const Options& o, std::ostream& out) {
    const std::string text = stage("dataio-synth", [&] {
        std::ifstream in(o.csv, std::ios::binary);
        if (!in) throw IoError("cannot open '" + o.csv + "'");
        std::ostringstream buf;
        buf << in.rdbuf();
        return buf.str();
    });
    const std::vector<TableRow> rows = stage("train-eval", [&] { return parse_table_csv(text); });
    const std::vector<RowCheck> checks = stage("train-eval", [&] { return validate_table(rows, o.nt); });
    std::size_t flagged = 0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (checks[k].ok()) continue;
        ++flagged;
        const TableRow& r = rows[k];
        out << "FLAG " << r.dataset << "/" << r.method << ":";
        if (!checks[k].oe_ok) out << " OE " << r.oe << " != FP+FN " << r.fp + r.fn;
        if (!checks[k].pcc_ok) out << " PCC " << r.pcc << " != " << format_pcc(r.oe, o.nt);
        out << "\n";
    }
    out << "rows=" << rows.size() << " flagged=" << flagged << "\n";
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Deformable residual network change detection on SAR image pairs", "drnet"};
    app.require_subcommand(1);
    Options o;

    auto* gen = app.add_subcommand("generate", "Generate a seeded synthetic SAR pair with its truth mask");
    add_config(gen, o);
    add_seed(gen, o);
    add_synth(gen, o);
    gen->add_option("--out-dir", o.out_dir, "Output directory for i1.pgm, i2.pgm, truth.pgm")->capture_default_str();

    auto* di = app.add_subcommand("di", "Compute a difference image");
    add_config(di, o);
    add_pair_inputs(di, o);
    add_operator(di, o);
    di->add_option("--out", o.out, "Output PGM (default di.pgm)");

    auto* pre = app.add_subcommand("preclassify", "Fuzzy c-means pre-classification of the difference image");
    add_config(pre, o);
    add_seed(pre, o);
    add_pair_inputs(pre, o);
    add_operator(pre, o);
    pre->add_option("--out", o.out, "Output PGM: 0 unchanged, 128 uncertain, 255 changed (default labels.pgm)");

    auto* run = app.add_subcommand("run", "Train one network variant, predict the change map and evaluate it");
    add_config(run, o);
    add_seed(run, o);
    add_pair_inputs(run, o);
    add_variant(run, o);
    add_training(run, o);
    run->add_option("--save", o.save, "Write the trained network checkpoint here");

    auto* abl = app.add_subcommand("ablate", "Train all six ablation variants on the same samples");
    add_config(abl, o);
    add_seed(abl, o);
    add_pair_inputs(abl, o);
    add_training(abl, o);

    auto* sweep = app.add_subcommand("sweep", "Sweep the training fraction or the residual pooling subset count");
    add_config(sweep, o);
    add_seed(sweep, o);
    add_pair_inputs(sweep, o);
    add_variant(sweep, o);
    add_training(sweep, o);
    sweep->add_option("--which", o.which, "Swept quantity")->required()->check(CLI::IsMember({"samples", "s"}));

    auto* pred = app.add_subcommand("predict", "Classify every pixel with a saved checkpoint");
    add_config(pred, o);
    add_pair_inputs(pred, o);
    pred->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
    pred->add_option("--out", o.out, "Output change map (default map.pgm)");

    auto* ev = app.add_subcommand("evaluate", "Compare a change map against the truth mask");
    add_config(ev, o);
    ev->add_option("--pred", o.pred, "Predicted change map")->capture_default_str();
    ev->add_option("--truth", o.truth, "Ground-truth change mask")->capture_default_str();
    ev->add_option("--out", o.out, "Optional metrics CSV");

    auto* vt = app.add_subcommand("validate-table", "Check FP/FN/OE/PCC consistency of a results table");
    add_config(vt, o);
    vt->add_option("--csv", o.csv, "Table CSV with header dataset,method,FP,FN,OE,PCC")->required();
    vt->add_option("--nt", o.nt, "Pixel count per image")->capture_default_str();

    CLI::App* cmd = nullptr;
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
        cmd = app.get_subcommands().front();
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (!o.config.empty()) stage("cli", [&] { apply_config(cmd, o.config); });
        if (cmd == sweep && o.which != "samples" && o.which != "s")
            throw Failure{kUsage, "cli: --which must be samples or s"};
        if (cmd == gen) return cmd_generate(o, cmd, out);
        if (cmd == di) return cmd_di(o, out);
        if (cmd == pre) return cmd_preclassify(o, out);
        if (cmd == run) return cmd_run(o, cmd, out);
        if (cmd == abl) return cmd_ablate(o, cmd, out, err);
        if (cmd == sweep) return cmd_sweep(o, cmd, out, err);
        if (cmd == pred) return cmd_predict(o, out);
        if (cmd == ev) return cmd_evaluate(o, out);
        return cmd_validate_table(o, out);
    } catch (const Failure& f) {
        err << "error: " << f.message << "\n";
        return f.code;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

}  // namespace drnet::cli
