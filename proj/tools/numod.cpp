// numod command line: synthesize datasets, compute invariant images, train
// in batch or online mode, apply checkpoints and score masks.

#include <malloc.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "numod/numod.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

/// Bad arguments or unusable input paths; maps to exit code 2.
struct UsageError : numod::Error {
    using numod::Error::Error;
};

struct InputOptions {
    std::string input;
    std::string pattern = "*.png";
    std::optional<int> max_side;
    int threads = 1;
};

struct InvariantOptions {
    std::optional<double> angle;
    int window = 7;
    std::optional<double> noise;
    int angles = 180;
};

// A dataset directory with an input/ subfolder, or a folder of frames.
fs::path frames_dir(const std::string& path) {
    const fs::path p(path);
    if(!fs::is_directory(p))
        throw UsageError("input directory does not exist: " + path);
    if(fs::is_directory(p / "input"))
        return p / "input";
    return p;
}

numod::Sequence load_input(const InputOptions& in) {
    const fs::path dir = frames_dir(in.input);
    try {
        return numod::load_sequence(dir, in.pattern, in.max_side);
    } catch(const numod::Error& e) {
        if(std::string(e.what()).rfind("no files matching", 0) == 0)
            throw UsageError(e.what());
        throw;
    }
}

numod::InvariantModel make_invariant(const numod::Sequence& seq, const InvariantOptions& o) {
    numod::InvariantModel m;
    m.wiener_window = o.window;
    m.wiener_noise = o.noise;
    if(o.angle) {
        m.theta = *o.angle;
    } else {
        numod::CalibrationOptions c;
        c.n_angles = o.angles;
        c.epsilon_log = m.epsilon_log;
        m.theta = numod::calibrate_direction(seq, c);
    }
    m.validate();
    return m;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    if(!out)
        throw numod::Error("cannot write " + path.string());
}

void prepare_output(const fs::path& dir, const std::vector<std::string>& subdirs) {
    for(const auto& s : subdirs)
        fs::create_directories(dir / s);
}

void write_decompositions(const fs::path& out, const std::vector<std::string>& ids, const std::vector<numod::Decomposition>& decomps, std::size_t first, int w, int h, int c) {
    for(std::size_t k = 0; k < decomps.size(); ++k) {
        const std::string name = ids[first + k] + ".png";
        const auto& d = decomps[k];
        numod::save_mask(d.mask, out / "masks" / name);
        numod::save_image(d.background, w, h, c, out / "background" / name);
        numod::save_image(d.illumination, w, h, c, out / "illumination" / name, true);
        numod::save_image(d.foreground, w, h, c, out / "foreground" / name, true);
    }
}

void add_input_options(CLI::App* app, InputOptions& in) {
    app->add_option("-i,--input", in.input, "Dataset directory (with input/) or directory of frames")->required();
    app->add_option("--pattern", in.pattern, "Filename glob for frames")->capture_default_str();
    app->add_option("--max-side", in.max_side, "Nearest-neighbour downsample so max(width,height) <= N");
    app->add_option("--threads", in.threads, "Worker thread cap")->capture_default_str()->check(CLI::PositiveNumber);
}

void add_invariant_options(CLI::App* app, InvariantOptions& o) {
    app->add_option("--angle", o.angle, "Invariant direction angle in radians (skips calibration)")->check(CLI::Range(0.0, 3.14159265358979));
    app->add_option("--window", o.window, "Wiener window size (odd, >= 3)")->capture_default_str();
    app->add_option("--noise", o.noise, "Wiener noise variance (default: median local variance)");
    app->add_option("--angles", o.angles, "Calibration grid size")->capture_default_str()->check(CLI::PositiveNumber);
}

void add_train_options(CLI::App* app, numod::TrainConfig& c, std::string& prior_mode) {
    app->add_option("--latent", c.latent, "Latent code size")->capture_default_str();
    app->add_option("--hidden1", c.hidden1, "First hidden layer size")->capture_default_str();
    app->add_option("--hidden2", c.hidden2, "Second hidden layer size")->capture_default_str();
    app->add_option("--lambda", c.lambda, "Weight decay")->capture_default_str();
    app->add_option("--lr", c.lr, "Adam learning rate")->capture_default_str();
    app->add_option("--epochs", c.epochs, "Batch epochs")->capture_default_str();
    app->add_option("--minibatch", c.minibatch_frames, "Frames per minibatch (0: automatic)")->capture_default_str();
    app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    app->add_option("--stream", c.online_stream, "Online stream length in frames")->capture_default_str();
    app->add_option("--online-iterations", c.online_iterations, "Adam iterations per online stream")->capture_default_str();
    app->add_option("--pretrain-fraction", c.pretrain_fraction, "Fraction of frames used for online pretraining")->capture_default_str();
    app->add_option("--threshold-factor", c.threshold_factor, "Mask threshold in units of the foreground std")->capture_default_str();
    app->add_option("--prior-mode", prior_mode, "Prior map form: distance (default) or shifted")->capture_default_str()->check(CLI::IsMember({"distance", "shifted"}));
}

json frame_list(const std::vector<std::string>& ids, std::size_t first, std::size_t last) {
    return std::vector<std::string>(ids.begin() + std::ptrdiff_t(first), ids.begin() + std::ptrdiff_t(last));
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    std::string out;
    std::uint64_t seed = 1;
    std::optional<int> frames;
    std::optional<double> noise;
    std::optional<double> texture_amplitude;
};

void cmd_synth(const SynthArgs& a) {
    numod::SynthConfig cfg = numod::standard_fixture(a.seed);
    if(a.frames) {
        cfg.n_frames = *a.frames;
        for(auto& e : cfg.events) {
            e.end = std::min(e.end, cfg.n_frames - 1);
            e.start = std::min(e.start, e.end);
        }
    }
    if(a.noise)
        cfg.noise_std = *a.noise;
    if(a.texture_amplitude)
        cfg.texture_amplitude = *a.texture_amplitude;
    const numod::SynthOutput s = numod::generate(cfg);

    const fs::path out(a.out);
    prepare_output(out, {"input", "groundtruth"});
    for(std::size_t i = 0; i < s.sequence.size(); ++i) {
        numod::save_image(s.sequence.frames[i], out / "input" / (s.sequence.frame_ids[i] + ".png"));
        numod::save_mask(s.masks.masks[i], out / "groundtruth" / (s.masks.frame_ids[i] + ".png"));
    }
    json events = json::array();
    for(const auto& e : s.events)
        events.push_back({{"frame", e.frame}, {"type", numod::to_string(e.kind)}, {"value", e.value}, {"cx", e.cx}, {"cy", e.cy}});
    write_json(out / "events.json", {{"width", cfg.width}, {"height", cfg.height}, {"frames", cfg.n_frames}, {"seed", cfg.seed},
                                     {"noise_std", cfg.noise_std}, {"events", events}});
    std::cout << "wrote " << s.sequence.size() << " frames to " << out.string() << '\n';
}

// ---------------------------------------------------------------- invariant

void cmd_invariant(const InputOptions& in, const InvariantOptions& io, const std::string& out_dir) {
    const numod::Sequence seq = load_input(in);
    if(seq.channels() != 3)
        throw UsageError("invariant images need RGB input");
    const numod::InvariantModel model = make_invariant(seq, io);
    const numod::Sequence inv = numod::psi_sequence(seq, model, in.threads);
    const fs::path out(out_dir);
    fs::create_directories(out);
    for(std::size_t i = 0; i < inv.size(); ++i)
        numod::save_image(inv.frames[i], out / (inv.frame_ids[i] + ".png"));
    write_json(out / "invariant.json", numod::to_json(model));
    std::cout << "theta " << model.theta << ", wrote " << inv.size() << " invariant frames\n";
}

// ---------------------------------------------------------------- train / decompose

struct TrainArgs {
    InputOptions in;
    InvariantOptions inv;
    numod::TrainConfig config;
    std::string prior_mode = "distance";
    std::string mode = "batch";
    std::string output;
    std::string checkpoint;
    bool quiet = false;
};

json base_manifest(const std::string& command, const TrainArgs& a, const numod::Sequence& seq, const numod::NumodModel& model) {
    return {{"tool", "numod"}, {"version", kVersion}, {"command", command}, {"mode", a.mode},
            {"input", a.in.input}, {"pattern", a.in.pattern}, {"max_side", a.in.max_side ? json(*a.in.max_side) : json(nullptr)},
            {"threads", a.in.threads}, {"width", seq.width()}, {"height", seq.height()}, {"channels", seq.channels()},
            {"frames", seq.frame_ids}, {"config", numod::to_json(model.config)}, {"invariant", numod::to_json(model.invariant)}};
}

json online_manifest(const numod::OnlineResult& r, const std::vector<std::string>& ids, std::size_t first, int stream) {
    json streams = json::array();
    for(std::size_t s = 0; s < r.stream_losses.size(); ++s) {
        const std::size_t b = first + s * std::size_t(stream);
        const std::size_t e = std::min(first + r.decompositions.size(), b + std::size_t(stream));
        streams.push_back({{"first", ids[b]}, {"last", ids[e - 1]}, {"frames", e - b}, {"loss", r.stream_losses[s]}, {"t", r.stream_t[s]}});
    }
    return {{"streams", streams}, {"sigma", r.sigma}};
}

numod::Sequence subsequence(const numod::Sequence& s, std::size_t b, std::size_t e) {
    numod::Sequence out;
    out.frames.assign(s.frames.begin() + std::ptrdiff_t(b), s.frames.begin() + std::ptrdiff_t(e));
    out.frame_ids.assign(s.frame_ids.begin() + std::ptrdiff_t(b), s.frame_ids.begin() + std::ptrdiff_t(e));
    return out;
}

void cmd_train(TrainArgs a) {
    a.config.prior_mode = numod::prior_mode_from_string(a.prior_mode);
    a.config.validate();
    std::optional<numod::NumodModel> pretrained;
    if(!a.checkpoint.empty()) {
        if(!fs::is_regular_file(a.checkpoint))
            throw UsageError("checkpoint not found: " + a.checkpoint);
        pretrained = numod::load_checkpoint(a.checkpoint);
    }
    const numod::Sequence seq = load_input(a.in);
    if(seq.channels() != 3)
        throw UsageError("training needs RGB input");
    if(a.mode == "batch" && pretrained)
        throw UsageError("--checkpoint is only used with --mode online");

    const numod::InvariantModel im = pretrained ? pretrained->invariant : make_invariant(seq, a.inv);
    const numod::Sequence inv = numod::psi_sequence(seq, im, a.in.threads);
    const int w = seq.width(), h = seq.height(), c = seq.channels();

    auto report = [&](const char* what) {
        return [what, quiet = a.quiet](int i, double loss) {
            if(!quiet && (i % 50 == 0))
                std::cerr << what << ' ' << i << " loss " << loss << '\n';
        };
    };

    const fs::path out(a.output);
    json manifest;
    if(a.mode == "batch") {
        const numod::BatchResult r = numod::train_batch(seq, inv, a.config, im, report("epoch"));
        prepare_output(out, {"masks", "background", "illumination", "foreground"});
        write_decompositions(out, seq.frame_ids, r.decompositions, 0, w, h, c);
        numod::save_checkpoint(r.model, out / "checkpoint.json");
        manifest = base_manifest("train", a, seq, r.model);
        manifest["epoch_losses"] = r.epoch_losses;
        manifest["initial_loss"] = r.initial_terms.total();
        manifest["final_loss"] = r.final_terms.total();
        manifest["sigma"] = r.sigma;
        manifest["t"] = r.t;
    } else {
        numod::NumodModel model;
        numod::OnlineState state;
        std::size_t first = 0;
        json pre;
        if(pretrained) {
            model = *pretrained;
            model.config.online_stream = a.config.online_stream;
            model.config.online_iterations = a.config.online_iterations;
            model.config.threshold_factor = a.config.threshold_factor;
        } else {
            first = std::max<std::size_t>(1, std::size_t(std::floor(double(seq.size()) * a.config.pretrain_fraction)));
            if(first >= seq.size())
                throw UsageError("online mode needs frames left after pretraining");
            const numod::BatchResult r = numod::train_batch(subsequence(seq, 0, first), subsequence(inv, 0, first), a.config, im, report("epoch"));
            model = r.model;
            state = numod::online_state_from(r);
            prepare_output(out, {"masks", "background", "illumination", "foreground"});
            write_decompositions(out, seq.frame_ids, r.decompositions, 0, w, h, c);
            pre = {{"frames", first}, {"epoch_losses", r.epoch_losses}, {"initial_loss", r.initial_terms.total()},
                   {"final_loss", r.final_terms.total()}, {"sigma", r.sigma}, {"t", r.t}};
        }
        const numod::OnlineResult r = numod::train_online(model, subsequence(seq, first, seq.size()), subsequence(inv, first, seq.size()), state, report("stream"));
        prepare_output(out, {"masks", "background", "illumination", "foreground"});
        write_decompositions(out, seq.frame_ids, r.decompositions, first, w, h, c);
        numod::save_checkpoint(model, out / "checkpoint.json");
        manifest = base_manifest("train", a, seq, model);
        manifest["checkpoint_in"] = a.checkpoint.empty() ? json(nullptr) : json(a.checkpoint);
        manifest["pretrain"] = pre.is_null() ? json(nullptr) : pre;
        manifest["online"] = online_manifest(r, seq.frame_ids, first, model.config.online_stream);
        manifest["online"]["streamed_frames"] = frame_list(seq.frame_ids, first, seq.size());
    }
    write_json(out / "manifest.json", manifest);
    std::cout << "wrote results for " << seq.size() << " frames to " << out.string() << '\n';
}

void cmd_decompose(TrainArgs a) {
    if(!fs::is_regular_file(a.checkpoint))
        throw UsageError("checkpoint not found: " + a.checkpoint);
    numod::NumodModel model = numod::load_checkpoint(a.checkpoint);
    const numod::Sequence seq = load_input(a.in);
    if(seq.width() != model.width || seq.height() != model.height || seq.channels() != model.channels)
        throw UsageError("frames do not match the checkpoint geometry (use --max-side to match)");
    model.config.online_stream = a.config.online_stream;
    model.config.online_iterations = a.config.online_iterations;
    model.config.threshold_factor = a.config.threshold_factor;
    const numod::Sequence inv = numod::psi_sequence(seq, model.invariant, a.in.threads);
    numod::OnlineState state;
    const numod::OnlineResult r = numod::train_online(model, seq, inv, state);
    const fs::path out(a.output);
    prepare_output(out, {"masks", "background", "illumination", "foreground"});
    write_decompositions(out, seq.frame_ids, r.decompositions, 0, seq.width(), seq.height(), seq.channels());
    a.mode = "online";
    json manifest = base_manifest("decompose", a, seq, model);
    manifest["checkpoint_in"] = a.checkpoint;
    manifest["online"] = online_manifest(r, seq.frame_ids, 0, model.config.online_stream);
    write_json(out / "manifest.json", manifest);
    std::cout << "decomposed " << seq.size() << " frames into " << out.string() << '\n';
}

// ---------------------------------------------------------------- eval

// Frames are matched on the trailing digits of their names (in000123 ~ gt000123),
// or on the full name when there are none.
std::string frame_key(const std::string& id) {
    std::size_t b = id.size();
    while(b > 0 && std::isdigit(static_cast<unsigned char>(id[b - 1])))
        --b;
    if(b == id.size())
        return id;
    std::string digits = id.substr(b);
    const auto nz = digits.find_first_not_of('0');
    return nz == std::string::npos ? "0" : digits.substr(nz);
}

struct EvalArgs {
    std::string pred;
    std::string gt;
    std::string pattern = "*.png";
    std::string output;
    bool exclude_unknown = false;
};

void cmd_eval(const EvalArgs& a) {
    const fs::path pred_dir = fs::is_directory(fs::path(a.pred) / "masks") ? fs::path(a.pred) / "masks" : fs::path(a.pred);
    const fs::path gt_dir = fs::is_directory(fs::path(a.gt) / "groundtruth") ? fs::path(a.gt) / "groundtruth" : fs::path(a.gt);
    if(!fs::is_directory(pred_dir) || !fs::is_directory(gt_dir))
        throw UsageError("prediction or ground-truth directory does not exist");
    numod::MaskSequence pred, gt;
    try {
        pred = numod::load_masks(pred_dir, a.pattern);
        numod::MaskLoadOptions opt;
        opt.exclude_unknown = a.exclude_unknown;
        gt = numod::load_masks(gt_dir, a.pattern, opt);
    } catch(const numod::Error& e) {
        throw UsageError(e.what());
    }

    std::map<std::string, std::size_t> gt_index;
    for(std::size_t i = 0; i < gt.size(); ++i)
        gt_index[frame_key(gt.frame_ids[i])] = i;
    std::set<std::string> pred_keys;
    std::vector<std::string> missing_gt;
    for(const auto& id : pred.frame_ids) {
        pred_keys.insert(frame_key(id));
        if(!gt_index.count(frame_key(id)))
            missing_gt.push_back(id);
    }
    std::vector<std::string> missing_pred;
    for(const auto& id : gt.frame_ids)
        if(!pred_keys.count(frame_key(id)))
            missing_pred.push_back(id);
    if(!missing_gt.empty() || !missing_pred.empty()) {
        std::string msg = "frame sets differ;";
        for(const auto& id : missing_gt)
            msg += " no ground truth for " + id + ";";
        for(const auto& id : missing_pred)
            msg += " no prediction for " + id + ";";
        throw UsageError(msg);
    }

    const fs::path out(a.output);
    fs::create_directories(out);
    std::ofstream csv(out / "scores.csv");
    csv << "frame_id,tp,fp,fn,tn,precision,recall,f_measure\n";
    csv.precision(10);
    std::vector<numod::FrameScore> scores;
    for(std::size_t i = 0; i < pred.size(); ++i) {
        const std::size_t g = gt_index.at(frame_key(pred.frame_ids[i]));
        if(pred.masks[i].width != gt.masks[g].width || pred.masks[i].height != gt.masks[g].height)
            throw UsageError("mask size mismatch for frame " + pred.frame_ids[i]);
        const numod::FrameScore s = numod::confusion(pred.masks[i], gt.masks[g], gt.roi.empty() ? nullptr : &gt.roi[g]);
        scores.push_back(s);
        csv << pred.frame_ids[i] << ',' << s.tp << ',' << s.fp << ',' << s.fn << ',' << s.tn << ',';
        if(s.defined)
            csv << s.precision << ',' << s.recall << ',' << s.f_measure << '\n';
        else
            csv << ",,\n";
    }
    const double f = numod::f_measure_sequence(scores);
    std::size_t evaluated = 0;
    for(const auto& s : scores)
        evaluated += s.defined;
    write_json(out / "summary.json", {{"f_measure", f}, {"frames", scores.size()}, {"evaluated_frames", evaluated}, {"exclude_unknown", a.exclude_unknown}});
    std::cout << "F-measure " << f << " over " << evaluated << " frames\n";
}

} // namespace

int main(int argc, char** argv) {
    // Training allocates the same large buffers every step; keep them in the heap.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);

    CLI::App app{"numod: moving object detection under illumination changes"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.set_config("--config", "", "Key-value config file; values are overridden by flags");

    SynthArgs synth;
    auto* sc = app.add_subcommand("synth", "Write the synthetic fixture (input/, groundtruth/, events.json)");
    sc->add_option("-o,--output", synth.out, "Output dataset directory")->required();
    sc->add_option("--seed", synth.seed, "Noise seed")->capture_default_str();
    sc->add_option("--frames", synth.frames, "Number of frames")->check(CLI::PositiveNumber);
    sc->add_option("--noise", synth.noise, "Gaussian noise std");
    sc->add_option("--texture-amplitude", synth.texture_amplitude, "Background texture amplitude");

    InputOptions inv_in;
    InvariantOptions inv_opt;
    std::string inv_out;
    auto* ic = app.add_subcommand("invariant", "Compute illumination-invariant images");
    add_input_options(ic, inv_in);
    add_invariant_options(ic, inv_opt);
    ic->add_option("-o,--output", inv_out, "Output directory")->required();

    TrainArgs train;
    auto* tc = app.add_subcommand("train", "Train in batch or online mode and write masks and decompositions");
    add_input_options(tc, train.in);
    add_invariant_options(tc, train.inv);
    add_train_options(tc, train.config, train.prior_mode);
    tc->add_option("--mode", train.mode, "batch or online")->capture_default_str()->check(CLI::IsMember({"batch", "online"}));
    tc->add_option("--checkpoint", train.checkpoint, "Pretrained checkpoint for online mode");
    tc->add_option("-o,--output", train.output, "Output directory")->required();
    tc->add_flag("-q,--quiet", train.quiet, "No progress output");

    TrainArgs dec;
    auto* dc = app.add_subcommand("decompose", "Fit new frames with a checkpoint's frozen networks");
    add_input_options(dc, dec.in);
    dc->add_option("--checkpoint", dec.checkpoint, "Checkpoint file")->required();
    dc->add_option("--stream", dec.config.online_stream, "Frames per stream")->capture_default_str();
    dc->add_option("--online-iterations", dec.config.online_iterations, "Adam iterations per stream")->capture_default_str();
    dc->add_option("--threshold-factor", dec.config.threshold_factor, "Mask threshold in units of the foreground std")->capture_default_str();
    dc->add_option("-o,--output", dec.output, "Output directory")->required();

    EvalArgs ev;
    auto* ec = app.add_subcommand("eval", "Score predicted masks against ground truth");
    ec->add_option("-p,--pred", ev.pred, "Predicted masks (a train output directory or a folder of masks)")->required();
    ec->add_option("-g,--gt", ev.gt, "Ground truth (a dataset directory or a folder of masks)")->required();
    ec->add_option("--pattern", ev.pattern, "Filename glob")->capture_default_str();
    ec->add_flag("--exclude-unknown", ev.exclude_unknown, "Drop CDnet unknown/outside-ROI pixels from scoring");
    ec->add_option("-o,--output", ev.output, "Directory for scores.csv and summary.json")->required();

    try {
        app.parse(argc, argv);
    } catch(const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if(*sc)
            cmd_synth(synth);
        else if(*ic)
            cmd_invariant(inv_in, inv_opt, inv_out);
        else if(*tc)
            cmd_train(train);
        else if(*dc)
            cmd_decompose(dec);
        else if(*ec)
            cmd_eval(ev);
    } catch(const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch(const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
