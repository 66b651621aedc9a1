// Command-line front end: curate, pretrain, finetune, sample, eval, synth, e2e, export.

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "cospeech/app/config.hpp"
#include "cospeech/app/pipeline.hpp"
#include "cospeech/app/records.hpp"
#include "cospeech/app/synth.hpp"
#include "cospeech/curation/curation.hpp"
#include "cospeech/errors.hpp"
#include "cospeech/io/container.hpp"
#include "cospeech/model/checkpoint.hpp"
#include "cospeech/rng.hpp"

namespace fs = std::filesystem;
using namespace cospeech;

namespace {

RunConfig config_or_default(const std::string& path) {
    return path.empty() ? parse_run_config("") : load_run_config(path);
}

std::vector<TranscriptSpan> read_transcript(const fs::path& path) {
    std::vector<TranscriptSpan> spans;
    std::ifstream in(path);
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string a, b, text;
        if (!std::getline(ls, a, '\t') || !std::getline(ls, b, '\t') || !std::getline(ls, text))
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected start<TAB>end<TAB>text");
        spans.push_back({io::parse_real(a, "span start"), io::parse_real(b, "span end"), text});
    }
    return spans;
}

void log_line(const std::string& stage, const std::string& message) {
    std::cerr << "[" << stage << "] " << message << "\n";
}

// ---- curate ------------------------------------------------------------------

int cmd_curate(const std::string& in_dir, const std::string& out_dir, const std::string& annotations,
               double clip_seconds, double angle_limit, double delta_limit, const std::string& window,
               int smooth_window) {
    CurationConfig cfg;
    cfg.clip_seconds = clip_seconds;
    cfg.wrist.angle_limit_deg = angle_limit;
    cfg.wrist.delta_limit_deg = delta_limit;
    cfg.wrist.mode = parse_window_mode(window);
    cfg.smooth_window = smooth_window;
    if (!annotations.empty()) cfg.annotations = read_annotations(annotations);
    const fs::path out(out_dir);
    fs::create_directories(out / "clips");
    std::vector<ClipManifestEntry> manifest;
    std::vector<MotionClip> accepted;
    std::string reports;
    for (auto& src : load_paired_dir(in_dir)) {
        SourceSequence seq{src.name, std::move(src.motion), std::move(src.audio), {}};
        const fs::path transcript = fs::path(in_dir) / (src.name + ".txt");
        if (fs::exists(transcript)) seq.transcript = read_transcript(transcript);
        const CurationResult r = curate_sequence(seq, cfg);
        nlohmann::ordered_json rep;
        rep["source_id"] = seq.source_id;
        rep["flagged_frames"] = r.abnormality.flagged_frames;
        std::vector<std::string> reasons;
        for (auto f : r.abnormality.reasons) reasons.push_back(to_string(f));
        rep["reasons"] = reasons;
        rep["discard_windows"] = r.abnormality.discard_windows;
        rep["rate_warning"] = r.abnormality.rate_warning;
        rep["window_mode"] = to_string(cfg.wrist.mode);
        rep["smoothing"] = cfg.smooth_window > 0 ? "chordal moving average stand-in for a learned smoother, window " +
                                                       std::to_string(cfg.smooth_window)
                                                 : "disabled";
        reports += rep.dump() + "\n";
        if (r.abnormality.rate_warning)
            log_line("curate", seq.source_id + ": fps is not 15, the per-frame delta limit may not apply");
        for (const auto& seg : r.segments) {
            manifest.push_back(seg.entry);
            if (!seg.motion) continue;
            write_gmc(out / "clips" / (seg.entry.clip_id + ".gmc"), *seg.motion);
            if (seg.audio) write_wav(out / "clips" / (seg.entry.clip_id + ".wav"), *seg.audio);
            accepted.push_back(*seg.motion);
        }
    }
    write_manifest(out / "manifest.jsonl", manifest);
    io::write_file(out / "abnormality.jsonl", reports);
    const auto stats = motion_degree_stats(accepted);
    write_tsv(out / "motion_degree_histogram.tsv", histogram_table(stats.histogram));
    const auto kept = std::count_if(manifest.begin(), manifest.end(),
                                    [](const auto& e) { return e.status == ClipStatus::kAccepted; });
    std::cout << "clips " << manifest.size() << " accepted " << kept << " discarded " << manifest.size() - kept
              << "\nsmoothing: " << (cfg.smooth_window > 0 ? "chordal moving average (learned smoother not used)" : "off")
              << "\nmotion_degree mean " << stats.mean << " std " << stats.stddev << " min " << stats.min << " max "
              << stats.max << "\n";
    return 0;
}

// ---- training ------------------------------------------------------------------

std::vector<TrainingExample> load_examples(const std::string& dir, const RunConfig& cfg, bool need_audio) {
    const auto clips = load_paired_dir(dir);
    if (clips.empty()) throw InsufficientData("no .gmc clips in " + dir);
    for (const auto& c : clips) {
        if (c.motion.frames.cols() != cfg.model.input_dim)
            throw ShapeMismatch(c.name + " has " + std::to_string(c.motion.frames.cols()) + " features, config expects " +
                                std::to_string(cfg.model.input_dim));
        if (need_audio && !c.audio) throw InsufficientData(c.name + " has no paired .wav");
    }
    return make_examples(clips, cfg.mel);
}

StepCallback step_logger(const fs::path& log_path, bool append, const std::string& stage) {
    auto writer = std::make_shared<JsonlWriter>(log_path, append);
    return [writer, stage](const StepRecord& r) {
        writer->write(step_record_json(r));
        if (r.step % 50 == 0) log_line(stage, "step " + std::to_string(r.step) + " l_total " + io::format_real(r.loss.l_total));
    };
}

int cmd_pretrain(const std::string& config, const std::string& data, const std::string& out_dir, bool resume) {
    const RunConfig cfg = config_or_default(config);
    const fs::path out(out_dir);
    fs::create_directories(out);
    const auto examples = load_examples(data, cfg, false);
    DenoiserModel model = resume ? load_denoiser(out / "expert.ckpt")
                                 : build_denoiser(cfg.model, derive_seed(cfg.seed, "init/expert"));
    if (!(model.config == cfg.model)) throw ConfigError("checkpoint model does not match [model]");
    AdamW opt(cfg.pretrain.optimizer(), {&model.params});
    if (resume) opt.load(out / "expert.adamw");
    TrainConfig tc = cfg.pretrain;
    tc.epochs = std::max(1, tc.max_steps);
    if (tc.max_steps > opt.steps())
        run_pretrain(model, examples, cfg.joint_layout(), cfg.schedule(), tc,
                     step_logger(out / "pretrain.jsonl", resume, "pretrain"), &opt);
    const auto hash = save_denoiser(out / "expert.ckpt", model);
    opt.save(out / "expert.adamw");
    std::cout << "expert " << (out / "expert.ckpt").string() << " steps " << opt.steps() << " payload "
              << hash_hex(hash) << "\n";
    return 0;
}

int cmd_finetune(const std::string& config, const std::string& data, const std::string& expert_path,
                 const std::string& out_dir, bool resume) {
    const RunConfig cfg = config_or_default(config);
    const fs::path out(out_dir);
    fs::create_directories(out);
    std::uint64_t expert_hash = 0;
    const DenoiserModel expert = load_denoiser(expert_path, &expert_hash);
    if (!(expert.config == cfg.model)) throw ConfigError("expert checkpoint does not match [model]");
    const auto examples = load_examples(data, cfg, true);
    ControlNetModel cnet = resume ? load_controlnet(out / "controlnet.ckpt", expert_hash)
                                  : build_controlnet(expert, cfg.audio, derive_seed(cfg.seed, "init/controlnet"),
                                                     expert_hash);
    AdamW opt(cfg.finetune.optimizer(), {&cnet.copy.params, &cnet.params});
    if (resume) opt.load(out / "controlnet.adamw");
    TrainConfig tc = cfg.finetune;
    tc.epochs = std::max(1, tc.max_steps);
    if (tc.max_steps > opt.steps())
        run_finetune(expert, cnet, examples, cfg.joint_layout(), cfg.schedule(), tc,
                     step_logger(out / "finetune.jsonl", resume, "finetune"), &opt);
    const auto hash = save_controlnet(out / "controlnet.ckpt", cnet);
    opt.save(out / "controlnet.adamw");
    std::cout << "controlnet " << (out / "controlnet.ckpt").string() << " steps " << opt.steps() << " payload "
              << hash_hex(hash) << "\n";
    return 0;
}

// ---- sampling and evaluation ----------------------------------------------------

int cmd_sample(const std::string& config, const std::string& ckpt, const std::string& cnet_ckpt,
               const std::string& audio, int steps, double guidance, std::uint64_t seed, const std::string& out,
               const std::string& mode, int frames) {
    RunConfig cfg = config_or_default(config);
    if (!mode.empty()) cfg.noise_mode = parse_noise_mode(mode);
    std::uint64_t expert_hash = 0;
    const DenoiserModel expert = load_denoiser(ckpt, &expert_hash);
    SamplerConfig sc{steps, guidance, 0.0, seed};
    const NoiseSchedule schedule = cfg.schedule();
    if (steps < 1 || steps > schedule.T) throw ConfigError("--steps must be in [1, T]");
    if (frames <= 0) frames = expert.config.max_frames;
    Tensor x;
    if (!cnet_ckpt.empty()) {
        if (audio.empty()) throw ConfigError("--controlnet-checkpoint needs --audio");
        const ControlNetModel cnet = load_controlnet(cnet_ckpt, expert_hash);
        MelConfig mel = cfg.mel;
        mel.n_mels = cnet.encoder.config.n_mels;
        x = generate_conditional(expert, cnet, mel_spectrogram(read_wav(audio), mel).frames, schedule, sc, frames);
    } else {
        x = generate_unconditional(expert, schedule, sc, frames);
    }
    const JointLayout layout = JointLayout::by_name(cfg.layout, expert.config.input_dim / 6);
    write_gmc(out, MotionClip(std::move(x), cfg.data.fps, layout));
    std::cout << "wrote " << out << "\n";
    return 0;
}

int cmd_eval(const std::string& real_dir, const std::string& gen_dir, const std::string& audio_dir,
             const std::string& extractor, double sigma, int pairs, std::uint64_t seed, const std::string& out) {
    std::vector<MotionClip> real, gen;
    for (auto& c : load_paired_dir(real_dir)) real.push_back(std::move(c.motion));
    for (auto& c : load_paired_dir(gen_dir)) gen.push_back(std::move(c.motion));
    std::vector<std::optional<AudioClip>> audio(gen.size());
    if (!audio_dir.empty()) {
        std::vector<fs::path> wavs;
        for (const auto& e : fs::directory_iterator(audio_dir))
            if (e.path().extension() == ".wav") wavs.push_back(e.path());
        std::sort(wavs.begin(), wavs.end());
        for (std::size_t i = 0; i < gen.size() && i < wavs.size(); ++i) audio[i] = read_wav(wavs[i]);
    }
    FeatureExtractor fx;
    if (!extractor.empty()) {
        fx = load_extractor(extractor);
    } else {
        if (real.empty()) throw InsufficientData("no real clips to train an extractor on");
        ExtractorConfig ec;
        ec.input_dim = real.front().frames.cols();
        ec.frames = real.front().frame_count();
        ec.seed = derive_seed(seed, "extractor");
        fx = train_autoencoder(frames_of(real), ec);
    }
    const EvalReport r = evaluate(real, gen, audio, fx, sigma, pairs, seed);
    nlohmann::ordered_json j;
    j["fgd"] = r.fgd;
    j["fgd_rank_warning"] = r.fgd_rank_warning;
    j["ba"] = r.ba;
    j["ba_sigma"] = sigma;
    j["diversity"] = r.diversity;
    j["pairs"] = pairs;
    j["real_count"] = r.real_count;
    j["generated_count"] = r.generated_count;
    j["audio_count"] = r.audio_count;
    const std::string text = j.dump(2) + "\n";
    if (out.empty())
        std::cout << text;
    else
        io::write_file(out, text);
    if (r.fgd_rank_warning) log_line("eval", "RankWarning: fewer clips than latent dimensions + 1");
    return 0;
}

// ---- data, e2e, export -------------------------------------------------------------

int cmd_synth(const std::string& out, int count, int patterns, double noise, double period, std::uint64_t seed,
              const std::string& split, int frames) {
    SyntheticSpec spec;
    spec.frames = frames;
    spec.pattern_count = patterns;
    spec.noise_level = noise;
    spec.beat_period_s = period;
    spec.seed = seed;
    write_synthetic(out, generate_synthetic(spec, count, split));
    std::cout << "wrote " << count << " clip pairs to " << out << "\n";
    return 0;
}

int cmd_e2e(const std::string& config, const std::string& out) {
    RunConfig cfg = config_or_default(config);
    if (!out.empty()) cfg.out_dir = out;
    const EndToEndReport rep = run_end_to_end(cfg, log_line);
    std::cout << rep.to_json();
    return 0;
}

int cmd_export(const std::string& log, const std::string& hist_dir, int bins, const std::string& out) {
    if (log.empty() == hist_dir.empty()) throw ConfigError("export needs exactly one of --log or --histogram");
    if (!log.empty()) {
        write_tsv(out, loss_table(read_step_log(log)));
    } else {
        std::vector<MotionClip> clips;
        for (auto& c : load_paired_dir(hist_dir)) clips.push_back(std::move(c.motion));
        write_tsv(out, histogram_table(motion_degree_stats(clips, bins).histogram));
    }
    std::cout << "wrote " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Co-speech gesture diffusion toolkit"};
    app.require_subcommand(1);
    std::function<int()> run;

    std::string in_dir, out_dir, annotations, window = "centered";
    double clip_seconds = 10.0, angle_limit = 150.0, delta_limit = 25.0;
    int smooth_window = 5;
    auto* curate = app.add_subcommand("curate", "Filter, segment and smooth raw sequences");
    curate->add_option("--in", in_dir, "Directory of .gmc (+ .wav, .txt) sequences")->required();
    curate->add_option("--out", out_dir, "Output directory")->required();
    curate->add_option("--annotations", annotations, "External filter verdicts (clip_id<TAB>reason[<TAB>note])");
    curate->add_option("--clip-seconds", clip_seconds)->capture_default_str();
    curate->add_option("--angle-limit", angle_limit)->capture_default_str();
    curate->add_option("--delta-limit", delta_limit)->capture_default_str();
    curate->add_option("--window", window)->check(CLI::IsMember({"centered", "trailing"}))->capture_default_str();
    curate->add_option("--smooth-window", smooth_window, "Odd window, 0 disables")->capture_default_str();
    curate->callback([&] {
        run = [&] {
            return cmd_curate(in_dir, out_dir, annotations, clip_seconds, angle_limit, delta_limit, window, smooth_window);
        };
    });

    std::string config, data, expert;
    bool resume = false;
    auto* pretrain = app.add_subcommand("pretrain", "Train the unconditional expert");
    pretrain->add_option("--config", config, "INI run configuration");
    pretrain->add_option("--data", data, "Directory of .gmc/.wav pairs")->required();
    pretrain->add_option("--out", out_dir, "Checkpoint directory")->required();
    pretrain->add_flag("--resume", resume, "Continue from <out>/expert.ckpt and its optimizer state");
    pretrain->callback([&] { run = [&] { return cmd_pretrain(config, data, out_dir, resume); }; });

    auto* finetune = app.add_subcommand("finetune", "Train the audio control network");
    finetune->add_option("--config", config, "INI run configuration");
    finetune->add_option("--data", data, "Directory of .gmc/.wav pairs")->required();
    finetune->add_option("--expert", expert, "Frozen expert checkpoint")->required();
    finetune->add_option("--out", out_dir, "Checkpoint directory")->required();
    finetune->add_flag("--resume", resume, "Continue from <out>/controlnet.ckpt and its optimizer state");
    finetune->callback([&] { run = [&] { return cmd_finetune(config, data, expert, out_dir, resume); }; });

    std::string ckpt, cnet_ckpt, audio, out_file, mode;
    int steps = 25, frames = 0;
    double guidance = 4.0;
    std::uint64_t seed = 0;
    auto* sample = app.add_subcommand("sample", "Generate one motion clip");
    sample->add_option("--config", config, "INI run configuration (schedule, layout)");
    sample->add_option("--checkpoint", ckpt, "Expert checkpoint")->required();
    sample->add_option("--controlnet-checkpoint", cnet_ckpt, "Control network checkpoint");
    sample->add_option("--audio", audio, "Conditioning .wav");
    sample->add_option("--steps", steps)->capture_default_str();
    sample->add_option("--guidance", guidance)->capture_default_str();
    sample->add_option("--seed", seed)->capture_default_str();
    sample->add_option("--frames", frames, "Defaults to the model's frame count");
    sample->add_option("--out", out_file, "Output .gmc")->required();
    sample->add_option("--schedule-mode", mode)->check(CLI::IsMember({"vp", "additive"}));
    sample->callback([&] {
        run = [&] { return cmd_sample(config, ckpt, cnet_ckpt, audio, steps, guidance, seed, out_file, mode, frames); };
    });

    std::string real, generated, extractor;
    double ba_sigma = 0.1;
    int pairs = 500;
    auto* eval = app.add_subcommand("eval", "FGD, beat alignment and diversity");
    eval->add_option("--real", real, "Directory of reference .gmc clips")->required();
    eval->add_option("--generated", generated, "Directory of generated .gmc clips")->required();
    eval->add_option("--audio", audio, "Directory of .wav files, paired with generated clips in name order");
    eval->add_option("--extractor", extractor, "Extractor checkpoint; trained on --real when absent");
    eval->add_option("--ba-sigma", ba_sigma)->capture_default_str();
    eval->add_option("--pairs", pairs)->capture_default_str();
    eval->add_option("--seed", seed)->capture_default_str();
    eval->add_option("--out", out_file, "Report path (stdout when absent)");
    eval->callback([&] {
        run = [&] { return cmd_eval(real, generated, audio, extractor, ba_sigma, pairs, seed, out_file); };
    });

    int count = 64, patterns = 4;
    double noise = 0.05, period = 1.0;
    std::string split = "train";
    auto* synth = app.add_subcommand("synth", "Write a synthetic paired dataset");
    synth->add_option("--out", out_dir)->required();
    synth->add_option("--count", count)->capture_default_str()->check(CLI::PositiveNumber);
    synth->add_option("--patterns", patterns)->capture_default_str();
    synth->add_option("--noise", noise)->capture_default_str();
    synth->add_option("--beat-period", period)->capture_default_str();
    synth->add_option("--seed", seed)->capture_default_str();
    synth->add_option("--split", split, "Independent stream name")->capture_default_str();
    int synth_frames = 150;
    synth->add_option("--frames", synth_frames, "Frames per clip at 15 fps")->capture_default_str();
    synth->callback([&] {
        run = [&] { return cmd_synth(out_dir, count, patterns, noise, period, seed, split, synth_frames); };
    });

    auto* e2e = app.add_subcommand("e2e", "Generate, pretrain, finetune, sample and evaluate");
    e2e->add_option("--config", config, "INI run configuration");
    e2e->add_option("--out", out_dir, "Overrides [run] out_dir");
    e2e->callback([&] { run = [&] { return cmd_e2e(config, out_dir); }; });

    std::string log, hist_dir;
    int bins = 10;
    auto* exp = app.add_subcommand("export", "Training logs or motion-degree histograms as TSV");
    exp->add_option("--log", log, "Training log (.jsonl)");
    exp->add_option("--histogram", hist_dir, "Directory of .gmc clips");
    exp->add_option("--bins", bins)->capture_default_str();
    exp->add_option("--out", out_file)->required();
    exp->callback([&] { run = [&] { return cmd_export(log, hist_dir, bins, out_file); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return static_cast<int>(ErrorFamily::kConfig);
    }
    try {
        return run();
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.family());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
