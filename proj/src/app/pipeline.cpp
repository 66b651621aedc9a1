#include "cospeech/app/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "cospeech/app/records.hpp"
#include "cospeech/errors.hpp"
#include "cospeech/io/container.hpp"
#include "cospeech/model/checkpoint.hpp"
#include "cospeech/rng.hpp"

namespace cospeech {

std::vector<TrainingExample> make_examples(const std::vector<PairedClip>& clips, const MelConfig& mel) {
    std::vector<TrainingExample> out;
    for (const auto& c : clips) {
        TrainingExample ex;
        ex.motion = c.motion.frames;
        if (c.audio) ex.mel = mel_spectrogram(*c.audio, mel).frames;
        ex.contacts = Tensor(c.motion.frame_count(), static_cast<int>(c.motion.layout.contact_joint_indices.size()));
        out.push_back(std::move(ex));
    }
    return out;
}

std::uint64_t sample_seed(std::uint64_t sampler_seed, int index) {
    return derive_seed(sampler_seed, "x_T/" + std::to_string(index));
}

Tensor generate_unconditional(const DenoiserModel& expert, const NoiseSchedule& schedule, const SamplerConfig& sampler,
                              int frames) {
    const Denoiser uncond = [&](const Tensor& x, int t) { return denoise(expert, x, t); };
    return sample(uncond, nullptr, frames, expert.config.input_dim, sampler, schedule);
}

Tensor generate_conditional(const DenoiserModel& expert, const ControlNetModel& cnet, const Tensor& mel,
                            const NoiseSchedule& schedule, const SamplerConfig& sampler, int frames) {
    const Tensor f_a = audio_features(cnet, mel, frames);
    const Denoiser uncond = [&](const Tensor& x, int t) { return denoise(expert, x, t); };
    const Denoiser cond = [&](const Tensor& x, int t) { return controlnet_denoise(expert, cnet, x, t, f_a); };
    return sample(uncond, cond, frames, expert.config.input_dim, sampler, schedule);
}

std::vector<Tensor> frames_of(const std::vector<MotionClip>& clips) {
    std::vector<Tensor> out;
    out.reserve(clips.size());
    for (const auto& c : clips) out.push_back(c.frames);
    return out;
}

double mean_beat_align(const std::vector<MotionClip>& motion, const std::vector<std::optional<AudioClip>>& audio,
                       double sigma) {
    double total = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < motion.size() && i < audio.size(); ++i) {
        if (!audio[i]) continue;
        total += beat_align(motion_beats(motion[i]), audio_beats(*audio[i]), sigma);
        ++n;
    }
    return n ? total / n : 0.0;
}

EvalReport evaluate(const std::vector<MotionClip>& real, const std::vector<MotionClip>& generated,
                    const std::vector<std::optional<AudioClip>>& audio, const FeatureExtractor& fx, double ba_sigma,
                    int pairs, std::uint64_t seed) {
    EvalReport r;
    r.real_count = static_cast<int>(real.size());
    r.generated_count = static_cast<int>(generated.size());
    r.audio_count = static_cast<int>(std::count_if(audio.begin(), audio.end(), [](const auto& a) { return a.has_value(); }));
    const auto gen = frames_of(generated);
    const FgdResult f = fgd(frames_of(real), gen, fx);
    r.fgd = f.value;
    r.fgd_rank_warning = f.rank_warning;
    r.ba = mean_beat_align(generated, audio, ba_sigma);
    r.diversity = diversity(gen, fx, pairs, derive_seed(seed, "pairs"));
    return r;
}

StageLoss summarize_losses(const std::vector<double>& totals) {
    StageLoss s;
    s.steps = static_cast<int>(totals.size());
    if (totals.empty()) return s;
    s.window = std::min(50, std::max(1, s.steps / 10));
    for (int i = 0; i < s.window; ++i) {
        s.first += totals[static_cast<std::size_t>(i)];
        s.last += totals[totals.size() - 1 - static_cast<std::size_t>(i)];
    }
    s.first /= s.window;
    s.last /= s.window;
    return s;
}

namespace {

nlohmann::ordered_json stage_json(const StageLoss& s) {
    nlohmann::ordered_json j;
    j["steps"] = s.steps;
    j["smoothing_window"] = s.window;
    j["first_loss"] = s.first;
    j["last_loss"] = s.last;
    j["relative_decrease"] = s.relative_decrease();
    return j;
}

nlohmann::ordered_json eval_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["fgd"] = r.fgd;
    j["fgd_rank_warning"] = r.fgd_rank_warning;
    j["ba"] = r.ba;
    j["diversity"] = r.diversity;
    j["real_count"] = r.real_count;
    j["generated_count"] = r.generated_count;
    j["audio_count"] = r.audio_count;
    return j;
}

template <class F>
auto stage(const std::string& name, const Progress& progress, F&& body) -> decltype(body()) {
    if (progress) progress(name, "start");
    try {
        return body();
    } catch (const Error& e) {
        throw Error(e.family(), "stage '" + name + "' failed: " + e.what());
    } catch (const std::exception& e) {
        throw Error(ErrorFamily::kInput, "stage '" + name + "' failed: " + e.what());
    }
}

MotionClip as_clip(Tensor frames, const RunConfig& cfg) {
    return MotionClip(std::move(frames), cfg.data.fps, cfg.joint_layout());
}

void write_samples(const std::filesystem::path& dir, const std::vector<MotionClip>& clips) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < clips.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "sample_%04zu.gmc", i);
        write_gmc(dir / name, clips[i]);
    }
}

}  // namespace

std::string EndToEndReport::to_json() const {
    nlohmann::ordered_json j;
    j["expert_parameters"] = expert_parameters;
    j["controlnet_trainable_parameters"] = controlnet_trainable_parameters;
    j["expert_hash"] = expert_hash;
    j["controlnet_hash"] = controlnet_hash;
    j["pretrain"] = stage_json(pretrain);
    j["finetune"] = stage_json(finetune);
    j["extractor"] = {{"first_loss", extractor_first_loss}, {"last_loss", extractor_last_loss}};
    j["unconditional"] = eval_json(unconditional);
    j["conditional"] = eval_json(conditional);
    j["ba_real"] = ba_real;
    j["cond_uncond_max_diff"] = cond_uncond_max_diff;
    return j.dump(2) + "\n";
}

EndToEndReport run_end_to_end(const RunConfig& cfg, const Progress& progress) {
    cfg.validate();
    const auto& out = cfg.out_dir;
    std::filesystem::create_directories(out);
    io::write_file(out / "config.ini", format_run_config(cfg));
    EndToEndReport rep;
    const NoiseSchedule schedule = cfg.schedule();
    const JointLayout layout = cfg.joint_layout();
    const int frames = cfg.model.max_frames;

    auto [train, heldout] = stage("generate", progress, [&] {
        auto tr = generate_synthetic(cfg.data, cfg.train_clips, "train");
        auto ho = generate_synthetic(cfg.data, cfg.heldout_clips, "heldout");
        write_synthetic(out / "data" / "train", tr);
        write_synthetic(out / "data" / "heldout", ho);
        return std::pair{load_paired_dir(out / "data" / "train"), load_paired_dir(out / "data" / "heldout")};
    });
    std::vector<MotionClip> heldout_motion;
    std::vector<std::optional<AudioClip>> heldout_audio;
    for (const auto& c : heldout) {
        heldout_motion.push_back(c.motion);
        heldout_audio.push_back(c.audio);
    }

    const FeatureExtractor fx = stage("extractor", progress, [&] {
        std::vector<MotionClip> ref;
        for (const auto& c : train) ref.push_back(c.motion);
        FeatureExtractor f = train_autoencoder(frames_of(ref), cfg.extractor);
        std::filesystem::create_directories(out / "checkpoints");
        save_extractor(out / "checkpoints" / "extractor.ckpt", f);
        if (!f.loss_history.empty()) {
            rep.extractor_first_loss = f.loss_history.front();
            rep.extractor_last_loss = f.loss_history.back();
        }
        // Evaluate with the stored float32 weights, as a later eval command would.
        return load_extractor(out / "checkpoints" / "extractor.ckpt");
    });

    const auto examples = stage("prepare", progress, [&] { return make_examples(train, cfg.mel); });

    std::uint64_t expert_hash = 0;
    DenoiserModel expert = stage("pretrain", progress, [&] {
        DenoiserModel m = build_denoiser(cfg.model, derive_seed(cfg.seed, "init/expert"));
        std::vector<double> totals;
        JsonlWriter log(out / "logs" / "pretrain.jsonl");
        if (cfg.pretrain.max_steps > 0) {
            TrainConfig tc = cfg.pretrain;
            tc.epochs = tc.max_steps;
            run_pretrain(m, examples, layout, schedule, tc, [&](const StepRecord& r) {
                totals.push_back(r.loss.l_total);
                log.write(step_record_json(r));
                if (progress && r.step % 50 == 0)
                    progress("pretrain", "step " + std::to_string(r.step) + " loss " + io::format_real(r.loss.l_total));
            });
        }
        rep.pretrain = summarize_losses(totals);
        save_denoiser(out / "checkpoints" / "expert.ckpt", m);
        return load_denoiser(out / "checkpoints" / "expert.ckpt", &expert_hash);
    });
    rep.expert_hash = hash_hex(expert_hash);
    rep.expert_parameters = expert.params.element_count();

    SamplerConfig sampler = cfg.sampler;
    const std::vector<MotionClip> uncond_samples = stage("sample_unconditional", progress, [&] {
        std::vector<MotionClip> clips;
        for (int i = 0; i < cfg.heldout_clips; ++i) {
            sampler.seed = sample_seed(cfg.sampler.seed, i);
            clips.push_back(as_clip(generate_unconditional(expert, schedule, sampler, frames), cfg));
        }
        write_samples(out / "samples" / "unconditional", clips);
        return clips;
    });

    ControlNetModel cnet = stage("finetune", progress, [&] {
        ControlNetModel c = build_controlnet(expert, cfg.audio, derive_seed(cfg.seed, "init/controlnet"), expert_hash);
        std::vector<double> totals;
        JsonlWriter log(out / "logs" / "finetune.jsonl");
        if (cfg.finetune.max_steps > 0) {
            TrainConfig tc = cfg.finetune;
            tc.epochs = tc.max_steps;
            run_finetune(expert, c, examples, layout, schedule, tc, [&](const StepRecord& r) {
                totals.push_back(r.loss.l_total);
                log.write(step_record_json(r));
                if (progress && r.step % 50 == 0)
                    progress("finetune", "step " + std::to_string(r.step) + " loss " + io::format_real(r.loss.l_total));
            });
        }
        rep.finetune = summarize_losses(totals);
        rep.controlnet_hash = hash_hex(save_controlnet(out / "checkpoints" / "controlnet.ckpt", c));
        return load_controlnet(out / "checkpoints" / "controlnet.ckpt", expert_hash);
    });
    rep.controlnet_trainable_parameters = cnet.copy.params.element_count() + cnet.params.element_count();

    const std::vector<MotionClip> cond_samples = stage("sample_conditional", progress, [&] {
        std::vector<MotionClip> clips;
        for (int i = 0; i < cfg.heldout_clips; ++i) {
            sampler.seed = sample_seed(cfg.sampler.seed, i);
            const Tensor mel = mel_spectrogram(*heldout[static_cast<std::size_t>(i)].audio, cfg.mel).frames;
            clips.push_back(as_clip(generate_conditional(expert, cnet, mel, schedule, sampler, frames), cfg));
            rep.cond_uncond_max_diff = std::max(
                rep.cond_uncond_max_diff, max_abs_diff(clips.back().frames, uncond_samples[static_cast<std::size_t>(i)].frames));
        }
        write_samples(out / "samples" / "conditional", clips);
        return clips;
    });

    stage("eval", progress, [&] {
        const std::uint64_t eval_seed = derive_seed(cfg.seed, "eval");
        rep.unconditional = evaluate(heldout_motion, uncond_samples, heldout_audio, fx, cfg.ba_sigma,
                                     cfg.diversity_pairs, eval_seed);
        rep.conditional = evaluate(heldout_motion, cond_samples, heldout_audio, fx, cfg.ba_sigma,
                                   cfg.diversity_pairs, eval_seed);
        rep.ba_real = mean_beat_align(heldout_motion, heldout_audio, cfg.ba_sigma);
        io::write_file(out / "report.json", rep.to_json());
        return 0;
    });
    return rep;
}

}  // namespace cospeech
