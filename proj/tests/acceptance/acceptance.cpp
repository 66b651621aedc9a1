// Acceptance run: one PASS/FAIL line per criterion.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cospeech/app/pipeline.hpp"
#include "cospeech/curation/curation.hpp"
#include "cospeech/errors.hpp"
#include "cospeech/io/container.hpp"
#include "cospeech/motion/rotation.hpp"
#include "cospeech/rng.hpp"
#include "cospeech/train/trainer.hpp"

using namespace cospeech;
namespace fs = std::filesystem;

namespace {

constexpr double kZeroInitTol = 1e-6;
constexpr double kZeroInitSeconds = 60.0;
constexpr double kGradTol = 1e-3;
constexpr double kGradSeconds = 300.0;
constexpr double kOrthoTol = 1e-5;
constexpr double kRoundTripTol = 1e-6;
constexpr double kEulerTol = 1e-4;
constexpr double kInversionTol = 1e-5;
constexpr double kLossTol = 1e-10;
constexpr double kFrechetTol = 1e-8;
constexpr double kFgdSelfTol = 1e-6;
constexpr double kBaTol = 1e-10;
constexpr double kMinDecrease = 0.5;
constexpr double kMinBaGain = 0.05;
constexpr double kDeskSeconds = 1800.0;
constexpr std::size_t kMaxParams = 500000;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

Tensor random_tensor(Rng& rng, int rows, int cols, double scale = 1.0) {
    Tensor t(rows, cols);
    for (double& v : t.values()) v = scale * rng.normal();
    return t;
}

void perturb(ParameterSet& set, Rng& rng, double s) {
    for (auto& p : set)
        for (double& v : p.value.values()) v += s * rng.normal();
}

double max_abs(const Mat3& m) { return m.cwiseAbs().maxCoeff(); }

// ---- 1 -----------------------------------------------------------------------

void zero_init(Outcome& out) {
    const auto t0 = Clock::now();
    auto expert = build_denoiser(DenoiserConfig{}, 11);
    Rng rng(12);
    perturb(expert.params, rng, 0.05);
    AudioEncoderConfig audio;
    auto cnet = build_controlnet(expert, audio, 13);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const int n = rng.uniform_int(2, expert.config.max_frames);
        Tensor x = random_tensor(rng, n, expert.config.input_dim);
        const int t = rng.uniform_int(1, 1000);
        AudioClip clip;
        clip.samples.resize(static_cast<std::size_t>(n / 15.0 * 16000) + 1024);
        for (double& s : clip.samples) s = 0.3 * rng.normal();
        const Tensor mel = mel_spectrogram(clip).frames;
        const Tensor fa = audio_features(cnet, mel, n);
        worst = std::max(worst, max_abs_diff(controlnet_denoise(expert, cnet, x, t, fa), denoise(expert, x, t)));
    }
    const double secs = seconds_since(t0);
    out.detail << "max |controlnet - expert| = " << worst << " over 100 triples in " << secs << " s";
    out.require(worst <= kZeroInitTol, "max diff <= 1e-6");
    out.require(secs < kZeroInitSeconds, "runtime < 60 s");
}

// ---- 2 -----------------------------------------------------------------------

void gradients(Outcome& out) {
    const auto t0 = Clock::now();
    const DenoiserConfig tiny{2, 16, 2, 8, 2, 12, 12};
    const auto layout = JointLayout::generic(2, {1});
    Rng rng(21);
    Tensor x = random_tensor(rng, 6, 12), xt = random_tensor(rng, 6, 12), mel = random_tensor(rng, 9, 6);
    Tensor mask(6, 1);
    mask(1, 0) = mask(2, 0) = 1.0;

    auto expert = build_denoiser(tiny, 22);
    perturb(expert.params, rng, 0.2);
    GradCheckReport d, c;
    try {
        d = grad_check({&expert.params}, [&](ag::Graph& g) {
            ag::ParamBinder bind(g, expert.params, true);
            return loss_total(g.constant(x), denoise(bind, expert, g.constant(xt), 321).x0, layout, mask).total;
        }, kGradTol);
        auto cnet = build_controlnet(expert, {6, 4, 3, {1, 2}, 16}, 23);
        perturb(cnet.params, rng, 0.2);
        perturb(cnet.copy.params, rng, 0.1);
        c = grad_check({&cnet.copy.params, &cnet.params}, [&](ag::Graph& g) {
            ag::ParamBinder bf(g, expert.params), bc(g, cnet.copy.params, true), bm(g, cnet.params, true);
            ControlNetBinders b{bf, bc, bm};
            ag::Var fa = audio_features(bm, cnet, g.constant(mel), 6);
            return loss_total(g.constant(x), controlnet_denoise(b, expert, cnet, g.constant(xt), 77, fa), layout, mask)
                .total;
        }, kGradTol);
        out.require(d.checked == expert.parameter_count(), "every denoiser parameter checked");
        out.require(c.checked == cnet.copy.params.element_count() + cnet.params.element_count(),
                    "every control network parameter checked");
    } catch (const GradMismatch& e) {
        out.require(false, e.what());
    }
    const double secs = seconds_since(t0);
    out.detail << "denoiser " << d.checked << " entries max rel " << d.max_rel_error << "; controlnet " << c.checked
               << " entries max rel " << c.max_rel_error << "; " << secs << " s";
    out.require(secs < kGradSeconds, "runtime < 300 s");
}

// ---- 3 -----------------------------------------------------------------------

void rotations(Outcome& out) {
    Rng rng(31);
    double ortho = 0.0, round = 0.0, euler = 0.0;
    int euler_checked = 0;
    for (int i = 0; i < 10000; ++i) {
        Rot6D r{Vec3(rng.normal(), rng.normal(), rng.normal()), Vec3(rng.normal(), rng.normal(), rng.normal())};
        const Mat3 m = matrix_from_rot6d(r);
        ortho = std::max({ortho, max_abs(m.transpose() * m - Mat3::Identity()), std::abs(m.determinant() - 1.0)});
        const Mat3 back = matrix_from_rot6d(rot6d_from_matrix(m));
        round = std::max(round, max_abs(back - m));
        const Rot6D again = rot6d_from_matrix(back);
        round = std::max({round, (again.a1 - m.col(0)).cwiseAbs().maxCoeff(), (again.a2 - m.col(1)).cwiseAbs().maxCoeff()});
        if (std::abs(m(0, 2)) < 0.99) {
            const EulerXYZ e = euler_xyz_from_matrix(m);
            euler = std::max(euler, max_abs(matrix_from_euler_xyz(e.degrees) - m));
            const EulerXYZ e2 = euler_xyz_from_matrix(matrix_from_euler_xyz(e.degrees));
            euler = std::max(euler, (e2.degrees - e.degrees).cwiseAbs().maxCoeff());
            ++euler_checked;
        }
    }
    out.detail << "orthonormality " << ortho << ", round trip " << round << ", euler " << euler << " on "
               << euler_checked << " samples";
    out.require(ortho <= kOrthoTol, "orthonormal within 1e-5");
    out.require(round <= kRoundTripTol, "round trip within 1e-6");
    out.require(euler <= kEulerTol, "euler within 1e-4");
}

// ---- 4 -----------------------------------------------------------------------

void diffusion(Outcome& out) {
    Rng rng(41);
    double inv = 0.0;
    for (auto mode : {NoiseMode::kVariancePreserving, NoiseMode::kAdditive}) {
        const auto s = cosine_schedule(1000, 0.008, mode);
        for (int k = 0; k < 200; ++k) {
            Tensor x = random_tensor(rng, 10, 12);
            const int t = rng.uniform_int(2, 1000);
            const int tp = rng.uniform_int(1, t - 1);
            const auto st = add_noise(x, t, s, derive_seed(41, "noise/" + std::to_string(k)));
            inv = std::max(inv, max_abs_diff(predicted_noise(st.x_t, t, x, s), st.eps));
            inv = std::max(inv, max_abs_diff(ddim_step(st.x_t, t, tp, x, s), add_noise(x, tp, s, st.eps).x_t));
            inv = std::max(inv, max_abs_diff(ddim_step(st.x_t, t, 0, x, s), x));
        }
    }

    auto model = build_denoiser({1, 16, 2, 8, 2, 12, 20}, 42);
    perturb(model.params, rng, 0.1);
    auto other = model;
    perturb(other.params, rng, 0.1);
    const auto s = cosine_schedule();
    Denoiser u = [&](const Tensor& xt, int t) { return denoise(model, xt, t); };
    Denoiser c = [&](const Tensor& xt, int t) { return denoise(other, xt, t); };
    SamplerConfig cfg;
    cfg.seed = 43;
    const Tensor a = sample(u, c, 20, 12, cfg, s), b = sample(u, c, 20, 12, cfg, s);
    const bool exact = a == b;
    cfg.seed = 44;
    const bool seeded = !(sample(u, c, 20, 12, cfg, s) == a);

    const double five = cfg_combine(Tensor(1, 1, 2.0), Tensor(1, 1, 1.0), 4.0)[0];
    Tensor cd = random_tensor(rng, 4, 5), ud = random_tensor(rng, 4, 5);
    double cfg_err = 0.0;
    const Tensor mix = cfg_combine(cd, ud, 2.5);
    for (std::size_t i = 0; i < cd.size(); ++i) cfg_err = std::max(cfg_err, std::abs(mix[i] - (2.5 * cd[i] - 1.5 * ud[i])));

    out.detail << "inversion " << inv << "; sampler repeat " << (exact ? "bit-exact" : "differs") << "; cfg(2,1,s=4) = "
               << five << ", cfg error " << cfg_err;
    out.require(inv <= kInversionTol, "inversion within 1e-5");
    out.require(exact, "bit-exact sampler");
    out.require(seeded, "seed changes the sample");
    out.require(five == 5.0, "cfg (2,1) at s=4 gives 5");
    out.require(cfg_err <= 1e-12, "cfg arithmetic");
}

// ---- 5 -----------------------------------------------------------------------

double naive_simple(const Tensor& x, const Tensor& y) {
    double s = 0.0;
    for (int r = 0; r < x.rows(); ++r)
        for (int c = 0; c < x.cols(); ++c) s += (x(r, c) - y(r, c)) * (x(r, c) - y(r, c));
    return s / (x.rows() * x.cols());
}

double naive_velocity(const Tensor& x, const Tensor& y) {
    double s = 0.0;
    for (int r = 0; r + 1 < x.rows(); ++r)
        for (int c = 0; c < x.cols(); ++c) {
            const double d = (x(r + 1, c) - x(r, c)) - (y(r + 1, c) - y(r, c));
            s += d * d;
        }
    return s / ((x.rows() - 1) * x.cols());
}

double naive_foot(const Tensor& y, const JointLayout& layout, const Tensor& mask) {
    double s = 0.0;
    int count = 0;
    for (int n = 0; n + 1 < y.rows(); ++n)
        for (std::size_t k = 0; k < layout.contact_joint_indices.size(); ++k) {
            if (mask(n, static_cast<int>(k)) == 0.0) continue;
            const int j = layout.contact_joint_indices[k];
            for (int c = 0; c < 6; ++c) {
                const double v = y(n + 1, 6 * j + c) - y(n, 6 * j + c);
                s += v * v;
                ++count;
            }
        }
    return count ? s / count : 0.0;
}

void losses(Outcome& out) {
    Rng rng(51);
    double recompose = 0.0, oracle = 0.0;
    for (int k = 0; k < 50; ++k) {
        const int n = rng.uniform_int(2, 30), joints = rng.uniform_int(2, 6);
        const auto layout = JointLayout::generic(joints, {0, joints - 1});
        Tensor x = random_tensor(rng, n, 6 * joints), y = random_tensor(rng, n, 6 * joints);
        Tensor mask(n, 2);
        for (double& v : mask.values()) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
        const LossReport r = loss_total(x, y, layout, mask);
        recompose = std::max(recompose, std::abs(r.l_total - (10.0 * r.l_simple + r.l_vel + r.l_foot)));
        recompose = std::max(recompose, std::abs(r.lambda_simple - 10.0));
        oracle = std::max({oracle, std::abs(r.l_simple - naive_simple(x, y)), std::abs(r.l_vel - naive_velocity(x, y)),
                           std::abs(r.l_foot - naive_foot(y, layout, mask))});
    }

    Tensor x = random_tensor(rng, 8, 18);
    const auto layout = JointLayout::generic(3, {1});
    bool zeros = true;
    const LossReport same = loss_total(x, x, layout, Tensor(8, 1, 1.0));
    zeros &= same.l_simple == 0.0 && same.l_vel == 0.0;
    Tensor offset = x;
    for (double& v : offset.values()) v += 0.25;
    zeros &= loss_velocity(x, offset) < 1e-28;
    zeros &= loss_foot_contact(x, random_tensor(rng, 8, 18), layout, Tensor(8, 1)) == 0.0;
    zeros &= loss_foot_contact(x, x, JointLayout::generic(3), {}) == 0.0;
    zeros &= loss_foot_contact(x, x, JointLayout::upper43(), {}) == 0.0;
    Tensor planted = x;
    for (int r = 1; r < 8; ++r)
        for (int c = 6; c < 12; ++c) planted(r, c) = planted(0, c);
    zeros &= loss_foot_contact(x, planted, layout, Tensor(8, 1, 1.0)) == 0.0;
    zeros &= loss_total(planted, planted, layout, Tensor(8, 1, 1.0)).l_total == 0.0;

    out.detail << "recomposition " << recompose << ", oracle " << oracle << ", zero cases "
               << (zeros ? "exact" : "nonzero");
    out.require(recompose <= kLossTol, "recomposition within 1e-10");
    out.require(oracle <= kLossTol, "naive-loop oracles within 1e-10");
    out.require(zeros, "zero cases");
}

// ---- 6 -----------------------------------------------------------------------

GaussianStats gauss1(double mean, double var) {
    GaussianStats g;
    g.mean = Eigen::VectorXd::Constant(1, mean);
    g.covariance = Eigen::MatrixXd::Constant(1, 1, var);
    g.count = 1000;
    return g;
}

void metrics(Outcome& out) {
    const double shift = frechet_distance(gauss1(0, 1), gauss1(1, 1));
    const double scale = frechet_distance(gauss1(0, 1), gauss1(0, 4));

    Rng rng(61);
    std::vector<Tensor> clips;
    for (int i = 0; i < 12; ++i) clips.push_back(random_tensor(rng, 20, 12, 0.5));
    ExtractorConfig ec;
    ec.input_dim = 12;
    ec.frames = 20;
    ec.channels = 8;
    ec.latent_dim = 8;
    ec.steps = 20;
    ec.seed = 62;
    const auto fx = train_autoencoder(clips, ec);
    const double self = fgd(clips, clips, fx).value;

    const double one = beat_align({1.0, 2.0}, {1.0, 2.0}, 0.1);
    const double none = beat_align({}, {1.0}, 0.1);
    const double none2 = beat_align({1.0}, {}, 0.1);
    const double half = beat_align({1.1}, {1.0}, 0.1);

    std::vector<Tensor> dup(6, clips[0]);
    const double div = diversity(dup, fx, 500, 63);
    const double div_lat = diversity_from_latents(Eigen::MatrixXd::Constant(5, 8, 0.7), 500, 64);

    out.detail << "frechet shift " << shift << ", scale " << scale << "; FGD self " << self << "; BA " << one << ", "
               << none << ", " << none2 << ", " << half << "; duplicate diversity " << div << ", " << div_lat;
    out.require(std::abs(shift - 1.0) <= kFrechetTol, "N(0,1) vs N(1,1)");
    out.require(std::abs(scale - 1.0) <= kFrechetTol, "N(0,1) vs N(0,4)");
    out.require(self <= kFgdSelfTol, "FGD(self, self)");
    out.require(std::abs(one - 1.0) <= kBaTol, "BA 1");
    out.require(none == 0.0 && none2 == 0.0, "BA 0");
    out.require(std::abs(half - std::exp(-0.5)) <= kBaTol, "BA exp(-1/2)");
    out.require(div == 0.0 && div_lat == 0.0, "diversity of duplicates");
}

// ---- 7 -----------------------------------------------------------------------

void curation(Outcome& out) {
    const std::vector<int> wrists{kLeftWrist, kRightWrist};
    const int n = 400;

    MotionClip spike = MotionClip::identity(n);
    spike.set_matrix(200, kLeftWrist, matrix_from_euler_xyz({160.0, 0.0, 0.0}));
    const auto a = detect_abnormal_wrist(spike, wrists);
    const bool angle_ok = !a.flagged_frames.empty() && a.flagged_frames[0] == 200 &&
                          a.reasons[0] == FlagReason::kAngleExceeds;

    MotionClip jump = MotionClip::identity(n);
    for (int f = 200; f < n; ++f) jump.set_matrix(f, kRightWrist, matrix_from_euler_xyz({0.0, 30.0, 0.0}));
    const auto d = detect_abnormal_wrist(jump, wrists);
    const bool delta_ok = d.flagged_frames == std::vector<int>{200} && d.reasons[0] == FlagReason::kDeltaExceeds;
    const bool centered = d.discard_windows == std::vector<std::pair<int, int>>{{125, 275}};
    WristCheckConfig trailing;
    trailing.mode = WindowMode::kTrailing;
    const auto dt = detect_abnormal_wrist(jump, wrists, trailing);
    const bool trail = dt.discard_windows == std::vector<std::pair<int, int>>{{200, 350}};

    // Smooth motion well inside both limits.
    MotionClip calm = MotionClip::identity(n);
    for (int f = 0; f < n; ++f)
        for (int j = 0; j < calm.joint_count(); ++j) {
            const double ph = 2.0 * M_PI * f / 45.0 + j;
            calm.set_matrix(f, j, matrix_from_euler_xyz({40.0 * std::sin(ph), 30.0 * std::cos(ph), 20.0 * std::sin(2 * ph)}));
        }
    const auto c0 = detect_abnormal_wrist(MotionClip::identity(n), wrists);
    const auto c1 = detect_abnormal_wrist(calm, wrists);
    const bool clean = c0.flagged_frames.empty() && c0.discard_windows.empty() && c1.flagged_frames.empty() &&
                       c1.discard_windows.empty();

    out.detail << "angle flag " << (angle_ok ? "ok" : "wrong") << ", delta flag " << (delta_ok ? "ok" : "wrong")
               << ", windows centered [" << (d.discard_windows.empty() ? -1 : d.discard_windows[0].first) << ", "
               << (d.discard_windows.empty() ? -1 : d.discard_windows[0].second) << ") trailing ["
               << (dt.discard_windows.empty() ? -1 : dt.discard_windows[0].first) << ", "
               << (dt.discard_windows.empty() ? -1 : dt.discard_windows[0].second) << "), clean "
               << (clean ? "empty" : "flagged");
    out.require(angle_ok, "160 degree angle flag");
    out.require(delta_ok, "30 degree jump flag");
    out.require(centered && trail, "150-frame interior windows");
    out.require(clean, "clean sequences");
}

// ---- 8 -----------------------------------------------------------------------

void desk(Outcome& out, const fs::path& config, const fs::path& work) {
    RunConfig cfg = load_run_config(config);
    cfg.out_dir = work / "desk";
    const auto t0 = Clock::now();
    const EndToEndReport r = run_end_to_end(cfg);
    const double secs = seconds_since(t0);
    io::write_file(work / "desk_report.json", r.to_json());
    out.detail << "params expert " << r.expert_parameters << " controlnet " << r.controlnet_trainable_parameters
               << "; loss decrease pretrain " << r.pretrain.relative_decrease() << " finetune "
               << r.finetune.relative_decrease() << "; FGD " << r.unconditional.fgd << " -> " << r.conditional.fgd
               << "; BA " << r.unconditional.ba << " -> " << r.conditional.ba << "; " << secs << " s";
    out.require(r.expert_parameters <= kMaxParams && r.controlnet_trainable_parameters <= kMaxParams, "<= 0.5M params");
    out.require(r.pretrain.steps == 500 && r.finetune.steps == 500, "500 + 500 steps");
    out.require(cfg.train_clips == 64 && cfg.heldout_clips == 32, "64 training and 32 held-out clips");
    out.require(r.pretrain.relative_decrease() >= kMinDecrease, "pretrain decrease >= 50%");
    out.require(r.finetune.relative_decrease() >= kMinDecrease, "finetune decrease >= 50%");
    out.require(r.conditional.fgd < r.unconditional.fgd, "FGD improves");
    out.require(r.conditional.ba - r.unconditional.ba >= kMinBaGain, "BA gain >= 0.05");
    out.require(secs < kDeskSeconds, "runtime < 1800 s");
}

// ---- 9 -----------------------------------------------------------------------

std::set<fs::path> tree(const fs::path& root) {
    std::set<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files.insert(fs::relative(e.path(), root));
    return files;
}

void replay(Outcome& out, const fs::path& cli, const fs::path& config, const fs::path& work) {
    // Same relative --out from two working directories.
    const fs::path ra = fs::absolute(work / "replay_a"), rb = fs::absolute(work / "replay_b");
    const fs::path cfg = fs::absolute(config), exe = fs::absolute(cli);
    for (const auto& dir : {ra, rb}) {
        fs::remove_all(dir);
        fs::create_directories(dir);
        const std::string cmd = "cd \"" + dir.string() + "\" && \"" + exe.string() + "\" e2e --config \"" +
                                cfg.string() + "\" --out run > stdout.txt 2>&1";
        if (std::system(cmd.c_str()) != 0) {
            out.require(false, "e2e run in " + dir.string());
            return;
        }
    }
    const fs::path a = ra / "run", b = rb / "run";
    const auto fa = tree(a), fb = tree(b);
    int compared = 0, differ = 0;
    bool has_ckpt = false, has_sample = false, has_report = false;
    for (const auto& rel : fa) {
        if (rel.begin()->string() == "logs") continue;  // per-step wall times
        if (!fb.count(rel)) {
            ++differ;
            continue;
        }
        ++compared;
        if (io::read_file(a / rel) != io::read_file(b / rel)) {
            ++differ;
            out.detail << "differs: " << rel.string() << "; ";
        }
        has_ckpt |= rel.extension() == ".ckpt";
        has_sample |= rel.extension() == ".gmc" && rel.begin()->string() == "samples";
        has_report |= rel == "report.json";
    }
    out.detail << compared << " files compared (checkpoints, samples, data, config, report), " << differ << " differ";
    out.require(fa.size() == fb.size(), "same file set");
    out.require(has_ckpt && has_sample && has_report, "checkpoints, samples and report present");
    out.require(differ == 0, "byte-identical");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance checks"};
    std::string cli, desk_config, replay_config, work = "acceptance_work";
    std::vector<int> only;
    app.add_option("--cli", cli, "cospeech executable")->required();
    app.add_option("--desk-config", desk_config, "config for the desk-scale run")->required();
    app.add_option("--replay-config", replay_config, "config for the replay runs")->required();
    app.add_option("--work", work, "scratch directory");
    app.add_option("--only", only, "criteria to run");
    CLI11_PARSE(app, argc, argv);
    fs::create_directories(work);

    const std::vector<std::function<void(Outcome&)>> checks{
        zero_init,
        gradients,
        rotations,
        diffusion,
        losses,
        metrics,
        curation,
        [&](Outcome& o) { desk(o, desk_config, work); },
        [&](Outcome& o) { replay(o, cli, replay_config, work); },
    };
    int failed = 0;
    for (std::size_t i = 0; i < checks.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        Outcome o;
        try {
            checks[i](o);
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        failed += o.pass ? 0 : 1;
        std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail.str() << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
