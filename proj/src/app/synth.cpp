#include "cospeech/app/synth.hpp"

#include <algorithm>
#include <cmath>

#include "cospeech/errors.hpp"
#include "cospeech/motion/rotation.hpp"
#include "cospeech/rng.hpp"

namespace cospeech {

namespace {

constexpr double kClickAmplitude = 0.8;
constexpr double kClickSeconds = 0.004;
constexpr double kBandBaseHz = 300.0;
constexpr double kBandStepHz = 700.0;
constexpr double kBandHalfWidthHz = 120.0;
constexpr int kBandTones = 12;

struct Pattern {
    std::vector<Mat3> rest;
    std::vector<Vec3> e1, e2;  // orthonormal plane of the joint's loop
    std::vector<double> amplitude_rad;
};

// Loop phase over one beat: d(theta)/du = 2 pi (1 - cos 2 pi u) vanishes only at u = 0.
double loop_phase(double u) { return 2.0 * M_PI * u - std::sin(2.0 * M_PI * u); }

Vec3 random_axis(Rng& rng) {
    Vec3 v(rng.normal(), rng.normal(), rng.normal());
    return v.norm() < 1e-9 ? Vec3::UnitZ() : Vec3(v.normalized());
}

std::vector<Pattern> pattern_bank(const SyntheticSpec& spec, int joints, int body_joints) {
    Rng rng(derive_seed(spec.seed, "synth/patterns"));
    std::vector<Pattern> bank(static_cast<std::size_t>(spec.pattern_count));
    const double amp = spec.amplitude_deg * M_PI / 180.0;
    for (auto& p : bank) {
        for (int j = 0; j < joints; ++j) {
            const double rest_deg = j < body_joints ? 15.0 : 8.0;
            p.rest.push_back(Eigen::AngleAxisd(rest_deg * M_PI / 180.0 * rng.uniform(), random_axis(rng)).toRotationMatrix());
            const Vec3 a = random_axis(rng);
            Vec3 b = random_axis(rng);
            b = (b - b.dot(a) * a).normalized();
            p.e1.push_back(a);
            p.e2.push_back(b);
            const double scale = j < body_joints ? 0.3 + 0.7 * rng.uniform() : 0.1 + 0.3 * rng.uniform();
            p.amplitude_rad.push_back(amp * scale);
        }
    }
    return bank;
}

}  // namespace

void SyntheticSpec::validate() const {
    if (pattern_count <= 0) throw ConfigError("pattern_count must be positive");
    if (!(noise_level >= 0.0)) throw ConfigError("noise_level must be non-negative");
    if (!(beat_period_s > 0.0)) throw ConfigError("beat_period_s must be positive");
    if (frames < 3 || !(fps > 0.0) || sample_rate <= 0) throw ConfigError("synthetic clip shape invalid");
    if (!(amplitude_deg > 0.0) || amplitude_deg >= 90.0) throw ConfigError("amplitude_deg must be in (0, 90)");
    if (kBandBaseHz + kBandStepHz * (pattern_count - 1) + kBandHalfWidthHz >= 0.5 * sample_rate)
        throw ConfigError("too many patterns for the sample rate");
}

std::vector<SyntheticSample> generate_synthetic(const SyntheticSpec& spec, int count, const std::string& split) {
    spec.validate();
    const JointLayout layout = JointLayout::upper43();
    const int joints = layout.joint_count();
    const auto bank = pattern_bank(spec, joints, layout.body_joint_count);
    Rng rng(derive_seed(spec.seed, "synth/" + split));
    const double duration = spec.frames / spec.fps;
    const auto n_samples = static_cast<std::size_t>(std::llround(duration * spec.sample_rate));
    std::vector<SyntheticSample> out;
    for (int i = 0; i < count; ++i) {
        SyntheticSample s;
        s.pattern = rng.uniform_int(0, spec.pattern_count - 1);
        s.phase_s = rng.uniform() * spec.beat_period_s;
        const double gain = 0.85 + 0.3 * rng.uniform();
        const Pattern& p = bank[static_cast<std::size_t>(s.pattern)];

        s.motion = MotionClip::identity(spec.frames, spec.fps, layout);
        for (int f = 0; f < spec.frames; ++f) {
            const double u = (f / spec.fps - s.phase_s) / spec.beat_period_s;
            const double theta = loop_phase(u - std::floor(u));
            for (int j = 0; j < joints; ++j) {
                const Vec3 w = gain * p.amplitude_rad[j] * (std::cos(theta) * p.e1[j] + std::sin(theta) * p.e2[j]);
                s.motion.set_matrix(f, j, p.rest[j] * Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix());
            }
        }

        s.audio.sample_rate = spec.sample_rate;
        s.audio.samples.assign(n_samples, 0.0);
        const double centre = kBandBaseHz + kBandStepHz * s.pattern;
        for (int k = 0; k < kBandTones; ++k) {
            const double hz = centre - kBandHalfWidthHz + 2.0 * kBandHalfWidthHz * k / (kBandTones - 1);
            const double phase = 2.0 * M_PI * rng.uniform();
            const double w = 2.0 * M_PI * hz / spec.sample_rate;
            const double a = spec.noise_level * std::sqrt(2.0 / kBandTones);
            for (std::size_t n = 0; n < n_samples; ++n) s.audio.samples[n] += a * std::sin(w * n + phase);
        }
        const auto click_len = static_cast<std::size_t>(kClickSeconds * spec.sample_rate);
        for (double t = s.phase_s; t < duration; t += spec.beat_period_s) {
            s.clicks.push_back(t);
            const auto start = static_cast<std::size_t>(std::llround(t * spec.sample_rate));
            for (std::size_t k = 0; k < click_len && start + k < n_samples; ++k)
                s.audio.samples[start + k] += (k % 2 ? -kClickAmplitude : kClickAmplitude);
        }
        for (double& x : s.audio.samples) x = std::clamp(x, -1.0, 1.0);
        out.push_back(std::move(s));
    }
    return out;
}

void write_synthetic(const std::filesystem::path& dir, const std::vector<SyntheticSample>& samples,
                     const std::string& prefix) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        char stem[64];
        std::snprintf(stem, sizeof stem, "%s_%04zu", prefix.c_str(), i);
        write_gmc(dir / (std::string(stem) + ".gmc"), samples[i].motion);
        write_wav(dir / (std::string(stem) + ".wav"), samples[i].audio);
    }
}

std::vector<PairedClip> load_paired_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw FormatError(dir.string() + " is not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".gmc") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<PairedClip> out;
    for (const auto& f : files) {
        PairedClip c;
        c.name = f.stem().string();
        c.motion = read_gmc(f);
        auto wav = f;
        wav.replace_extension(".wav");
        if (std::filesystem::exists(wav)) c.audio = read_wav(wav);
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace cospeech
