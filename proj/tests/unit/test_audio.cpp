#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "cospeech/audio/audio.hpp"
#include "cospeech/audio/encoder.hpp"
#include "cospeech/errors.hpp"
#include "cospeech/io/container.hpp"
#include "test_util.hpp"

using namespace cospeech;

namespace {

AudioClip noise(Rng& rng, std::size_t n, double amp = 0.3) {
    AudioClip a;
    a.samples.resize(n);
    for (double& x : a.samples) x = amp * (2.0 * rng.uniform() - 1.0);
    return a;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("cospeech_test_" + name);
}

}  // namespace

TEST_CASE("mel frame count follows the framing formula") {
    AudioClip a;
    a.samples.assign(160000, 0.0);
    auto mel = mel_spectrogram(a);
    CHECK(mel.frame_count() == 313);
    CHECK(mel.n_mels == 80);
    CHECK_THROWS_AS(mel_spectrogram(AudioClip{std::vector<double>(1023, 0.0), 16000}), TooShort);
}

TEST_CASE("silence maps to the log floor") {
    AudioClip a;
    a.samples.assign(8000, 0.0);
    const auto mel = mel_spectrogram(a);
    for (double v : mel.frames.values()) CHECK(std::abs(v - std::log(kLogFloor)) < 1e-6);
}

TEST_CASE("sine at a band centre dominates that band") {
    const int band = 20;
    const double centre = mel_to_hz(hz_to_mel(8000.0) * (band + 1) / 81.0);
    AudioClip a;
    a.samples.resize(16000);
    for (std::size_t i = 0; i < a.samples.size(); ++i)
        a.samples[i] = 0.5 * std::sin(2.0 * std::numbers::pi * centre * static_cast<double>(i) / 16000.0);
    auto mel = mel_spectrogram(a);
    for (int t = 0; t < mel.frame_count(); ++t) {
        int best = 0;
        for (int m = 1; m < mel.n_mels; ++m)
            if (mel.frames(t, m) > mel.frames(t, best)) best = m;
        CHECK(best == band);
    }
}

TEST_CASE("doubling amplitude adds log 4") {
    Rng rng(21);
    AudioClip a = noise(rng, 20000);
    AudioClip b = a;
    for (double& x : b.samples) x *= 2.0;
    auto ma = mel_spectrogram(a), mb = mel_spectrogram(b);
    int checked = 0;
    for (std::size_t i = 0; i < ma.frames.size(); ++i) {
        if (ma.frames[i] < std::log(1e-3)) continue;
        ++checked;
        CHECK(std::abs(mb.frames[i] - ma.frames[i] - std::log(4.0)) < 1e-5);
    }
    CHECK(checked > 1000);
}

TEST_CASE("shift by one hop shifts interior frames by one") {
    Rng rng(22);
    AudioClip a = noise(rng, 20000);
    AudioClip b;
    b.samples.assign(512, 0.0);
    b.samples.insert(b.samples.end(), a.samples.begin(), a.samples.end());
    auto ma = mel_spectrogram(a), mb = mel_spectrogram(b);
    for (int t = 2; t + 2 < ma.frame_count(); ++t)
        for (int m = 0; m < 80; ++m) REQUIRE(std::abs(mb.frames(t + 1, m) - ma.frames(t, m)) < 1e-4);
}

TEST_CASE("filterbank rows are non-negative triangles peaking at 1") {
    Tensor fb = mel_filterbank(16000, 1024, 80);
    CHECK(fb.rows() == 513);
    for (int m = 0; m < 80; ++m) {
        double peak = 0.0;
        for (int k = 0; k < 513; ++k) {
            CHECK(fb(k, m) >= 0.0);
            peak = std::max(peak, fb(k, m));
        }
        CHECK(peak > 0.0);
        CHECK(peak <= 1.0);
    }
}

TEST_CASE("WAV and MEL1 round trips") {
    Rng rng(23);
    AudioClip a = noise(rng, 3000, 0.9);
    const auto wav = temp_path("a.wav");
    write_wav(wav, a);
    AudioClip back = read_wav(wav);
    CHECK(back.sample_rate == 16000);
    REQUIRE(back.samples.size() == a.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) CHECK(std::abs(back.samples[i] - a.samples[i]) <= 0.5 / 32767 + 1e-12);
    std::filesystem::remove(wav);

    auto mel = mel_spectrogram(a);
    const auto path = temp_path("a.mel");
    write_mel(path, mel);
    auto mb = read_mel(path);
    CHECK(mb.hop == 512);
    CHECK(mb.window == 1024);
    CHECK(max_abs_diff(mb.frames, mel.frames) < 1e-5);
    std::string bytes = io::read_file(path);
    io::write_file(path, bytes.substr(0, bytes.size() - 4));
    CHECK_THROWS_AS(read_mel(path), FormatError);
    std::filesystem::remove(path);
}

TEST_CASE("align_to_motion") {
    Rng rng(24);
    Tensor e = testutil::random_tensor(rng, 150, 3);
    CHECK(align_to_motion(e, 150) == e);

    Tensor c(313, 2, 0.75);
    const Tensor ca = align_to_motion(c, 150);
    for (double v : ca.values()) CHECK(v == doctest::Approx(0.75).epsilon(1e-14));

    Tensor ramp(313, 1);
    for (int t = 0; t < 313; ++t) ramp(t, 0) = 2.0 * t - 5.0;
    Tensor r = align_to_motion(ramp, 150);
    for (int n = 0; n < 150; ++n) CHECK(r(n, 0) == doctest::Approx(2.0 * n * 312.0 / 149.0 - 5.0).epsilon(1e-12));

    Tensor x = testutil::random_tensor(rng, 40, 4);
    Tensor y = align_to_motion(x, 97);
    for (int c2 = 0; c2 < 4; ++c2) {
        double lo = 1e9, hi = -1e9;
        for (int t = 0; t < 40; ++t) lo = std::min(lo, x(t, c2)), hi = std::max(hi, x(t, c2));
        for (int n = 0; n < 97; ++n) CHECK((y(n, c2) >= lo - 1e-12 && y(n, c2) <= hi + 1e-12));
    }
}

TEST_CASE("audio encoder contract") {
    Rng rng(25);
    ParameterSet params;
    AudioEncoderConfig cfg;
    cfg.d_model = 32;
    auto enc = AudioEncoder::build(params, cfg, rng);
    AudioClip a = noise(rng, 16000);
    auto mel = mel_spectrogram(a);
    Tensor e1 = encode_audio(enc, params, mel);
    CHECK(e1.rows() == mel.frame_count());
    CHECK(e1.cols() == 32);
    CHECK(e1 == encode_audio(enc, params, mel));
    CHECK(e1.all_finite());

    for (auto& p : params) p.value.fill(0.0);
    const Tensor zero = encode_audio(enc, params, mel);
    for (double v : zero.values()) CHECK(v == 0.0);

    auto again = AudioEncoder::attach(params, cfg);
    CHECK(again.proj_w == enc.proj_w);
}

TEST_CASE("encoder and differentiable alignment gradients") {
    Rng rng(26);
    ParameterSet params;
    AudioEncoderConfig cfg{6, 4, 3, {1, 2}, 5};
    auto enc = AudioEncoder::build(params, cfg, rng);
    Tensor mel = testutil::random_tensor(rng, 9, 6);
    const double err = testutil::op_grad_error(
        [&](auto& v) {
            ag::ParamBinder bind(v[0].graph(), params, false);
            return align_to_motion(enc.forward(bind, v[0]), 5);
        },
        {mel});
    CHECK(err < 1e-5);
}
