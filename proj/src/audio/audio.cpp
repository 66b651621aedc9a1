#include "cospeech/audio/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <numbers>

#include "cospeech/errors.hpp"
#include "cospeech/io/container.hpp"

namespace cospeech {

namespace {

void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& s, std::uint16_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>(v >> 8));
}
std::uint32_t get_u32(const std::string& s, std::size_t at) {
    if (at + 4 > s.size()) throw FormatError("wav truncated");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[at + i]);
    return v;
}
std::uint16_t get_u16(const std::string& s, std::size_t at) {
    if (at + 2 > s.size()) throw FormatError("wav truncated");
    return static_cast<std::uint16_t>(static_cast<unsigned char>(s[at]) | (static_cast<unsigned char>(s[at + 1]) << 8));
}

struct FftwPlanDeleter {
    void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
};

}  // namespace

void write_wav(const std::filesystem::path& path, const AudioClip& audio) {
    if (audio.sample_rate <= 0) throw FormatError("sample rate must be positive");
    const auto n = static_cast<std::uint32_t>(audio.samples.size());
    std::string s = "RIFF";
    put_u32(s, 36 + 2 * n);
    s += "WAVEfmt ";
    put_u32(s, 16);
    put_u16(s, 1);
    put_u16(s, 1);
    put_u32(s, static_cast<std::uint32_t>(audio.sample_rate));
    put_u32(s, static_cast<std::uint32_t>(audio.sample_rate) * 2);
    put_u16(s, 2);
    put_u16(s, 16);
    s += "data";
    put_u32(s, 2 * n);
    for (double x : audio.samples) {
        const auto q = static_cast<std::int16_t>(std::lround(std::clamp(x, -1.0, 1.0) * 32767.0));
        put_u16(s, static_cast<std::uint16_t>(q));
    }
    io::write_file(path, s);
}

AudioClip read_wav(const std::filesystem::path& path) {
    const std::string s = io::read_file(path);
    if (s.size() < 12 || s.compare(0, 4, "RIFF") != 0 || s.compare(8, 4, "WAVE") != 0)
        throw FormatError(path.string() + ": not a RIFF/WAVE file");
    AudioClip audio;
    bool have_fmt = false;
    std::size_t pos = 12;
    while (pos + 8 <= s.size()) {
        const std::string id = s.substr(pos, 4);
        const std::uint32_t len = get_u32(s, pos + 4);
        const std::size_t body = pos + 8;
        if (body + len > s.size()) throw FormatError(path.string() + ": chunk " + id + " overruns file");
        if (id == "fmt ") {
            if (get_u16(s, body) != 1 || get_u16(s, body + 2) != 1 || get_u16(s, body + 14) != 16)
                throw FormatError(path.string() + ": only 16-bit PCM mono is supported");
            audio.sample_rate = static_cast<int>(get_u32(s, body + 4));
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt) throw FormatError(path.string() + ": data before fmt chunk");
            audio.samples.resize(len / 2);
            for (std::size_t i = 0; i < audio.samples.size(); ++i)
                audio.samples[i] = static_cast<std::int16_t>(get_u16(s, body + 2 * i)) / 32767.0;
            return audio;
        }
        pos = body + len + (len & 1u);
    }
    throw FormatError(path.string() + ": no data chunk");
}

AudioClip slice_audio(const AudioClip& audio, std::size_t begin, std::size_t end) {
    end = std::min(end, audio.samples.size());
    begin = std::min(begin, end);
    return {std::vector<double>(audio.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                                audio.samples.begin() + static_cast<std::ptrdiff_t>(end)),
            audio.sample_rate};
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Tensor mel_filterbank(int sample_rate, int window, int n_mels) {
    const int bins = window / 2 + 1;
    const double top = hz_to_mel(sample_rate / 2.0);
    std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) edges[i] = mel_to_hz(top * static_cast<double>(i) / (n_mels + 1));
    Tensor fb(bins, n_mels);
    for (int k = 0; k < bins; ++k) {
        const double f = static_cast<double>(k) * sample_rate / window;
        for (int m = 0; m < n_mels; ++m) {
            const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
            double w = 0.0;
            if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
            else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
            fb(k, m) = w;
        }
    }
    return fb;
}

MelSpectrogram mel_spectrogram(const AudioClip& audio, const MelConfig& cfg) {
    if (cfg.window < 2 || cfg.hop < 1 || cfg.n_mels < 1) throw ConfigError("invalid mel configuration");
    const std::size_t len = audio.samples.size();
    if (len < static_cast<std::size_t>(cfg.window))
        throw TooShort("audio has " + std::to_string(len) + " samples, window is " + std::to_string(cfg.window));
    const int n_frames = 1 + static_cast<int>(len / static_cast<std::size_t>(cfg.hop));
    const int bins = cfg.window / 2 + 1;
    const int half = cfg.window / 2;

    std::vector<double> hann(static_cast<std::size_t>(cfg.window));
    for (int i = 0; i < cfg.window; ++i) hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / cfg.window);

    std::unique_ptr<double, FftwFree> in(fftw_alloc_real(static_cast<std::size_t>(cfg.window)));
    std::unique_ptr<fftw_complex, FftwFree> out(fftw_alloc_complex(static_cast<std::size_t>(bins)));
    std::unique_ptr<fftw_plan_s, FftwPlanDeleter> plan(
        fftw_plan_dft_r2c_1d(cfg.window, in.get(), out.get(), FFTW_ESTIMATE));

    Tensor power(n_frames, bins);
    for (int t = 0; t < n_frames; ++t) {
        const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(t) * cfg.hop - half;
        for (int i = 0; i < cfg.window; ++i) {
            const std::ptrdiff_t src = start + i;
            const double x = (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) ? audio.samples[src] : 0.0;
            in.get()[i] = x * hann[i];
        }
        fftw_execute(plan.get());
        for (int k = 0; k < bins; ++k) power(t, k) = out.get()[k][0] * out.get()[k][0] + out.get()[k][1] * out.get()[k][1];
    }
    MelSpectrogram mel{matmul(power, mel_filterbank(audio.sample_rate, cfg.window, cfg.n_mels)), cfg.window, cfg.hop,
                       cfg.n_mels, audio.sample_rate};
    for (double& v : mel.frames.values()) v = std::log(v + kLogFloor);
    return mel;
}

void write_mel(const std::filesystem::path& path, const MelSpectrogram& mel) {
    io::write_container(path, {{"MEL1", std::to_string(mel.frame_count()), std::to_string(mel.n_mels),
                                std::to_string(mel.window), std::to_string(mel.hop), std::to_string(mel.sample_rate)},
                               io::to_f32(mel.frames)});
}

MelSpectrogram read_mel(const std::filesystem::path& path) {
    auto c = io::read_container(path, "MEL1", 6);
    MelSpectrogram mel;
    const int t = io::parse_count(c.header[1], "frame count");
    mel.n_mels = io::parse_count(c.header[2], "mel count");
    mel.window = io::parse_count(c.header[3], "window");
    mel.hop = io::parse_count(c.header[4], "hop");
    mel.sample_rate = io::parse_count(c.header[5], "sample rate");
    if (c.payload.size() != static_cast<std::size_t>(t) * mel.n_mels)
        throw FormatError(path.string() + ": payload length does not match header");
    mel.frames = io::from_f32(t, mel.n_mels, c.payload);
    return mel;
}

Tensor interpolation_matrix(int source_frames, int target_frames) {
    if (source_frames < 1 || target_frames < 1) throw ShapeMismatch("interpolation needs at least one frame");
    Tensor m(target_frames, source_frames);
    for (int n = 0; n < target_frames; ++n) {
        if (source_frames == target_frames) {
            m(n, n) = 1.0;
            continue;
        }
        const double pos = target_frames == 1 ? 0.0
                                              : static_cast<double>(n) * (source_frames - 1) / (target_frames - 1);
        const int i0 = std::min(static_cast<int>(std::floor(pos)), source_frames - 1);
        const int i1 = std::min(i0 + 1, source_frames - 1);
        const double u = pos - i0;
        m(n, i0) += 1.0 - u;
        if (u > 0.0) m(n, i1) += u;
    }
    return m;
}

Tensor align_to_motion(const Tensor& emb, int motion_frames) {
    if (emb.rows() == motion_frames) return emb;
    return matmul(interpolation_matrix(emb.rows(), motion_frames), emb);
}

}  // namespace cospeech
