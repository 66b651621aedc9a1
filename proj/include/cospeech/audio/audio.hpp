#pragma once

#include <filesystem>
#include <vector>

#include "cospeech/tensor.hpp"

namespace cospeech {

struct AudioClip {
    std::vector<double> samples;  // amplitude in [-1, 1]
    int sample_rate = 16000;

    double duration() const noexcept { return static_cast<double>(samples.size()) / sample_rate; }
};

/// 16-bit PCM mono. Samples are clamped to [-1, 1] and rounded on write.
void write_wav(const std::filesystem::path& path, const AudioClip& audio);
AudioClip read_wav(const std::filesystem::path& path);

/// Samples [begin, end) as a new clip.
AudioClip slice_audio(const AudioClip& audio, std::size_t begin, std::size_t end);

struct MelConfig {
    int window = 1024;
    int hop = 512;
    int n_mels = 80;
};

struct MelSpectrogram {
    Tensor frames;  // [T_a x n_mels], natural-log power
    int window = 1024;
    int hop = 512;
    int n_mels = 80;
    int sample_rate = 16000;

    int frame_count() const noexcept { return frames.rows(); }
    double frame_rate() const noexcept { return static_cast<double>(sample_rate) / hop; }
};

inline constexpr double kLogFloor = 1e-10;

/// HTK-scale triangular filters over 0..sample_rate/2, shape [window/2+1 x n_mels].
Tensor mel_filterbank(int sample_rate, int window, int n_mels);
/// Hz -> mel (HTK) and back.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Center-padded (zeros) Hann STFT, T_a = 1 + floor(len/hop), log(power.mel + 1e-10).
/// Throws TooShort when the clip is shorter than one window.
MelSpectrogram mel_spectrogram(const AudioClip& audio, const MelConfig& cfg = {});

void write_mel(const std::filesystem::path& path, const MelSpectrogram& mel);
MelSpectrogram read_mel(const std::filesystem::path& path);

/// [N x T_a] linear interpolation weights onto N uniform positions over [0, T_a-1].
Tensor interpolation_matrix(int source_frames, int target_frames);
/// Resamples rows of `emb` onto `motion_frames` positions.
Tensor align_to_motion(const Tensor& emb, int motion_frames);

}  // namespace cospeech
