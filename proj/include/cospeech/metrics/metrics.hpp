#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "cospeech/audio/audio.hpp"
#include "cospeech/autograd.hpp"
#include "cospeech/motion/clip.hpp"
#include "cospeech/parameters.hpp"

namespace cospeech {

// ---- feature extractor -------------------------------------------------------

struct ExtractorConfig {
    int input_dim = 258;
    int frames = 150;
    int channels = 64;
    int kernel = 5;
    int latent_dim = 128;
    int steps = 300;
    int batch_size = 8;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
};

/// Temporal-convolution autoencoder: two dilated conv layers, mean over time,
/// linear to the latent; the decoder broadcasts a projection of the latent over
/// time, adds a learned positional table, and mirrors the convolutions.
struct FeatureExtractor {
    ExtractorConfig config;
    ParameterSet params;
    std::vector<double> loss_history;

    int latent_dim() const noexcept { return config.latent_dim; }
};

FeatureExtractor build_extractor(const ExtractorConfig& cfg);
ag::Var extractor_encode(ag::ParamBinder& bind, const FeatureExtractor& fx, const ag::Var& clip);
ag::Var extractor_decode(ag::ParamBinder& bind, const FeatureExtractor& fx, const ag::Var& latent);
/// Decodes onto the first `frames` positions.
ag::Var extractor_decode(ag::ParamBinder& bind, const FeatureExtractor& fx, const ag::Var& latent, int frames);

/// Reconstruction-MSE training with AdamW; throws InsufficientData for fewer than two clips.
FeatureExtractor train_autoencoder(const std::vector<Tensor>& clips, const ExtractorConfig& cfg);

Eigen::VectorXd encode_clip(const FeatureExtractor& fx, const Tensor& clip);
/// One latent per row.
Eigen::MatrixXd encode_clips(const FeatureExtractor& fx, const std::vector<Tensor>& clips);

void save_extractor(const std::filesystem::path& path, const FeatureExtractor& fx);
FeatureExtractor load_extractor(const std::filesystem::path& path);

// ---- distribution distance -----------------------------------------------------

struct GaussianStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
    int count = 0;
};

/// Sample mean and unbiased covariance of the rows; throws InsufficientData below two rows.
GaussianStats fit_gaussian(const Eigen::MatrixXd& samples);

/// |mu_p - mu_q|^2 + tr(S_p + S_q - 2 (S_p^1/2 S_q S_p^1/2)^1/2) after symmetrizing
/// and flooring eigenvalues at 1e-10. Throws DimensionMismatch.
double frechet_distance(const GaussianStats& p, const GaussianStats& q);

struct FgdResult {
    double value = 0.0;
    /// Either set had at most latent_dim clips, so its covariance is rank deficient.
    bool rank_warning = false;
};

FgdResult fgd(const std::vector<Tensor>& real, const std::vector<Tensor>& generated, const FeatureExtractor& fx);
FgdResult fgd_from_latents(const Eigen::MatrixXd& real, const Eigen::MatrixXd& generated);

// ---- beats ----------------------------------------------------------------------

using BeatSet = std::vector<double>;  // seconds, strictly increasing

/// Per-frame velocity v[n] = mean over joints of angle(R[n-1], R[n+1]) / 2 for
/// interior frames; beats are strict local minima of v below its mean.
BeatSet motion_beats(const MotionClip& clip);
std::vector<double> motion_velocity(const MotionClip& clip);

/// Positive mel flux; peaks above mean + 1 std, at least `min_gap_s` apart.
BeatSet audio_beats(const AudioClip& audio, const MelConfig& mel = {}, double min_gap_s = 0.1);
BeatSet onset_peaks(const std::vector<double>& envelope, double frame_rate, double min_gap_s);

/// Mean over motion beats of exp(-d^2 / (2 sigma^2)), d the distance to the
/// nearest audio beat; 0 when either set is empty.
double beat_align(const BeatSet& motion_b, const BeatSet& audio_b, double sigma = 0.1);

// ---- diversity --------------------------------------------------------------------

/// Latent rows are sorted lexicographically first, so the score does not
/// depend on input order. Throws InsufficientData below two rows.
double diversity_from_latents(const Eigen::MatrixXd& latents, int pairs, std::uint64_t seed);
double diversity(const std::vector<Tensor>& clips, const FeatureExtractor& fx, int pairs = 500, std::uint64_t seed = 0);

}  // namespace cospeech
