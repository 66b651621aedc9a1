#include "cospeech/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cospeech/errors.hpp"
#include "cospeech/model/checkpoint.hpp"
#include "cospeech/model/layers.hpp"
#include "cospeech/motion/rotation.hpp"
#include "cospeech/rng.hpp"
#include "cospeech/train/optimizer.hpp"

namespace cospeech {

namespace {

constexpr int kEncDilations[2] = {1, 2};
constexpr double kEigenFloor = 1e-10;

struct ExtractorIndex {
    int enc_w[2], enc_b[2], lat_w, lat_b;
    int dec_w, dec_b, pos;
    int dconv_w[2], dconv_b[2], out_w, out_b;

    static ExtractorIndex resolve(const ParameterSet& p) {
        ExtractorIndex ix{};
        for (int i = 0; i < 2; ++i) {
            ix.enc_w[i] = p.index_of("enc.conv" + std::to_string(i) + ".w");
            ix.enc_b[i] = p.index_of("enc.conv" + std::to_string(i) + ".b");
            ix.dconv_w[i] = p.index_of("dec.conv" + std::to_string(i) + ".w");
            ix.dconv_b[i] = p.index_of("dec.conv" + std::to_string(i) + ".b");
        }
        ix.lat_w = p.index_of("enc.latent.w");
        ix.lat_b = p.index_of("enc.latent.b");
        ix.dec_w = p.index_of("dec.expand.w");
        ix.dec_b = p.index_of("dec.expand.b");
        ix.pos = p.index_of("dec.pos");
        ix.out_w = p.index_of("dec.out.w");
        ix.out_b = p.index_of("dec.out.b");
        return ix;
    }
};

void add_extractor_tensors(ParameterSet& p, const ExtractorConfig& c) {
    const int k = c.kernel, ch = c.channels;
    p.add("enc.conv0.w", k * c.input_dim, ch);
    p.add("enc.conv0.b", 1, ch);
    p.add("enc.conv1.w", k * ch, ch);
    p.add("enc.conv1.b", 1, ch);
    p.add("enc.latent.w", ch, c.latent_dim);
    p.add("enc.latent.b", 1, c.latent_dim);
    p.add("dec.expand.w", c.latent_dim, ch);
    p.add("dec.expand.b", 1, ch);
    p.add("dec.pos", c.frames, ch);
    p.add("dec.conv0.w", k * ch, ch);
    p.add("dec.conv0.b", 1, ch);
    p.add("dec.conv1.w", k * ch, ch);
    p.add("dec.conv1.b", 1, ch);
    p.add("dec.out.w", ch, c.input_dim);
    p.add("dec.out.b", 1, c.input_dim);
}

void validate(const ExtractorConfig& c) {
    if (c.input_dim <= 0 || c.frames <= 0 || c.channels <= 0 || c.latent_dim <= 0)
        throw ConfigError("extractor dimensions must be positive");
    if (c.kernel <= 0 || c.kernel % 2 == 0) throw ConfigError("extractor kernel must be odd");
    if (c.steps < 0 || c.batch_size <= 0) throw ConfigError("extractor steps/batch_size invalid");
}

Eigen::MatrixXd floored_psd(const Eigen::MatrixXd& m) {
    const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(kEigenFloor);
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

// ---- feature extractor -------------------------------------------------------

FeatureExtractor build_extractor(const ExtractorConfig& cfg) {
    validate(cfg);
    FeatureExtractor fx;
    fx.config = cfg;
    add_extractor_tensors(fx.params, cfg);
    Rng rng(derive_seed(cfg.seed, "init"));
    for (auto& p : fx.params) {
        if (p.name.ends_with(".b")) continue;
        const double fan_in = p.name == "dec.pos" ? 1.0 : p.value.rows();
        const double std = p.name == "dec.pos" ? 0.02 : 1.0 / std::sqrt(fan_in);
        init_normal(p, rng, std);
    }
    return fx;
}

ag::Var extractor_encode(ag::ParamBinder& bind, const FeatureExtractor& fx, const ag::Var& clip) {
    const auto& c = fx.config;
    if (clip.cols() != c.input_dim)
        throw ShapeMismatch("extractor expects " + std::to_string(c.input_dim) + " features, got " +
                            std::to_string(clip.cols()));
    const auto ix = ExtractorIndex::resolve(fx.params);
    ag::Var h = clip;
    for (int i = 0; i < 2; ++i)
        h = ag::gelu(linear(ag::im2col(h, c.kernel, kEncDilations[i]), bind(ix.enc_w[i]), bind(ix.enc_b[i])));
    return linear(ag::mean_rows(h), bind(ix.lat_w), bind(ix.lat_b));
}

ag::Var extractor_decode(ag::ParamBinder& bind, const FeatureExtractor& fx, const ag::Var& latent, int frames) {
    const auto& c = fx.config;
    if (frames > c.frames)
        throw ShapeMismatch("extractor decodes at most " + std::to_string(c.frames) + " frames");
    const auto ix = ExtractorIndex::resolve(fx.params);
    ag::Var row = linear(latent, bind(ix.dec_w), bind(ix.dec_b));
    ag::Var h = ag::gelu(ag::add(ag::broadcast_rows(row, frames), ag::row_slice(bind(ix.pos), 0, frames)));
    for (int i = 0; i < 2; ++i)
        h = ag::gelu(
            linear(ag::im2col(h, c.kernel, kEncDilations[1 - i]), bind(ix.dconv_w[i]), bind(ix.dconv_b[i])));
    return linear(h, bind(ix.out_w), bind(ix.out_b));
}

ag::Var extractor_decode(ag::ParamBinder& bind, const FeatureExtractor& fx, const ag::Var& latent) {
    return extractor_decode(bind, fx, latent, fx.config.frames);
}

FeatureExtractor train_autoencoder(const std::vector<Tensor>& clips, const ExtractorConfig& cfg) {
    if (clips.size() < 2) throw InsufficientData("autoencoder training needs at least 2 clips");
    FeatureExtractor fx = build_extractor(cfg);
    for (const auto& clip : clips) {
        if (clip.cols() != cfg.input_dim || clip.rows() > cfg.frames || clip.rows() < cfg.kernel)
            throw ShapeMismatch("autoencoder clip shape " + std::to_string(clip.rows()) + "x" +
                                std::to_string(clip.cols()) + " incompatible with extractor config");
    }
    AdamWConfig opt_cfg;
    opt_cfg.learning_rate = cfg.learning_rate;
    opt_cfg.weight_decay = 0.0;
    AdamW opt(opt_cfg, {&fx.params});
    Rng order(derive_seed(cfg.seed, "data"));
    std::vector<std::size_t> perm(clips.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::size_t cursor = perm.size();
    const int batch = std::min<int>(cfg.batch_size, static_cast<int>(clips.size()));
    for (int step = 0; step < cfg.steps; ++step) {
        opt.zero_grad();
        double loss_sum = 0.0;
        for (int b = 0; b < batch; ++b) {
            if (cursor == perm.size()) {
                std::shuffle(perm.begin(), perm.end(), order.engine());
                cursor = 0;
            }
            const Tensor& clip = clips[perm[cursor++]];
            ag::Graph g;
            ag::ParamBinder bind(g, fx.params, true);
            ag::Var x = g.constant_ref(clip);
            ag::Var recon = extractor_decode(bind, fx, extractor_encode(bind, fx, x), clip.rows());
            ag::Var loss = ag::affine(ag::mean_square(ag::sub(recon, x)), 1.0 / batch);
            loss_sum += loss.value()[0] * batch;
            g.backward(loss);
        }
        const double mean_loss = loss_sum / batch;
        if (!std::isfinite(mean_loss)) throw NonFiniteLoss("autoencoder loss at step " + std::to_string(step));
        opt.step();
        fx.loss_history.push_back(mean_loss);
    }
    return fx;
}

Eigen::VectorXd encode_clip(const FeatureExtractor& fx, const Tensor& clip) {
    ag::Graph g(false);
    ag::ParamBinder bind(g, fx.params);
    const Tensor z = extractor_encode(bind, fx, g.constant_ref(clip)).value();
    return Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size()));
}

Eigen::MatrixXd encode_clips(const FeatureExtractor& fx, const std::vector<Tensor>& clips) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(clips.size()), fx.latent_dim());
    for (std::size_t i = 0; i < clips.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = encode_clip(fx, clips[i]).transpose();
    return out;
}

void save_extractor(const std::filesystem::path& path, const FeatureExtractor& fx) {
    const auto& c = fx.config;
    ConfigPairs pairs = {{"kind", "extractor"},
                         {"input_dim", std::to_string(c.input_dim)},
                         {"frames", std::to_string(c.frames)},
                         {"channels", std::to_string(c.channels)},
                         {"kernel", std::to_string(c.kernel)},
                         {"latent_dim", std::to_string(c.latent_dim)},
                         {"seed", std::to_string(c.seed)}};
    save_checkpoint(path, pairs, fx.params);
}

FeatureExtractor load_extractor(const std::filesystem::path& path) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.get("kind") != "extractor") throw FormatError(path.string() + " is not an extractor checkpoint");
    FeatureExtractor fx;
    auto& c = fx.config;
    c.input_dim = ck.get_int("input_dim");
    c.frames = ck.get_int("frames");
    c.channels = ck.get_int("channels");
    c.kernel = ck.get_int("kernel");
    c.latent_dim = ck.get_int("latent_dim");
    c.seed = std::stoull(ck.get("seed"));
    validate(c);
    add_extractor_tensors(fx.params, c);
    assign_parameters(fx.params, ck.params, path.string());
    return fx;
}

// ---- distribution distance -----------------------------------------------------

GaussianStats fit_gaussian(const Eigen::MatrixXd& samples) {
    if (samples.rows() < 2) throw InsufficientData("Gaussian fit needs at least 2 samples");
    GaussianStats s;
    s.count = static_cast<int>(samples.rows());
    s.mean = samples.colwise().mean().transpose();
    const Eigen::MatrixXd centered = samples.rowwise() - s.mean.transpose();
    s.covariance = centered.transpose() * centered / static_cast<double>(s.count - 1);
    s.covariance = 0.5 * (s.covariance + s.covariance.transpose());
    return s;
}

double frechet_distance(const GaussianStats& p, const GaussianStats& q) {
    const auto d = p.mean.size();
    if (q.mean.size() != d || p.covariance.rows() != d || p.covariance.cols() != d || q.covariance.rows() != d ||
        q.covariance.cols() != d)
        throw DimensionMismatch("Gaussian dimensions " + std::to_string(d) + " vs " + std::to_string(q.mean.size()));
    const Eigen::MatrixXd sp = floored_psd(p.covariance);
    const Eigen::MatrixXd sq = floored_psd(q.covariance);
    const Eigen::MatrixXd root_p = psd_sqrt(sp);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(root_p * sq * root_p, Eigen::EigenvaluesOnly);
    const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double value = (p.mean - q.mean).squaredNorm() + sp.trace() + sq.trace() - 2.0 * tr_sqrt;
    return std::max(value, 0.0);
}

FgdResult fgd_from_latents(const Eigen::MatrixXd& real, const Eigen::MatrixXd& generated) {
    FgdResult r;
    r.value = frechet_distance(fit_gaussian(real), fit_gaussian(generated));
    const auto dim = real.cols();
    r.rank_warning = real.rows() < dim + 1 || generated.rows() < dim + 1;
    return r;
}

FgdResult fgd(const std::vector<Tensor>& real, const std::vector<Tensor>& generated, const FeatureExtractor& fx) {
    return fgd_from_latents(encode_clips(fx, real), encode_clips(fx, generated));
}

// ---- beats ----------------------------------------------------------------------

std::vector<double> motion_velocity(const MotionClip& clip) {
    const int n = clip.frame_count(), joints = clip.joint_count();
    std::vector<double> v(static_cast<std::size_t>(std::max(n, 0)), 0.0);
    if (n < 2) return v;
    std::vector<Mat3> prev(joints), cur(joints), next(joints);
    auto load = [&](int f, std::vector<Mat3>& out) {
        for (int j = 0; j < joints; ++j) out[j] = clip.matrix(f, j);
    };
    auto mean_angle = [&](const std::vector<Mat3>& a, const std::vector<Mat3>& b) {
        double s = 0.0;
        for (int j = 0; j < joints; ++j) s += geodesic_angle(a[j], b[j]);
        return s / joints;
    };
    load(0, cur);
    load(1, next);
    v[0] = mean_angle(cur, next);
    for (int f = 1; f + 1 < n; ++f) {
        std::swap(prev, cur);
        std::swap(cur, next);
        load(f + 1, next);
        v[f] = 0.5 * mean_angle(prev, next);
    }
    v[n - 1] = mean_angle(cur, next);
    return v;
}

BeatSet motion_beats(const MotionClip& clip) {
    BeatSet beats;
    if (clip.frame_count() < 3) return beats;
    const auto v = motion_velocity(clip);
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    for (std::size_t n = 1; n + 1 < v.size(); ++n)
        if (v[n] < v[n - 1] && v[n] < v[n + 1] && v[n] < mean) beats.push_back(static_cast<double>(n) / clip.fps);
    return beats;
}

BeatSet onset_peaks(const std::vector<double>& env, double frame_rate, double min_gap_s) {
    BeatSet beats;
    if (env.size() < 3) return beats;
    const double n = static_cast<double>(env.size());
    const double mean = std::accumulate(env.begin(), env.end(), 0.0) / n;
    double var = 0.0;
    for (double e : env) var += (e - mean) * (e - mean);
    const double threshold = mean + std::sqrt(var / n);
    std::vector<std::size_t> peaks;
    for (std::size_t t = 1; t + 1 < env.size(); ++t)
        if (env[t] > threshold && env[t] > env[t - 1] && env[t] >= env[t + 1]) peaks.push_back(t);
    std::stable_sort(peaks.begin(), peaks.end(), [&](std::size_t a, std::size_t b) { return env[a] > env[b]; });
    std::vector<std::size_t> kept;
    for (std::size_t t : peaks) {
        const bool clear = std::none_of(kept.begin(), kept.end(), [&](std::size_t k) {
            return std::abs(static_cast<double>(k) - static_cast<double>(t)) / frame_rate < min_gap_s;
        });
        if (clear) kept.push_back(t);
    }
    std::sort(kept.begin(), kept.end());
    for (std::size_t t : kept) beats.push_back(static_cast<double>(t) / frame_rate);
    return beats;
}

BeatSet audio_beats(const AudioClip& audio, const MelConfig& cfg, double min_gap_s) {
    const MelSpectrogram mel = mel_spectrogram(audio, cfg);
    const Tensor& m = mel.frames;
    std::vector<double> flux(static_cast<std::size_t>(m.rows()), 0.0);
    for (int t = 1; t < m.rows(); ++t) {
        double s = 0.0;
        for (int b = 0; b < m.cols(); ++b) s += std::max(0.0, m(t, b) - m(t - 1, b));
        flux[static_cast<std::size_t>(t)] = s;
    }
    BeatSet beats = onset_peaks(flux, mel.frame_rate(), min_gap_s);
    const double duration = audio.duration();
    std::erase_if(beats, [&](double b) { return b > duration; });
    return beats;
}

double beat_align(const BeatSet& motion_b, const BeatSet& audio_b, double sigma) {
    if (!(sigma > 0.0)) throw ConfigError("beat alignment sigma must be positive");
    if (motion_b.empty() || audio_b.empty()) return 0.0;
    double total = 0.0;
    for (double b : motion_b) {
        auto it = std::lower_bound(audio_b.begin(), audio_b.end(), b);
        double d = std::numeric_limits<double>::infinity();
        if (it != audio_b.end()) d = *it - b;
        if (it != audio_b.begin()) d = std::min(d, b - *std::prev(it));
        total += std::exp(-d * d / (2.0 * sigma * sigma));
    }
    return total / static_cast<double>(motion_b.size());
}

// ---- diversity --------------------------------------------------------------------

double diversity_from_latents(const Eigen::MatrixXd& latents, int pairs, std::uint64_t seed) {
    const auto n = latents.rows();
    if (n < 2) throw InsufficientData("diversity needs at least 2 clips");
    if (pairs <= 0) throw ConfigError("diversity pair count must be positive");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        const auto ra = latents.row(a), rb = latents.row(b);
        return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    });
    Rng rng(derive_seed(seed, "pairs"));
    double total = 0.0;
    for (int k = 0; k < pairs; ++k) {
        const int i = rng.uniform_int(0, static_cast<int>(n) - 1);
        int j = rng.uniform_int(0, static_cast<int>(n) - 2);
        if (j >= i) ++j;
        total += (latents.row(order[i]) - latents.row(order[j])).norm();
    }
    return total / pairs;
}

double diversity(const std::vector<Tensor>& clips, const FeatureExtractor& fx, int pairs, std::uint64_t seed) {
    if (clips.size() < 2) throw InsufficientData("diversity needs at least 2 clips");
    return diversity_from_latents(encode_clips(fx, clips), pairs, seed);
}

}  // namespace cospeech
