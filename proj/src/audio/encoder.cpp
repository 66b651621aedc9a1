#include "cospeech/audio/encoder.hpp"

#include <cmath>

#include "cospeech/errors.hpp"
#include "cospeech/model/layers.hpp"

namespace cospeech {

AudioEncoder AudioEncoder::build(ParameterSet& params, const AudioEncoderConfig& cfg, Rng& rng,
                                 const std::string& prefix) {
    AudioEncoder enc;
    enc.config = cfg;
    int in = cfg.n_mels;
    for (std::size_t i = 0; i < cfg.dilations.size(); ++i) {
        const std::string name = prefix + "conv" + std::to_string(i);
        const int w = params.add(name + ".w", cfg.kernel * in, cfg.channels);
        init_normal(params.at(w), rng, std::sqrt(2.0 / (cfg.kernel * in)));
        enc.conv_w.push_back(w);
        enc.conv_b.push_back(params.add(name + ".b", 1, cfg.channels));
        in = cfg.channels;
    }
    enc.proj_w = params.add(prefix + "proj.w", in, cfg.d_model);
    init_normal(params.at(enc.proj_w), rng, 1.0 / std::sqrt(static_cast<double>(in)));
    enc.proj_b = params.add(prefix + "proj.b", 1, cfg.d_model);
    return enc;
}

AudioEncoder AudioEncoder::attach(const ParameterSet& params, const AudioEncoderConfig& cfg, const std::string& prefix) {
    AudioEncoder enc;
    enc.config = cfg;
    for (std::size_t i = 0; i < cfg.dilations.size(); ++i) {
        const std::string name = prefix + "conv" + std::to_string(i);
        enc.conv_w.push_back(params.index_of(name + ".w"));
        enc.conv_b.push_back(params.index_of(name + ".b"));
    }
    enc.proj_w = params.index_of(prefix + "proj.w");
    enc.proj_b = params.index_of(prefix + "proj.b");
    return enc;
}

ag::Var AudioEncoder::forward(ag::ParamBinder& bind, const ag::Var& mel) const {
    if (mel.cols() != config.n_mels)
        throw ShapeMismatch("encoder expects " + std::to_string(config.n_mels) + " mel bands, got " +
                            std::to_string(mel.cols()));
    ag::Var h = ag::instance_norm(mel);
    for (std::size_t i = 0; i < conv_w.size(); ++i)
        h = ag::gelu(linear(ag::im2col(h, config.kernel, config.dilations[i]), bind(conv_w[i]), bind(conv_b[i])));
    return linear(h, bind(proj_w), bind(proj_b));
}

Tensor encode_audio(const AudioEncoder& enc, ParameterSet& params, const MelSpectrogram& mel) {
    ag::Graph g(false);
    ag::ParamBinder bind(g, params, false);
    return enc.forward(bind, g.constant(mel.frames)).value();
}

ag::Var align_to_motion(const ag::Var& emb, int motion_frames) {
    if (emb.rows() == motion_frames) return emb;
    return ag::matmul(emb.graph().constant(interpolation_matrix(emb.rows(), motion_frames)), emb);
}

}  // namespace cospeech
