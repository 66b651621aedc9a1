#include "cospeech/model/controlnet.hpp"

#include "cospeech/errors.hpp"
#include "cospeech/model/layers.hpp"
#include "cospeech/rng.hpp"

namespace cospeech {

namespace {

void add_block_tensors(ParameterSet& p, const DenoiserConfig& cfg) {
    const int d = cfg.d_model, in = cfg.inner();
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string s = "m" + std::to_string(l) + ".";
        p.add(s + "q.w", d, in);
        p.add(s + "q.b", 1, in);
        p.add(s + "k.w", d, in);
        p.add(s + "k.b", 1, in);
        p.add(s + "v.w", d, in);
        p.add(s + "v.b", 1, in);
        p.add(s + "o.w", in, d);
        p.add(s + "o.b", 1, d);
        p.add(s + "adain.w", d, 2 * d);
        p.add(s + "adain.b", 1, 2 * d);
        p.add(s + "router.w", d, 2);
        p.add(s + "router.b", 1, 2);
        p.add(s + "zero.w", d, d);
    }
}

std::vector<MoGEBlock> resolve_blocks(const ParameterSet& p, int layers) {
    std::vector<MoGEBlock> out;
    for (int l = 0; l < layers; ++l) {
        const std::string s = "m" + std::to_string(l) + ".";
        auto at = [&](const char* n) { return p.index_of(s + n); };
        out.push_back({at("q.w"), at("q.b"), at("k.w"), at("k.b"), at("v.w"), at("v.b"), at("o.w"), at("o.b"),
                       at("adain.w"), at("adain.b"), at("router.w"), at("router.b"), at("zero.w")});
    }
    return out;
}

const MoGEBlock& block_at(const ControlNetModel& c, int layer) { return c.blocks.at(static_cast<std::size_t>(layer)); }

}  // namespace

ControlNetModel build_controlnet(const DenoiserModel& expert, const AudioEncoderConfig& audio, std::uint64_t seed,
                                 std::uint64_t expert_hash) {
    if (audio.d_model != expert.config.d_model) throw ConfigError("audio encoder width must equal d_model");
    ControlNetModel c;
    c.copy = expert;
    c.expert_hash = expert_hash;
    add_block_tensors(c.params, expert.config);
    c.blocks = resolve_blocks(c.params, expert.config.n_layers);
    Rng rng(seed);
    for (const auto& b : c.blocks) {
        for (int w : {b.q_w, b.k_w, b.v_w, b.o_w, b.adain_w, b.router_w}) init_normal(c.params.at(w), rng, 0.02);
        c.params.at(b.router_b).value = Tensor(1, 2, {kRouterBiasInit, -kRouterBiasInit});
    }
    c.encoder = AudioEncoder::build(c.params, audio, rng);
    return c;
}

ag::Var cross_attend(ag::ParamBinder& bind, const ControlNetModel& c, int layer, const ag::Var& f_a, const ag::Var& f_x) {
    const auto& b = block_at(c, layer);
    if (f_a.cols() != c.config().d_model || f_x.cols() != c.config().d_model)
        throw ShapeMismatch("cross_attend expects d_model columns on both inputs");
    ag::Var att = ag::attention(linear(f_a, bind(b.q_w), bind(b.q_b)), linear(f_x, bind(b.k_w), bind(b.k_b)),
                                linear(f_x, bind(b.v_w), bind(b.v_b)), c.config().n_heads);
    return linear(att, bind(b.o_w), bind(b.o_b));
}

ag::Var adain(ag::ParamBinder& bind, const ControlNetModel& c, int layer, const ag::Var& features, const ag::Var& summary) {
    const auto& b = block_at(c, layer);
    const int d = c.config().d_model;
    ag::Var ss = linear(summary, bind(b.adain_w), bind(b.adain_b));
    ag::Var n = ag::instance_norm(features);
    return ag::add_row(ag::add(n, ag::mul_row(n, ag::col_slice(ss, 0, d))), ag::col_slice(ss, d, d));
}

ag::Var router_weight(ag::ParamBinder& bind, const ControlNetModel& c, int layer, const ag::Var& guidance) {
    const auto& b = block_at(c, layer);
    return ag::col_slice(ag::softmax_rows(linear(guidance, bind(b.router_w), bind(b.router_b))), 0, 1);
}

ag::Var route_blend(ag::ParamBinder& bind, const ControlNetModel& c, int layer, const ag::Var& frozen_branch,
                    const ag::Var& f_train, const ag::Var& guidance) {
    if (!frozen_branch.value().same_shape(f_train.value()) || !frozen_branch.value().same_shape(guidance.value()))
        throw ShapeMismatch("route_blend inputs must share a shape");
    const auto& b = block_at(c, layer);
    ag::Var r = router_weight(bind, c, layer, guidance);
    ag::Var keep_train = ag::affine(r, -1.0, 1.0);
    return ag::add(frozen_branch, ag::mul_col(ag::matmul(f_train, bind(b.zero_w)), keep_train));
}

ag::Var audio_features(ag::ParamBinder& moge, const ControlNetModel& c, const ag::Var& mel, int frames) {
    return align_to_motion(c.encoder.forward(moge, mel), frames);
}

ag::Var controlnet_denoise(ControlNetBinders& b, const DenoiserModel& frozen, const ControlNetModel& c, const ag::Var& x_t,
                           int t, const ag::Var& f_a) {
    if (!(frozen.config == c.config())) throw ConfigError("control network and expert configs differ");
    if (f_a.rows() != x_t.rows() || f_a.cols() != c.config().d_model)
        throw ShapeMismatch("audio features must be [N x d_model] aligned to the motion frames");
    if (x_t.cols() != frozen.config.input_dim || x_t.rows() > frozen.config.max_frames)
        throw ShapeMismatch("control network input has the wrong shape");
    ag::Var cond_f = denoiser::timestep_condition(b.frozen, frozen, t);
    ag::Var cond_c = denoiser::timestep_condition(b.copy, c.copy, t);
    ag::Var s = denoiser::embed(b.frozen, frozen, x_t);
    ag::Var h = denoiser::embed(b.copy, c.copy, x_t);
    ag::Var summary = ag::mean_rows(f_a);
    for (int l = 0; l < frozen.config.n_layers; ++l) {
        ag::Var f_xp = denoiser::block(b.frozen, frozen, l, s, cond_f);
        h = denoiser::block(b.copy, c.copy, l, h, cond_c);
        ag::Var f_train = adain(b.moge, c, l, cross_attend(b.moge, c, l, f_a, h), summary);
        s = route_blend(b.moge, c, l, f_xp, f_train, s);
    }
    return denoiser::head(b.frozen, frozen, s, cond_f);
}

Tensor controlnet_denoise(const DenoiserModel& frozen, const ControlNetModel& c, const Tensor& x_t, int t,
                          const Tensor& f_a) {
    ag::Graph g(false);
    ag::ParamBinder bf(g, frozen.params), bc(g, c.copy.params), bm(g, c.params);
    ControlNetBinders b{bf, bc, bm};
    return controlnet_denoise(b, frozen, c, g.constant_ref(x_t), t, g.constant_ref(f_a)).value();
}

Tensor audio_features(const ControlNetModel& c, const Tensor& mel, int frames) {
    ag::Graph g(false);
    ag::ParamBinder bm(g, c.params);
    return audio_features(bm, c, g.constant_ref(mel), frames).value();
}

std::uint64_t save_controlnet(const std::filesystem::path& path, const ControlNetModel& c) {
    ConfigPairs cfg = {{"kind", "controlnet"}, {"expert_hash", hash_hex(c.expert_hash)}};
    for (auto& kv : denoiser_config_pairs(c.config())) cfg.push_back(kv);
    const auto& a = c.encoder.config;
    cfg.insert(cfg.end(), {{"audio.n_mels", std::to_string(a.n_mels)},
                           {"audio.channels", std::to_string(a.channels)},
                           {"audio.kernel", std::to_string(a.kernel)},
                           {"audio.layers", std::to_string(a.dilations.size())},
                           {"audio.d_model", std::to_string(a.d_model)}});
    for (std::size_t i = 0; i < a.dilations.size(); ++i)
        cfg.emplace_back("audio.dilation" + std::to_string(i), std::to_string(a.dilations[i]));
    ParameterSet all;
    for (const auto& p : c.copy.params) all.at(all.add("copy." + p.name, p.value.rows(), p.value.cols())).value = p.value;
    for (const auto& p : c.params) all.at(all.add(p.name, p.value.rows(), p.value.cols())).value = p.value;
    return save_checkpoint(path, cfg, all);
}

ControlNetModel load_controlnet(const std::filesystem::path& path, std::uint64_t expert_hash) {
    Checkpoint ck = load_checkpoint(path);
    const std::string where = path.string();
    if (ck.get("kind") != "controlnet") throw FormatError(where + " is not a control network checkpoint");
    if (ck.get("expert_hash") != hash_hex(expert_hash))
        throw FormatError(where + " was trained against expert " + ck.get("expert_hash") + ", not " +
                          hash_hex(expert_hash));
    ControlNetModel c;
    c.expert_hash = expert_hash;
    c.copy.config = denoiser_config_from(ck);
    AudioEncoderConfig a;
    a.n_mels = ck.get_int("audio.n_mels");
    a.channels = ck.get_int("audio.channels");
    a.kernel = ck.get_int("audio.kernel");
    a.d_model = ck.get_int("audio.d_model");
    a.dilations.clear();
    for (int i = 0; i < ck.get_int("audio.layers"); ++i) a.dilations.push_back(ck.get_int("audio.dilation" + std::to_string(i)));

    ParameterSet copy_src, moge_src;
    for (const auto& p : ck.params) {
        ParameterSet& dst = p.name.starts_with("copy.") ? copy_src : moge_src;
        const std::string name = p.name.starts_with("copy.") ? p.name.substr(5) : p.name;
        dst.at(dst.add(name, p.value.rows(), p.value.cols())).value = p.value;
    }
    for (const auto& s : denoiser_tensor_specs(c.copy.config)) c.copy.params.add(s.name, s.rows, s.cols);
    assign_parameters(c.copy.params, copy_src, where + " (copy)");
    c.copy.index = DenoiserIndex::resolve(c.copy.params, c.copy.config);

    add_block_tensors(c.params, c.copy.config);
    Rng unused(0);
    c.encoder = AudioEncoder::build(c.params, a, unused);
    assign_parameters(c.params, moge_src, where + " (blocks)");
    c.blocks = resolve_blocks(c.params, c.copy.config.n_layers);
    return c;
}

}  // namespace cospeech
