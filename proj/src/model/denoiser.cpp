#include "cospeech/model/denoiser.hpp"

#include <cmath>

#include "cospeech/errors.hpp"
#include "cospeech/model/layers.hpp"
#include "cospeech/rng.hpp"

namespace cospeech {

void DenoiserConfig::validate() const {
    if (n_layers < 1 || d_model < 2 || n_heads < 1 || d_heads < 1 || ff_multiplier < 1 || input_dim < 1 ||
        max_frames < 1)
        throw ConfigError("denoiser dimensions must be positive");
    if (d_model % 2 != 0) throw ConfigError("d_model must be even for the sinusoidal timestep embedding");
}

std::vector<TensorSpec> denoiser_tensor_specs(const DenoiserConfig& c) {
    c.validate();
    const int d = c.d_model, in = c.inner(), ff = c.ff_multiplier * c.d_model;
    std::vector<TensorSpec> s = {{"in.w", c.input_dim, d}, {"in.b", 1, d},  {"pos", c.max_frames, d},
                                 {"t.w1", d, d},           {"t.b1", 1, d},  {"t.w2", d, d},
                                 {"t.b2", 1, d}};
    for (int l = 0; l < c.n_layers; ++l) {
        const std::string p = "l" + std::to_string(l) + ".";
        s.insert(s.end(), {{p + "mod.w", d, 6 * d},
                           {p + "mod.b", 1, 6 * d},
                           {p + "q.w", d, in},
                           {p + "q.b", 1, in},
                           {p + "k.w", d, in},
                           {p + "k.b", 1, in},
                           {p + "v.w", d, in},
                           {p + "v.b", 1, in},
                           {p + "o.w", in, d},
                           {p + "o.b", 1, d},
                           {p + "f1.w", d, ff},
                           {p + "f1.b", 1, ff},
                           {p + "f2.w", ff, d},
                           {p + "f2.b", 1, d}});
    }
    s.insert(s.end(), {{"out.mod.w", d, 2 * d}, {"out.mod.b", 1, 2 * d}, {"out.w", d, c.input_dim}, {"out.b", 1, c.input_dim}});
    return s;
}

std::size_t denoiser_parameter_count(const DenoiserConfig& cfg) {
    std::size_t n = 0;
    for (const auto& s : denoiser_tensor_specs(cfg)) n += static_cast<std::size_t>(s.rows) * s.cols;
    return n;
}

DenoiserIndex DenoiserIndex::resolve(const ParameterSet& p, const DenoiserConfig& cfg) {
    DenoiserIndex x{};
    x.in_w = p.index_of("in.w");
    x.in_b = p.index_of("in.b");
    x.pos = p.index_of("pos");
    x.t_w1 = p.index_of("t.w1");
    x.t_b1 = p.index_of("t.b1");
    x.t_w2 = p.index_of("t.w2");
    x.t_b2 = p.index_of("t.b2");
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string s = "l" + std::to_string(l) + ".";
        auto at = [&](const char* n) { return p.index_of(s + n); };
        x.blocks.push_back({at("mod.w"), at("mod.b"), at("q.w"), at("q.b"), at("k.w"), at("k.b"), at("v.w"), at("v.b"),
                            at("o.w"), at("o.b"), at("f1.w"), at("f1.b"), at("f2.w"), at("f2.b")});
    }
    x.out_mod_w = p.index_of("out.mod.w");
    x.out_mod_b = p.index_of("out.mod.b");
    x.out_w = p.index_of("out.w");
    x.out_b = p.index_of("out.b");
    return x;
}

DenoiserModel build_denoiser(const DenoiserConfig& cfg, std::uint64_t seed) {
    DenoiserModel m;
    m.config = cfg;
    Rng rng(seed);
    const double out_std = 0.02 / std::sqrt(2.0 * cfg.n_layers);
    for (const auto& s : denoiser_tensor_specs(cfg)) {
        Parameter& p = m.params.at(m.params.add(s.name, s.rows, s.cols));
        const bool bias = s.name.ends_with(".b") || s.name.ends_with(".b1") || s.name.ends_with(".b2");
        if (bias || s.name.find("mod.") != std::string::npos) continue;
        const bool out_proj = s.name.ends_with("o.w") || s.name.ends_with("f2.w");
        init_normal(p, rng, out_proj ? out_std : 0.02);
    }
    m.index = DenoiserIndex::resolve(m.params, cfg);
    return m;
}

Tensor sinusoidal_embedding(int t, int d) {
    Tensor e(1, d);
    for (int i = 0; i < d / 2; ++i) {
        const double w = std::pow(10000.0, -2.0 * i / d);
        e(0, 2 * i) = std::sin(t * w);
        e(0, 2 * i + 1) = std::cos(t * w);
    }
    return e;
}

namespace denoiser {

namespace {

ag::Var mod_chunk(const ag::Var& mod, int k, int d) { return ag::col_slice(mod, k * d, d); }

// LN(h) * (1 + scale) + shift
ag::Var modulate(const ag::Var& h, const ag::Var& shift, const ag::Var& scale) {
    ag::Var n = ag::layer_norm(h);
    return ag::add_row(ag::add(n, ag::mul_row(n, scale)), shift);
}

}  // namespace

ag::Var timestep_condition(ag::ParamBinder& bind, const DenoiserModel& m, int t) {
    const auto& x = m.index;
    ag::Var e = bind.graph().constant(sinusoidal_embedding(t, m.config.d_model));
    ag::Var h = linear(ag::silu(linear(e, bind(x.t_w1), bind(x.t_b1))), bind(x.t_w2), bind(x.t_b2));
    return ag::silu(h);
}

ag::Var embed(ag::ParamBinder& bind, const DenoiserModel& m, const ag::Var& x_t) {
    const auto& x = m.index;
    return ag::add(linear(x_t, bind(x.in_w), bind(x.in_b)), ag::row_slice(bind(x.pos), 0, x_t.rows()));
}

ag::Var block(ag::ParamBinder& bind, const DenoiserModel& m, int layer, const ag::Var& h, const ag::Var& cond) {
    const auto& b = m.index.blocks.at(static_cast<std::size_t>(layer));
    const int d = m.config.d_model;
    ag::Var mod = linear(cond, bind(b.mod_w), bind(b.mod_b));
    ag::Var a = modulate(h, mod_chunk(mod, 0, d), mod_chunk(mod, 1, d));
    ag::Var att = ag::attention(linear(a, bind(b.q_w), bind(b.q_b)), linear(a, bind(b.k_w), bind(b.k_b)),
                                linear(a, bind(b.v_w), bind(b.v_b)), m.config.n_heads);
    ag::Var h1 = ag::add(h, ag::mul_row(linear(att, bind(b.o_w), bind(b.o_b)), mod_chunk(mod, 2, d)));
    ag::Var f = modulate(h1, mod_chunk(mod, 3, d), mod_chunk(mod, 4, d));
    f = linear(ag::gelu(linear(f, bind(b.f1_w), bind(b.f1_b))), bind(b.f2_w), bind(b.f2_b));
    return ag::add(h1, ag::mul_row(f, mod_chunk(mod, 5, d)));
}

ag::Var head(ag::ParamBinder& bind, const DenoiserModel& m, const ag::Var& h, const ag::Var& cond) {
    const auto& x = m.index;
    const int d = m.config.d_model;
    ag::Var mod = linear(cond, bind(x.out_mod_w), bind(x.out_mod_b));
    return linear(modulate(h, mod_chunk(mod, 0, d), mod_chunk(mod, 1, d)), bind(x.out_w), bind(x.out_b));
}

}  // namespace denoiser

Tensor timestep_embed(const DenoiserModel& m, int t) {
    ag::Graph g(false);
    ag::ParamBinder bind(g, m.params);
    const auto& x = m.index;
    ag::Var e = g.constant(sinusoidal_embedding(t, m.config.d_model));
    return linear(ag::silu(linear(e, bind(x.t_w1), bind(x.t_b1))), bind(x.t_w2), bind(x.t_b2)).value();
}

DenoiseOutput denoise(ag::ParamBinder& bind, const DenoiserModel& m, const ag::Var& x_t, int t) {
    if (x_t.cols() != m.config.input_dim || x_t.rows() < 1 || x_t.rows() > m.config.max_frames)
        throw ShapeMismatch("denoiser input " + std::to_string(x_t.rows()) + "x" + std::to_string(x_t.cols()) +
                            " (expects N <= " + std::to_string(m.config.max_frames) + " rows of " +
                            std::to_string(m.config.input_dim) + ")");
    DenoiseOutput out;
    ag::Var cond = denoiser::timestep_condition(bind, m, t);
    ag::Var h = denoiser::embed(bind, m, x_t);
    for (int l = 0; l < m.config.n_layers; ++l) {
        h = denoiser::block(bind, m, l, h, cond);
        out.hidden.push_back(h);
    }
    out.x0 = denoiser::head(bind, m, h, cond);
    return out;
}

Tensor denoise(const DenoiserModel& m, const Tensor& x_t, int t) {
    ag::Graph g(false);
    ag::ParamBinder bind(g, m.params);
    return denoise(bind, m, g.constant_ref(x_t), t).x0.value();
}

ConfigPairs denoiser_config_pairs(const DenoiserConfig& c) {
    return {{"n_layers", std::to_string(c.n_layers)},   {"d_model", std::to_string(c.d_model)},
            {"n_heads", std::to_string(c.n_heads)},     {"d_heads", std::to_string(c.d_heads)},
            {"ff_multiplier", std::to_string(c.ff_multiplier)}, {"input_dim", std::to_string(c.input_dim)},
            {"max_frames", std::to_string(c.max_frames)}};
}

DenoiserConfig denoiser_config_from(const Checkpoint& ck) {
    DenoiserConfig c;
    c.n_layers = ck.get_int("n_layers");
    c.d_model = ck.get_int("d_model");
    c.n_heads = ck.get_int("n_heads");
    c.d_heads = ck.get_int("d_heads");
    c.ff_multiplier = ck.get_int("ff_multiplier");
    c.input_dim = ck.get_int("input_dim");
    c.max_frames = ck.get_int("max_frames");
    c.validate();
    return c;
}

std::uint64_t save_denoiser(const std::filesystem::path& path, const DenoiserModel& m) {
    ConfigPairs cfg = {{"kind", "denoiser"}};
    for (auto& kv : denoiser_config_pairs(m.config)) cfg.push_back(kv);
    return save_checkpoint(path, cfg, m.params);
}

DenoiserModel load_denoiser(const std::filesystem::path& path, std::uint64_t* payload_hash) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.get("kind") != "denoiser") throw FormatError(path.string() + " is not a denoiser checkpoint");
    DenoiserModel m;
    m.config = denoiser_config_from(ck);
    for (const auto& s : denoiser_tensor_specs(m.config)) m.params.add(s.name, s.rows, s.cols);
    assign_parameters(m.params, ck.params, path.string());
    m.index = DenoiserIndex::resolve(m.params, m.config);
    if (payload_hash) *payload_hash = ck.payload_hash;
    return m;
}

}  // namespace cospeech
