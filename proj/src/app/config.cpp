#include "cospeech/app/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <charconv>
#include <boost/property_tree/ptree.hpp>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>

#include "cospeech/errors.hpp"
#include "cospeech/io/container.hpp"
#include "cospeech/rng.hpp"

namespace cospeech {

namespace {

namespace pt = boost::property_tree;

std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::vector<int> split_ints(const std::string& key, const std::string& text) {
    std::vector<int> out;
    std::istringstream in(text);
    for (std::string item; std::getline(in, item, ',');) out.push_back(static_cast<int>(io::parse_count(item, key)));
    return out;
}

std::uint64_t parse_seed(const std::string& v) {
    std::uint64_t out = 0;
    const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || end != v.data() + v.size()) throw ConfigError("seed must be an unsigned integer");
    return out;
}

// Binds every INI key to a field; parse and format both walk this table.
struct Field {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <class T>
Field int_field(T RunConfig::*section, int T::*member) {
    return {[=](RunConfig& c, const std::string& v) {
                (c.*section).*member = static_cast<int>(io::parse_int(v, "integer"));
            },
            [=](const RunConfig& c) { return std::to_string((c.*section).*member); }};
}

template <class T>
Field real_field(T RunConfig::*section, double T::*member) {
    return {[=](RunConfig& c, const std::string& v) { (c.*section).*member = io::parse_real(v, "real"); },
            [=](const RunConfig& c) { return io::format_real((c.*section).*member); }};
}

Field int_top(int RunConfig::*member) {
    return {[=](RunConfig& c, const std::string& v) { c.*member = static_cast<int>(io::parse_int(v, "integer")); },
            [=](const RunConfig& c) { return std::to_string(c.*member); }};
}

Field real_top(double RunConfig::*member) {
    return {[=](RunConfig& c, const std::string& v) { c.*member = io::parse_real(v, "real"); },
            [=](const RunConfig& c) { return io::format_real(c.*member); }};
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> f;
        f["run.seed"] = {[](RunConfig& c, const std::string& v) { c.seed = parse_seed(v); },
                         [](const RunConfig& c) { return std::to_string(c.seed); }};
        f["run.layout"] = {[](RunConfig& c, const std::string& v) { c.layout = v; },
                           [](const RunConfig& c) { return c.layout; }};
        f["run.out_dir"] = {[](RunConfig& c, const std::string& v) { c.out_dir = v; },
                            [](const RunConfig& c) { return c.out_dir.string(); }};
        f["model.layers"] = int_field(&RunConfig::model, &DenoiserConfig::n_layers);
        f["model.d_model"] = int_field(&RunConfig::model, &DenoiserConfig::d_model);
        f["model.heads"] = int_field(&RunConfig::model, &DenoiserConfig::n_heads);
        f["model.d_heads"] = int_field(&RunConfig::model, &DenoiserConfig::d_heads);
        f["model.ff_multiplier"] = int_field(&RunConfig::model, &DenoiserConfig::ff_multiplier);
        f["model.input_dim"] = int_field(&RunConfig::model, &DenoiserConfig::input_dim);
        f["model.frames"] = int_field(&RunConfig::model, &DenoiserConfig::max_frames);
        f["audio.n_mels"] = int_field(&RunConfig::audio, &AudioEncoderConfig::n_mels);
        f["audio.channels"] = int_field(&RunConfig::audio, &AudioEncoderConfig::channels);
        f["audio.kernel"] = int_field(&RunConfig::audio, &AudioEncoderConfig::kernel);
        f["audio.d_model"] = int_field(&RunConfig::audio, &AudioEncoderConfig::d_model);
        f["audio.dilations"] = {
            [](RunConfig& c, const std::string& v) { c.audio.dilations = split_ints("audio.dilations", v); },
            [](const RunConfig& c) { return join_ints(c.audio.dilations); }};
        f["audio.window"] = int_field(&RunConfig::mel, &MelConfig::window);
        f["audio.hop"] = int_field(&RunConfig::mel, &MelConfig::hop);
        f["schedule.T"] = int_top(&RunConfig::T);
        f["schedule.offset"] = real_top(&RunConfig::schedule_offset);
        f["schedule.mode"] = {[](RunConfig& c, const std::string& v) { c.noise_mode = parse_noise_mode(v); },
                              [](const RunConfig& c) { return to_string(c.noise_mode); }};
        for (const std::string stage : {"pretrain", "finetune"}) {
            auto member = stage == "pretrain" ? &RunConfig::pretrain : &RunConfig::finetune;
            f[stage + ".lr"] = real_field(member, &TrainConfig::learning_rate);
            f[stage + ".batch_size"] = int_field(member, &TrainConfig::batch_size);
            f[stage + ".steps"] = int_field(member, &TrainConfig::max_steps);
            f[stage + ".beta1"] = real_field(member, &TrainConfig::beta1);
            f[stage + ".beta2"] = real_field(member, &TrainConfig::beta2);
            f[stage + ".weight_decay"] = real_field(member, &TrainConfig::weight_decay);
            f[stage + ".lambda_simple"] = real_field(member, &TrainConfig::lambda_simple);
        }
        f["finetune.cond_drop"] = real_field(&RunConfig::finetune, &TrainConfig::cond_drop);
        f["sampler.steps"] = int_field(&RunConfig::sampler, &SamplerConfig::steps);
        f["sampler.guidance"] = real_field(&RunConfig::sampler, &SamplerConfig::guidance);
        f["sampler.eta"] = real_field(&RunConfig::sampler, &SamplerConfig::eta);
        f["data.patterns"] = int_field(&RunConfig::data, &SyntheticSpec::pattern_count);
        f["data.noise_level"] = real_field(&RunConfig::data, &SyntheticSpec::noise_level);
        f["data.beat_period"] = real_field(&RunConfig::data, &SyntheticSpec::beat_period_s);
        f["data.amplitude_deg"] = real_field(&RunConfig::data, &SyntheticSpec::amplitude_deg);
        f["data.fps"] = real_field(&RunConfig::data, &SyntheticSpec::fps);
        f["data.sample_rate"] = int_field(&RunConfig::data, &SyntheticSpec::sample_rate);
        f["data.train_clips"] = int_top(&RunConfig::train_clips);
        f["data.heldout_clips"] = int_top(&RunConfig::heldout_clips);
        f["eval.extractor_steps"] = int_field(&RunConfig::extractor, &ExtractorConfig::steps);
        f["eval.extractor_channels"] = int_field(&RunConfig::extractor, &ExtractorConfig::channels);
        f["eval.extractor_lr"] = real_field(&RunConfig::extractor, &ExtractorConfig::learning_rate);
        f["eval.latent_dim"] = int_field(&RunConfig::extractor, &ExtractorConfig::latent_dim);
        f["eval.ba_sigma"] = real_top(&RunConfig::ba_sigma);
        f["eval.pairs"] = int_top(&RunConfig::diversity_pairs);
        return f;
    }();
    return table;
}

void derive_seeds(RunConfig& c) {
    c.pretrain.stage = Stage::kPretrain;
    c.finetune.stage = Stage::kFinetune;
    c.pretrain.seed = derive_seed(c.seed, "pretrain");
    c.finetune.seed = derive_seed(c.seed, "finetune");
    c.sampler.seed = derive_seed(c.seed, "sample");
    c.data.seed = derive_seed(c.seed, "data");
    c.extractor.seed = derive_seed(c.seed, "extractor");
    c.data.frames = c.model.max_frames;
    c.extractor.input_dim = c.model.input_dim;
    c.extractor.frames = c.model.max_frames;
    c.mel.n_mels = c.audio.n_mels;
}

}  // namespace

RunConfig::RunConfig() {
    pretrain.max_steps = 500;
    finetune.max_steps = 500;
    pretrain.learning_rate = 1e-3;
    finetune.learning_rate = 1e-3;
    derive_seeds(*this);
}

NoiseSchedule RunConfig::schedule() const { return cosine_schedule(T, schedule_offset, noise_mode); }

JointLayout RunConfig::joint_layout() const { return JointLayout::by_name(layout, model.input_dim / 6); }

void RunConfig::validate() const {
    try {
        model.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("[model] ") + e.what());
    }
    if (model.input_dim % 6 != 0) throw ConfigError("[model] input_dim must be a multiple of 6");
    JointLayout l;
    try {
        l = joint_layout();
    } catch (const FormatError& e) {
        throw ConfigError(std::string("[model] input_dim does not fit layout ") + layout + ": " + e.what());
    }
    if (l.joint_count() * 6 != model.input_dim)
        throw ConfigError("[model] input_dim " + std::to_string(model.input_dim) + " != 6 x " +
                          std::to_string(l.joint_count()) + " joints of layout " + layout);
    if (audio.d_model != model.d_model)
        throw ConfigError("[audio] d_model must equal [model] d_model (" + std::to_string(model.d_model) + ")");
    if (audio.n_mels <= 0 || audio.channels <= 0 || audio.kernel <= 0 || audio.kernel % 2 == 0 ||
        audio.dilations.empty())
        throw ConfigError("[audio] encoder shape invalid");
    for (int d : audio.dilations)
        if (d <= 0) throw ConfigError("[audio] dilations must be positive");
    if (mel.window <= 0 || mel.hop <= 0 || mel.hop > mel.window) throw ConfigError("[audio] need 0 < hop <= window");
    if (T < 1) throw ConfigError("[schedule] T must be at least 1");
    if (!(schedule_offset > 0.0)) throw ConfigError("[schedule] offset must be positive");
    for (const auto* t : {&pretrain, &finetune}) {
        const std::string s = t == &pretrain ? "[pretrain]" : "[finetune]";
        if (!(t->learning_rate > 0.0)) throw ConfigError(s + " lr must be positive");
        if (t->batch_size <= 0) throw ConfigError(s + " batch_size must be positive");
        if (t->max_steps < 0) throw ConfigError(s + " steps must be non-negative");
        if (!(t->beta1 >= 0.0 && t->beta1 < 1.0 && t->beta2 >= 0.0 && t->beta2 < 1.0))
            throw ConfigError(s + " betas must be in [0, 1)");
        if (t->weight_decay < 0.0) throw ConfigError(s + " weight_decay must be non-negative");
        if (!(t->lambda_simple > 0.0)) throw ConfigError(s + " lambda_simple must be positive");
    }
    if (!(finetune.cond_drop >= 0.0 && finetune.cond_drop <= 1.0))
        throw ConfigError("[finetune] cond_drop must be in [0, 1]");
    if (sampler.steps < 1 || sampler.steps > T) throw ConfigError("[sampler] steps must be in [1, T]");
    if (sampler.eta != 0.0) throw ConfigError("[sampler] eta must be 0 (deterministic DDIM)");
    try {
        data.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("[data] ") + e.what());
    }
    if (layout != "upper43") throw ConfigError("[run] synthetic data requires layout upper43");
    if (train_clips < 2 || heldout_clips < 2) throw ConfigError("[data] need at least 2 train and 2 held-out clips");
    if (extractor.steps < 0 || extractor.channels <= 0 || extractor.latent_dim <= 0)
        throw ConfigError("[eval] extractor settings invalid");
    if (!(ba_sigma > 0.0)) throw ConfigError("[eval] ba_sigma must be positive");
    if (diversity_pairs <= 0) throw ConfigError("[eval] pairs must be positive");
}

RunConfig parse_run_config(const std::string& text) {
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    RunConfig c;
    const auto& table = fields();
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty())
            throw ConfigError("key '" + section + "' must live in a section");
        for (const auto& [key, value] : body) {
            const std::string full = section + "." + key;
            auto it = table.find(full);
            if (it == table.end()) throw ConfigError("unknown config key [" + section + "] " + key);
            try {
                it->second.set(c, value.data());
            } catch (const Error& e) {
                throw ConfigError("[" + section + "] " + key + ": " + e.what());
            }
        }
    }
    if (const char* env = std::getenv("COSPEECH_OUT_DIR"); env && *env) c.out_dir = env;
    derive_seeds(c);
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = io::read_file(path);
    } catch (const Error& e) {
        throw ConfigError(std::string("cannot read config: ") + e.what());
    }
    return parse_run_config(text);
}

std::string format_run_config(const RunConfig& cfg) {
    std::string out, current;
    for (const auto& [full, field] : fields()) {
        const auto dot = full.find('.');
        const std::string section = full.substr(0, dot);
        if (section != current) {
            out += (out.empty() ? "[" : "\n[") + section + "]\n";
            current = section;
        }
        out += full.substr(dot + 1) + " = " + field.get(cfg) + "\n";
    }
    return out;
}

}  // namespace cospeech
