#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "cospeech/app/config.hpp"
#include "cospeech/app/pipeline.hpp"
#include "cospeech/app/records.hpp"
#include "cospeech/app/synth.hpp"
#include "cospeech/errors.hpp"
#include "cospeech/io/container.hpp"

using namespace cospeech;

namespace {

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("cospeech_app_" + name);
    std::filesystem::remove_all(p);
    return p;
}

RunConfig tiny_run(const std::filesystem::path& out) {
    RunConfig c = parse_run_config(R"(
[model]
layers = 1
d_model = 16
heads = 2
d_heads = 8
ff_multiplier = 2
frames = 30
[audio]
channels = 8
d_model = 16
dilations = 1,2
[pretrain]
steps = 0
[finetune]
steps = 0
[sampler]
steps = 3
[data]
train_clips = 4
heldout_clips = 3
[eval]
extractor_steps = 3
extractor_channels = 8
pairs = 20
)");
    c.out_dir = out;
    return c;
}

}  // namespace

TEST_CASE("synthetic data is seeded and valid") {
    SyntheticSpec spec;
    spec.seed = 3;
    const auto a = generate_synthetic(spec, 3, "train");
    const auto b = generate_synthetic(spec, 3, "train");
    const auto c = generate_synthetic(spec, 3, "heldout");
    for (int i = 0; i < 3; ++i) {
        CHECK(a[i].motion.frames == b[i].motion.frames);
        CHECK(a[i].audio.samples == b[i].audio.samples);
        CHECK_NOTHROW(a[i].motion.validate());
        CHECK(a[i].motion.frame_count() == 150);
        CHECK(a[i].audio.samples.size() == 160000);
    }
    CHECK_FALSE(a[0].motion.frames == c[0].motion.frames);
}

TEST_CASE("a clean synthetic pattern aligns with its own click track") {
    SyntheticSpec spec;
    spec.seed = 9;
    for (const auto& s : generate_synthetic(spec, 6, "train")) {
        const BeatSet motion = motion_beats(s.motion);
        const BeatSet audio = audio_beats(s.audio);
        CHECK(beat_align(motion, audio, 0.1) > 0.9);
        CHECK(beat_align(motion, s.clicks, 0.1) > 0.9);
    }
}

TEST_CASE("synthetic datasets round-trip through a directory") {
    const auto dir = scratch("synth");
    SyntheticSpec spec;
    spec.frames = 20;
    const auto s = generate_synthetic(spec, 2, "train");
    write_synthetic(dir, s);
    const auto loaded = load_paired_dir(dir);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[1].name == "clip_0001");
    CHECK(max_abs_diff(loaded[0].motion.frames, s[0].motion.frames) < 1e-6);
    REQUIRE(loaded[0].audio);
    CHECK(loaded[0].audio->samples.size() == s[0].audio.samples.size());
    std::filesystem::remove_all(dir);
}

TEST_CASE("run config parsing, validation and canonical text") {
    const RunConfig d = parse_run_config("");
    CHECK(d.model.input_dim == 258);
    CHECK(d.pretrain.max_steps == 500);
    CHECK(d.finetune.cond_drop == 0.1);
    CHECK(d.sampler.guidance == 4.0);

    const RunConfig again = parse_run_config(format_run_config(d));
    CHECK(format_run_config(again) == format_run_config(d));

    CHECK_THROWS_AS(parse_run_config("[model]\nbogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[model]\ninput_dim = 252\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[audio]\nd_model = 32\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[sampler]\neta = 0.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[sampler]\nsteps = 2000\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[schedule]\nmode = cubic\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[pretrain]\nlr = fast\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("[run]\nseed = -4\n"), ConfigError);

    const RunConfig s1 = parse_run_config("[run]\nseed = 1\n"), s2 = parse_run_config("[run]\nseed = 2\n");
    CHECK(s1.pretrain.seed != s2.pretrain.seed);
    CHECK(s1.pretrain.seed != s1.finetune.seed);

    ::setenv("COSPEECH_OUT_DIR", "/tmp/elsewhere", 1);
    CHECK(parse_run_config("[run]\nout_dir = here\n").out_dir == "/tmp/elsewhere");
    ::unsetenv("COSPEECH_OUT_DIR");
    CHECK(parse_run_config("[run]\nout_dir = here\n").out_dir == "here");
}

TEST_CASE("training logs and TSV exports") {
    const auto dir = scratch("records");
    std::vector<StepRecord> log;
    {
        JsonlWriter w(dir / "log.jsonl");
        for (int i = 1; i <= 4; ++i) {
            StepRecord r{i, {}, 0.5 * i};
            r.loss.l_simple = 0.1 * i;
            r.loss.l_total = 1.0 / i;
            log.push_back(r);
            w.write(step_record_json(r));
        }
    }
    const auto back = read_step_log(dir / "log.jsonl");
    REQUIRE(back.size() == 4);
    CHECK(back[2].loss.l_total == log[2].loss.l_total);
    CHECK(back[3].wall_seconds == 2.0);

    write_tsv(dir / "loss.tsv", loss_table(back));
    const Table t = read_tsv(dir / "loss.tsv");
    CHECK(t.rows.size() == 4);
    CHECK(t.header.front() == "step");
    CHECK(io::read_file(dir / "loss.tsv").find("\n") != std::string::npos);

    write_tsv(dir / "empty.tsv", loss_table({}));
    CHECK(io::read_file(dir / "empty.tsv") == "step\tl_simple\tl_vel\tl_foot\tl_total\twall_time\n");

    const std::vector<double> values{0.0, 0.1, 0.25, 0.3, 0.9};
    const Histogram h = make_histogram(values, 4, 0.0, 1.0);
    write_tsv(dir / "hist.tsv", histogram_table(h));
    CHECK(histogram_from_table(read_tsv(dir / "hist.tsv")) == h);
    CHECK_THROWS_AS(histogram_from_table(t), FormatError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("loss summaries use a bounded smoothing window") {
    std::vector<double> totals(200);
    for (int i = 0; i < 200; ++i) totals[static_cast<std::size_t>(i)] = 200.0 - i;
    const StageLoss s = summarize_losses(totals);
    CHECK(s.window == 20);
    CHECK(s.first == doctest::Approx(190.5));
    CHECK(s.last == doctest::Approx(10.5));
    CHECK(summarize_losses({}).window == 0);
}

TEST_CASE("zero-step end-to-end run: guided and unguided samples coincide") {
    const auto dir = scratch("e2e_zero");
    const RunConfig cfg = tiny_run(dir);
    const EndToEndReport rep = run_end_to_end(cfg);
    CHECK(rep.cond_uncond_max_diff == 0.0);
    for (double v : {rep.unconditional.fgd, rep.conditional.fgd, rep.unconditional.ba, rep.conditional.ba,
                     rep.unconditional.diversity, rep.conditional.diversity, rep.ba_real})
        CHECK(std::isfinite(v));
    CHECK(rep.unconditional.generated_count == 3);
    CHECK(std::filesystem::exists(dir / "report.json"));
    CHECK(std::filesystem::exists(dir / "checkpoints" / "controlnet.ckpt"));
    CHECK(std::filesystem::exists(dir / "samples" / "conditional" / "sample_0002.gmc"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("a failing stage is named in the error and keeps its family") {
    const auto dir = scratch("e2e_fail");
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "checkpoints") << "not a directory";
    try {
        run_end_to_end(tiny_run(dir));
        FAIL("expected failure");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("stage 'extractor'") != std::string::npos);
    }
    std::filesystem::remove_all(dir);
}
