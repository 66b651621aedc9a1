#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cospeech/curation/curation.hpp"
#include "cospeech/errors.hpp"
#include "cospeech/motion/rotation.hpp"

using namespace cospeech;

namespace {

const std::vector<int> kWrists{kLeftWrist, kRightWrist};

MotionClip identity_clip(int n) { return MotionClip::identity(n, 15.0); }

bool orthonormal(const Mat3& m, double tol) {
    return (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff() < tol && std::abs(m.determinant() - 1.0) < tol;
}

SourceSequence source(int frames, bool with_audio) {
    SourceSequence s;
    s.source_id = "spk01";
    s.motion = identity_clip(frames);
    if (with_audio) {
        AudioClip a;
        a.samples.assign(static_cast<std::size_t>(frames / 15.0 * 16000), 0.1);
        s.audio = a;
    }
    return s;
}

}  // namespace

TEST_CASE("identity poses raise no wrist flags") {
    const auto r = detect_abnormal_wrist(identity_clip(300), kWrists);
    CHECK(r.flagged_frames.empty());
    CHECK(r.discard_windows.empty());
    CHECK_FALSE(r.rate_warning);
}

TEST_CASE("a 160 degree wrist angle on one frame flags it with a centered window") {
    MotionClip clip = identity_clip(400);
    clip.set_matrix(200, kLeftWrist, matrix_from_euler_xyz({160.0, 0.0, 0.0}));
    WristCheckConfig cfg;
    cfg.delta_limit_deg = 1000.0;  // isolate the angle rule
    const auto r = detect_abnormal_wrist(clip, kWrists, cfg);
    REQUIRE(r.flagged_frames == std::vector<int>{200});
    CHECK(r.reasons[0] == FlagReason::kAngleExceeds);
    REQUIRE(r.discard_windows.size() == 1);
    CHECK(r.discard_windows[0] == std::pair{125, 275});
}

TEST_CASE("with default limits the spike also trips the delta rule on the way back") {
    MotionClip clip = identity_clip(400);
    clip.set_matrix(200, kLeftWrist, matrix_from_euler_xyz({160.0, 0.0, 0.0}));
    const auto r = detect_abnormal_wrist(clip, kWrists);
    CHECK(r.flagged_frames == std::vector<int>{200, 201});
    CHECK(r.reasons[1] == FlagReason::kDeltaExceeds);
    REQUIRE(r.discard_windows.size() == 1);
    CHECK(r.discard_windows[0] == std::pair{125, 276});
}

TEST_CASE("an adjacent-frame jump of 30 degrees on y is a delta flag") {
    MotionClip clip = identity_clip(100);
    for (int f = 50; f < 100; ++f) clip.set_matrix(f, kRightWrist, matrix_from_euler_xyz({0.0, 30.0, 0.0}));
    const auto r = detect_abnormal_wrist(clip, kWrists);
    REQUIRE(r.flagged_frames == std::vector<int>{50});
    CHECK(r.reasons[0] == FlagReason::kDeltaExceeds);
    CHECK(r.discard_windows[0] == std::pair{0, 100});
}

TEST_CASE("angle deltas wrap around +-180") {
    MotionClip clip = identity_clip(10);
    clip.set_matrix(4, kLeftWrist, matrix_from_euler_xyz({170.0, 0.0, 0.0}));
    clip.set_matrix(5, kLeftWrist, matrix_from_euler_xyz({-170.0, 0.0, 0.0}));
    WristCheckConfig cfg;
    cfg.angle_limit_deg = 1000.0;
    const auto r = detect_abnormal_wrist(clip, kWrists, cfg);
    CHECK(r.flagged_frames == std::vector<int>{4, 6});  // 170 -> -170 is a 20 degree step
}

TEST_CASE("windows stay in bounds, contain their flag, and trailing mode starts at the flag") {
    MotionClip clip = identity_clip(200);
    clip.set_matrix(3, kLeftWrist, matrix_from_euler_xyz({0.0, 0.0, 155.0}));
    clip.set_matrix(190, kLeftWrist, matrix_from_euler_xyz({0.0, 0.0, 155.0}));
    WristCheckConfig cfg;
    cfg.delta_limit_deg = 1000.0;
    auto r = detect_abnormal_wrist(clip, kWrists, cfg);
    REQUIRE(r.discard_windows.size() == 2);
    CHECK(r.discard_windows[0] == std::pair{0, 78});
    CHECK(r.discard_windows[1] == std::pair{115, 200});
    cfg.window = 20;
    r = detect_abnormal_wrist(clip, kWrists, cfg);
    REQUIRE(r.discard_windows.size() == 2);
    CHECK(r.discard_windows[0] == std::pair{0, 13});
    CHECK(r.discard_windows[1] == std::pair{180, 200});
    cfg.mode = WindowMode::kTrailing;
    r = detect_abnormal_wrist(clip, kWrists, cfg);
    CHECK(r.discard_windows[0] == std::pair{3, 23});
    CHECK(r.discard_windows[1] == std::pair{190, 200});
    CHECK(detect_abnormal_wrist(MotionClip::identity(20, 30.0), kWrists).rate_warning);
}

TEST_CASE("segmentation into 150-frame clips") {
    auto segs = segment_clips(source(450, true));
    REQUIRE(segs.size() == 3);
    for (std::size_t i = 0; i < segs.size(); ++i) {
        CHECK(segs[i].entry.status == ClipStatus::kAccepted);
        CHECK(segs[i].motion->frame_count() == 150);
        CHECK(segs[i].entry.start == static_cast<int>(i) * 150);
        CHECK(segs[i].entry.duration_s == doctest::Approx(10.0));
        CHECK(segs[i].audio->samples.size() == 160000);
    }
    CHECK(segs[1].entry.clip_id == "spk01_0001");

    segs = segment_clips(source(149, false));
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].entry.status == ClipStatus::kDiscarded);
    CHECK(segs[0].entry.discard_reason == DiscardReason::kTooShort);
    CHECK_FALSE(segs[0].motion);

    segs = segment_clips(source(320, false));
    REQUIRE(segs.size() == 3);
    CHECK(segs[2].entry.start == 300);
    CHECK(segs[2].entry.end == 320);
    CHECK(segs[2].entry.discard_reason == DiscardReason::kTooShort);
    CHECK(segs[0].entry.end == segs[1].entry.start);
}

TEST_CASE("transcript spans follow their midpoints into clips") {
    auto s = source(300, false);
    s.transcript = {{1.0, 2.0, "one two three"}, {9.5, 10.7, "four five"}, {12.0, 13.0, "six"}};
    const auto segs = segment_clips(s);
    CHECK(*segs[0].entry.transcript == "one two three");
    CHECK(*segs[1].entry.transcript == "four five six");
}

TEST_CASE("short transcripts are dropped but the clip is kept") {
    ClipManifestEntry e;
    e.transcript = "hello there";
    auto f = filter_transcript(e);
    CHECK_FALSE(f.transcript);
    CHECK(f.transcript_dropped);
    CHECK(f.status == ClipStatus::kAccepted);

    e.transcript = "we are going to win";
    f = filter_transcript(e);
    CHECK(f.transcript == e.transcript);
    CHECK_FALSE(f.transcript_dropped);

    e.transcript = "";
    f = filter_transcript(e);
    CHECK_FALSE(f.transcript);
    CHECK(f.status == ClipStatus::kAccepted);
}

TEST_CASE("smoothing: constant clips unchanged, spikes reduced, rotations valid") {
    const MotionClip constant = identity_clip(30);
    CHECK(max_abs_diff(smooth_sequence(constant, 5).frames, constant.frames) < 1e-12);

    MotionClip spike = identity_clip(30);
    spike.set_matrix(15, 4, matrix_from_euler_xyz({0.0, 40.0, 0.0}));
    const MotionClip out = smooth_sequence(spike, 5);
    CHECK(geodesic_angle(out.matrix(15, 4), Mat3::Identity()) < geodesic_angle(spike.matrix(15, 4), Mat3::Identity()));
    for (int f = 0; f < 30; ++f)
        for (int j = 0; j < out.joint_count(); ++j) CHECK(orthonormal(out.matrix(f, j), 1e-5));
    CHECK(max_abs_diff(smooth_sequence(out, 3).frames, smooth_sequence(out, 3).frames) == 0.0);

    CHECK_THROWS_AS(smooth_sequence(spike, 4), InvalidWindow);
    CHECK_THROWS_AS(smooth_sequence(spike, 1), InvalidWindow);
    CHECK_THROWS_AS(smooth_sequence(spike, 31), InvalidWindow);
}

TEST_CASE("motion degree closed form and histogram") {
    MotionClip clip = identity_clip(20);
    for (int f = 0; f < 20; ++f) {
        Mat3 r = Eigen::AngleAxisd(0.1 * f, Vec3::UnitZ()).toRotationMatrix();
        clip.set_matrix(f, 5, r);
    }
    CHECK(motion_degree(clip) == doctest::Approx(0.1 / 43.0).epsilon(1e-9));

    const auto still = motion_degree_stats({identity_clip(10), identity_clip(12)}, 4);
    CHECK(still.histogram.counts == std::vector<int>{2, 0, 0, 0});

    const auto mixed = motion_degree_stats({identity_clip(10), clip, clip}, 5);
    int total = 0;
    for (int c : mixed.histogram.counts) total += c;
    CHECK(total == 3);
    CHECK(mixed.max == doctest::Approx(0.1 / 43.0));
    CHECK(mixed.min == 0.0);
    CHECK(mixed.histogram.counts.back() == 2);
    CHECK_THROWS_AS(motion_degree(identity_clip(1)), TooShort);
}

TEST_CASE("curation marks clips overlapping discard windows and applies annotations") {
    auto s = source(600, true);
    s.motion.set_matrix(160, kLeftWrist, matrix_from_euler_xyz({0.0, 0.0, 170.0}));
    s.transcript = {{35.0, 36.0, "this transcript has six words"}};
    CurationConfig cfg;
    cfg.wrist.delta_limit_deg = 1000.0;
    cfg.annotations["spk01_0003"] = {DiscardReason::kOther, "multiple people"};
    const auto r = curate_sequence(s, cfg);
    REQUIRE(r.segments.size() == 4);
    CHECK(r.segments[0].entry.discard_reason == DiscardReason::kAbnormalWrist);  // [85,235) overlaps [0,150)
    CHECK(r.segments[1].entry.discard_reason == DiscardReason::kAbnormalWrist);
    CHECK(r.segments[2].entry.status == ClipStatus::kAccepted);
    CHECK(r.segments[2].entry.transcript_dropped);
    CHECK(r.segments[2].motion);
    CHECK(r.segments[3].entry.discard_reason == DiscardReason::kOther);
    CHECK(r.segments[3].entry.note == "multiple people");
    CHECK_FALSE(r.segments[3].motion);

    const auto again = curate_sequence(s, cfg);
    for (std::size_t i = 0; i < r.segments.size(); ++i) CHECK(again.segments[i].entry == r.segments[i].entry);
}

TEST_CASE("manifest and annotations round-trip") {
    const auto dir = std::filesystem::temp_directory_path() / "cospeech_curation_test";
    std::filesystem::create_directories(dir);
    std::vector<ClipManifestEntry> entries(2);
    entries[0].clip_id = "a_0000";
    entries[0].source_id = "a";
    entries[0].end = 150;
    entries[0].duration_s = 10.0;
    entries[0].transcript = "quoted \"text\"\twith tab";
    entries[1] = entries[0];
    entries[1].clip_id = "a_0001";
    entries[1].transcript.reset();
    entries[1].discard(DiscardReason::kJitter, "x");
    write_manifest(dir / "m.jsonl", entries);
    CHECK(read_manifest(dir / "m.jsonl") == entries);

    CHECK_THROWS_AS(parse_manifest_line("{\"clip_id\": 1}"), FormatError);

    std::ofstream(dir / "ann.tsv") << "# comment\nb_0001\tother\tlooking sideways\nb_0002\tjitter\n";
    const auto ann = read_annotations(dir / "ann.tsv");
    CHECK(ann.size() == 2);
    CHECK(ann.at("b_0001").note == "looking sideways");
    CHECK(ann.at("b_0002").reason == DiscardReason::kJitter);
    std::ofstream(dir / "bad.tsv") << "c\tnonsense\n";
    CHECK_THROWS_AS(read_annotations(dir / "bad.tsv"), FormatError);
    std::filesystem::remove_all(dir);
}
