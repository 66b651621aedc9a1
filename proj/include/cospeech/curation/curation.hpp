#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cospeech/audio/audio.hpp"
#include "cospeech/motion/clip.hpp"

namespace cospeech {

enum class ClipStatus { kAccepted, kDiscarded };
enum class DiscardReason { kTooShort, kAbnormalWrist, kJitter, kShortTranscript, kOther };
enum class FlagReason { kAngleExceeds, kDeltaExceeds };
enum class WindowMode { kCentered, kTrailing };

std::string to_string(ClipStatus s);
std::string to_string(DiscardReason r);
std::string to_string(FlagReason r);
std::string to_string(WindowMode m);
/// Throw ConfigError on unknown names.
DiscardReason parse_discard_reason(const std::string& s);
WindowMode parse_window_mode(const std::string& s);

struct ClipManifestEntry {
    std::string clip_id;
    std::string source_id;
    int start = 0;  // [start, end) frames within the source sequence
    int end = 0;
    double duration_s = 0.0;
    std::optional<std::string> transcript;
    /// Set when a short transcript was removed; the clip still serves audio/motion.
    bool transcript_dropped = false;
    ClipStatus status = ClipStatus::kAccepted;
    std::optional<DiscardReason> discard_reason;
    std::string note;

    void discard(DiscardReason reason, std::string why = {});
    friend bool operator==(const ClipManifestEntry&, const ClipManifestEntry&) = default;
};

// ---- wrist abnormality -----------------------------------------------------------

struct WristCheckConfig {
    double angle_limit_deg = 150.0;
    double delta_limit_deg = 25.0;
    int window = 150;
    WindowMode mode = WindowMode::kCentered;
};

struct AbnormalityReport {
    std::vector<int> flagged_frames;
    std::vector<FlagReason> reasons;  // parallel to flagged_frames
    /// Merged [start, end) ranges.
    std::vector<std::pair<int, int>> discard_windows;
    /// The delta threshold assumes 15 fps.
    bool rate_warning = false;
};

/// Flags frame n when any x-y-z Euler angle of a listed wrist exceeds the angle
/// limit in magnitude, or when any axis changes by more than the delta limit
/// from frame n-1 (differences wrapped into (-180, 180]). Each flag opens a
/// window of `window` frames; centered places floor(window/2) frames before the
/// flag, trailing starts the window at the flag. Windows are clamped and merged.
AbnormalityReport detect_abnormal_wrist(const MotionClip& clip, std::span<const int> wrist_indices,
                                        const WristCheckConfig& cfg = {});

/// Wrist joints of the upper-body layout, or every joint named "*wrist*" otherwise.
std::vector<int> wrist_joints(const JointLayout& layout);

// ---- segmentation -----------------------------------------------------------------

struct TranscriptSpan {
    double start_s = 0.0;
    double end_s = 0.0;
    std::string text;
};

struct SourceSequence {
    std::string source_id;
    MotionClip motion;
    std::optional<AudioClip> audio;
    std::vector<TranscriptSpan> transcript;
};

struct Segment {
    ClipManifestEntry entry;
    std::optional<MotionClip> motion;
    std::optional<AudioClip> audio;
};

/// Non-overlapping windows of round(clip_seconds * fps) frames; a shorter
/// remainder becomes a discarded too_short entry without data. Spans are assigned
/// to the clip containing their midpoint.
std::vector<Segment> segment_clips(const SourceSequence& source, double clip_seconds = 10.0);

constexpr int kMinTranscriptWords = 5;
int word_count(const std::string& text);
ClipManifestEntry filter_transcript(ClipManifestEntry entry);

// ---- smoothing and statistics --------------------------------------------------

/// Moving chordal mean of rotation matrices, projected back onto SO(3); windows
/// shrink symmetrically near the ends. Stands in for a learned smoother.
MotionClip smooth_sequence(const MotionClip& clip, int window);

struct Histogram {
    std::vector<double> edges;  // bins + 1 ascending edges
    std::vector<int> counts;

    friend bool operator==(const Histogram&, const Histogram&) = default;
};

/// Equal-width bins over [lo, hi]; values outside are clamped into the end bins.
Histogram make_histogram(std::span<const double> values, int bins, double lo, double hi);

struct MotionDegreeStats {
    std::vector<double> per_clip;  // mean geodesic change per frame (rad), averaged over joints
    Histogram histogram;
    double mean = 0.0, stddev = 0.0, min = 0.0, max = 0.0;
};

double motion_degree(const MotionClip& clip);
/// `hi` <= 0 picks the largest value (or 1 when every clip is static).
MotionDegreeStats motion_degree_stats(const std::vector<MotionClip>& clips, int bins = 10, double hi = 0.0);

// ---- pipeline ---------------------------------------------------------------------

/// Externally computed filter verdicts keyed by clip id.
struct Annotation {
    DiscardReason reason = DiscardReason::kOther;
    std::string note;
};
using Annotations = std::map<std::string, Annotation>;

/// Tab-separated lines: clip_id, reason, optional note. '#' starts a comment.
Annotations read_annotations(const std::filesystem::path& path);

struct CurationConfig {
    double clip_seconds = 10.0;
    WristCheckConfig wrist;
    int smooth_window = 5;  // 0 disables smoothing
    Annotations annotations;
};

struct CurationResult {
    std::vector<Segment> segments;
    AbnormalityReport abnormality;
};

CurationResult curate_sequence(const SourceSequence& source, const CurationConfig& cfg);

/// One JSON object per line.
void write_manifest(const std::filesystem::path& path, const std::vector<ClipManifestEntry>& entries);
std::vector<ClipManifestEntry> read_manifest(const std::filesystem::path& path);
std::string manifest_line(const ClipManifestEntry& e);
ClipManifestEntry parse_manifest_line(const std::string& line);

}  // namespace cospeech
