#include "cospeech/curation/curation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "cospeech/errors.hpp"
#include "cospeech/io/container.hpp"
#include "cospeech/motion/rotation.hpp"

namespace cospeech {

namespace {

constexpr double kCanonicalFps = 15.0;

double wrap_degrees(double d) {
    d = std::fmod(d, 360.0);
    if (d > 180.0) d -= 360.0;
    if (d <= -180.0) d += 360.0;
    return d;
}

std::pair<int, int> flag_window(int frame, int n, const WristCheckConfig& cfg) {
    const int start = cfg.mode == WindowMode::kCentered ? frame - cfg.window / 2 : frame;
    return {std::max(0, start), std::min(n, start + cfg.window)};
}

}  // namespace

std::string to_string(ClipStatus s) { return s == ClipStatus::kAccepted ? "accepted" : "discarded"; }

std::string to_string(DiscardReason r) {
    switch (r) {
        case DiscardReason::kTooShort: return "too_short";
        case DiscardReason::kAbnormalWrist: return "abnormal_wrist";
        case DiscardReason::kJitter: return "jitter";
        case DiscardReason::kShortTranscript: return "short_transcript";
        case DiscardReason::kOther: return "other";
    }
    return "other";
}

std::string to_string(FlagReason r) { return r == FlagReason::kAngleExceeds ? "angle_exceeds" : "delta_exceeds"; }
std::string to_string(WindowMode m) { return m == WindowMode::kCentered ? "centered" : "trailing"; }

DiscardReason parse_discard_reason(const std::string& s) {
    for (auto r : {DiscardReason::kTooShort, DiscardReason::kAbnormalWrist, DiscardReason::kJitter,
                   DiscardReason::kShortTranscript, DiscardReason::kOther})
        if (to_string(r) == s) return r;
    throw ConfigError("unknown discard reason '" + s + "'");
}

WindowMode parse_window_mode(const std::string& s) {
    if (s == "centered") return WindowMode::kCentered;
    if (s == "trailing") return WindowMode::kTrailing;
    throw ConfigError("window mode must be centered or trailing, got '" + s + "'");
}

void ClipManifestEntry::discard(DiscardReason reason, std::string why) {
    status = ClipStatus::kDiscarded;
    discard_reason = reason;
    if (!why.empty()) note = std::move(why);
}

// ---- wrist abnormality -----------------------------------------------------------

std::vector<int> wrist_joints(const JointLayout& layout) {
    std::vector<int> out;
    for (std::size_t j = 0; j < layout.names.size(); ++j) {
        std::string lower = layout.names[j];
        std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
        if (lower.find("wrist") != std::string::npos) out.push_back(static_cast<int>(j));
    }
    return out;
}

AbnormalityReport detect_abnormal_wrist(const MotionClip& clip, std::span<const int> wrist_indices,
                                        const WristCheckConfig& cfg) {
    if (cfg.window <= 0) throw InvalidWindow("discard window must be positive");
    for (int w : wrist_indices)
        if (w < 0 || w >= clip.joint_count()) throw ShapeMismatch("wrist index " + std::to_string(w) + " out of range");
    AbnormalityReport report;
    report.rate_warning = std::abs(clip.fps - kCanonicalFps) > 1e-9;
    const int n = clip.frame_count();
    std::vector<Vec3> prev(wrist_indices.size());
    for (int f = 0; f < n; ++f) {
        bool angle = false, delta = false;
        for (std::size_t k = 0; k < wrist_indices.size(); ++k) {
            const Vec3 e = euler_xyz_from_matrix(clip.matrix(f, wrist_indices[k])).degrees;
            for (int a = 0; a < 3; ++a) {
                if (std::abs(e[a]) > cfg.angle_limit_deg) angle = true;
                if (f > 0 && std::abs(wrap_degrees(e[a] - prev[k][a])) > cfg.delta_limit_deg) delta = true;
            }
            prev[k] = e;
        }
        if (!angle && !delta) continue;
        report.flagged_frames.push_back(f);
        report.reasons.push_back(angle ? FlagReason::kAngleExceeds : FlagReason::kDeltaExceeds);
        const auto w = flag_window(f, n, cfg);
        if (!report.discard_windows.empty() && w.first <= report.discard_windows.back().second)
            report.discard_windows.back().second = std::max(report.discard_windows.back().second, w.second);
        else
            report.discard_windows.push_back(w);
    }
    return report;
}

// ---- segmentation -----------------------------------------------------------------

std::vector<Segment> segment_clips(const SourceSequence& source, double clip_seconds) {
    const MotionClip& m = source.motion;
    const int len = static_cast<int>(std::lround(clip_seconds * m.fps));
    if (len <= 0) throw ConfigError("clip length must be at least one frame");
    const int n = m.frame_count();
    std::vector<Segment> out;
    int index = 0;
    for (int start = 0; start < n; start += len, ++index) {
        const int end = std::min(n, start + len);
        Segment seg;
        auto& e = seg.entry;
        char id[32];
        std::snprintf(id, sizeof id, "_%04d", index);
        e.clip_id = source.source_id + id;
        e.source_id = source.source_id;
        e.start = start;
        e.end = end;
        e.duration_s = (end - start) / m.fps;
        if (end - start < len) {
            e.discard(DiscardReason::kTooShort, std::to_string(end - start) + " frames");
            out.push_back(std::move(seg));
            continue;
        }
        Tensor frames(len, m.frames.cols());
        for (int r = 0; r < len; ++r) std::copy_n(m.frames.row(start + r).begin(), frames.cols(), frames.row(r).begin());
        seg.motion = MotionClip(std::move(frames), m.fps, m.layout);
        if (source.audio) {
            const double rate = source.audio->sample_rate;
            const auto b = static_cast<std::size_t>(std::llround(start / m.fps * rate));
            const auto f = static_cast<std::size_t>(std::llround(end / m.fps * rate));
            seg.audio = slice_audio(*source.audio, std::min(b, source.audio->samples.size()),
                                    std::min(f, source.audio->samples.size()));
        }
        std::string text;
        const double t0 = start / m.fps, t1 = end / m.fps;
        for (const auto& span : source.transcript) {
            const double mid = 0.5 * (span.start_s + span.end_s);
            if (mid >= t0 && mid < t1) text += (text.empty() ? "" : " ") + span.text;
        }
        if (!source.transcript.empty()) e.transcript = text;
        out.push_back(std::move(seg));
    }
    return out;
}

int word_count(const std::string& text) {
    std::istringstream in(text);
    int count = 0;
    for (std::string w; in >> w;) ++count;
    return count;
}

ClipManifestEntry filter_transcript(ClipManifestEntry entry) {
    if (!entry.transcript || word_count(*entry.transcript) < kMinTranscriptWords) {
        entry.transcript.reset();
        entry.transcript_dropped = true;
    }
    return entry;
}

// ---- smoothing and statistics --------------------------------------------------

MotionClip smooth_sequence(const MotionClip& clip, int window) {
    const int n = clip.frame_count();
    if (window < 3 || window % 2 == 0 || window > n)
        throw InvalidWindow("smoothing window " + std::to_string(window) + " must be odd, >= 3 and <= " +
                            std::to_string(n));
    const int half = window / 2, joints = clip.joint_count();
    std::vector<Mat3> mats(static_cast<std::size_t>(n) * joints);
    for (int f = 0; f < n; ++f)
        for (int j = 0; j < joints; ++j) mats[static_cast<std::size_t>(f) * joints + j] = clip.matrix(f, j);
    MotionClip out = clip;
    for (int f = 0; f < n; ++f) {
        const int r = std::min({half, f, n - 1 - f});
        for (int j = 0; j < joints; ++j) {
            Mat3 sum = Mat3::Zero();
            for (int k = f - r; k <= f + r; ++k) sum += mats[static_cast<std::size_t>(k) * joints + j];
            out.set_matrix(f, j, project_to_rotation(sum));
        }
    }
    return out;
}

Histogram make_histogram(std::span<const double> values, int bins, double lo, double hi) {
    if (bins <= 0 || !(hi > lo)) throw ConfigError("histogram needs bins > 0 and hi > lo");
    Histogram h;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    for (int b = 0; b <= bins; ++b) h.edges.push_back(lo + (hi - lo) * b / bins);
    for (double v : values) {
        int b = static_cast<int>(std::floor((v - lo) / (hi - lo) * bins));
        h.counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))]++;
    }
    return h;
}

double motion_degree(const MotionClip& clip) {
    const int n = clip.frame_count(), joints = clip.joint_count();
    if (n < 2) throw TooShort("motion degree needs at least 2 frames");
    double total = 0.0;
    for (int f = 1; f < n; ++f)
        for (int j = 0; j < joints; ++j) total += geodesic_angle(clip.matrix(f - 1, j), clip.matrix(f, j));
    return total / (static_cast<double>(n - 1) * joints);
}

MotionDegreeStats motion_degree_stats(const std::vector<MotionClip>& clips, int bins, double hi) {
    MotionDegreeStats s;
    for (const auto& c : clips) s.per_clip.push_back(motion_degree(c));
    if (!s.per_clip.empty()) {
        const auto [mn, mx] = std::minmax_element(s.per_clip.begin(), s.per_clip.end());
        s.min = *mn;
        s.max = *mx;
        double sum = 0.0, sq = 0.0;
        for (double v : s.per_clip) sum += v;
        s.mean = sum / s.per_clip.size();
        for (double v : s.per_clip) sq += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(sq / s.per_clip.size());
    }
    if (hi <= 0.0) hi = s.max > 0.0 ? s.max : 1.0;
    s.histogram = make_histogram(s.per_clip, bins, 0.0, hi);
    return s;
}

// ---- pipeline ---------------------------------------------------------------------

Annotations read_annotations(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open annotations " + path.string());
    Annotations out;
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::istringstream ls(line);
        for (std::string f; std::getline(ls, f, '\t');) fields.push_back(f);
        if (fields.size() < 2)
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected clip_id<TAB>reason");
        Annotation a;
        try {
            a.reason = parse_discard_reason(fields[1]);
        } catch (const ConfigError& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (fields.size() > 2) a.note = fields[2];
        out[fields[0]] = a;
    }
    return out;
}

CurationResult curate_sequence(const SourceSequence& source, const CurationConfig& cfg) {
    CurationResult result;
    const auto wrists = wrist_joints(source.motion.layout);
    result.abnormality = detect_abnormal_wrist(source.motion, wrists, cfg.wrist);
    result.segments = segment_clips(source, cfg.clip_seconds);
    const auto& ab = result.abnormality;
    const int n = source.motion.frame_count();
    for (auto& seg : result.segments) {
        auto& e = seg.entry;
        if (e.status == ClipStatus::kAccepted) {
            bool angle = false, any = false;
            for (std::size_t i = 0; i < ab.flagged_frames.size(); ++i) {
                const auto w = flag_window(ab.flagged_frames[i], n, cfg.wrist);
                if (w.first < e.end && w.second > e.start) {
                    any = true;
                    angle = angle || ab.reasons[i] == FlagReason::kAngleExceeds;
                }
            }
            if (any) e.discard(angle ? DiscardReason::kAbnormalWrist : DiscardReason::kJitter);
        }
        if (auto it = cfg.annotations.find(e.clip_id); it != cfg.annotations.end() && e.status == ClipStatus::kAccepted)
            e.discard(it->second.reason, it->second.note.empty() ? "external annotation" : it->second.note);
        if (e.status == ClipStatus::kAccepted && cfg.smooth_window > 0 && seg.motion) {
            seg.motion = smooth_sequence(*seg.motion, cfg.smooth_window);
            e.note = "smoothed: chordal moving average, window " + std::to_string(cfg.smooth_window);
        }
        if (e.status == ClipStatus::kAccepted) e = filter_transcript(std::move(e));
        if (e.status == ClipStatus::kDiscarded) {
            seg.motion.reset();
            seg.audio.reset();
        }
    }
    return result;
}

std::string manifest_line(const ClipManifestEntry& e) {
    nlohmann::ordered_json j;
    j["clip_id"] = e.clip_id;
    j["source_id"] = e.source_id;
    j["start"] = e.start;
    j["end"] = e.end;
    j["duration_s"] = e.duration_s;
    j["transcript"] = e.transcript ? nlohmann::ordered_json(*e.transcript) : nlohmann::ordered_json(nullptr);
    j["transcript_dropped"] = e.transcript_dropped;
    j["status"] = to_string(e.status);
    j["discard_reason"] =
        e.discard_reason ? nlohmann::ordered_json(to_string(*e.discard_reason)) : nlohmann::ordered_json(nullptr);
    j["note"] = e.note;
    return j.dump();
}

ClipManifestEntry parse_manifest_line(const std::string& line) {
    try {
        const auto j = nlohmann::json::parse(line);
        ClipManifestEntry e;
        e.clip_id = j.at("clip_id").get<std::string>();
        e.source_id = j.at("source_id").get<std::string>();
        e.start = j.at("start").get<int>();
        e.end = j.at("end").get<int>();
        e.duration_s = j.at("duration_s").get<double>();
        if (!j.at("transcript").is_null()) e.transcript = j.at("transcript").get<std::string>();
        e.transcript_dropped = j.at("transcript_dropped").get<bool>();
        const auto status = j.at("status").get<std::string>();
        if (status != "accepted" && status != "discarded") throw FormatError("bad status '" + status + "'");
        e.status = status == "accepted" ? ClipStatus::kAccepted : ClipStatus::kDiscarded;
        if (!j.at("discard_reason").is_null()) e.discard_reason = parse_discard_reason(j.at("discard_reason").get<std::string>());
        e.note = j.value("note", "");
        if (e.end <= e.start) throw FormatError("manifest entry " + e.clip_id + " has end <= start");
        if (e.status == ClipStatus::kAccepted && e.discard_reason)
            throw FormatError("accepted entry " + e.clip_id + " carries a discard reason");
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(std::string("manifest line: ") + ex.what());
    } catch (const ConfigError& ex) {
        throw FormatError(std::string("manifest line: ") + ex.what());
    }
}

void write_manifest(const std::filesystem::path& path, const std::vector<ClipManifestEntry>& entries) {
    std::string text;
    for (const auto& e : entries) text += manifest_line(e) + "\n";
    io::write_file(path, text);
}

std::vector<ClipManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open manifest " + path.string());
    std::vector<ClipManifestEntry> out;
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) out.push_back(parse_manifest_line(line));
    return out;
}

}  // namespace cospeech
