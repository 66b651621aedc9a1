#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cospeech/motion/rotation.hpp"
#include "cospeech/tensor.hpp"

namespace cospeech {

struct JointLayout {
    std::string name;
    int body_joint_count = 0;
    int hand_joint_count = 0;
    std::vector<int> contact_joint_indices;
    std::vector<std::string> names;

    int joint_count() const noexcept { return body_joint_count + hand_joint_count; }
    /// Throws ConfigError when names or contact indices disagree with the counts.
    void validate() const;
    int index_of(const std::string& joint) const;

    /// 13 upper-body joints followed by 15 joints per hand; no contact joints.
    static JointLayout upper43();
    /// `joints` body joints named j0, j1, ...
    static JointLayout generic(int joints, std::vector<int> contacts = {});
    /// Resolves a layout recorded in a file header.
    static JointLayout by_name(const std::string& name, int joints);
};

inline constexpr int kLeftWrist = 11;
inline constexpr int kRightWrist = 12;

/// N frames of per-joint 6D rotations, stored as [N x J*6] with each joint's
/// (a1, a2) contiguous.
struct MotionClip {
    Tensor frames;
    double fps = 15.0;
    JointLayout layout = JointLayout::upper43();

    MotionClip() = default;
    MotionClip(Tensor frames, double fps, JointLayout layout);
    /// `n` frames of identity rotations.
    static MotionClip identity(int n, double fps = 15.0, JointLayout layout = JointLayout::upper43());

    int frame_count() const noexcept { return frames.rows(); }
    int joint_count() const noexcept { return layout.joint_count(); }
    double duration() const noexcept { return frame_count() / fps; }

    Rot6D rot6d(int frame, int joint) const;
    void set_rot6d(int frame, int joint, const Rot6D& r);
    Mat3 matrix(int frame, int joint) const;
    void set_matrix(int frame, int joint, const Mat3& m);

    /// Throws ShapeMismatch / DegenerateInput on broken invariants.
    void validate() const;
};

/// Per-joint slerp onto floor(N * target / fps) frames; identity when the rates match.
/// Throws EmptyResult when fewer than two frames would remain.
MotionClip resample_fps(const MotionClip& clip, double target_fps);

void write_gmc(const std::filesystem::path& path, const MotionClip& clip);
MotionClip read_gmc(const std::filesystem::path& path);

}  // namespace cospeech
