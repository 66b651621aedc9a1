#include "cospeech/motion/clip.hpp"

#include <algorithm>
#include <cmath>

#include "cospeech/errors.hpp"
#include "cospeech/io/container.hpp"

namespace cospeech {

namespace {

std::vector<std::string> upper43_names() {
    std::vector<std::string> n = {"spine1",         "spine2",         "spine3",        "neck",
                                  "head",           "left_collar",    "right_collar",  "left_shoulder",
                                  "right_shoulder", "left_elbow",     "right_elbow",   "left_wrist",
                                  "right_wrist"};
    for (const char* side : {"left", "right"})
        for (const char* finger : {"index", "middle", "pinky", "ring", "thumb"})
            for (int k = 1; k <= 3; ++k) n.push_back(std::string(side) + "_" + finger + std::to_string(k));
    return n;
}

}  // namespace

void JointLayout::validate() const {
    if (body_joint_count < 0 || hand_joint_count < 0 || joint_count() == 0)
        throw ConfigError("layout " + name + " has no joints");
    if (static_cast<int>(names.size()) != joint_count())
        throw ConfigError("layout " + name + " names do not match its joint count");
    for (int c : contact_joint_indices)
        if (c < 0 || c >= joint_count()) throw ConfigError("layout " + name + " contact index out of range");
}

int JointLayout::index_of(const std::string& joint) const {
    auto it = std::find(names.begin(), names.end(), joint);
    if (it == names.end()) throw ConfigError("layout " + name + " has no joint " + joint);
    return static_cast<int>(it - names.begin());
}

JointLayout JointLayout::upper43() { return {"upper43", 13, 30, {}, upper43_names()}; }

JointLayout JointLayout::generic(int joints, std::vector<int> contacts) {
    JointLayout l{"generic", joints, 0, std::move(contacts), {}};
    for (int j = 0; j < joints; ++j) l.names.push_back("j" + std::to_string(j));
    l.validate();
    return l;
}

JointLayout JointLayout::by_name(const std::string& name, int joints) {
    if (name == "upper43") {
        if (joints != 43) throw FormatError("upper43 layout with " + std::to_string(joints) + " joints");
        return upper43();
    }
    if (name == "generic") return generic(joints);
    throw FormatError("unknown joint layout '" + name + "'");
}

MotionClip::MotionClip(Tensor f, double fps_, JointLayout l) : frames(std::move(f)), fps(fps_), layout(std::move(l)) {
    if (frames.cols() != 6 * layout.joint_count())
        throw ShapeMismatch("clip has " + std::to_string(frames.cols()) + " columns, layout needs " +
                            std::to_string(6 * layout.joint_count()));
}

MotionClip MotionClip::identity(int n, double fps, JointLayout layout) {
    Tensor f(n, 6 * layout.joint_count());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < layout.joint_count(); ++j) {
            f(i, 6 * j) = 1.0;
            f(i, 6 * j + 4) = 1.0;
        }
    return {std::move(f), fps, std::move(layout)};
}

Rot6D MotionClip::rot6d(int frame, int joint) const {
    const double* p = frames.data() + static_cast<std::size_t>(frame) * frames.cols() + 6 * joint;
    return {Vec3(p[0], p[1], p[2]), Vec3(p[3], p[4], p[5])};
}

void MotionClip::set_rot6d(int frame, int joint, const Rot6D& r) {
    double* p = frames.data() + static_cast<std::size_t>(frame) * frames.cols() + 6 * joint;
    for (int k = 0; k < 3; ++k) {
        p[k] = r.a1[k];
        p[3 + k] = r.a2[k];
    }
}

Mat3 MotionClip::matrix(int frame, int joint) const { return matrix_from_rot6d(rot6d(frame, joint)); }

void MotionClip::set_matrix(int frame, int joint, const Mat3& m) { set_rot6d(frame, joint, rot6d_from_matrix(m)); }

void MotionClip::validate() const {
    layout.validate();
    if (frames.cols() != 6 * layout.joint_count()) throw ShapeMismatch("clip columns do not match layout");
    if (!(fps > 0.0) || !std::isfinite(fps)) throw DegenerateInput("clip fps must be positive");
    if (!frames.all_finite()) throw DegenerateInput("clip contains non-finite values");
}

MotionClip resample_fps(const MotionClip& clip, double target_fps) {
    if (!(clip.fps > 0.0) || !(target_fps > 0.0)) throw DegenerateInput("resample rates must be positive");
    if (target_fps == clip.fps) return clip;
    const int n_in = clip.frame_count();
    const int n_out = static_cast<int>(std::floor(n_in * target_fps / clip.fps));
    if (n_out < 2) throw EmptyResult("resampling leaves " + std::to_string(n_out) + " frames");
    const int joints = clip.joint_count();

    std::vector<Eigen::Quaterniond> q(static_cast<std::size_t>(n_in) * joints);
    for (int i = 0; i < n_in; ++i)
        for (int j = 0; j < joints; ++j) q[static_cast<std::size_t>(i) * joints + j] = Eigen::Quaterniond(clip.matrix(i, j));

    MotionClip out(Tensor(n_out, clip.frames.cols()), target_fps, clip.layout);
    const double step = clip.fps / target_fps;
    for (int k = 0; k < n_out; ++k) {
        const double pos = std::min(k * step, static_cast<double>(n_in - 1));
        const int i0 = static_cast<int>(std::floor(pos));
        const int i1 = std::min(i0 + 1, n_in - 1);
        const double u = pos - i0;
        for (int j = 0; j < joints; ++j) {
            const auto& q0 = q[static_cast<std::size_t>(i0) * joints + j];
            const auto& q1 = q[static_cast<std::size_t>(i1) * joints + j];
            const Eigen::Quaterniond qk = (u == 0.0 || q0.coeffs() == q1.coeffs()) ? q0 : q0.slerp(u, q1);
            out.set_matrix(k, j, qk.toRotationMatrix());
        }
    }
    return out;
}

void write_gmc(const std::filesystem::path& path, const MotionClip& clip) {
    clip.validate();
    io::write_container(path, {{"GMC1", std::to_string(clip.frame_count()), std::to_string(clip.joint_count()),
                                io::format_real(clip.fps), clip.layout.name},
                               io::to_f32(clip.frames)});
}

MotionClip read_gmc(const std::filesystem::path& path) {
    auto c = io::read_container(path, "GMC1", 5);
    const int n = io::parse_count(c.header[1], "frame count");
    const int j = io::parse_count(c.header[2], "joint count");
    const double fps = io::parse_real(c.header[3], "fps");
    if (!(fps > 0.0)) throw FormatError("fps must be positive");
    if (c.payload.size() != static_cast<std::size_t>(n) * j * 6)
        throw FormatError(path.string() + ": payload has " + std::to_string(c.payload.size()) + " floats, header implies " +
                          std::to_string(static_cast<std::size_t>(n) * j * 6));
    MotionClip clip(io::from_f32(n, 6 * j, c.payload), fps, JointLayout::by_name(c.header[4], j));
    clip.validate();
    return clip;
}

}  // namespace cospeech
