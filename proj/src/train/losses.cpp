#include "cospeech/train/losses.hpp"

#include "cospeech/errors.hpp"

namespace cospeech {

LossReport& LossReport::operator+=(const LossReport& o) {
    l_simple += o.l_simple;
    l_vel += o.l_vel;
    l_foot += o.l_foot;
    l_total += o.l_total;
    return *this;
}

LossReport& LossReport::operator*=(double s) {
    l_simple *= s;
    l_vel *= s;
    l_foot *= s;
    l_total *= s;
    return *this;
}

namespace {

void check_mask(const Tensor& x0_hat, const JointLayout& layout, const ContactMask& mask) {
    const int n_contacts = static_cast<int>(layout.contact_joint_indices.size());
    if (n_contacts == 0) return;
    if (mask.rows() != x0_hat.rows() || mask.cols() != n_contacts)
        throw ShapeMismatch("contact mask must be [N x " + std::to_string(n_contacts) + "]");
}

// Expands the per-joint mask onto the 6 channels of each contact joint, rows 0..N-2.
Tensor expand_mask(const ContactMask& mask, int frames_minus_one) {
    Tensor m(frames_minus_one, 6 * mask.cols());
    for (int n = 0; n < frames_minus_one; ++n)
        for (int k = 0; k < mask.cols(); ++k)
            for (int c = 0; c < 6; ++c) m(n, 6 * k + c) = mask(n, k) != 0.0 ? 1.0 : 0.0;
    return m;
}

std::vector<int> contact_columns(const JointLayout& layout) {
    std::vector<int> cols;
    for (int j : layout.contact_joint_indices)
        for (int c = 0; c < 6; ++c) cols.push_back(6 * j + c);
    return cols;
}

}  // namespace

double loss_simple(const Tensor& x, const Tensor& x0_hat) {
    require_same_shape(x, x0_hat, "loss_simple");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x0_hat[i] - x[i]) * (x0_hat[i] - x[i]);
    return x.size() ? s / static_cast<double>(x.size()) : 0.0;
}

double loss_velocity(const Tensor& x, const Tensor& x0_hat) {
    require_same_shape(x, x0_hat, "loss_velocity");
    if (x.rows() < 2) throw TooShort("velocity loss needs at least two frames");
    double s = 0.0;
    for (int n = 0; n + 1 < x.rows(); ++n)
        for (int c = 0; c < x.cols(); ++c) {
            const double d = (x0_hat(n + 1, c) - x0_hat(n, c)) - (x(n + 1, c) - x(n, c));
            s += d * d;
        }
    return s / (static_cast<double>(x.rows() - 1) * x.cols());
}

double loss_foot_contact(const Tensor& x, const Tensor& x0_hat, const JointLayout& layout, const ContactMask& mask) {
    require_same_shape(x, x0_hat, "loss_foot_contact");
    if (layout.contact_joint_indices.empty()) return 0.0;
    check_mask(x0_hat, layout, mask);
    double s = 0.0, count = 0.0;
    for (int n = 0; n + 1 < x0_hat.rows(); ++n)
        for (std::size_t k = 0; k < layout.contact_joint_indices.size(); ++k) {
            if (mask(n, static_cast<int>(k)) == 0.0) continue;
            const int j = layout.contact_joint_indices[k];
            for (int c = 0; c < 6; ++c) {
                const double v = x0_hat(n + 1, 6 * j + c) - x0_hat(n, 6 * j + c);
                s += v * v;
                count += 1.0;
            }
        }
    return count > 0.0 ? s / count : 0.0;
}

LossReport loss_total(const Tensor& x, const Tensor& x0_hat, const JointLayout& layout, const ContactMask& mask,
                      double lambda_simple) {
    LossReport r;
    r.lambda_simple = lambda_simple;
    r.l_simple = loss_simple(x, x0_hat);
    r.l_vel = loss_velocity(x, x0_hat);
    r.l_foot = loss_foot_contact(x, x0_hat, layout, mask);
    r.l_total = lambda_simple * r.l_simple + r.l_vel + r.l_foot;
    return r;
}

LossReport LossVars::report() const {
    LossReport r;
    r.l_simple = simple.value()[0];
    r.l_vel = vel.value()[0];
    r.l_foot = foot.value()[0];
    r.l_total = total.value()[0];
    return r;
}

LossVars loss_total(const ag::Var& x, const ag::Var& x0_hat, const JointLayout& layout, const ContactMask& mask,
                    double lambda_simple) {
    require_same_shape(x.value(), x0_hat.value(), "loss_total");
    auto& g = x0_hat.graph();
    LossVars v;
    v.simple = ag::mean_square(ag::sub(x0_hat, x));
    v.vel = ag::mean_square(ag::sub(ag::row_diff(x0_hat), ag::row_diff(x)));
    if (layout.contact_joint_indices.empty()) {
        v.foot = g.constant(Tensor(1, 1, 0.0));
    } else {
        check_mask(x0_hat.value(), layout, mask);
        const auto cols = contact_columns(layout);
        v.foot = ag::masked_mean_square(ag::select_cols(ag::row_diff(x0_hat), cols), expand_mask(mask, x0_hat.rows() - 1));
    }
    v.total = ag::add(ag::add(ag::affine(v.simple, lambda_simple), v.vel), v.foot);
    return v;
}

}  // namespace cospeech
