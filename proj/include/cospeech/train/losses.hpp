#pragma once

#include "cospeech/autograd.hpp"
#include "cospeech/motion/clip.hpp"

namespace cospeech {

inline constexpr double kLambdaSimple = 10.0;

struct LossReport {
    double l_simple = 0.0;
    double l_vel = 0.0;
    double l_foot = 0.0;
    double l_total = 0.0;
    double lambda_simple = kLambdaSimple;

    LossReport& operator+=(const LossReport& o);
    LossReport& operator*=(double s);
};

/// Contact flags as a [N x |contacts|] 0/1 tensor; column k belongs to
/// layout.contact_joint_indices[k].
using ContactMask = Tensor;

double loss_simple(const Tensor& x, const Tensor& x0_hat);
/// Throws TooShort for fewer than two frames.
double loss_velocity(const Tensor& x, const Tensor& x0_hat);
/// Mean squared predicted velocity over masked (frame, contact joint) entries;
/// the mask row of frame n gates the velocity x0_hat[n+1] - x0_hat[n].
double loss_foot_contact(const Tensor& x, const Tensor& x0_hat, const JointLayout& layout, const ContactMask& mask);
LossReport loss_total(const Tensor& x, const Tensor& x0_hat, const JointLayout& layout, const ContactMask& mask,
                      double lambda_simple = kLambdaSimple);

struct LossVars {
    ag::Var simple, vel, foot, total;
    LossReport report() const;
};

/// Differentiable form of loss_total.
LossVars loss_total(const ag::Var& x, const ag::Var& x0_hat, const JointLayout& layout, const ContactMask& mask,
                    double lambda_simple = kLambdaSimple);

}  // namespace cospeech
