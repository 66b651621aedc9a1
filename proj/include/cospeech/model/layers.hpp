#pragma once

#include "cospeech/autograd.hpp"
#include "cospeech/rng.hpp"

namespace cospeech {

/// x W + b, with b broadcast over rows.
ag::Var linear(const ag::Var& x, const ag::Var& w, const ag::Var& b);
/// x W without bias.
inline ag::Var linear(const ag::Var& x, const ag::Var& w) { return ag::matmul(x, w); }

void init_normal(Parameter& p, Rng& rng, double std);

}  // namespace cospeech
