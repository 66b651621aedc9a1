#include "cospeech/model/layers.hpp"

namespace cospeech {

ag::Var linear(const ag::Var& x, const ag::Var& w, const ag::Var& b) { return ag::add_row(ag::matmul(x, w), b); }

void init_normal(Parameter& p, Rng& rng, double std) {
    for (double& v : p.value.values()) v = std * rng.normal();
}

}  // namespace cospeech
