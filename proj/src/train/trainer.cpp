#include "cospeech/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "cospeech/errors.hpp"
#include "cospeech/rng.hpp"

namespace cospeech {

TrainRng::TrainRng(std::uint64_t seed) : noise(derive_seed(seed, "noise")), drop(derive_seed(seed, "drop")) {}

namespace {

struct NoisyExample {
    int t;
    Tensor x_t;
};

NoisyExample draw(const TrainingExample& ex, const NoiseSchedule& s, Rng& rng) {
    const int t = rng.uniform_int(1, s.T);
    Tensor eps(ex.motion.rows(), ex.motion.cols());
    for (double& v : eps.values()) v = rng.normal();
    return {t, add_noise(ex.motion, t, s, eps).x_t};
}

void require_finite(const LossReport& r, long long step) {
    if (!std::isfinite(r.l_total) || !std::isfinite(r.l_simple) || !std::isfinite(r.l_vel) || !std::isfinite(r.l_foot))
        throw NonFiniteLoss("step " + std::to_string(step) + ": l_simple=" + std::to_string(r.l_simple) +
                            " l_vel=" + std::to_string(r.l_vel) + " l_foot=" + std::to_string(r.l_foot));
}

void require_finite_grads(const std::vector<ParameterSet*>& groups, long long step) {
    for (ParameterSet* g : groups)
        for (const auto& p : *g)
            if (!p.grad.empty() && !p.grad.all_finite())
                throw NonFiniteLoss("step " + std::to_string(step) + ": non-finite gradient in " + p.name);
}

}  // namespace

LossReport pretrain_step(DenoiserModel& model, const std::vector<const TrainingExample*>& batch,
                         const JointLayout& layout, const NoiseSchedule& schedule, const TrainConfig& cfg,
                         AdamW& opt, TrainRng& rng) {
    if (batch.empty()) throw InsufficientData("empty batch");
    opt.zero_grad();
    LossReport mean;
    mean.lambda_simple = cfg.lambda_simple;
    const double w = 1.0 / static_cast<double>(batch.size());
    for (const TrainingExample* ex : batch) {
        NoisyExample n = draw(*ex, schedule, rng.noise);
        ag::Graph g;
        ag::ParamBinder bind(g, model.params, true);
        ag::Var x0 = denoise(bind, model, g.constant_ref(n.x_t), n.t).x0;
        LossVars l = loss_total(g.constant_ref(ex->motion), x0, layout, ex->contacts, cfg.lambda_simple);
        LossReport r = l.report();
        r *= w;
        mean += r;
        g.backward(ag::affine(l.total, w));
    }
    require_finite(mean, opt.steps());
    require_finite_grads({&model.params}, opt.steps());
    opt.step();
    return mean;
}

LossReport finetune_step(const DenoiserModel& frozen, ControlNetModel& cnet,
                         const std::vector<const TrainingExample*>& batch, const JointLayout& layout,
                         const NoiseSchedule& schedule, const TrainConfig& cfg, AdamW& opt, TrainRng& rng) {
    if (batch.empty()) throw InsufficientData("empty batch");
    opt.zero_grad();
    LossReport mean;
    mean.lambda_simple = cfg.lambda_simple;
    const double w = 1.0 / static_cast<double>(batch.size());
    for (const TrainingExample* ex : batch) {
        if (ex->mel.empty()) throw InsufficientData("finetuning example without audio");
        NoisyExample n = draw(*ex, schedule, rng.noise);
        const bool drop = rng.drop.uniform() < cfg.cond_drop;
        ag::Graph g;
        ag::ParamBinder bf(g, frozen.params), bc(g, cnet.copy.params, true), bm(g, cnet.params, true);
        ControlNetBinders b{bf, bc, bm};
        const int frames = ex->motion.rows();
        ag::Var f_a = drop ? g.constant(Tensor(frames, cnet.config().d_model))
                           : audio_features(bm, cnet, g.constant_ref(ex->mel), frames);
        ag::Var x0 = controlnet_denoise(b, frozen, cnet, g.constant_ref(n.x_t), n.t, f_a);
        LossVars l = loss_total(g.constant_ref(ex->motion), x0, layout, ex->contacts, cfg.lambda_simple);
        LossReport r = l.report();
        r *= w;
        mean += r;
        g.backward(ag::affine(l.total, w));
    }
    require_finite(mean, opt.steps());
    require_finite_grads({&cnet.copy.params, &cnet.params}, opt.steps());
    opt.step();
    return mean;
}

namespace {

template <class StepFn>
void epoch_loop(std::size_t n, const TrainConfig& cfg, AdamW& opt, StepFn&& step, const StepCallback& on_step) {
    if (n == 0) throw InsufficientData("no training examples");
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be positive");
    Rng order(derive_seed(cfg.seed, "data"));
    std::vector<std::size_t> idx(n);
    const auto start = std::chrono::steady_clock::now();
    for (int e = 0; e < cfg.epochs; ++e) {
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), order.engine());
        for (std::size_t b = 0; b < n; b += static_cast<std::size_t>(cfg.batch_size)) {
            if (cfg.max_steps > 0 && opt.steps() >= cfg.max_steps) return;
            std::vector<std::size_t> ids(idx.begin() + static_cast<std::ptrdiff_t>(b),
                                         idx.begin() + static_cast<std::ptrdiff_t>(std::min(n, b + cfg.batch_size)));
            LossReport r = step(ids);
            const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            if (on_step) on_step({opt.steps(), r, wall});
        }
    }
}

std::vector<const TrainingExample*> gather(const std::vector<TrainingExample>& data, const std::vector<std::size_t>& ids) {
    std::vector<const TrainingExample*> batch;
    for (std::size_t i : ids) batch.push_back(&data[i]);
    return batch;
}

}  // namespace

void run_pretrain(DenoiserModel& model, const std::vector<TrainingExample>& data, const JointLayout& layout,
                  const NoiseSchedule& schedule, const TrainConfig& cfg, const StepCallback& on_step,
                  AdamW* resume_opt) {
    AdamW local(cfg.optimizer(), {&model.params});
    AdamW& opt = resume_opt ? *resume_opt : local;
    TrainRng rng(cfg.seed);
    epoch_loop(data.size(), cfg, opt,
               [&](const std::vector<std::size_t>& ids) {
                   return pretrain_step(model, gather(data, ids), layout, schedule, cfg, opt, rng);
               },
               on_step);
}

void run_finetune(const DenoiserModel& frozen, ControlNetModel& cnet, const std::vector<TrainingExample>& data,
                  const JointLayout& layout, const NoiseSchedule& schedule, const TrainConfig& cfg,
                  const StepCallback& on_step, AdamW* resume_opt) {
    AdamW local(cfg.optimizer(), {&cnet.copy.params, &cnet.params});
    AdamW& opt = resume_opt ? *resume_opt : local;
    TrainRng rng(cfg.seed);
    epoch_loop(data.size(), cfg, opt,
               [&](const std::vector<std::size_t>& ids) {
                   return finetune_step(frozen, cnet, gather(data, ids), layout, schedule, cfg, opt, rng);
               },
               on_step);
}

GradCheckReport grad_check(const std::vector<ParameterSet*>& groups, const LossBuilder& loss, double tolerance, double h) {
    for (ParameterSet* g : groups) g->zero_grad();
    {
        ag::Graph g;
        g.backward(loss(g));
    }
    std::vector<std::vector<Tensor>> analytic;
    for (ParameterSet* g : groups) {
        analytic.emplace_back();
        for (const auto& p : *g) analytic.back().push_back(p.grad.empty() ? Tensor(p.value.rows(), p.value.cols()) : p.grad);
    }
    auto eval = [&]() {
        ag::Graph g(false);
        return loss(g).value()[0];
    };
    GradCheckReport rep;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        int pi = 0;
        for (auto& p : *groups[gi]) {
            const Tensor& an = analytic[gi][static_cast<std::size_t>(pi++)];
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                const double orig = p.value[i];
                p.value[i] = orig + h;
                const double fp = eval();
                p.value[i] = orig - h;
                const double fm = eval();
                p.value[i] = orig;
                const double fd = (fp - fm) / (2.0 * h);
                const double err = std::abs(fd - an[i]) / std::max({std::abs(fd), std::abs(an[i]), 1e-7});
                ++rep.checked;
                if (err > rep.max_rel_error) {
                    rep.max_rel_error = err;
                    rep.worst_parameter = p.name + "[" + std::to_string(i) + "]";
                }
            }
        }
    }
    for (ParameterSet* g : groups) g->zero_grad();
    if (rep.max_rel_error > tolerance)
        throw GradMismatch("max relative error " + std::to_string(rep.max_rel_error) + " at " + rep.worst_parameter);
    return rep;
}

}  // namespace cospeech
