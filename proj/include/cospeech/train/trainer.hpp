#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cospeech/diffusion/diffusion.hpp"
#include "cospeech/model/controlnet.hpp"
#include "cospeech/train/losses.hpp"
#include "cospeech/train/optimizer.hpp"

namespace cospeech {

enum class Stage { kPretrain, kFinetune };

struct TrainConfig {
    Stage stage = Stage::kPretrain;
    double learning_rate = 1e-4;
    int batch_size = 8;
    int epochs = 1;
    int max_steps = 0;  // 0: run every epoch to completion
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.01;
    double cond_drop = 0.1;
    double lambda_simple = kLambdaSimple;
    std::uint64_t seed = 0;

    AdamWConfig optimizer() const { return {learning_rate, beta1, beta2, 1e-8, weight_decay}; }
};

/// One training pair. `mel` may be empty for pretraining data.
struct TrainingExample {
    Tensor motion;  // [N x J*6]
    Tensor mel;     // [T_a x n_mels]
    ContactMask contacts;
};

/// Independent random streams so the noise draws of a batch do not depend on
/// whether condition dropping is active.
struct TrainRng {
    Rng noise;
    Rng drop;
    explicit TrainRng(std::uint64_t seed);
};

/// Forward, backward, and one optimizer step on the batch mean. Returns the
/// losses measured before the step. Throws NonFiniteLoss (parameters untouched).
LossReport pretrain_step(DenoiserModel& model, const std::vector<const TrainingExample*>& batch,
                         const JointLayout& layout, const NoiseSchedule& schedule, const TrainConfig& cfg,
                         AdamW& opt, TrainRng& rng);

/// As pretrain_step through the control network; only the copy, mixing
/// blocks and audio encoder receive gradients.
LossReport finetune_step(const DenoiserModel& frozen, ControlNetModel& cnet,
                         const std::vector<const TrainingExample*>& batch, const JointLayout& layout,
                         const NoiseSchedule& schedule, const TrainConfig& cfg, AdamW& opt, TrainRng& rng);

struct StepRecord {
    long long step;
    LossReport loss;
    double wall_seconds;
};

using StepCallback = std::function<void(const StepRecord&)>;

/// Epoch loop over a seeded shuffle; the last partial batch of an epoch is kept.
void run_pretrain(DenoiserModel& model, const std::vector<TrainingExample>& data, const JointLayout& layout,
                  const NoiseSchedule& schedule, const TrainConfig& cfg, const StepCallback& on_step,
                  AdamW* resume_opt = nullptr);
void run_finetune(const DenoiserModel& frozen, ControlNetModel& cnet, const std::vector<TrainingExample>& data,
                  const JointLayout& layout, const NoiseSchedule& schedule, const TrainConfig& cfg,
                  const StepCallback& on_step, AdamW* resume_opt = nullptr);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_parameter;
    std::size_t checked = 0;
};

/// Builds a scalar loss on the given graph; parameters must be bound through
/// binders created on that graph.
using LossBuilder = std::function<ag::Var(ag::Graph&)>;

/// Central differences with step h on every element of every group, compared to
/// the taped gradient; relative error uses max(|fd|, |analytic|, 1e-7) as the
/// denominator. Throws GradMismatch above `tolerance`.
GradCheckReport grad_check(const std::vector<ParameterSet*>& groups, const LossBuilder& loss, double tolerance,
                           double h = 1e-4);

}  // namespace cospeech
