// SPDX-License-Identifier: Apache-2.0
//
// Teacher-student continual adaptation loop. The teacher sees the clean
// input (optionally at several scales) and produces pseudo-labels; the
// student trains on the masked input with cross-entropy against those
// labels plus the weighted orthogonality penalty; only adapter parameters
// are updated, and the teacher follows by EMA.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "oopk/masking.hpp"
#include "oopk/metrics.hpp"
#include "oopk/segnet.hpp"
#include "oopk/synth.hpp"

namespace oopk {

struct PseudoLabel {
    Tensor probs;           // [K,H,W], per-pixel distribution
    std::vector<int> hard;  // argmax ids, filled on demand
};

struct StepReport {
    long step = 0;
    double seg_loss = 0.0;
    double orth_loss = 0.0;
    double total_loss = 0.0;
};

struct EngineConfig {
    double ema_beta = 0.999;
    double lambda = 1.0;
    MaskSpec mask;
    bool use_masking = true;
    bool use_orth = true;
    std::vector<double> scales = {0.5, 1.0, 1.5, 2.0};
    AdamConfig adam{};  // lr defaults to 1e-4
    OrthReduction orth_reduction = OrthReduction::Mean;
    bool hard_pseudo_labels = false;
    bool average_logits = false;  // multi-scale: average probabilities (default) or logits
    double log_eps = 1e-12;
};

// Multi-scale prediction with a frozen model: resize input (bilinear), run,
// softmax, resize the probability maps back, average, renormalize.
PseudoLabel multiscale_predict(const SegNet& model, const Tensor& x,
                               const std::vector<double>& scales, bool average_logits = false);

// mean over pixels of -sum_c t(c) * log(s(c) + eps); gradient flows into the
// student probabilities only.
ad::Var seg_loss(const Tensor& teacher_probs, const ad::Var& student_probs, double eps);

// theta_t <- beta * theta_t + (1 - beta) * theta_s over every parameter.
void ema_update(SegNet& teacher, const SegNet& student, double beta);

class TeacherStudentEngine {
public:
    // The student must already carry adapters unless the engine is used for
    // evaluation only.
    TeacherStudentEngine(SegNet student, EngineConfig cfg, std::uint64_t seed,
                         bool eval_only = false);

    PseudoLabel teacher_predict(const Tensor& x) const;

    StepReport adapt_step(const Tensor& x);
    // Variant reusing an already-computed clean-input pseudo-label.
    StepReport adapt_step(const Tensor& x, const PseudoLabel& pseudo);

    SegNet& student() { return student_; }
    SegNet& teacher() { return teacher_; }
    const SegNet& teacher() const { return teacher_; }
    const EngineConfig& config() const { return cfg_; }
    long step_count() const { return step_; }

private:
    EngineConfig cfg_;
    SegNet student_;
    SegNet teacher_;
    Adam optimizer_;
    Rng mask_rng_;
    long step_ = 0;
    bool eval_only_ = false;
};

using SampleProvider = std::function<SegSample(const StreamEntry&)>;

// Generates entries in memory from their manifest seeds.
SampleProvider synth_provider(int h, int w, int k);
// Loads entries from their image/label paths.
SampleProvider file_provider(int k);

// Online protocol over the stream: for each sample, score the teacher's
// clean-input prediction against ground truth, then (when adapting) run one
// adapt step. Every entry is consumed exactly once.
RunReport run_stream(TeacherStudentEngine& engine, const DomainStream& stream,
                     const SampleProvider& provider, bool adapt = true);

struct NamedRun {
    std::string name;
    RunReport report;
};

struct AblationToggles {
    bool adapters = false;
    bool orth = false;
    bool ims = false;
    MaskFill fill = MaskFill::Zero;
};

// Component ladder: source-only, plain adapters, +orth, adapters+mask(0),
// full with mask 0 / max / alternating. Shared stream and seeds per row.
std::vector<NamedRun> run_ablation(const SegNet& source, const DomainStream& stream,
                                   const SampleProvider& provider, const EngineConfig& base,
                                   int rank, double sigma, const PlacementSpec& placement,
                                   std::uint64_t seed);

// Supervised source training: per-pixel cross-entropy against the ground
// truth, Adam, one image per step. Returns the trained model.
SegNet pretrain_segnet(const SegNetConfig& cfg, const std::vector<SegSample>& train, int epochs,
                       double lr, std::uint64_t seed);

// Mean IoU (and optionally mAcc) of argmax predictions over a sample set.
double evaluate_miou(const SegNet& model, const std::vector<SegSample>& samples,
                     double* macc_out = nullptr);

}  // namespace oopk
