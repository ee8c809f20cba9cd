#pragma once

#include "cocge/common.hpp"
#include "cocge/dataio.hpp"
#include "cocge/evaluator.hpp"
#include "cocge/feasibility.hpp"
#include "cocge/graph.hpp"
#include "cocge/model.hpp"
#include "cocge/objective.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cocge {

enum class TrainMode { Closed, Open, OpenFrozenGraph };

TrainMode parse_train_mode(const std::string& s);
std::string to_string(TrainMode m);

struct TrainConfig {
    int epochs = 30;
    int batch_size = 128;
    double learning_rate = 5e-5;
    double weight_decay = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::Open;
    int eval_every = 1;  // epochs between validation evals; 0 disables
    LossConfig loss;
    EdgeWeighting switches;
    MixRule mix_rule = MixRule::Avg;
    int gcn_hidden = 0;   // 0: same as the word-embedding dim
    int shared_dim = 0;   // 0: same as the word-embedding dim
    int img_hidden = 128;
    double dropout = 0.1;

    void validate() const;
};

/// One gradient tensor per trainable tensor, shape-congruent with Model.
struct GradientSet {
    std::vector<Matrix> gcn;
    Matrix w1;
    Vector b1, ln1_gamma, ln1_beta;
    Matrix w2;
    Vector b2, ln2_gamma, ln2_beta;
    Matrix w3;
    Vector b3;
    Matrix state_protos, object_protos;

    static GradientSet zeros_like(const Model& model);
};

struct AdamState {
    GradientSet m1;
    GradientSet m2;
    long step = 0;

    static AdamState init(const Model& model) { return {GradientSet::zeros_like(model),
                                                        GradientSet::zeros_like(model), 0}; }
};

/// Classic Adam with bias correction; weight decay enters as an L2 term
/// added to the gradient before the moment updates.
void adam_step(Model& model, const GradientSet& grads, AdamState& state,
               const TrainConfig& config);

struct Batch {
    Matrix x;                     // B x F
    std::vector<int> label_cols;  // index into the candidate columns
};

/// Everything a gradient step needs besides the batch: the graph, the
/// candidate composition columns, the feasibility margins and the epoch's
/// alpha. Dropout masks are drawn by the caller so the same loss can be
/// replayed for finite-difference checks (empty masks disable dropout).
struct StepContext {
    const CompositionalGraph* graph = nullptr;
    std::vector<int> cand_nodes;      // node id per candidate column
    std::vector<Pair> cand_pairs;
    std::vector<bool> cand_seen;
    std::vector<double> cand_rho;
    double alpha = 0.0;
    double temperature = 0.05;
    bool clamp_rho = false;
    Matrix mask1, mask2;              // inverted-dropout masks, may be empty
};

/// Exact reverse-mode gradients of the margin cross-entropy loss with
/// respect to every trainable tensor. V0, the adjacency and the feasibility
/// table are constants. Throws numeric_error naming the offending tensor on
/// non-finite gradients.
std::pair<double, GradientSet> backward(const Batch& batch, const Model& model,
                                        const StepContext& ctx);

/// Loss under the same forward path as backward (fixed dropout masks);
/// the finite-difference oracle evaluates this.
double forward_loss(const Batch& batch, const Model& model, const StepContext& ctx);

struct EpochRecord {
    int epoch = 0;
    double alpha = 0.0;
    double mean_loss = 0.0;
    bool evaluated = false;
    double val_auc = 0.0;
    double val_best_hm = 0.0;
    double val_best_seen = 0.0;
    double val_best_unseen = 0.0;
    bool is_best = false;
};

struct TrainResult {
    Model model;                  // snapshot of the best validation-AUC epoch
    FeasibilityTable feasibility; // table active at that epoch
    std::vector<EpochRecord> log;
    int best_epoch = -1;
    double best_val_auc = 0.0;
};

/// Seeded training loop. Per epoch: refresh the feasibility table from the
/// current propagated primitive embeddings, rebuild the weighted adjacency
/// (open mode), update alpha, run minibatch Adam over the seen samples and
/// optionally evaluate on validation. Closed mode skips the refresh and the
/// re-weighting and uses the seen-column loss.
TrainResult train(const Dataset& ds, const TrainConfig& config);

/// Reference baseline: independent state and object cosine classifiers,
/// composed at prediction time by the product of their softmax
/// probabilities.
TrainResult train_visual_product(const Dataset& ds, const TrainConfig& config);

/// Reference baseline: fixed averaged word embeddings as the composition
/// targets; only the image head trains.
TrainResult train_word_avg(const Dataset& ds, const TrainConfig& config);

// --- checkpoints ---------------------------------------------------------------

struct Checkpoint {
    Model model;
    FeasibilityTable feasibility;
    TrainConfig config;
    int best_epoch = -1;
    ModelKind kind() const { return model.kind; }
};

void save_model_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_model_checkpoint(const std::string& path);

/// Graph reconstruction rule for a trained model: open-trained models carry
/// their feasibility-weighted (or frozen unit) open graph; closed-trained
/// models use the unit graph, widened to the open node set when the
/// evaluation needs it.
GraphPlan graph_plan_for(const Checkpoint& ckpt, WorldMode eval_mode);

EvalReport evaluate_checkpoint(const Checkpoint& ckpt, const Dataset& ds,
                               const std::vector<Sample>& samples, WorldMode eval_mode,
                               std::optional<double> hard_tau = std::nullopt);

/// Empirical hard-mask threshold: sweeps the checkpoint's feasibility values
/// on the validation split and returns the best-HM tau.
double select_tau_checkpoint(const Checkpoint& ckpt, const Dataset& ds, WorldMode eval_mode);

/// Feasibility table of a freshly initialized model: the epoch-0 refresh,
/// computed over the unit-weight graph of the config's node world.
FeasibilityTable initial_feasibility(const Dataset& ds, const TrainConfig& config);

std::string metrics_log_json(const std::vector<EpochRecord>& log);

}  // namespace cocge
