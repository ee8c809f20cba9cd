#pragma once

#include "cocge/common.hpp"
#include "cocge/dataio.hpp"
#include "cocge/graph.hpp"
#include "cocge/model.hpp"
#include "cocge/network.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cocge {

struct CurvePoint {
    double bias = 0.0;  // +-infinity at the sentinel endpoints
    double seen_acc = 0.0;
    double unseen_acc = 0.0;
};

struct EvalReport {
    std::vector<CurvePoint> curve;
    double best_seen = 0.0;
    double best_unseen = 0.0;
    double best_hm = 0.0;
    double best_hm_bias = 0.0;
    double auc = 0.0;
    std::string mode;  // candidate-set tag: closed|open
    std::optional<double> hard_tau;
};

/// Bias sweep over the score-difference breakpoints, plus -inf/+inf
/// sentinel points where the argmax is restricted to seen-only or
/// unseen-only columns. At a finite breakpoint the recorded operating point
/// is the post-transition one (a seen/unseen tie resolves to the unseen
/// column; all other ties to the lowest column index). label_cols holds the
/// true composition column per row; rows whose label column is excluded by
/// candidate_mask count as permanent errors. Throws config_error unless
/// both seen-labeled and unseen-labeled rows are present.
std::vector<CurvePoint> calibration_curve(const ScoreMatrix& scores,
                                          const std::vector<int>& label_cols,
                                          const std::vector<bool>& candidate_mask);

/// Area under the seen-vs-unseen curve: group points by unseen accuracy,
/// keep the max seen accuracy per group (upper envelope), integrate with
/// the trapezoid rule over the achieved unseen range.
double auc(const std::vector<CurvePoint>& curve);

struct CurveMetrics {
    double best_seen = 0.0;
    double best_unseen = 0.0;
    double best_hm = 0.0;
    double best_hm_bias = 0.0;
    double auc = 0.0;
};

CurveMetrics curve_metrics(const std::vector<CurvePoint>& curve);

/// How to rebuild the graph a checkpointed model expects: node world of the
/// training run (or open, when evaluating open) and whether the adjacency
/// carries feasibility weights.
struct GraphPlan {
    WorldMode node_world = WorldMode::Open;
    bool weighted = false;
    EdgeWeighting switches;
};

/// Scores a sample split under a graph plan: the score matrix, the true
/// column per sample and the candidate-column mask for the eval mode.
struct ScoredSplit {
    ScoreMatrix scores;
    std::vector<int> label_cols;
    std::vector<bool> candidate_mask;
};

ScoredSplit score_split(const Model& model, const FeasibilityTable& feas, const Dataset& ds,
                        const std::vector<Sample>& samples, WorldMode eval_mode,
                        const GraphPlan& plan, double vp_temperature);

/// Full calibrated evaluation of a model on a sample split. Open mode
/// scores the whole state-object product; closed mode only the seen plus
/// closed-unseen columns. hard_tau, when set, excludes unseen columns with
/// rho <= tau before the sweep (tau <= -1 is a no-op).
EvalReport evaluate(const Model& model, const FeasibilityTable& feas, const Dataset& ds,
                    const std::vector<Sample>& samples, WorldMode eval_mode,
                    const GraphPlan& plan, double vp_temperature,
                    std::optional<double> hard_tau = std::nullopt);

/// Hard-mask threshold maximizing best-HM on the given (validation) rows.
/// Candidates are -1 plus the unique rho values of unseen candidate
/// columns; ties prefer the smaller tau.
double select_tau(const ScoreMatrix& scores, const std::vector<int>& label_cols,
                  const FeasibilityTable& feas, const std::vector<bool>& candidate_mask);

std::string report_to_json(const EvalReport& report);
std::string curve_to_csv(const std::vector<CurvePoint>& curve);

}  // namespace cocge
