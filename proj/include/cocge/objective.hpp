#pragma once

#include "cocge/common.hpp"
#include "cocge/graph.hpp"
#include "cocge/network.hpp"

#include <string>
#include <vector>

namespace cocge {

struct LossConfig {
    double temperature = 0.05;
    double alpha_max = 0.4;
    int warmup_epochs = 15;
    /// Literal margin semantics subtract alpha*rho even for negative rho,
    /// which raises those logits; this flag clamps rho at zero instead.
    bool clamp_margin_rho_at_zero = false;

    void validate() const {
        if (temperature <= 0) throw config_error("temperature must be > 0");
        if (alpha_max < 0) throw config_error("alpha_max must be >= 0");
        if (warmup_epochs < 0) throw config_error("warmup_epochs must be >= 0");
    }
};

/// Feasibility margins on raw cosine scores: seen columns unchanged, unseen
/// columns get score - alpha*rho. The result is not re-clamped to [-1,1].
Eigen::RowVectorXd margin_logits(const Eigen::RowVectorXd& score_row,
                                 const std::vector<double>& rho_cols, double alpha,
                                 const std::vector<bool>& seen_mask, bool clamp_rho = false);

/// Mean temperature-scaled softmax cross-entropy where the candidate set is
/// the seen compositions only. All columns of `scores` must be seen; labels
/// are column indices. Throws config_error on an unseen label or column.
double loss_closed(const ScoreMatrix& scores, const std::vector<int>& labels,
                   double temperature);

/// Open-world objective: margins applied per row, then softmax
/// cross-entropy with the denominator over every candidate column.
double loss_open(const ScoreMatrix& scores, const std::vector<int>& labels,
                 const FeasibilityTable& feas, double alpha, double temperature,
                 bool clamp_rho = false);

/// Linear warm-up: alpha_max * min(1, epoch / warmup_epochs);
/// warmup_epochs == 0 gives alpha_max immediately.
double alpha_at(int epoch, const LossConfig& config);

/// Numerically stable mean of -log softmax(logits)[label] over rows.
double softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels);

/// Per-column rho values for a score matrix's composition columns.
std::vector<double> rho_per_column(const ScoreMatrix& scores, const FeasibilityTable& feas);

}  // namespace cocge
