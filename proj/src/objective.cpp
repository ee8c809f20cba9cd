#include "cocge/objective.hpp"

#include <cmath>

namespace cocge {

Eigen::RowVectorXd margin_logits(const Eigen::RowVectorXd& score_row,
                                 const std::vector<double>& rho_cols, double alpha,
                                 const std::vector<bool>& seen_mask, bool clamp_rho) {
    Eigen::RowVectorXd out = score_row;
    if (alpha == 0.0) return out;
    for (int j = 0; j < static_cast<int>(out.size()); ++j) {
        if (seen_mask[j]) continue;
        const double rho = clamp_rho ? std::max(0.0, rho_cols[j]) : rho_cols[j];
        out[j] -= alpha * rho;
    }
    return out;
}

double softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
    if (logits.rows() != static_cast<Eigen::Index>(labels.size()))
        throw config_error("label count does not match score rows");
    double total = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const int label = labels[static_cast<std::size_t>(i)];
        if (label < 0 || label >= logits.cols())
            throw config_error("label column " + std::to_string(label) + " out of range");
        const double mx = logits.row(i).maxCoeff();
        const double lse = std::log((logits.row(i).array() - mx).exp().sum()) + mx;
        total += lse - logits(i, label);
    }
    return total / static_cast<double>(logits.rows());
}

double loss_closed(const ScoreMatrix& scores, const std::vector<int>& labels,
                   double temperature) {
    if (temperature <= 0) throw config_error("temperature must be > 0");
    for (int j = 0; j < scores.n_cols(); ++j)
        if (!scores.col_seen[j])
            throw config_error("loss_closed: column " + std::to_string(j) +
                               " is not a seen composition");
    for (int l : labels)
        if (l < 0 || l >= scores.n_cols() || !scores.col_seen[l])
            throw config_error("loss_closed: label is not a seen composition");
    return softmax_cross_entropy(scores.scores / temperature, labels);
}

double loss_open(const ScoreMatrix& scores, const std::vector<int>& labels,
                 const FeasibilityTable& feas, double alpha, double temperature,
                 bool clamp_rho) {
    if (temperature <= 0) throw config_error("temperature must be > 0");
    if (alpha < 0) throw config_error("alpha must be >= 0");
    for (int l : labels)
        if (l < 0 || l >= scores.n_cols() || !scores.col_seen[l])
            throw config_error("loss_open: label is not a seen composition");
    const auto rho_cols = rho_per_column(scores, feas);
    Matrix adjusted(scores.scores.rows(), scores.scores.cols());
    for (Eigen::Index i = 0; i < adjusted.rows(); ++i)
        adjusted.row(i) =
            margin_logits(scores.scores.row(i), rho_cols, alpha, scores.col_seen, clamp_rho);
    return softmax_cross_entropy(adjusted / temperature, labels);
}

double alpha_at(int epoch, const LossConfig& config) {
    if (epoch < 0) throw config_error("epoch must be >= 0");
    if (config.warmup_epochs == 0) return config.alpha_max;
    const double frac = static_cast<double>(epoch) / static_cast<double>(config.warmup_epochs);
    return config.alpha_max * std::min(1.0, frac);
}

std::vector<double> rho_per_column(const ScoreMatrix& scores, const FeasibilityTable& feas) {
    std::vector<double> rho(scores.columns.size());
    for (std::size_t j = 0; j < scores.columns.size(); ++j)
        rho[j] = feas.at(scores.columns[j].first, scores.columns[j].second);
    return rho;
}

}  // namespace cocge
