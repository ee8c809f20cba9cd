#include "cocge/evaluator.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>

using nlohmann::json;

namespace cocge {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct RowView {
    double max_seen = 0.0;
    int top_seen = -1;
    double max_unseen = 0.0;
    int top_unseen = -1;  // -1 when no unseen candidate survives the mask
    bool label_unseen = false;
    int label_col = -1;
    bool label_masked = false;
};

std::vector<RowView> build_rows(const ScoreMatrix& scores, const std::vector<int>& label_cols,
                                const std::vector<bool>& candidate_mask) {
    if (scores.n_rows() != static_cast<int>(label_cols.size()))
        throw config_error("label count does not match score rows");
    if (scores.n_cols() != static_cast<int>(candidate_mask.size()))
        throw config_error("candidate mask size does not match score columns");
    std::vector<RowView> rows(scores.n_rows());
    for (int r = 0; r < scores.n_rows(); ++r) {
        RowView& row = rows[r];
        row.label_col = label_cols[r];
        if (row.label_col < 0 || row.label_col >= scores.n_cols())
            throw config_error("row " + std::to_string(r) + ": label column out of range");
        row.label_unseen = !scores.col_seen[row.label_col];
        row.label_masked = !candidate_mask[row.label_col];
        for (int j = 0; j < scores.n_cols(); ++j) {
            if (!candidate_mask[j]) continue;
            const double v = scores.scores(r, j);
            if (scores.col_seen[j]) {
                if (row.top_seen < 0 || v > row.max_seen) {
                    row.max_seen = v;
                    row.top_seen = j;
                }
            } else {
                if (row.top_unseen < 0 || v > row.max_unseen) {
                    row.max_unseen = v;
                    row.top_unseen = j;
                }
            }
        }
        if (row.top_seen < 0)
            throw config_error("row " + std::to_string(r) + ": no seen candidate column");
    }
    return rows;
}

CurvePoint eval_at_bias(const std::vector<RowView>& rows, double bias) {
    int seen_n = 0, seen_ok = 0, unseen_n = 0, unseen_ok = 0;
    for (const auto& row : rows) {
        int pred;
        if (bias == -kInf || row.top_unseen < 0) {
            pred = row.top_seen;
        } else if (bias == kInf) {
            pred = row.top_unseen;
        } else {
            // at an exact breakpoint the unseen side wins: the curve records
            // the operating point just past the transition. The comparison
            // uses the same difference expression that generated the
            // breakpoints, so equality is exact.
            pred = (bias >= row.max_seen - row.max_unseen) ? row.top_unseen : row.top_seen;
        }
        const bool correct = !row.label_masked && pred == row.label_col;
        if (row.label_unseen) {
            ++unseen_n;
            unseen_ok += correct;
        } else {
            ++seen_n;
            seen_ok += correct;
        }
    }
    if (seen_n == 0) throw config_error("calibration requires seen-labeled samples");
    if (unseen_n == 0) throw config_error("calibration requires unseen-labeled samples");
    CurvePoint p;
    p.bias = bias;
    p.seen_acc = static_cast<double>(seen_ok) / seen_n;
    p.unseen_acc = static_cast<double>(unseen_ok) / unseen_n;
    return p;
}

}  // namespace

std::vector<CurvePoint> calibration_curve(const ScoreMatrix& scores,
                                          const std::vector<int>& label_cols,
                                          const std::vector<bool>& candidate_mask) {
    const auto rows = build_rows(scores, label_cols, candidate_mask);

    std::set<double> breakpoints;
    for (int r = 0; r < scores.n_rows(); ++r) {
        const RowView& row = rows[r];
        if (!row.label_unseen || row.label_masked) continue;
        breakpoints.insert(row.max_seen - scores.scores(r, row.label_col));
    }

    std::vector<CurvePoint> curve;
    curve.reserve(breakpoints.size() + 2);
    curve.push_back(eval_at_bias(rows, -kInf));
    for (double b : breakpoints) curve.push_back(eval_at_bias(rows, b));
    curve.push_back(eval_at_bias(rows, kInf));
    return curve;
}

double auc(const std::vector<CurvePoint>& curve) {
    if (curve.empty()) throw config_error("auc of an empty curve");
    std::map<double, double> envelope;  // unseen_acc -> max seen_acc
    for (const auto& p : curve) {
        auto it = envelope.find(p.unseen_acc);
        if (it == envelope.end() || p.seen_acc > it->second) envelope[p.unseen_acc] = p.seen_acc;
    }
    double area = 0.0;
    auto it = envelope.begin();
    double prev_u = it->first, prev_s = it->second;
    for (++it; it != envelope.end(); ++it) {
        area += (it->first - prev_u) * 0.5 * (prev_s + it->second);
        prev_u = it->first;
        prev_s = it->second;
    }
    return area;
}

CurveMetrics curve_metrics(const std::vector<CurvePoint>& curve) {
    CurveMetrics m;
    m.auc = auc(curve);
    for (const auto& p : curve) {
        m.best_seen = std::max(m.best_seen, p.seen_acc);
        m.best_unseen = std::max(m.best_unseen, p.unseen_acc);
        const double denom = p.seen_acc + p.unseen_acc;
        const double hm = denom > 0 ? 2.0 * p.seen_acc * p.unseen_acc / denom : 0.0;
        if (hm > m.best_hm) {
            m.best_hm = hm;
            m.best_hm_bias = p.bias;
        }
    }
    return m;
}

namespace {

std::vector<bool> hard_mask(const ScoreMatrix& scores, const std::vector<bool>& candidate_mask,
                            const FeasibilityTable& feas, double tau) {
    std::vector<bool> mask = candidate_mask;
    if (tau <= -1.0) return mask;  // guaranteed no-op
    for (int j = 0; j < scores.n_cols(); ++j) {
        if (!mask[j] || scores.col_seen[j]) continue;
        const auto& [s, o] = scores.columns[j];
        if (feas.at(s, o) <= tau) mask[j] = false;
    }
    return mask;
}

}  // namespace

double select_tau(const ScoreMatrix& scores, const std::vector<int>& label_cols,
                  const FeasibilityTable& feas, const std::vector<bool>& candidate_mask) {
    std::set<double> taus{-1.0};
    for (int j = 0; j < scores.n_cols(); ++j) {
        if (!candidate_mask[j] || scores.col_seen[j]) continue;
        taus.insert(feas.at(scores.columns[j].first, scores.columns[j].second));
    }
    double best_tau = -1.0;
    double best_hm = -1.0;
    for (double tau : taus) {  // ascending, so ties keep the smaller tau
        const auto mask = hard_mask(scores, candidate_mask, feas, tau);
        const auto metrics = curve_metrics(calibration_curve(scores, label_cols, mask));
        if (metrics.best_hm > best_hm) {
            best_hm = metrics.best_hm;
            best_tau = tau;
        }
    }
    return best_tau;
}

ScoredSplit score_split(const Model& model, const FeasibilityTable& feas, const Dataset& ds,
                        const std::vector<Sample>& samples, WorldMode eval_mode,
                        const GraphPlan& plan, double vp_temperature) {
    if (eval_mode == WorldMode::Open && plan.node_world == WorldMode::Closed)
        throw config_error("open evaluation needs an open node set");

    CompositionalGraph graph;
    graph.index = build_node_index(ds.vocab, plan.node_world);
    graph.v0 = init_node_features(graph.index, ds.embeddings, ds.vocab);
    graph.adj = plan.weighted ? build_adjacency_feasibility(graph.index, feas, plan.switches)
                              : build_adjacency_closed(graph.index);
    graph.adj_norm = normalize_adjacency(graph.adj);

    ScoredSplit out;
    out.scores = model_score_matrix(model, stack_features(samples), graph, vp_temperature);

    out.candidate_mask.assign(out.scores.n_cols(), true);
    if (eval_mode == WorldMode::Closed && plan.node_world == WorldMode::Open) {
        PairSet target = ds.vocab.seen_pairs;
        target.insert(ds.vocab.closed_unseen_pairs.begin(), ds.vocab.closed_unseen_pairs.end());
        for (int j = 0; j < out.scores.n_cols(); ++j)
            out.candidate_mask[j] = target.count(out.scores.columns[j]) > 0;
    }

    out.label_cols.resize(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto it = graph.index.comp_node.find({samples[i].state, samples[i].object});
        if (it == graph.index.comp_node.end())
            throw config_error("sample " + samples[i].id + " labelled outside the node set");
        out.label_cols[i] = it->second - graph.index.first_comp_node();
    }
    return out;
}

EvalReport evaluate(const Model& model, const FeasibilityTable& feas, const Dataset& ds,
                    const std::vector<Sample>& samples, WorldMode eval_mode,
                    const GraphPlan& plan, double vp_temperature,
                    std::optional<double> hard_tau) {
    ScoredSplit split = score_split(model, feas, ds, samples, eval_mode, plan, vp_temperature);
    const ScoreMatrix& scores = split.scores;
    std::vector<bool> mask = split.candidate_mask;
    if (hard_tau) mask = hard_mask(scores, mask, feas, *hard_tau);
    const std::vector<int>& label_cols = split.label_cols;

    EvalReport report;
    report.curve = calibration_curve(scores, label_cols, mask);
    const auto metrics = curve_metrics(report.curve);
    report.best_seen = metrics.best_seen;
    report.best_unseen = metrics.best_unseen;
    report.best_hm = metrics.best_hm;
    report.best_hm_bias = metrics.best_hm_bias;
    report.auc = metrics.auc;
    report.mode = to_string(eval_mode);
    report.hard_tau = hard_tau;
    return report;
}

namespace {

json bias_to_json(double bias) {
    if (bias == kInf) return "inf";
    if (bias == -kInf) return "-inf";
    return bias;
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
    json out;
    out["mode"] = report.mode;
    out["best_seen"] = report.best_seen;
    out["best_unseen"] = report.best_unseen;
    out["best_hm"] = report.best_hm;
    out["best_hm_bias"] = bias_to_json(report.best_hm_bias);
    out["auc"] = report.auc;
    if (report.hard_tau) out["hard_tau"] = *report.hard_tau;
    json curve = json::array();
    for (const auto& p : report.curve)
        curve.push_back({{"bias", bias_to_json(p.bias)},
                         {"seen_acc", p.seen_acc},
                         {"unseen_acc", p.unseen_acc}});
    out["curve"] = std::move(curve);
    return out.dump(2);
}

std::string curve_to_csv(const std::vector<CurvePoint>& curve) {
    std::string out = "bias,seen_acc,unseen_acc\n";
    char buf[128];
    for (const auto& p : curve) {
        if (p.bias == kInf)
            std::snprintf(buf, sizeof(buf), "inf,%.17g,%.17g\n", p.seen_acc, p.unseen_acc);
        else if (p.bias == -kInf)
            std::snprintf(buf, sizeof(buf), "-inf,%.17g,%.17g\n", p.seen_acc, p.unseen_acc);
        else
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", p.bias, p.seen_acc,
                          p.unseen_acc);
        out += buf;
    }
    return out;
}

}  // namespace cocge
