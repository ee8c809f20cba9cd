// Acceptance suite: one pass/fail line per criterion, non-zero exit if any
// criterion fails. argv[1] must point at the cocge CLI binary (used by the
// determinism and timing criteria).

#include "cocge/config.hpp"
#include "cocge/dataio.hpp"
#include "cocge/evaluator.hpp"
#include "cocge/feasibility.hpp"
#include "cocge/graph.hpp"
#include "cocge/objective.hpp"
#include "cocge/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace cocge;

namespace {

int g_failures = 0;

void report(int idx, const std::string& name, bool ok, const std::string& detail) {
    std::printf("[%s] criterion %d: %s — %s\n", ok ? "PASS" : "FAIL", idx, name.c_str(),
                detail.c_str());
    if (!ok) ++g_failures;
}

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// benchmark training configuration for the synthetic default spec
TrainConfig bench_config(TrainMode mode, std::uint64_t seed, double alpha_max) {
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 128;
    cfg.learning_rate = 2e-3;
    cfg.mode = mode;
    cfg.eval_every = 1;
    cfg.seed = seed;
    cfg.loss.alpha_max = alpha_max;
    cfg.loss.warmup_epochs = 15;
    cfg.loss.temperature = 0.05;
    cfg.img_hidden = 128;
    cfg.dropout = 0.1;
    return cfg;
}

// ---- criterion 1: gradient fidelity -----------------------------------------

struct FlatTensor {
    double* param;
    const double* grad;
    Eigen::Index size;
};

std::vector<FlatTensor> flat_tensors(Model& m, const GradientSet& g) {
    std::vector<FlatTensor> out;
    for (std::size_t i = 0; i < m.gcn.weights.size(); ++i)
        out.push_back({m.gcn.weights[i].data(), g.gcn[i].data(), m.gcn.weights[i].size()});
    auto add = [&](auto& p, const auto& gr) { out.push_back({p.data(), gr.data(), p.size()}); };
    add(m.head.w1, g.w1);
    add(m.head.b1, g.b1);
    add(m.head.ln1.gamma, g.ln1_gamma);
    add(m.head.ln1.beta, g.ln1_beta);
    add(m.head.w2, g.w2);
    add(m.head.b2, g.b2);
    add(m.head.ln2.gamma, g.ln2_gamma);
    add(m.head.ln2.beta, g.ln2_beta);
    add(m.head.w3, g.w3);
    add(m.head.b3, g.b3);
    return out;
}

bool gradient_instance(std::uint64_t seed, double& worst, double& grad_peak);

bool criterion1() {
    const double t0 = now_s();
    double worst = 0.0;
    double grad_peak = 0.0;
    int instances = 0;
    std::uint64_t seed = 1;
    while (instances < 20) {
        // tiny random models can collapse a node embedding to zero, which
        // the forward pass treats as an error; reroll those instances
        if (gradient_instance(seed++, worst, grad_peak)) ++instances;
    }
    const double elapsed = now_s() - t0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "%d instances, worst rel err %.2e, largest gradient %.2e, %.2fs", instances,
                  worst, grad_peak, elapsed);
    const bool ok = worst < 1e-4 && grad_peak > 1e-3 && elapsed < 5.0;
    report(1, "gradient fidelity", ok, buf);
    return ok;
}

bool gradient_instance(std::uint64_t seed, double& worst, double& grad_peak) {
    {
        Rng rng(seed * 7919);
        const int n_states = 2 + static_cast<int>(seed % 2);  // open K = 8 or 11, <= 12
        const int n_objects = 2;
        Vocabulary v;
        for (int s = 0; s < n_states; ++s) v.states.push_back("s" + std::to_string(s));
        for (int o = 0; o < n_objects; ++o) v.objects.push_back("o" + std::to_string(o));
        for (int s = 0; s < n_states; ++s) v.seen_pairs.insert({s, s % n_objects});
        for (int o = 0; o < n_objects; ++o) v.seen_pairs.insert({o % n_states, o});

        EmbeddingTable emb;
        emb.dim = 3 + static_cast<int>(seed % 3);
        for (const auto& vocab_list : {v.states, v.objects}) {
            for (const auto& name : vocab_list) {
                Vector e(emb.dim);
                for (int i = 0; i < emb.dim; ++i) e[i] = rng.normal();
                emb.vectors[name] = e;
            }
        }
        CompositionalGraph graph = build_graph(v, emb, WorldMode::Open);

        ModelDims dims;
        dims.feature_dim = 4 + static_cast<int>(seed % 3);
        dims.embed_dim = emb.dim;
        dims.gcn_hidden = 4 + static_cast<int>(seed % 4);
        dims.shared_dim = 3 + static_cast<int>(seed % 6);  // d <= 8
        dims.img_hidden = 5;
        dims.dropout = seed % 2 ? 0.3 : 0.0;
        Model model = init_model(ModelKind::CoCge, dims, n_states, n_objects, rng.split("init"));

        StepContext ctx;
        ctx.graph = &graph;
        for (int c = 0; c < graph.index.n_comps(); ++c) {
            ctx.cand_nodes.push_back(graph.index.comp_node_of(c));
            ctx.cand_pairs.push_back(graph.index.compositions[c]);
            ctx.cand_seen.push_back(graph.index.comp_seen[c]);
            ctx.cand_rho.push_back(graph.index.comp_seen[c] ? 1.0 : rng.uniform(-1, 1));
        }
        ctx.alpha = 0.3;
        ctx.temperature = 0.07;

        Batch batch;
        batch.x.resize(3, dims.feature_dim);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < dims.feature_dim; ++j) batch.x(i, j) = rng.normal();
        std::vector<int> seen_cols;
        for (std::size_t c = 0; c < ctx.cand_seen.size(); ++c)
            if (ctx.cand_seen[c]) seen_cols.push_back(static_cast<int>(c));
        for (int i = 0; i < 3; ++i)
            batch.label_cols.push_back(
                seen_cols[rng.uniform_int(static_cast<int>(seen_cols.size()))]);
        if (dims.dropout > 0) {
            Rng drop = rng.split("dropout");
            ctx.mask1 = dropout_mask(3, dims.img_hidden, dims.dropout, drop);
            ctx.mask2 = dropout_mask(3, dims.img_hidden, dims.dropout, drop);
        }

        try {
            auto [loss, grads] = backward(batch, model, ctx);
            (void)loss;
            const double h = 1e-5;
            for (auto& ref : flat_tensors(model, grads)) {
                for (Eigen::Index i = 0; i < ref.size; ++i) {
                    grad_peak = std::max(grad_peak, std::abs(ref.grad[i]));
                    const double keep = ref.param[i];
                    ref.param[i] = keep + h;
                    const double lp = forward_loss(batch, model, ctx);
                    ref.param[i] = keep - h;
                    const double lm = forward_loss(batch, model, ctx);
                    ref.param[i] = keep;
                    const double numeric = (lp - lm) / (2.0 * h);
                    const double analytic = ref.grad[i];
                    const double diff = std::abs(analytic - numeric);
                    if (diff <= 1e-6) continue;  // finite-difference noise floor
                    worst = std::max(worst,
                                     diff / std::max(std::abs(analytic), std::abs(numeric)));
                }
            }
        } catch (const numeric_error&) {
            return false;
        }
    }
    return true;
}

// ---- criterion 2: evaluator oracle equivalence -------------------------------

struct OraclePoint {
    double seen_acc, unseen_acc;
};

std::vector<OraclePoint> dense_sweep(const ScoreMatrix& sm, const std::vector<int>& labels,
                                     int grid_points) {
    bool any_unseen = false;
    for (int j = 0; j < sm.n_cols(); ++j)
        if (!sm.col_seen[j]) any_unseen = true;
    auto eval_at = [&](double bias, int restrict_kind) {
        int sn = 0, sok = 0, un = 0, uok = 0;
        for (int r = 0; r < sm.n_rows(); ++r) {
            int best = -1;
            double best_v = 0.0;
            for (int j = 0; j < sm.n_cols(); ++j) {
                if (restrict_kind == -1 && !sm.col_seen[j]) continue;
                if (restrict_kind == +1 && any_unseen && sm.col_seen[j]) continue;
                const double v = sm.scores(r, j) + (!sm.col_seen[j] ? bias : 0.0);
                if (best < 0 || v > best_v) {
                    best = j;
                    best_v = v;
                }
            }
            const bool unseen_label = !sm.col_seen[labels[r]];
            const bool correct = best == labels[r];
            if (unseen_label) {
                ++un;
                uok += correct;
            } else {
                ++sn;
                sok += correct;
            }
        }
        return OraclePoint{static_cast<double>(sok) / sn, static_cast<double>(uok) / un};
    };
    std::vector<OraclePoint> pts;
    pts.push_back(eval_at(0.0, -1));
    const double span = sm.scores.maxCoeff() - sm.scores.minCoeff();
    const double lo = -span - 0.618033988749894;
    const double hi = span + 0.577215664901532;
    for (int g = 0; g <= grid_points; ++g)
        pts.push_back(eval_at(lo + (hi - lo) * g / grid_points, 0));
    pts.push_back(eval_at(0.0, +1));
    return pts;
}

bool criterion2() {
    Rng rng(4242);
    int checked = 0;
    double auc_worst = 0.0;
    bool ok = true;
    for (int trial = 0; trial < 50; ++trial) {
        const int cols = 2 + rng.uniform_int(5);   // <= 6 compositions
        const int rows = 2 + rng.uniform_int(19);  // <= 20 samples
        ScoreMatrix sm;
        sm.col_seen.resize(cols);
        sm.col_seen[0] = true;
        sm.col_seen[1] = false;
        for (int j = 2; j < cols; ++j) sm.col_seen[j] = rng.uniform() < 0.5;
        sm.scores.resize(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) sm.scores(i, j) = rng.uniform_int(129) / 64.0 - 1.0;
        for (int j = 0; j < cols; ++j) sm.columns.push_back({0, j});
        std::vector<int> seen_cols, unseen_cols;
        for (int j = 0; j < cols; ++j) (sm.col_seen[j] ? seen_cols : unseen_cols).push_back(j);
        std::vector<int> labels(rows);
        labels[0] = seen_cols[rng.uniform_int(static_cast<int>(seen_cols.size()))];
        labels[1] = unseen_cols[rng.uniform_int(static_cast<int>(unseen_cols.size()))];
        for (int i = 2; i < rows; ++i) {
            const auto& pool = rng.uniform() < 0.5 ? seen_cols : unseen_cols;
            labels[i] = pool[rng.uniform_int(static_cast<int>(pool.size()))];
        }
        std::vector<bool> mask(cols, true);

        CurveMetrics got = curve_metrics(calibration_curve(sm, labels, mask));
        auto pts = dense_sweep(sm, labels, 10000);
        double bs = 0, bu = 0, bh = 0;
        std::map<double, double> env;
        for (const auto& p : pts) {
            bs = std::max(bs, p.seen_acc);
            bu = std::max(bu, p.unseen_acc);
            if (p.seen_acc + p.unseen_acc > 0)
                bh = std::max(bh, 2 * p.seen_acc * p.unseen_acc / (p.seen_acc + p.unseen_acc));
            auto it = env.find(p.unseen_acc);
            if (it == env.end() || p.seen_acc > it->second) env[p.unseen_acc] = p.seen_acc;
        }
        double oracle_auc = 0.0;
        double pu = env.begin()->first, ps = env.begin()->second;
        for (auto it = std::next(env.begin()); it != env.end(); ++it) {
            oracle_auc += (it->first - pu) * 0.5 * (ps + it->second);
            pu = it->first;
            ps = it->second;
        }
        ok = ok && got.best_seen == bs && got.best_unseen == bu && got.best_hm == bh;
        auc_worst = std::max(auc_worst, std::abs(got.auc - oracle_auc));
        ok = ok && std::abs(got.auc - oracle_auc) < 1e-9;
        ++checked;
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%d instances, worst AUC deviation %.2e", checked,
                  auc_worst);
    report(2, "evaluation oracle equivalence", ok, buf);
    return ok;
}

// ---- criterion 3: reduction identities ----------------------------------------

bool criterion3() {
    Rng rng(31337);
    bool ok_a = true, ok_b = true, ok_c = true;

    // (a) loss_open(alpha=0, seen columns) == loss_closed to 1e-12
    Vocabulary v;
    v.states = {"a", "b", "c"};
    v.objects = {"x", "y"};
    v.seen_pairs = {{0, 0}, {1, 1}, {2, 0}, {0, 1}};
    FeasibilityTable feas = FeasibilityTable::all_ones(v);
    for (int s = 0; s < 3; ++s)
        for (int o = 0; o < 2; ++o)
            if (!feas.is_seen(s, o)) feas.rho(s, o) = rng.uniform(-1, 1);
    for (int trial = 0; trial < 20; ++trial) {
        ScoreMatrix sm;
        sm.columns = {{0, 0}, {1, 1}, {2, 0}, {0, 1}};
        sm.col_seen = {true, true, true, true};
        sm.scores.resize(5, 4);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 4; ++j) sm.scores(i, j) = rng.uniform(-1, 1);
        std::vector<int> labels;
        for (int i = 0; i < 5; ++i) labels.push_back(rng.uniform_int(4));
        const double t = 0.02 + rng.uniform() * 0.2;
        ok_a = ok_a && std::abs(loss_open(sm, labels, feas, 0.0, t) -
                                loss_closed(sm, labels, t)) < 1e-12;
    }

    // (b) feasibility adjacency with rho == 1 equals the closed adjacency
    NodeIndex idx = build_node_index(v, WorldMode::Open);
    Matrix weighted = build_adjacency_feasibility(idx, FeasibilityTable::all_ones(v), {});
    ok_b = (weighted - build_adjacency_closed(idx)).cwiseAbs().maxCoeff() == 0.0;

    // (c) predict_hard(tau=-1) == predict on 1000 random rows
    ScoreMatrix sm;
    for (int s = 0; s < 3; ++s)
        for (int o = 0; o < 2; ++o) {
            sm.columns.push_back({s, o});
            sm.col_seen.push_back(feas.is_seen(s, o));
        }
    sm.scores.resize(1, 6);
    std::vector<bool> mask(6, true);
    for (int t = 0; t < 1000; ++t) {
        for (int j = 0; j < 6; ++j) sm.scores(0, j) = rng.uniform(-1, 1);
        ok_c = ok_c && predict_hard(sm, 0, feas, -1.0, mask) == predict(sm, 0, mask);
    }

    const bool ok = ok_a && ok_b && ok_c;
    std::string detail = std::string("loss identity ") + (ok_a ? "ok" : "FAIL") +
                         ", adjacency reduction " + (ok_b ? "ok" : "FAIL") +
                         ", predict_hard no-op " + (ok_c ? "ok" : "FAIL");
    report(3, "reduction identities", ok, detail);
    return ok;
}

// ---- criterion 4: feasibility recovery ----------------------------------------

bool criterion4() {
    int wins = 0;
    const int n_seeds = 10;
    for (std::uint64_t seed = 1; seed <= n_seeds; ++seed) {
        SynthSpec spec = SynthSpec::defaults();  // 2 groups, disjoint applicable states
        spec.seed = seed;
        spec.noise_std = 0.0;
        Dataset ds = synthesize(spec);
        FeasibilityTable table =
            initial_feasibility(ds, bench_config(TrainMode::Open, seed, 0.2));
        double f_sum = 0, i_sum = 0;
        int f_n = 0, i_n = 0;
        for (int s = 0; s < ds.vocab.n_states(); ++s) {
            for (int o = 0; o < ds.vocab.n_objects(); ++o) {
                if (ds.vocab.is_seen(s, o)) continue;
                if (ds.feasible_gt->count({s, o})) {
                    f_sum += table.at(s, o);
                    ++f_n;
                } else {
                    i_sum += table.at(s, o);
                    ++i_n;
                }
            }
        }
        if (f_sum / f_n > i_sum / i_n) ++wins;
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "feasible mean above infeasible mean in %d/%d seeds", wins,
                  n_seeds);
    const bool ok = wins == n_seeds;
    report(4, "feasibility recovery on zero-noise data", ok, buf);
    return ok;
}

// ---- criteria 5-7: benchmark trends --------------------------------------------

struct SeedOutcome {
    double open_val_auc = 0;
    double a0_val_auc = 0;
    double vp_val_auc = 0;
    double open_test_unseen = 0;
    double closed_test_unseen = 0;
    double closed_test_auc = 0;
    double masked_test_auc = 0;
    bool mask_seen_exact = false;
};

SeedOutcome run_benchmark_seed(std::uint64_t seed) {
    SynthSpec spec = SynthSpec::defaults();
    spec.seed = seed;
    Dataset ds = synthesize(spec);

    TrainConfig open_cfg = bench_config(TrainMode::Open, seed, 0.2);
    TrainConfig a0_cfg = bench_config(TrainMode::Open, seed, 0.0);
    TrainConfig closed_cfg = bench_config(TrainMode::Closed, seed, 0.2);

    TrainResult open_r = train(ds, open_cfg);
    TrainResult a0_r = train(ds, a0_cfg);
    TrainResult vp_r = train_visual_product(ds, open_cfg);
    TrainResult closed_r = train(ds, closed_cfg);

    Checkpoint open_ck{open_r.model, open_r.feasibility, open_cfg, open_r.best_epoch};
    Checkpoint closed_ck{closed_r.model, closed_r.feasibility, closed_cfg,
                         closed_r.best_epoch};

    SeedOutcome out;
    out.open_val_auc = open_r.best_val_auc;
    out.a0_val_auc = a0_r.best_val_auc;
    out.vp_val_auc = vp_r.best_val_auc;

    EvalReport open_test = evaluate_checkpoint(open_ck, ds, ds.test, WorldMode::Open);
    EvalReport closed_test = evaluate_checkpoint(closed_ck, ds, ds.test, WorldMode::Open);
    out.open_test_unseen = open_test.best_unseen;
    out.closed_test_unseen = closed_test.best_unseen;
    out.closed_test_auc = closed_test.auc;

    const double tau = select_tau_checkpoint(closed_ck, ds, WorldMode::Open);
    EvalReport masked = evaluate_checkpoint(closed_ck, ds, ds.test, WorldMode::Open, tau);
    out.masked_test_auc = masked.auc;
    out.mask_seen_exact = masked.curve.front().seen_acc == closed_test.curve.front().seen_acc;
    return out;
}

void criteria567(const std::vector<SeedOutcome>& outcomes) {
    int w5 = 0, w6a = 0, w6b = 0, w7 = 0;
    bool exact7 = true;
    for (const auto& o : outcomes) {
        w5 += o.open_val_auc >= o.a0_val_auc;
        w6a += o.open_test_unseen > o.closed_test_unseen;
        w6b += o.open_val_auc > o.vp_val_auc;
        w7 += o.masked_test_auc >= o.closed_test_auc;
        exact7 = exact7 && o.mask_seen_exact;
    }
    const int n = static_cast<int>(outcomes.size());
    char buf[160];
    std::snprintf(buf, sizeof(buf), "warm-up margins >= alpha=0 in %d/%d seeds", w5, n);
    report(5, "margin warm-up trend", w5 >= 4, buf);
    std::snprintf(buf, sizeof(buf),
                  "open > closed best-unseen in %d/%d; graph model > visual product AUC in %d/%d",
                  w6a, n, w6b, n);
    report(6, "open-world training trend", w6a >= 4 && w6b >= 4, buf);
    std::snprintf(buf, sizeof(buf), "mask kept AUC in %d/%d seeds; -inf seen accuracy exact: %s",
                  w7, n, exact7 ? "yes" : "NO");
    report(7, "hard-masking trend", w7 >= 4 && exact7, buf);
}

// ---- criteria 8 and 9: CLI determinism and budget -------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& cli, const std::string& args) {
    const std::string cmd = cli + " " + args + " >/dev/null 2>&1";
    return std::system(cmd.c_str());
}

bool criterion8(const std::string& cli, const fs::path& work) {
    const fs::path data = work / "c8_data";
    if (run_cli(cli, "synth --out " + data.string() + " --seed 3") != 0) {
        report(8, "training determinism", false, "synth command failed");
        return false;
    }
    const std::string cfg_path = (work / "c8.ini").string();
    std::ofstream cfg(cfg_path);
    cfg << "[train]\nepochs = 4\nlearning_rate = 0.002\nseed = 3\nmode = open\n"
        << "[loss]\nalpha_max = 0.2\nwarmup_epochs = 2\n";
    cfg.close();
    const fs::path out1 = work / "c8_run1";
    const fs::path out2 = work / "c8_run2";
    const std::string base =
        "train --data " + data.string() + " --config " + cfg_path + " --out ";
    if (run_cli(cli, base + out1.string()) != 0 || run_cli(cli, base + out2.string()) != 0) {
        report(8, "training determinism", false, "train command failed");
        return false;
    }
    const bool logs = slurp(out1 / "metrics.jsonl") == slurp(out2 / "metrics.jsonl");
    const bool ckpts = slurp(out1 / "checkpoint.bin") == slurp(out2 / "checkpoint.bin");
    const bool ok = logs && !slurp(out1 / "metrics.jsonl").empty() && ckpts;
    report(8, "training determinism", ok,
           std::string("metric logs ") + (logs ? "identical" : "DIFFER") + ", checkpoints " +
               (ckpts ? "identical" : "DIFFER"));
    return ok;
}

bool criterion9(const std::string& cli, const fs::path& work) {
    const fs::path data = work / "c9_data";
    const fs::path out = work / "c9_run";
    const std::string cfg_path = (work / "c9.ini").string();
    std::ofstream cfg(cfg_path);
    cfg << "[train]\nepochs = 30\nlearning_rate = 0.002\nseed = 1\nmode = open\n"
        << "[loss]\nalpha_max = 0.2\n[model]\nimg_hidden = 128\n";
    cfg.close();
    const double t0 = now_s();
    bool ok = run_cli(cli, "synth --out " + data.string() + " --seed 1") == 0;
    ok = ok && run_cli(cli, "train --data " + data.string() + " --config " + cfg_path +
                                " --out " + out.string()) == 0;
    ok = ok && run_cli(cli, "eval --data " + data.string() + " --checkpoint " +
                                (out / "checkpoint.bin").string() + " --open --out " +
                                (work / "c9_report.json").string()) == 0;
    const double elapsed = now_s() - t0;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "synth + 30-epoch open train + open eval in %.1fs", elapsed);
    ok = ok && elapsed < 60.0;
    report(9, "desk-scale budget", ok, buf);
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: acceptance <path-to-cocge-cli>\n");
        return 2;
    }
    const std::string cli = argv[1];
    fs::path work = fs::temp_directory_path() / "cocge_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);

    criterion1();
    criterion2();
    criterion3();
    criterion4();

    std::vector<SeedOutcome> outcomes;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) outcomes.push_back(run_benchmark_seed(seed));
    criteria567(outcomes);

    criterion8(cli, work);
    criterion9(cli, work);

    if (g_failures > 0) {
        std::printf("acceptance: %d criteria FAILED\n", g_failures);
        return 1;
    }
    std::printf("acceptance: all criteria passed\n");
    return 0;
}
