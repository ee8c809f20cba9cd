#include "cocge/config.hpp"
#include "cocge/dataio.hpp"
#include "cocge/evaluator.hpp"
#include "cocge/feasibility.hpp"
#include "cocge/graph.hpp"
#include "cocge/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cocge;

namespace {

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

ConfigFile load_config(const std::string& path) {
    if (path.empty()) return {};
    return ConfigFile::parse_file(path);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw config_error("cannot write file: " + path);
    out << text;
}

const std::vector<Sample>& pick_split(const Dataset& ds, const std::string& name) {
    if (name == "train") return ds.train;
    if (name == "val") return ds.val;
    if (name == "test") return ds.test;
    throw config_error("unknown split '" + name + "' (want train|val|test)");
}

int run_synth(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed) {
    ConfigFile cfg = load_config(config_path);
    SynthSpec spec = synth_spec_from_config(cfg);
    if (seed) spec.seed = *seed;
    Dataset ds = synthesize(spec);
    save_dataset(ds, out_dir);

    RunManifest manifest;
    manifest.command = "synth";
    manifest.config_text = synth_spec_to_text(spec);
    manifest.seed = spec.seed;
    manifest.tool_version = kToolVersion;
    for (const char* f :
         {"splits.txt", "features.bin", "features.json", "embeddings.txt", "feasible_gt.csv"})
        manifest.artifacts[f] = f;  // relative to the dataset directory
    // no wall clock here: synth output directories are byte-reproducible
    manifest.write((fs::path(out_dir) / "manifest.json").string());
    std::cerr << "wrote dataset to " << out_dir << "\n";
    return 0;
}

int run_train(const std::string& data_dir, const std::string& config_path,
              const std::string& out_dir, const std::string& mode_flag,
              std::optional<std::uint64_t> seed, std::optional<int> epochs_flag,
              const std::string& model_kind_flag, bool dry_run,
              const std::string& dump_graph_path) {
    Timer timer;
    ConfigFile cfg = load_config(config_path);
    TrainConfig config = train_config_from_config(cfg);
    if (!mode_flag.empty()) config.mode = parse_train_mode(mode_flag);
    if (seed) config.seed = *seed;
    if (epochs_flag) config.epochs = *epochs_flag;
    config.validate();

    if (dry_run) {
        std::cout << train_config_to_text(config);
        return 0;
    }
    if (data_dir.empty()) throw config_error("missing --data directory");
    if (out_dir.empty()) throw config_error("missing --out directory");
    Dataset ds = load_dataset(data_dir);

    if (!dump_graph_path.empty()) {
        const WorldMode world =
            config.mode == TrainMode::Closed ? WorldMode::Closed : WorldMode::Open;
        CompositionalGraph graph = build_graph(ds.vocab, ds.embeddings, world);
        write_text(dump_graph_path, graph_to_json(graph, ds.vocab));
    }

    const ModelKind kind =
        model_kind_flag.empty() ? ModelKind::CoCge : parse_model_kind(model_kind_flag);
    TrainResult result;
    switch (kind) {
        case ModelKind::CoCge: result = train(ds, config); break;
        case ModelKind::VisualProduct: result = train_visual_product(ds, config); break;
        case ModelKind::WordAvg: result = train_word_avg(ds, config); break;
    }

    fs::create_directories(out_dir);
    Checkpoint ckpt{result.model, result.feasibility, config, result.best_epoch};
    const std::string ckpt_path = (fs::path(out_dir) / "checkpoint.bin").string();
    const std::string log_path = (fs::path(out_dir) / "metrics.jsonl").string();
    save_model_checkpoint(ckpt_path, ckpt);
    write_text(log_path, metrics_log_json(result.log));

    RunManifest manifest;
    manifest.command = "train";
    manifest.config_text = train_config_to_text(config);
    manifest.seed = config.seed;
    manifest.tool_version = kToolVersion;
    manifest.artifacts["checkpoint"] = ckpt_path;
    manifest.artifacts["metrics"] = log_path;
    manifest.artifacts["data"] = data_dir;
    manifest.wall_clock_sec = timer.seconds();
    manifest.write((fs::path(out_dir) / "manifest.json").string());

    std::cerr << "best epoch " << result.best_epoch << ", best val AUC " << result.best_val_auc
              << "\n";
    return 0;
}

int run_eval(const std::string& data_dir, const std::string& ckpt_path, const std::string& split,
             bool open_flag, bool closed_flag, bool hard_mask_flag, const std::string& tau_flag,
             const std::string& curve_path, const std::string& out_path) {
    Timer timer;
    Dataset ds = load_dataset(data_dir);
    Checkpoint ckpt = load_model_checkpoint(ckpt_path);
    if (open_flag && closed_flag) throw config_error("--open and --closed are exclusive");
    const WorldMode eval_mode = closed_flag ? WorldMode::Closed : WorldMode::Open;

    std::optional<double> tau;
    if (hard_mask_flag || !tau_flag.empty()) {
        if (tau_flag.empty() || tau_flag == "auto")
            tau = select_tau_checkpoint(ckpt, ds, eval_mode);
        else
            tau = std::stod(tau_flag);
    }

    EvalReport report = evaluate_checkpoint(ckpt, ds, pick_split(ds, split), eval_mode, tau);
    if (!curve_path.empty()) write_text(curve_path, curve_to_csv(report.curve));

    RunManifest manifest;
    manifest.command = "eval";
    manifest.config_text = train_config_to_text(ckpt.config);
    manifest.seed = ckpt.config.seed;
    manifest.tool_version = kToolVersion;
    manifest.artifacts["checkpoint"] = ckpt_path;
    manifest.artifacts["data"] = data_dir;
    manifest.artifacts["split"] = split;
    manifest.wall_clock_sec = timer.seconds();

    json out = json::parse(report_to_json(report));
    out["manifest"] = json::parse(manifest.to_json());
    if (out_path.empty())
        std::cout << out.dump(2) << "\n";
    else
        write_text(out_path, out.dump(2) + "\n");
    return 0;
}

int run_feasibility(const std::string& data_dir, const std::string& ckpt_path,
                    const std::string& csv_path, const std::string& report_path, int top_k,
                    bool direct) {
    Dataset ds = load_dataset(data_dir);
    Checkpoint ckpt = load_model_checkpoint(ckpt_path);
    FeasibilityTable table = ckpt.feasibility;
    if (direct) {
        // diagnostic: direct state-object cosine of the propagated embeddings
        GraphPlan plan = graph_plan_for(ckpt, WorldMode::Open);
        CompositionalGraph graph;
        graph.index = build_node_index(ds.vocab, plan.node_world);
        graph.v0 = init_node_features(graph.index, ds.embeddings, ds.vocab);
        graph.adj = plan.weighted
                        ? build_adjacency_feasibility(graph.index, ckpt.feasibility, plan.switches)
                        : build_adjacency_closed(graph.index);
        graph.adj_norm = normalize_adjacency(graph.adj);
        Matrix node_emb = ckpt.model.kind == ModelKind::CoCge
                              ? gcn_forward(graph, ckpt.model.gcn)
                              : graph.v0;
        PrimitiveEmbeddings prim =
            ckpt.model.kind == ModelKind::VisualProduct
                ? PrimitiveEmbeddings{ckpt.model.state_protos, ckpt.model.object_protos}
                : PrimitiveEmbeddings::from_node_embeddings(node_emb, graph.index);
        table = compute_table_direct(prim, ds.vocab);
    }
    const std::string csv = feasibility_to_csv(table, ds.vocab);

    if (csv_path == "-" && report_path == "-")
        throw config_error("--csv and --report cannot both target stdout");
    if (csv_path == "-")
        std::cout << csv;
    else if (!csv_path.empty())
        write_text(csv_path, csv);

    if (!report_path.empty()) {
        std::ostringstream rep;
        for (int o = 0; o < ds.vocab.n_objects(); ++o) {
            std::vector<std::pair<double, int>> unseen;
            for (int s = 0; s < ds.vocab.n_states(); ++s)
                if (!table.is_seen(s, o)) unseen.push_back({table.at(s, o), s});
            std::sort(unseen.begin(), unseen.end(), [](const auto& a, const auto& b) {
                return a.first > b.first || (a.first == b.first && a.second < b.second);
            });
            rep << ds.vocab.objects[o] << " top:";
            const int k_top = std::min<int>(top_k, static_cast<int>(unseen.size()));
            for (int i = 0; i < k_top; ++i) rep << ' ' << ds.vocab.states[unseen[i].second];
            rep << " bottom:";
            for (int i = 0; i < k_top; ++i)
                rep << ' ' << ds.vocab.states[unseen[unseen.size() - 1 - i].second];
            rep << '\n';
        }
        if (report_path == "-")
            std::cout << rep.str();
        else
            write_text(report_path, rep.str());
    }
    return 0;
}

int run_retrieve(const std::string& data_dir, const std::string& ckpt_path,
                 const std::string& state, const std::string& object, int k,
                 const std::string& split) {
    Dataset ds = load_dataset(data_dir);
    Checkpoint ckpt = load_model_checkpoint(ckpt_path);
    const auto& samples = pick_split(ds, split);

    int s_idx = -1, o_idx = -1;
    for (int i = 0; i < ds.vocab.n_states(); ++i)
        if (ds.vocab.states[i] == state) s_idx = i;
    for (int i = 0; i < ds.vocab.n_objects(); ++i)
        if (ds.vocab.objects[i] == object) o_idx = i;
    if (s_idx < 0) throw config_error("unknown state '" + state + "'");
    if (o_idx < 0) throw config_error("unknown object '" + object + "'");

    GraphPlan plan = graph_plan_for(ckpt, WorldMode::Open);
    CompositionalGraph graph;
    graph.index = build_node_index(ds.vocab, plan.node_world);
    graph.v0 = init_node_features(graph.index, ds.embeddings, ds.vocab);
    graph.adj = plan.weighted
                    ? build_adjacency_feasibility(graph.index, ckpt.feasibility, plan.switches)
                    : build_adjacency_closed(graph.index);
    graph.adj_norm = normalize_adjacency(graph.adj);

    Vector comp_emb;
    const int node = graph.index.comp_node.at({s_idx, o_idx});
    if (ckpt.model.kind == ModelKind::CoCge)
        comp_emb = gcn_forward(graph, ckpt.model.gcn).row(node).transpose();
    else
        comp_emb = graph.v0.row(node).transpose();

    Matrix img = head_forward(stack_features(samples), ckpt.model.head, false, nullptr).out;
    for (int idx : retrieve(comp_emb, img, k)) std::cout << samples[idx].id << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"compositional cosine graph embeddings for open-world "
                 "compositional zero-shot recognition"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir, out_path, mode_flag, model_kind;
    std::string ckpt_path, split = "test", tau_flag, curve_path, dump_graph_path;
    std::string csv_path = "-", report_path, state, object;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs_flag;
    bool dry_run = false, open_flag = false, closed_flag = false, hard_mask_flag = false;
    bool direct_flag = false;
    int top_k = 3, k = 5;

    auto* synth = app.add_subcommand("synth", "generate a seeded synthetic dataset");
    synth->add_option("--config", config_path, "config file with a [synth] section");
    synth->add_option("--out", out_dir, "output dataset directory")->required();
    synth->add_option("--seed", seed, "override the generator seed");

    auto* train_cmd = app.add_subcommand("train", "train a model on a dataset directory");
    train_cmd->add_option("--data", data_dir, "dataset directory");
    train_cmd->add_option("--config", config_path, "config file");
    train_cmd->add_option("--out", out_dir, "output directory for checkpoint and metrics");
    train_cmd->add_option("--mode", mode_flag, "closed|open|open-frozen-graph");
    train_cmd->add_option("--seed", seed, "override the training seed");
    train_cmd->add_option("--epochs", epochs_flag, "override the epoch count");
    train_cmd->add_option("--model", model_kind, "cocge|visual_product|word_avg");
    train_cmd->add_flag("--dry-run", dry_run, "print the resolved config and exit");
    train_cmd->add_option("--dump-graph", dump_graph_path, "dump the initial graph as JSON");

    auto* eval_cmd = app.add_subcommand("eval", "calibrated evaluation of a checkpoint");
    eval_cmd->add_option("--data", data_dir, "dataset directory")->required();
    eval_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    eval_cmd->add_option("--split", split, "train|val|test (default test)");
    eval_cmd->add_flag("--open", open_flag, "open-world candidate set (default)");
    eval_cmd->add_flag("--closed", closed_flag, "closed-world candidate set");
    eval_cmd->add_flag("--hard-mask", hard_mask_flag, "exclude unseen columns with rho <= tau");
    eval_cmd->add_option("--tau", tau_flag, "hard-mask threshold: auto or a value");
    eval_cmd->add_option("--curve", curve_path, "write the sweep curve as CSV");
    eval_cmd->add_option("--out", out_path, "write the report JSON here instead of stdout");

    auto* feas_cmd = app.add_subcommand("feasibility", "dump per-composition feasibility");
    feas_cmd->add_option("--data", data_dir, "dataset directory")->required();
    feas_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    feas_cmd->add_option("--csv", csv_path, "CSV output path, - for stdout (default)");
    feas_cmd->add_option("--report", report_path, "top/bottom-k report path, - for stdout");
    feas_cmd->add_option("--top-k", top_k, "states listed per object and direction");
    feas_cmd->add_flag("--direct", direct_flag,
                       "diagnostic: direct state-object cosine instead of the stored table");

    auto* retr_cmd = app.add_subcommand("retrieve", "nearest images to a composition");
    retr_cmd->add_option("--data", data_dir, "dataset directory")->required();
    retr_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    retr_cmd->add_option("--state", state, "state name")->required();
    retr_cmd->add_option("--object", object, "object name")->required();
    retr_cmd->add_option("--k", k, "number of images");
    retr_cmd->add_option("--split", split, "train|val|test (default test)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return run_synth(config_path, out_dir, seed);
        if (train_cmd->parsed())
            return run_train(data_dir, config_path, out_dir, mode_flag, seed, epochs_flag,
                             model_kind, dry_run, dump_graph_path);
        if (eval_cmd->parsed())
            return run_eval(data_dir, ckpt_path, split, open_flag, closed_flag, hard_mask_flag,
                            tau_flag, curve_path, out_path);
        if (feas_cmd->parsed())
            return run_feasibility(data_dir, ckpt_path, csv_path, report_path, top_k,
                                   direct_flag);
        if (retr_cmd->parsed()) return run_retrieve(data_dir, ckpt_path, state, object, k, split);
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
