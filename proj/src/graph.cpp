#include "cocge/graph.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>

using nlohmann::json;

namespace cocge {

WorldMode parse_world_mode(const std::string& s) {
    if (s == "closed") return WorldMode::Closed;
    if (s == "open") return WorldMode::Open;
    throw config_error("unknown world mode '" + s + "' (want closed|open)");
}

std::string to_string(WorldMode m) {
    return m == WorldMode::Closed ? "closed" : "open";
}

FeasibilityTable FeasibilityTable::all_ones(const Vocabulary& vocab) {
    FeasibilityTable t;
    t.rho = Matrix::Ones(vocab.n_states(), vocab.n_objects());
    t.seen.assign(vocab.n_states(), std::vector<bool>(vocab.n_objects(), false));
    for (const auto& [s, o] : vocab.seen_pairs) t.seen[s][o] = true;
    return t;
}

NodeIndex build_node_index(const Vocabulary& vocab, WorldMode mode) {
    NodeIndex idx;
    idx.mode = mode;
    idx.n_states = vocab.n_states();
    idx.n_objects = vocab.n_objects();
    if (mode == WorldMode::Open) {
        for (int s = 0; s < idx.n_states; ++s)
            for (int o = 0; o < idx.n_objects; ++o) idx.compositions.push_back({s, o});
    } else {
        PairSet target = vocab.seen_pairs;
        target.insert(vocab.closed_unseen_pairs.begin(), vocab.closed_unseen_pairs.end());
        idx.compositions.assign(target.begin(), target.end());  // already sorted
    }
    idx.comp_seen.resize(idx.compositions.size());
    for (std::size_t i = 0; i < idx.compositions.size(); ++i) {
        idx.comp_seen[i] = vocab.seen_pairs.count(idx.compositions[i]) > 0;
        idx.comp_node[idx.compositions[i]] = idx.first_comp_node() + static_cast<int>(i);
    }
    return idx;
}

Matrix init_node_features(const NodeIndex& index, const EmbeddingTable& table,
                          const Vocabulary& vocab) {
    const int m = table.dim;
    Matrix v0(index.n_nodes(), m);
    for (int s = 0; s < index.n_states; ++s)
        v0.row(index.state_node(s)) = table.at(vocab.states[s]).transpose();
    for (int o = 0; o < index.n_objects; ++o)
        v0.row(index.object_node(o)) = table.at(vocab.objects[o]).transpose();
    for (int c = 0; c < index.n_comps(); ++c) {
        const auto& [s, o] = index.compositions[c];
        v0.row(index.comp_node_of(c)) =
            0.5 * (v0.row(index.state_node(s)) + v0.row(index.object_node(o)));
    }
    return v0;
}

Matrix build_adjacency_closed(const NodeIndex& index) {
    const int k = index.n_nodes();
    Matrix adj = Matrix::Identity(k, k);
    for (int c = 0; c < index.n_comps(); ++c) {
        const auto& [s, o] = index.compositions[c];
        const int sn = index.state_node(s);
        const int on = index.object_node(o);
        const int cn = index.comp_node_of(c);
        adj(sn, on) = 1.0;
        adj(on, sn) = 1.0;
        adj(cn, sn) = 1.0;  // primitives feed the composition
        adj(cn, on) = 1.0;
        adj(sn, cn) = 1.0;  // composition feeds its primitives
        adj(on, cn) = 1.0;
    }
    return adj;
}

Matrix build_adjacency_feasibility(const NodeIndex& index, const FeasibilityTable& feas,
                                   const EdgeWeighting& switches) {
    const int k = index.n_nodes();
    Matrix adj = Matrix::Identity(k, k);
    auto clamp = [](double r) { return std::max(0.0, r); };
    for (int c = 0; c < index.n_comps(); ++c) {
        const auto& [s, o] = index.compositions[c];
        const double w = clamp(feas.at(s, o));
        const int sn = index.state_node(s);
        const int on = index.object_node(o);
        const int cn = index.comp_node_of(c);
        const double so = switches.state_object ? w : 1.0;
        adj(sn, on) = std::max(adj(sn, on), so);
        adj(on, sn) = std::max(adj(on, sn), so);
        const double cp = switches.comp_to_prim ? w : 1.0;
        adj(cn, sn) = cp;
        adj(cn, on) = cp;
        const double pc = switches.prim_to_comp ? w : 1.0;
        adj(sn, cn) = pc;
        adj(on, cn) = pc;
    }
    return adj;
}

Matrix normalize_adjacency(const Matrix& adj) {
    Matrix out = adj;
    for (Eigen::Index j = 0; j < adj.cols(); ++j) {
        const double sum = adj.col(j).sum();
        if (sum <= 0.0)
            throw numeric_error("adjacency column " + std::to_string(j) +
                                " has non-positive sum; self-loop invariant broken");
        out.col(j) /= sum;
    }
    return out;
}

CompositionalGraph build_graph(const Vocabulary& vocab, const EmbeddingTable& table,
                               WorldMode mode) {
    CompositionalGraph g;
    g.index = build_node_index(vocab, mode);
    g.v0 = init_node_features(g.index, table, vocab);
    g.adj = build_adjacency_closed(g.index);
    g.adj_norm = normalize_adjacency(g.adj);
    return g;
}

std::string graph_to_json(const CompositionalGraph& graph, const Vocabulary& vocab) {
    json out;
    json nodes = json::array();
    const auto& idx = graph.index;
    for (int s = 0; s < idx.n_states; ++s) nodes.push_back("state:" + vocab.states[s]);
    for (int o = 0; o < idx.n_objects; ++o) nodes.push_back("object:" + vocab.objects[o]);
    for (int c = 0; c < idx.n_comps(); ++c) {
        const auto& [s, o] = idx.compositions[c];
        nodes.push_back("comp:" + vocab.states[s] + "+" + vocab.objects[o]);
    }
    out["mode"] = to_string(idx.mode);
    out["nodes"] = std::move(nodes);
    json rows = json::array();
    for (Eigen::Index i = 0; i < graph.adj.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < graph.adj.cols(); ++j) row.push_back(graph.adj(i, j));
        rows.push_back(std::move(row));
    }
    out["adjacency"] = std::move(rows);
    return out.dump(2);
}

}  // namespace cocge
