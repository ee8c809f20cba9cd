#pragma once

#include "cocge/common.hpp"
#include "cocge/dataio.hpp"

#include <map>
#include <string>
#include <vector>

namespace cocge {

enum class WorldMode { Closed, Open };

WorldMode parse_world_mode(const std::string& s);
std::string to_string(WorldMode m);

/// Node layout: [states..., objects..., compositions...]. Closed mode
/// indexes seen plus closed-unseen compositions; open mode the full
/// state-object product. Composition order is lexicographic by pair.
struct NodeIndex {
    int n_states = 0;
    int n_objects = 0;
    std::vector<Pair> compositions;        // in node order
    std::vector<bool> comp_seen;           // aligned with compositions
    std::map<Pair, int> comp_node;         // pair -> absolute node id
    WorldMode mode = WorldMode::Closed;

    int state_node(int s) const { return s; }
    int object_node(int o) const { return n_states + o; }
    int first_comp_node() const { return n_states + n_objects; }
    int n_comps() const { return static_cast<int>(compositions.size()); }
    int n_nodes() const { return n_states + n_objects + n_comps(); }
    int comp_node_of(int comp_idx) const { return first_comp_node() + comp_idx; }
};

struct CompositionalGraph {
    NodeIndex index;
    Matrix v0;     // K x m, fixed node features
    Matrix adj;    // K x K, non-negative, unit diagonal
    Matrix adj_norm;  // column-normalized adj
};

/// Feasibility scores for every composition of the open product,
/// rho in [-1,1], seen pairs pinned at exactly 1.
struct FeasibilityTable {
    Matrix rho;                      // n_states x n_objects
    std::vector<std::vector<bool>> seen;

    double at(int s, int o) const { return rho(s, o); }
    bool is_seen(int s, int o) const { return seen[s][o]; }

    static FeasibilityTable all_ones(const Vocabulary& vocab);
};

/// Which edge classes carry feasibility weights (`rho`) versus stay at 1
/// (`one`). Names follow the adjacency slots row->column: `prim_to_comp`
/// covers A[primitive][composition] (a composition weighing on its
/// primitives), `comp_to_prim` covers A[composition][primitive].
struct EdgeWeighting {
    bool state_object = true;   // A[s][o] and A[o][s]
    bool prim_to_comp = true;   // A[p][c]
    bool comp_to_prim = false;  // A[c][p]; kept at 1 by default
};

NodeIndex build_node_index(const Vocabulary& vocab, WorldMode mode);

/// Node features: primitive rows copied from the embedding table,
/// composition rows the mean of their two primitive rows. Never trained.
Matrix init_node_features(const NodeIndex& index, const EmbeddingTable& table,
                          const Vocabulary& vocab);

/// Unit-weight adjacency: state-object edges for every composition in the
/// node set, composition<->primitive edges both ways, self-loops.
Matrix build_adjacency_closed(const NodeIndex& index);

/// Feasibility-weighted adjacency. Weighted edge classes use
/// max(0, rho(composition)); unit classes and self-loops stay 1.
Matrix build_adjacency_feasibility(const NodeIndex& index, const FeasibilityTable& feas,
                                   const EdgeWeighting& switches = {});

/// A_hat[i][j] = A[i][j] / colsum_j(A). Throws numeric_error on a zero column.
Matrix normalize_adjacency(const Matrix& adj);

CompositionalGraph build_graph(const Vocabulary& vocab, const EmbeddingTable& table,
                               WorldMode mode);

/// JSON debug dump: node list plus dense adjacency.
std::string graph_to_json(const CompositionalGraph& graph, const Vocabulary& vocab);

}  // namespace cocge
