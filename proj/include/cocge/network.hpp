#pragma once

#include "cocge/common.hpp"
#include "cocge/graph.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <utility>
#include <vector>

namespace cocge {

/// Stacked graph-convolution weights. Layer l maps D_l -> D_{l+1}; ReLU
/// between layers, none after the last.
struct GcnParams {
    std::vector<Matrix> weights;
};

struct LayerNormParams {
    Vector gamma;
    Vector beta;
};

/// Three affine layers over frozen features; ReLU, per-feature LayerNorm
/// and inverted dropout after each of the first two.
struct ImageHeadParams {
    Matrix w1;
    Vector b1;
    LayerNormParams ln1;
    Matrix w2;
    Vector b2;
    LayerNormParams ln2;
    Matrix w3;
    Vector b3;
    double dropout_p = 0.1;

    int in_dim() const { return static_cast<int>(w1.rows()); }
    int out_dim() const { return static_cast<int>(w3.cols()); }
};

constexpr double kLayerNormEps = 1e-5;

// --- forward passes ---------------------------------------------------------

struct GcnCache {
    std::vector<Matrix> propagated;  // A_hat @ H_l, one per layer
    std::vector<Matrix> pre_act;     // A_hat @ H_l @ W_l
    Matrix output;                   // K x d
};

/// All K node embeddings after the full stack. Throws numeric_error naming
/// the first layer that produces a non-finite value.
Matrix gcn_forward(const CompositionalGraph& graph, const GcnParams& params);

GcnCache gcn_forward_cached(const Matrix& adj_norm, const Matrix& v0, const GcnParams& params);

struct HeadCache {
    Matrix x;
    Matrix a1, r1, xhat1, d1;
    Vector inv_std1;
    Matrix a2, r2, xhat2, d2;
    Vector inv_std2;
    Matrix mask1, mask2;  // inverted-dropout masks; empty in eval mode
    Matrix out;           // B x d
};

/// Batched head forward. Train mode draws dropout masks from rng; eval mode
/// is deterministic and applies no mask (inverted dropout scales at train
/// time).
HeadCache head_forward(const Matrix& x, const ImageHeadParams& params, bool train, Rng* rng);

/// Replays a forward pass under fixed dropout masks (for gradient checks).
HeadCache head_forward_with_masks(const Matrix& x, const ImageHeadParams& params,
                                  const Matrix& mask1, const Matrix& mask2);

/// Inverted-dropout mask: entries are 1/(1-p) with probability 1-p, else 0.
Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng);

/// Single-sample convenience wrapper over head_forward.
Vector image_embed(const Vector& feature, const ImageHeadParams& params, bool train, Rng* rng);

// --- compatibility and prediction --------------------------------------------

/// Cosine similarity; throws numeric_error on a zero-norm input.
double compatibility(const Vector& z, const Vector& phi);

struct ScoreMatrix {
    Matrix scores;               // rows = samples, cols = composition nodes
    std::vector<Pair> columns;   // composition labelling, node order
    std::vector<bool> col_seen;

    int n_rows() const { return static_cast<int>(scores.rows()); }
    int n_cols() const { return static_cast<int>(scores.cols()); }
};

/// Cosine scores of every image embedding against every composition node.
ScoreMatrix score_matrix(const Matrix& img_emb, const Matrix& node_emb, const NodeIndex& index);

/// Argmax over masked columns, ties to the lowest column index.
/// Throws config_error on an empty mask.
int argmax_masked(const Eigen::Ref<const Eigen::RowVectorXd>& row, const std::vector<bool>& mask);

Pair predict(const ScoreMatrix& scores, int row, const std::vector<bool>& candidate_mask);

/// Restricts the argmax to compositions with rho > tau plus all seen
/// compositions. tau <= -1 disables the restriction entirely; an emptied
/// candidate set falls back to the unrestricted argmax.
Pair predict_hard(const ScoreMatrix& scores, int row, const FeasibilityTable& feas, double tau,
                  const std::vector<bool>& candidate_mask);

/// Indices of the k images with the highest cosine against the query,
/// descending, ties to the lower index. k > n returns all n.
std::vector<int> retrieve(const Vector& composition_embedding, const Matrix& image_embeddings,
                          int k);

// --- checkpoints -------------------------------------------------------------

struct NamedTensors {
    std::vector<std::pair<std::string, Matrix>> items;

    void add(const std::string& name, const Matrix& m) { items.emplace_back(name, m); }
    void add(const std::string& name, const Vector& v) { items.emplace_back(name, Matrix(v)); }
    const Matrix& at(const std::string& name) const;
    bool contains(const std::string& name) const;
};

/// Single-file checkpoint: magic, embedded JSON manifest, then shape-headed
/// little-endian float64 tensors. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const nlohmann::json& manifest,
                     const NamedTensors& tensors);

std::pair<nlohmann::json, NamedTensors> load_checkpoint(const std::string& path);

}  // namespace cocge
