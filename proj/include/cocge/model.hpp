#pragma once

#include "cocge/common.hpp"
#include "cocge/dataio.hpp"
#include "cocge/feasibility.hpp"
#include "cocge/graph.hpp"
#include "cocge/network.hpp"

#include <string>

namespace cocge {

enum class ModelKind { CoCge, VisualProduct, WordAvg };

ModelKind parse_model_kind(const std::string& s);
std::string to_string(ModelKind k);

/// Trainable state of the graph model plus the two reference baselines.
/// The GCN block is used by the graph model only; the prototype matrices by
/// the visual-product baseline only. Every kind has an image head.
struct Model {
    ModelKind kind = ModelKind::CoCge;
    GcnParams gcn;
    ImageHeadParams head;
    Matrix state_protos;   // |S| x d, visual product
    Matrix object_protos;  // |O| x d, visual product
};

struct ModelDims {
    int feature_dim = 0;  // F
    int embed_dim = 0;    // m, word-embedding input
    int gcn_hidden = 0;   // GCN hidden width
    int shared_dim = 0;   // d, shared space
    int img_hidden = 0;   // image head hidden width
    double dropout = 0.1;
};

/// Kaiming-style fan-in uniform init for every weight matrix, zero biases,
/// identity LayerNorm. Deterministic given the rng stream.
Model init_model(ModelKind kind, const ModelDims& dims, int n_states, int n_objects, Rng rng);

/// Scores a feature batch against every composition column of the graph.
/// Graph model: cosine between head output and propagated node embeddings.
/// Word-average baseline: cosine against the fixed v0 composition rows.
/// Visual product: product of state and object softmax probabilities under
/// `vp_temperature`.
ScoreMatrix model_score_matrix(const Model& model, const Matrix& features,
                               const CompositionalGraph& graph, double vp_temperature);

/// Eval-mode image embeddings for a sample list (B x F stacked features).
Matrix stack_features(const std::vector<Sample>& samples);

std::vector<int> state_labels(const std::vector<Sample>& samples);
std::vector<int> object_labels(const std::vector<Sample>& samples);

}  // namespace cocge
