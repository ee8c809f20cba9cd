#include "cocge/model.hpp"

#include <cmath>

namespace cocge {

ModelKind parse_model_kind(const std::string& s) {
    if (s == "cocge") return ModelKind::CoCge;
    if (s == "visual_product") return ModelKind::VisualProduct;
    if (s == "word_avg") return ModelKind::WordAvg;
    throw config_error("unknown model kind '" + s + "' (want cocge|visual_product|word_avg)");
}

std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::CoCge: return "cocge";
        case ModelKind::VisualProduct: return "visual_product";
        default: return "word_avg";
    }
}

namespace {

Matrix kaiming(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows));
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
    return m;
}

ImageHeadParams init_head(const ModelDims& dims, Rng& rng) {
    ImageHeadParams h;
    h.w1 = kaiming(dims.feature_dim, dims.img_hidden, rng);
    h.b1 = Vector::Zero(dims.img_hidden);
    h.ln1 = {Vector::Ones(dims.img_hidden), Vector::Zero(dims.img_hidden)};
    h.w2 = kaiming(dims.img_hidden, dims.img_hidden, rng);
    h.b2 = Vector::Zero(dims.img_hidden);
    h.ln2 = {Vector::Ones(dims.img_hidden), Vector::Zero(dims.img_hidden)};
    h.w3 = kaiming(dims.img_hidden, dims.shared_dim, rng);
    h.b3 = Vector::Zero(dims.shared_dim);
    h.dropout_p = dims.dropout;
    return h;
}

}  // namespace

Model init_model(ModelKind kind, const ModelDims& dims, int n_states, int n_objects, Rng rng) {
    Model m;
    m.kind = kind;
    m.head = init_head(dims, rng);
    if (kind == ModelKind::CoCge) {
        m.gcn.weights.push_back(kaiming(dims.embed_dim, dims.gcn_hidden, rng));
        m.gcn.weights.push_back(kaiming(dims.gcn_hidden, dims.shared_dim, rng));
    } else if (kind == ModelKind::VisualProduct) {
        m.state_protos = kaiming(n_states, dims.shared_dim, rng);
        m.object_protos = kaiming(n_objects, dims.shared_dim, rng);
    }
    return m;
}

namespace {

// row-normalized cosine block: B x N scores between z rows and proto rows
Matrix cosine_block(const Matrix& z, const Matrix& protos) {
    Vector zn = z.rowwise().norm();
    Vector pn = protos.rowwise().norm();
    if ((zn.array() == 0.0).any() || (pn.array() == 0.0).any())
        throw numeric_error("zero-norm embedding in cosine block");
    Matrix s = z * protos.transpose();
    s = s.array().colwise() / zn.array();
    s = s.array().rowwise() / pn.transpose().array();
    return s;
}

Matrix row_softmax(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::RowVectorXd e = (logits.row(i).array() - logits.row(i).maxCoeff()).exp();
        p.row(i) = e / e.sum();
    }
    return p;
}

}  // namespace

ScoreMatrix model_score_matrix(const Model& model, const Matrix& features,
                               const CompositionalGraph& graph, double vp_temperature) {
    HeadCache head = head_forward(features, model.head, /*train=*/false, nullptr);
    const auto& index = graph.index;
    switch (model.kind) {
        case ModelKind::CoCge: {
            Matrix node_emb = gcn_forward(graph, model.gcn);
            return score_matrix(head.out, node_emb, index);
        }
        case ModelKind::WordAvg:
            return score_matrix(head.out, graph.v0, index);
        case ModelKind::VisualProduct: {
            Matrix ps = row_softmax(cosine_block(head.out, model.state_protos) / vp_temperature);
            Matrix po = row_softmax(cosine_block(head.out, model.object_protos) / vp_temperature);
            ScoreMatrix sm;
            sm.columns = index.compositions;
            sm.col_seen = index.comp_seen;
            sm.scores.resize(features.rows(), index.n_comps());
            for (int c = 0; c < index.n_comps(); ++c) {
                const auto& [s, o] = index.compositions[c];
                sm.scores.col(c) = ps.col(s).cwiseProduct(po.col(o));
            }
            return sm;
        }
    }
    throw config_error("unreachable model kind");
}

Matrix stack_features(const std::vector<Sample>& samples) {
    if (samples.empty()) throw config_error("empty sample list");
    Matrix x(static_cast<Eigen::Index>(samples.size()), samples[0].feature.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].feature.size() != x.cols())
            throw config_error("inconsistent feature dimensions in sample list");
        x.row(static_cast<Eigen::Index>(i)) = samples[i].feature.transpose();
    }
    return x;
}

std::vector<int> state_labels(const std::vector<Sample>& samples) {
    std::vector<int> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) out[i] = samples[i].state;
    return out;
}

std::vector<int> object_labels(const std::vector<Sample>& samples) {
    std::vector<int> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) out[i] = samples[i].object;
    return out;
}

}  // namespace cocge
