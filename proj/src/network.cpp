#include "cocge/network.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

using nlohmann::json;

namespace cocge {

GcnCache gcn_forward_cached(const Matrix& adj_norm, const Matrix& v0, const GcnParams& params) {
    if (params.weights.empty()) throw config_error("GCN has no layers");
    GcnCache cache;
    Matrix h = v0;
    const std::size_t n_layers = params.weights.size();
    for (std::size_t l = 0; l < n_layers; ++l) {
        if (h.cols() != params.weights[l].rows())
            throw config_error("GCN layer " + std::to_string(l) + ": input dim " +
                               std::to_string(h.cols()) + " does not match weight rows " +
                               std::to_string(params.weights[l].rows()));
        Matrix prop = adj_norm * h;
        Matrix pre = prop * params.weights[l];
        if (!all_finite(pre))
            throw numeric_error("non-finite GCN output at layer " + std::to_string(l));
        cache.propagated.push_back(std::move(prop));
        h = (l + 1 < n_layers) ? pre.cwiseMax(0.0) : pre;
        cache.pre_act.push_back(std::move(pre));
    }
    cache.output = std::move(h);
    return cache;
}

Matrix gcn_forward(const CompositionalGraph& graph, const GcnParams& params) {
    return gcn_forward_cached(graph.adj_norm, graph.v0, params).output;
}

namespace {

// LayerNorm over the feature dimension of each row; xhat and 1/std cached.
void layer_norm_rows(const Matrix& x, const LayerNormParams& ln, Matrix& xhat, Vector& inv_std,
                     Matrix& out) {
    const Eigen::Index n = x.cols();
    xhat.resize(x.rows(), n);
    out.resize(x.rows(), n);
    inv_std.resize(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double mu = x.row(i).mean();
        const double var = (x.row(i).array() - mu).square().mean();
        const double is = 1.0 / std::sqrt(var + kLayerNormEps);
        inv_std[i] = is;
        xhat.row(i) = (x.row(i).array() - mu) * is;
        out.row(i) = xhat.row(i).cwiseProduct(ln.gamma.transpose()) + ln.beta.transpose();
    }
}

HeadCache head_forward_impl(const Matrix& x, const ImageHeadParams& params, const Matrix* m1,
                            const Matrix* m2) {
    if (x.cols() != params.w1.rows())
        throw config_error("image head: feature dim " + std::to_string(x.cols()) +
                           " does not match input dim " + std::to_string(params.w1.rows()));
    HeadCache c;
    c.x = x;
    c.a1 = (x * params.w1).rowwise() + params.b1.transpose();
    c.r1 = c.a1.cwiseMax(0.0);
    Matrix n1;
    layer_norm_rows(c.r1, params.ln1, c.xhat1, c.inv_std1, n1);
    c.d1 = m1 ? n1.cwiseProduct(*m1) : n1;
    if (m1) c.mask1 = *m1;

    c.a2 = (c.d1 * params.w2).rowwise() + params.b2.transpose();
    c.r2 = c.a2.cwiseMax(0.0);
    Matrix n2;
    layer_norm_rows(c.r2, params.ln2, c.xhat2, c.inv_std2, n2);
    c.d2 = m2 ? n2.cwiseProduct(*m2) : n2;
    if (m2) c.mask2 = *m2;

    c.out = (c.d2 * params.w3).rowwise() + params.b3.transpose();
    if (!all_finite(c.out)) throw numeric_error("non-finite image embedding");
    return c;
}

}  // namespace

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
    Matrix mask(rows, cols);
    const double keep = 1.0 - p;
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            mask(i, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
    return mask;
}

HeadCache head_forward(const Matrix& x, const ImageHeadParams& params, bool train, Rng* rng) {
    if (train && params.dropout_p > 0.0) {
        if (!rng) throw config_error("train-mode image head requires an rng for dropout");
        Matrix m1 = dropout_mask(x.rows(), params.w1.cols(), params.dropout_p, *rng);
        Matrix m2 = dropout_mask(x.rows(), params.w2.cols(), params.dropout_p, *rng);
        return head_forward_impl(x, params, &m1, &m2);
    }
    return head_forward_impl(x, params, nullptr, nullptr);
}

HeadCache head_forward_with_masks(const Matrix& x, const ImageHeadParams& params,
                                  const Matrix& mask1, const Matrix& mask2) {
    if (mask1.size() == 0) return head_forward_impl(x, params, nullptr, nullptr);
    return head_forward_impl(x, params, &mask1, &mask2);
}

Vector image_embed(const Vector& feature, const ImageHeadParams& params, bool train, Rng* rng) {
    Matrix x = feature.transpose();
    return head_forward(x, params, train, rng).out.row(0).transpose();
}

double compatibility(const Vector& z, const Vector& phi) {
    const double nz = z.norm();
    const double np = phi.norm();
    if (nz == 0.0 || np == 0.0)
        throw numeric_error("zero-norm embedding in cosine compatibility");
    return z.dot(phi) / (nz * np);
}

ScoreMatrix score_matrix(const Matrix& img_emb, const Matrix& node_emb, const NodeIndex& index) {
    ScoreMatrix sm;
    sm.columns = index.compositions;
    sm.col_seen = index.comp_seen;
    const int n_comp = index.n_comps();
    Matrix comp(n_comp, node_emb.cols());
    for (int c = 0; c < n_comp; ++c) comp.row(c) = node_emb.row(index.comp_node_of(c));

    Vector img_norms = img_emb.rowwise().norm();
    Vector comp_norms = comp.rowwise().norm();
    if ((img_norms.array() == 0.0).any())
        throw numeric_error("zero-norm image embedding in score matrix");
    if ((comp_norms.array() == 0.0).any())
        throw numeric_error("zero-norm composition embedding in score matrix");
    sm.scores = (img_emb * comp.transpose()).array().colwise() / img_norms.array();
    sm.scores = sm.scores.array().rowwise() / comp_norms.transpose().array();
    return sm;
}

int argmax_masked(const Eigen::Ref<const Eigen::RowVectorXd>& row, const std::vector<bool>& mask) {
    int best = -1;
    for (int j = 0; j < static_cast<int>(row.size()); ++j) {
        if (!mask[j]) continue;
        if (best < 0 || row[j] > row[best]) best = j;
    }
    if (best < 0) throw config_error("argmax over an empty candidate mask");
    return best;
}

Pair predict(const ScoreMatrix& scores, int row, const std::vector<bool>& candidate_mask) {
    return scores.columns[argmax_masked(scores.scores.row(row), candidate_mask)];
}

Pair predict_hard(const ScoreMatrix& scores, int row, const FeasibilityTable& feas, double tau,
                  const std::vector<bool>& candidate_mask) {
    if (tau <= -1.0) return predict(scores, row, candidate_mask);
    std::vector<bool> mask = candidate_mask;
    bool any = false;
    for (int j = 0; j < scores.n_cols(); ++j) {
        if (!mask[j]) continue;
        const auto& [s, o] = scores.columns[j];
        if (!scores.col_seen[j] && feas.at(s, o) <= tau)
            mask[j] = false;
        else
            any = true;
    }
    if (!any) return predict(scores, row, candidate_mask);
    return predict(scores, row, mask);
}

std::vector<int> retrieve(const Vector& composition_embedding, const Matrix& image_embeddings,
                          int k) {
    if (k < 1) throw config_error("retrieve: k must be >= 1");
    const int n = static_cast<int>(image_embeddings.rows());
    std::vector<double> score(n);
    for (int i = 0; i < n; ++i)
        score[i] = compatibility(image_embeddings.row(i).transpose(), composition_embedding);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return score[a] > score[b]; });
    if (k < n) order.resize(k);
    return order;
}

// --- checkpoints --------------------------------------------------------------

const Matrix& NamedTensors::at(const std::string& name) const {
    for (const auto& [n, m] : items)
        if (n == name) return m;
    throw config_error("checkpoint tensor '" + name + "' not found");
}

bool NamedTensors::contains(const std::string& name) const {
    for (const auto& [n, m] : items)
        if (n == name) return true;
    return false;
}

namespace {

constexpr char kMagic[8] = {'C', 'C', 'G', 'E', 'B', 'I', 'N', '1'};

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw config_error("truncated checkpoint file");
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const json& manifest,
                     const NamedTensors& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot write checkpoint: " + path);
    out.write(kMagic, sizeof(kMagic));
    const std::string mtxt = manifest.dump();
    write_pod<std::uint64_t>(out, mtxt.size());
    out.write(mtxt.data(), static_cast<std::streamsize>(mtxt.size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.items.size()));
    for (const auto& [name, m] : tensors.items) {
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
        write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) write_pod<double>(out, m(i, j));
    }
    if (!out) throw config_error("failed writing checkpoint: " + path);
}

std::pair<json, NamedTensors> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw config_error("not a checkpoint file: " + path);
    const auto mlen = read_pod<std::uint64_t>(in);
    std::string mtxt(mlen, '\0');
    in.read(mtxt.data(), static_cast<std::streamsize>(mlen));
    if (!in) throw config_error("truncated checkpoint manifest");
    json manifest = json::parse(mtxt);
    NamedTensors tensors;
    const auto count = read_pod<std::uint32_t>(in);
    for (std::uint32_t t = 0; t < count; ++t) {
        const auto nlen = read_pod<std::uint32_t>(in);
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        const auto rows = read_pod<std::uint64_t>(in);
        const auto cols = read_pod<std::uint64_t>(in);
        Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = read_pod<double>(in);
        tensors.items.emplace_back(std::move(name), std::move(m));
    }
    return {std::move(manifest), std::move(tensors)};
}

}  // namespace cocge
