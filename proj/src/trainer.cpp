#include "cocge/trainer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

using nlohmann::json;

namespace cocge {

TrainMode parse_train_mode(const std::string& s) {
    if (s == "closed") return TrainMode::Closed;
    if (s == "open") return TrainMode::Open;
    if (s == "open-frozen-graph") return TrainMode::OpenFrozenGraph;
    throw config_error("unknown train mode '" + s + "' (want closed|open|open-frozen-graph)");
}

std::string to_string(TrainMode m) {
    switch (m) {
        case TrainMode::Closed: return "closed";
        case TrainMode::Open: return "open";
        default: return "open-frozen-graph";
    }
}

void TrainConfig::validate() const {
    if (epochs <= 0) throw config_error("epochs must be > 0");
    if (batch_size <= 0) throw config_error("batch_size must be > 0");
    if (learning_rate <= 0) throw config_error("learning_rate must be > 0");
    if (weight_decay < 0) throw config_error("weight_decay must be >= 0");
    if (eval_every < 0) throw config_error("eval_every must be >= 0");
    if (dropout < 0 || dropout >= 1) throw config_error("dropout must be in [0,1)");
    loss.validate();
}

GradientSet GradientSet::zeros_like(const Model& model) {
    GradientSet g;
    for (const auto& w : model.gcn.weights) g.gcn.push_back(Matrix::Zero(w.rows(), w.cols()));
    const auto& h = model.head;
    g.w1 = Matrix::Zero(h.w1.rows(), h.w1.cols());
    g.b1 = Vector::Zero(h.b1.size());
    g.ln1_gamma = Vector::Zero(h.ln1.gamma.size());
    g.ln1_beta = Vector::Zero(h.ln1.beta.size());
    g.w2 = Matrix::Zero(h.w2.rows(), h.w2.cols());
    g.b2 = Vector::Zero(h.b2.size());
    g.ln2_gamma = Vector::Zero(h.ln2.gamma.size());
    g.ln2_beta = Vector::Zero(h.ln2.beta.size());
    g.w3 = Matrix::Zero(h.w3.rows(), h.w3.cols());
    g.b3 = Vector::Zero(h.b3.size());
    if (model.state_protos.size() > 0) {
        g.state_protos = Matrix::Zero(model.state_protos.rows(), model.state_protos.cols());
        g.object_protos = Matrix::Zero(model.object_protos.rows(), model.object_protos.cols());
    }
    return g;
}

namespace {

// Applies f(name, param, grad, m1, m2) to every trainable tensor.
template <typename F>
void visit_tensors(Model& model, const GradientSet& g, GradientSet& m1, GradientSet& m2, F&& f) {
    for (std::size_t i = 0; i < model.gcn.weights.size(); ++i)
        f("gcn.w" + std::to_string(i), model.gcn.weights[i], g.gcn[i], m1.gcn[i], m2.gcn[i]);
    auto& h = model.head;
    f("head.w1", h.w1, g.w1, m1.w1, m2.w1);
    f("head.b1", h.b1, g.b1, m1.b1, m2.b1);
    f("head.ln1.gamma", h.ln1.gamma, g.ln1_gamma, m1.ln1_gamma, m2.ln1_gamma);
    f("head.ln1.beta", h.ln1.beta, g.ln1_beta, m1.ln1_beta, m2.ln1_beta);
    f("head.w2", h.w2, g.w2, m1.w2, m2.w2);
    f("head.b2", h.b2, g.b2, m1.b2, m2.b2);
    f("head.ln2.gamma", h.ln2.gamma, g.ln2_gamma, m1.ln2_gamma, m2.ln2_gamma);
    f("head.ln2.beta", h.ln2.beta, g.ln2_beta, m1.ln2_beta, m2.ln2_beta);
    f("head.w3", h.w3, g.w3, m1.w3, m2.w3);
    f("head.b3", h.b3, g.b3, m1.b3, m2.b3);
    if (model.state_protos.size() > 0) {
        f("vp.state_protos", model.state_protos, g.state_protos, m1.state_protos,
          m2.state_protos);
        f("vp.object_protos", model.object_protos, g.object_protos, m1.object_protos,
          m2.object_protos);
    }
}

}  // namespace

void adam_step(Model& model, const GradientSet& grads, AdamState& state,
               const TrainConfig& config) {
    state.step += 1;
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
    visit_tensors(model, grads, state.m1, state.m2,
                  [&](const std::string& name, auto& param, const auto& grad, auto& m1,
                      auto& m2) {
                      auto g = (grad.array() + config.weight_decay * param.array()).eval();
                      m1.array() = config.beta1 * m1.array() + (1.0 - config.beta1) * g;
                      m2.array() = config.beta2 * m2.array() + (1.0 - config.beta2) * g * g;
                      param.array() -= config.learning_rate * (m1.array() / c1) /
                                       ((m2.array() / c2).sqrt() + config.adam_eps);
                      if (!param.allFinite())
                          throw numeric_error("non-finite parameter after Adam step: " + name);
                  });
}

// --- reverse mode -----------------------------------------------------------

namespace {

struct LayerNormBackward {
    Vector dgamma, dbeta;
    Matrix dx;
};

LayerNormBackward layer_norm_backward(const Matrix& dout, const Matrix& xhat,
                                      const Vector& inv_std, const Vector& gamma) {
    LayerNormBackward out;
    out.dgamma = (dout.array() * xhat.array()).colwise().sum().transpose();
    out.dbeta = dout.colwise().sum().transpose();
    out.dx.resize(dout.rows(), dout.cols());
    const double n = static_cast<double>(dout.cols());
    for (Eigen::Index i = 0; i < dout.rows(); ++i) {
        Eigen::RowVectorXd dxhat = dout.row(i).cwiseProduct(gamma.transpose());
        const double mean_dxhat = dxhat.mean();
        const double mean_dxhat_xhat = dxhat.cwiseProduct(xhat.row(i)).sum() / n;
        out.dx.row(i) =
            inv_std[i] * (dxhat.array() - mean_dxhat - xhat.row(i).array() * mean_dxhat_xhat);
    }
    return out;
}

struct HeadGrads {
    Matrix w1, w2, w3;
    Vector b1, b2, b3, g1, be1, g2, be2;
};

HeadGrads head_backward(const Matrix& dout, const HeadCache& cache,
                        const ImageHeadParams& params) {
    HeadGrads g;
    g.w3 = cache.d2.transpose() * dout;
    g.b3 = dout.colwise().sum().transpose();
    Matrix dd2 = dout * params.w3.transpose();
    Matrix dn2 = cache.mask2.size() > 0 ? dd2.cwiseProduct(cache.mask2).eval() : dd2;
    auto ln2 = layer_norm_backward(dn2, cache.xhat2, cache.inv_std2, params.ln2.gamma);
    g.g2 = ln2.dgamma;
    g.be2 = ln2.dbeta;
    Matrix da2 = ln2.dx.cwiseProduct((cache.a2.array() > 0.0).cast<double>().matrix());
    g.w2 = cache.d1.transpose() * da2;
    g.b2 = da2.colwise().sum().transpose();
    Matrix dd1 = da2 * params.w2.transpose();
    Matrix dn1 = cache.mask1.size() > 0 ? dd1.cwiseProduct(cache.mask1).eval() : dd1;
    auto ln1 = layer_norm_backward(dn1, cache.xhat1, cache.inv_std1, params.ln1.gamma);
    g.g1 = ln1.dgamma;
    g.be1 = ln1.dbeta;
    Matrix da1 = ln1.dx.cwiseProduct((cache.a1.array() > 0.0).cast<double>().matrix());
    g.w1 = cache.x.transpose() * da1;
    g.b1 = da1.colwise().sum().transpose();
    return g;
}

struct CosineBackward {
    Matrix dz;  // gradient on the left rows
    Matrix dp;  // gradient on the right rows
};

// S = Zn Pn^T with Zn, Pn the row-normalized inputs.
CosineBackward cosine_backward(const Matrix& ds, const Matrix& s, const Matrix& zn,
                               const Matrix& pn, const Vector& z_norms,
                               const Vector& p_norms) {
    CosineBackward out;
    Vector row_dot = (ds.array() * s.array()).rowwise().sum();
    out.dz = ds * pn;
    out.dz.array() -= zn.array().colwise() * row_dot.array();
    out.dz.array().colwise() /= z_norms.array();
    Vector col_dot = (ds.array() * s.array()).colwise().sum().transpose();
    out.dp = ds.transpose() * zn;
    out.dp.array() -= pn.array().colwise() * col_dot.array();
    out.dp.array().colwise() /= p_norms.array();
    return out;
}

Matrix normalize_rows(const Matrix& m, Vector& norms, const char* what) {
    norms = m.rowwise().norm();
    if ((norms.array() == 0.0).any())
        throw numeric_error(std::string("zero-norm ") + what + " embedding");
    return m.array().colwise() / norms.array();
}

struct ForwardState {
    GcnCache gcn;
    HeadCache head;
    Matrix comp;          // C x d candidate embeddings
    Matrix zn, pn, s, g;  // normalized rows, cosines, logits
    Vector z_norms, p_norms;
    double loss = 0.0;
};

ForwardState run_forward(const Batch& batch, const Model& model, const StepContext& ctx) {
    ForwardState st;
    st.head = head_forward_with_masks(batch.x, model.head, ctx.mask1, ctx.mask2);
    const Matrix* node_source = nullptr;
    if (model.kind == ModelKind::CoCge) {
        st.gcn = gcn_forward_cached(ctx.graph->adj_norm, ctx.graph->v0, model.gcn);
        node_source = &st.gcn.output;
    } else {
        node_source = &ctx.graph->v0;
    }
    const int n_cand = static_cast<int>(ctx.cand_nodes.size());
    st.comp.resize(n_cand, node_source->cols());
    for (int c = 0; c < n_cand; ++c) st.comp.row(c) = node_source->row(ctx.cand_nodes[c]);

    st.zn = normalize_rows(st.head.out, st.z_norms, "image");
    st.pn = normalize_rows(st.comp, st.p_norms, "composition");
    st.s = st.zn * st.pn.transpose();

    st.g = st.s;
    for (int c = 0; c < n_cand; ++c) {
        if (ctx.cand_seen[c]) continue;
        const double rho = ctx.clamp_rho ? std::max(0.0, ctx.cand_rho[c]) : ctx.cand_rho[c];
        st.g.col(c).array() -= ctx.alpha * rho;
    }
    st.g /= ctx.temperature;
    st.loss = softmax_cross_entropy(st.g, batch.label_cols);
    return st;
}

}  // namespace

double forward_loss(const Batch& batch, const Model& model, const StepContext& ctx) {
    return run_forward(batch, model, ctx).loss;
}

std::pair<double, GradientSet> backward(const Batch& batch, const Model& model,
                                        const StepContext& ctx) {
    ForwardState st = run_forward(batch, model, ctx);
    const Eigen::Index b = batch.x.rows();
    const int n_cand = static_cast<int>(ctx.cand_nodes.size());

    // d loss / d logits: (softmax - onehot) / B
    Matrix dg(b, n_cand);
    for (Eigen::Index i = 0; i < b; ++i) {
        Eigen::RowVectorXd e = (st.g.row(i).array() - st.g.row(i).maxCoeff()).exp();
        dg.row(i) = e / e.sum();
        dg(i, batch.label_cols[static_cast<std::size_t>(i)]) -= 1.0;
    }
    dg /= static_cast<double>(b);
    Matrix ds = dg / ctx.temperature;

    auto cosine = cosine_backward(ds, st.s, st.zn, st.pn, st.z_norms, st.p_norms);

    GradientSet grads = GradientSet::zeros_like(model);
    HeadGrads hg = head_backward(cosine.dz, st.head, model.head);
    grads.w1 = std::move(hg.w1);
    grads.b1 = std::move(hg.b1);
    grads.ln1_gamma = std::move(hg.g1);
    grads.ln1_beta = std::move(hg.be1);
    grads.w2 = std::move(hg.w2);
    grads.b2 = std::move(hg.b2);
    grads.ln2_gamma = std::move(hg.g2);
    grads.ln2_beta = std::move(hg.be2);
    grads.w3 = std::move(hg.w3);
    grads.b3 = std::move(hg.b3);

    if (model.kind == ModelKind::CoCge) {
        const Matrix& adj_norm = ctx.graph->adj_norm;
        Matrix dphi = Matrix::Zero(st.gcn.output.rows(), st.gcn.output.cols());
        for (int c = 0; c < n_cand; ++c) dphi.row(ctx.cand_nodes[c]) += cosine.dp.row(c);

        const auto n_layers = model.gcn.weights.size();
        Matrix dh = std::move(dphi);
        for (std::size_t l = n_layers; l-- > 0;) {
            Matrix dpre = (l == n_layers - 1)
                              ? std::move(dh)
                              : dh.cwiseProduct(
                                    (st.gcn.pre_act[l].array() > 0.0).cast<double>().matrix());
            grads.gcn[l] = st.gcn.propagated[l].transpose() * dpre;
            if (l > 0) dh = adj_norm.transpose() * (dpre * model.gcn.weights[l].transpose());
        }
    }

    auto finite = [](const char* name, const auto& t) {
        if (!t.allFinite()) throw numeric_error(std::string("non-finite gradient for tensor: ") + name);
    };
    for (std::size_t l = 0; l < grads.gcn.size(); ++l) finite("gcn", grads.gcn[l]);
    finite("head.w1", grads.w1);
    finite("head.b1", grads.b1);
    finite("head.ln1.gamma", grads.ln1_gamma);
    finite("head.ln1.beta", grads.ln1_beta);
    finite("head.w2", grads.w2);
    finite("head.b2", grads.b2);
    finite("head.ln2.gamma", grads.ln2_gamma);
    finite("head.ln2.beta", grads.ln2_beta);
    finite("head.w3", grads.w3);
    finite("head.b3", grads.b3);
    return {st.loss, std::move(grads)};
}

// --- training loops -----------------------------------------------------------

namespace {

struct Candidates {
    std::vector<int> nodes;
    std::vector<Pair> pairs;
    std::vector<bool> seen;
    std::map<Pair, int> col_of;
};

Candidates make_candidates(const NodeIndex& index, bool seen_only) {
    Candidates c;
    for (int i = 0; i < index.n_comps(); ++i) {
        if (seen_only && !index.comp_seen[i]) continue;
        c.col_of[index.compositions[i]] = static_cast<int>(c.nodes.size());
        c.nodes.push_back(index.comp_node_of(i));
        c.pairs.push_back(index.compositions[i]);
        c.seen.push_back(index.comp_seen[i]);
    }
    return c;
}

std::vector<double> candidate_rho(const Candidates& cand, const FeasibilityTable& feas) {
    std::vector<double> rho(cand.pairs.size());
    for (std::size_t i = 0; i < cand.pairs.size(); ++i)
        rho[i] = feas.at(cand.pairs[i].first, cand.pairs[i].second);
    return rho;
}

ModelDims dims_from_config(const Dataset& ds, const TrainConfig& cfg) {
    ModelDims dims;
    if (ds.train.empty()) throw config_error("training split is empty");
    dims.feature_dim = static_cast<int>(ds.train[0].feature.size());
    dims.embed_dim = ds.embeddings.dim;
    dims.gcn_hidden = cfg.gcn_hidden > 0 ? cfg.gcn_hidden : dims.embed_dim;
    dims.shared_dim = cfg.shared_dim > 0 ? cfg.shared_dim : dims.embed_dim;
    dims.img_hidden = cfg.img_hidden;
    dims.dropout = cfg.dropout;
    return dims;
}

FeasibilityTable table_from_graph(const Model& model, const CompositionalGraph& graph,
                                  const Vocabulary& vocab, MixRule mix_rule) {
    Matrix node_emb = gcn_forward(graph, model.gcn);
    return compute_table(PrimitiveEmbeddings::from_node_embeddings(node_emb, graph.index),
                         vocab, mix_rule);
}

}  // namespace

TrainResult train(const Dataset& ds, const TrainConfig& config) {
    config.validate();
    ds.vocab.validate();
    const ModelDims dims = dims_from_config(ds, config);
    const Vocabulary& vocab = ds.vocab;

    Rng root(config.seed);
    Model model = init_model(ModelKind::CoCge, dims, vocab.n_states(), vocab.n_objects(),
                             root.split("init"));
    Rng dropout_rng = root.split("dropout");
    Rng shuffle_root = root.split("shuffle");

    const WorldMode world =
        config.mode == TrainMode::Closed ? WorldMode::Closed : WorldMode::Open;
    CompositionalGraph graph;
    graph.index = build_node_index(vocab, world);
    graph.v0 = init_node_features(graph.index, ds.embeddings, vocab);
    graph.adj = build_adjacency_closed(graph.index);
    graph.adj_norm = normalize_adjacency(graph.adj);

    // open-world training contrasts against every composition column
    Candidates cand =
        make_candidates(graph.index, /*seen_only=*/config.mode == TrainMode::Closed);

    std::vector<int> train_label_cols(ds.train.size());
    for (std::size_t i = 0; i < ds.train.size(); ++i) {
        auto it = cand.col_of.find({ds.train[i].state, ds.train[i].object});
        if (it == cand.col_of.end())
            throw config_error("training sample " + ds.train[i].id + " has a non-seen label");
        train_label_cols[i] = it->second;
    }
    Matrix all_x = stack_features(ds.train);

    AdamState opt = AdamState::init(model);
    FeasibilityTable feas = FeasibilityTable::all_ones(vocab);

    TrainResult result;
    result.best_val_auc = -1.0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        if (config.mode != TrainMode::Closed) {
            feas = table_from_graph(model, graph, vocab, config.mix_rule);
            if (config.mode == TrainMode::Open) {
                graph.adj = build_adjacency_feasibility(graph.index, feas, config.switches);
                graph.adj_norm = normalize_adjacency(graph.adj);
            }
        }
        const double alpha =
            config.mode == TrainMode::Closed ? 0.0 : alpha_at(epoch, config.loss);
        const std::vector<double> rho_cols = candidate_rho(cand, feas);

        std::vector<int> order(ds.train.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng = shuffle_root.split(static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            Batch batch;
            batch.x.resize(static_cast<Eigen::Index>(stop - start), dims.feature_dim);
            batch.label_cols.resize(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                batch.x.row(static_cast<Eigen::Index>(i - start)) = all_x.row(order[i]);
                batch.label_cols[i - start] = train_label_cols[order[i]];
            }
            StepContext ctx;
            ctx.graph = &graph;
            ctx.cand_nodes = cand.nodes;
            ctx.cand_pairs = cand.pairs;
            ctx.cand_seen = cand.seen;
            ctx.cand_rho = rho_cols;
            ctx.alpha = alpha;
            ctx.temperature = config.loss.temperature;
            ctx.clamp_rho = config.loss.clamp_margin_rho_at_zero;
            if (config.dropout > 0) {
                ctx.mask1 = dropout_mask(batch.x.rows(), model.head.w1.cols(), config.dropout,
                                         dropout_rng);
                ctx.mask2 = dropout_mask(batch.x.rows(), model.head.w2.cols(), config.dropout,
                                         dropout_rng);
            }
            auto [loss, grads] = backward(batch, model, ctx);
            adam_step(model, grads, opt, config);
            loss_sum += loss * static_cast<double>(stop - start);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.alpha = alpha;
        rec.mean_loss = loss_sum / static_cast<double>(order.size());

        if (config.eval_every > 0 && (epoch + 1) % config.eval_every == 0) {
            GraphPlan plan{world, config.mode == TrainMode::Open, config.switches};
            const WorldMode eval_mode =
                config.mode == TrainMode::Closed ? WorldMode::Closed : WorldMode::Open;
            EvalReport rep = evaluate(model, feas, ds, ds.val, eval_mode, plan,
                                      config.loss.temperature);
            rec.evaluated = true;
            rec.val_auc = rep.auc;
            rec.val_best_hm = rep.best_hm;
            rec.val_best_seen = rep.best_seen;
            rec.val_best_unseen = rep.best_unseen;
            if (rep.auc > result.best_val_auc) {
                result.best_val_auc = rep.auc;
                result.best_epoch = epoch;
                result.model = model;
                result.feasibility = config.mode == TrainMode::Closed
                                         ? table_from_graph(model, graph, vocab, config.mix_rule)
                                         : feas;
                rec.is_best = true;
            }
        }
        result.log.push_back(rec);
    }

    if (result.best_epoch < 0) {  // never evaluated: keep the final model
        result.best_epoch = config.epochs - 1;
        result.model = model;
        result.feasibility = config.mode == TrainMode::Closed
                                 ? table_from_graph(model, graph, vocab, config.mix_rule)
                                 : feas;
    }
    return result;
}

// --- visual product baseline -----------------------------------------------------

namespace {

struct VpBackward {
    double loss = 0.0;
    Matrix dz;
    Matrix dprotos;
};

// one cosine classifier: CE(cos(z, protos)/T, labels)
VpBackward vp_classifier_backward(const Matrix& z, const Matrix& zn, const Vector& z_norms,
                                  const Matrix& protos, const std::vector<int>& labels,
                                  double temperature) {
    VpBackward out;
    Vector p_norms;
    Matrix pn = normalize_rows(protos, p_norms, "prototype");
    Matrix s = zn * pn.transpose();
    Matrix logits = s / temperature;
    out.loss = softmax_cross_entropy(logits, labels);
    const Eigen::Index b = z.rows();
    Matrix dlogits(b, protos.rows());
    for (Eigen::Index i = 0; i < b; ++i) {
        Eigen::RowVectorXd e = (logits.row(i).array() - logits.row(i).maxCoeff()).exp();
        dlogits.row(i) = e / e.sum();
        dlogits(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    }
    dlogits /= static_cast<double>(b);
    Matrix ds = dlogits / temperature;
    auto cb = cosine_backward(ds, s, zn, pn, z_norms, p_norms);
    out.dz = std::move(cb.dz);
    out.dprotos = std::move(cb.dp);
    return out;
}

}  // namespace

TrainResult train_visual_product(const Dataset& ds, const TrainConfig& config) {
    config.validate();
    ds.vocab.validate();
    const ModelDims dims = dims_from_config(ds, config);
    const Vocabulary& vocab = ds.vocab;

    Rng root(config.seed);
    Model model = init_model(ModelKind::VisualProduct, dims, vocab.n_states(),
                             vocab.n_objects(), root.split("init"));
    Rng dropout_rng = root.split("dropout");
    Rng shuffle_root = root.split("shuffle");

    Matrix all_x = stack_features(ds.train);
    const std::vector<int> s_labels = state_labels(ds.train);
    const std::vector<int> o_labels = object_labels(ds.train);

    AdamState opt = AdamState::init(model);
    TrainResult result;
    result.best_val_auc = -1.0;

    const WorldMode eval_mode =
        config.mode == TrainMode::Closed ? WorldMode::Closed : WorldMode::Open;
    GraphPlan plan{eval_mode, false, config.switches};

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<int> order(ds.train.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng = shuffle_root.split(static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            const Eigen::Index b = static_cast<Eigen::Index>(stop - start);
            Matrix x(b, dims.feature_dim);
            std::vector<int> bs(stop - start), bo(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                x.row(static_cast<Eigen::Index>(i - start)) = all_x.row(order[i]);
                bs[i - start] = s_labels[order[i]];
                bo[i - start] = o_labels[order[i]];
            }
            Matrix m1, m2;
            if (config.dropout > 0) {
                m1 = dropout_mask(b, model.head.w1.cols(), config.dropout, dropout_rng);
                m2 = dropout_mask(b, model.head.w2.cols(), config.dropout, dropout_rng);
            }
            HeadCache head = head_forward_with_masks(x, model.head, m1, m2);
            Vector z_norms;
            Matrix zn = normalize_rows(head.out, z_norms, "image");
            auto state_side = vp_classifier_backward(head.out, zn, z_norms, model.state_protos,
                                                     bs, config.loss.temperature);
            auto object_side = vp_classifier_backward(head.out, zn, z_norms,
                                                      model.object_protos, bo,
                                                      config.loss.temperature);
            GradientSet grads = GradientSet::zeros_like(model);
            grads.state_protos = std::move(state_side.dprotos);
            grads.object_protos = std::move(object_side.dprotos);
            HeadGrads hg = head_backward(state_side.dz + object_side.dz, head, model.head);
            grads.w1 = std::move(hg.w1);
            grads.b1 = std::move(hg.b1);
            grads.ln1_gamma = std::move(hg.g1);
            grads.ln1_beta = std::move(hg.be1);
            grads.w2 = std::move(hg.w2);
            grads.b2 = std::move(hg.b2);
            grads.ln2_gamma = std::move(hg.g2);
            grads.ln2_beta = std::move(hg.be2);
            grads.w3 = std::move(hg.w3);
            grads.b3 = std::move(hg.b3);
            adam_step(model, grads, opt, config);
            loss_sum += (state_side.loss + object_side.loss) * static_cast<double>(b);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.mean_loss = loss_sum / static_cast<double>(ds.train.size());
        if (config.eval_every > 0 && (epoch + 1) % config.eval_every == 0) {
            FeasibilityTable feas = FeasibilityTable::all_ones(vocab);
            EvalReport rep = evaluate(model, feas, ds, ds.val, eval_mode, plan,
                                      config.loss.temperature);
            rec.evaluated = true;
            rec.val_auc = rep.auc;
            rec.val_best_hm = rep.best_hm;
            rec.val_best_seen = rep.best_seen;
            rec.val_best_unseen = rep.best_unseen;
            if (rep.auc > result.best_val_auc) {
                result.best_val_auc = rep.auc;
                result.best_epoch = epoch;
                result.model = model;
                rec.is_best = true;
            }
        }
        result.log.push_back(rec);
    }
    if (result.best_epoch < 0) {
        result.best_epoch = config.epochs - 1;
        result.model = model;
    }
    // prototypes act as the primitive embeddings of this baseline
    PrimitiveEmbeddings prim{result.model.state_protos, result.model.object_protos};
    result.feasibility = compute_table(prim, vocab, config.mix_rule);
    return result;
}

TrainResult train_word_avg(const Dataset& ds, const TrainConfig& config) {
    config.validate();
    ds.vocab.validate();
    TrainConfig cfg = config;
    cfg.shared_dim = ds.embeddings.dim;  // scores against raw word embeddings
    const ModelDims dims = dims_from_config(ds, cfg);
    const Vocabulary& vocab = ds.vocab;

    Rng root(cfg.seed);
    Model model =
        init_model(ModelKind::WordAvg, dims, vocab.n_states(), vocab.n_objects(),
                   root.split("init"));
    Rng dropout_rng = root.split("dropout");
    Rng shuffle_root = root.split("shuffle");

    const WorldMode world = cfg.mode == TrainMode::Closed ? WorldMode::Closed : WorldMode::Open;
    CompositionalGraph graph;
    graph.index = build_node_index(vocab, world);
    graph.v0 = init_node_features(graph.index, ds.embeddings, vocab);
    graph.adj = build_adjacency_closed(graph.index);
    graph.adj_norm = normalize_adjacency(graph.adj);

    Candidates cand = make_candidates(graph.index, /*seen_only=*/true);
    std::vector<int> label_cols(ds.train.size());
    for (std::size_t i = 0; i < ds.train.size(); ++i)
        label_cols[i] = cand.col_of.at({ds.train[i].state, ds.train[i].object});
    Matrix all_x = stack_features(ds.train);

    AdamState opt = AdamState::init(model);
    FeasibilityTable ones = FeasibilityTable::all_ones(vocab);
    TrainResult result;
    result.best_val_auc = -1.0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> order(ds.train.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng = shuffle_root.split(static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            Batch batch;
            batch.x.resize(static_cast<Eigen::Index>(stop - start), dims.feature_dim);
            batch.label_cols.resize(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                batch.x.row(static_cast<Eigen::Index>(i - start)) = all_x.row(order[i]);
                batch.label_cols[i - start] = label_cols[order[i]];
            }
            StepContext ctx;
            ctx.graph = &graph;
            ctx.cand_nodes = cand.nodes;
            ctx.cand_pairs = cand.pairs;
            ctx.cand_seen = cand.seen;
            ctx.cand_rho.assign(cand.pairs.size(), 1.0);
            ctx.alpha = 0.0;
            ctx.temperature = cfg.loss.temperature;
            if (cfg.dropout > 0) {
                ctx.mask1 = dropout_mask(batch.x.rows(), model.head.w1.cols(), cfg.dropout,
                                         dropout_rng);
                ctx.mask2 = dropout_mask(batch.x.rows(), model.head.w2.cols(), cfg.dropout,
                                         dropout_rng);
            }
            auto [loss, grads] = backward(batch, model, ctx);
            adam_step(model, grads, opt, cfg);
            loss_sum += loss * static_cast<double>(stop - start);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.mean_loss = loss_sum / static_cast<double>(ds.train.size());
        if (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0) {
            const WorldMode eval_mode =
                cfg.mode == TrainMode::Closed ? WorldMode::Closed : WorldMode::Open;
            GraphPlan plan{world, false, cfg.switches};
            EvalReport rep = evaluate(model, ones, ds, ds.val, eval_mode, plan,
                                      cfg.loss.temperature);
            rec.evaluated = true;
            rec.val_auc = rep.auc;
            rec.val_best_hm = rep.best_hm;
            rec.val_best_seen = rep.best_seen;
            rec.val_best_unseen = rep.best_unseen;
            if (rep.auc > result.best_val_auc) {
                result.best_val_auc = rep.auc;
                result.best_epoch = epoch;
                result.model = model;
                rec.is_best = true;
            }
        }
        result.log.push_back(rec);
    }
    if (result.best_epoch < 0) {
        result.best_epoch = cfg.epochs - 1;
        result.model = model;
    }
    // direct word-embedding feasibility: raw primitive vectors
    Matrix states(vocab.n_states(), ds.embeddings.dim);
    Matrix objects(vocab.n_objects(), ds.embeddings.dim);
    for (int s = 0; s < vocab.n_states(); ++s)
        states.row(s) = ds.embeddings.at(vocab.states[s]).transpose();
    for (int o = 0; o < vocab.n_objects(); ++o)
        objects.row(o) = ds.embeddings.at(vocab.objects[o]).transpose();
    result.feasibility = compute_table({states, objects}, vocab, cfg.mix_rule);
    return result;
}

// --- checkpoints -------------------------------------------------------------------

namespace {

json config_to_json(const TrainConfig& c) {
    return json{{"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate},
                {"weight_decay", c.weight_decay},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"adam_eps", c.adam_eps},
                {"seed", c.seed},
                {"mode", to_string(c.mode)},
                {"eval_every", c.eval_every},
                {"temperature", c.loss.temperature},
                {"alpha_max", c.loss.alpha_max},
                {"warmup_epochs", c.loss.warmup_epochs},
                {"clamp_margin_rho_at_zero", c.loss.clamp_margin_rho_at_zero},
                {"edge_so", c.switches.state_object ? "rho" : "one"},
                {"edge_pc", c.switches.prim_to_comp ? "rho" : "one"},
                {"edge_cp", c.switches.comp_to_prim ? "rho" : "one"},
                {"mix", to_string(c.mix_rule)},
                {"gcn_hidden", c.gcn_hidden},
                {"shared_dim", c.shared_dim},
                {"img_hidden", c.img_hidden},
                {"dropout", c.dropout}};
}

TrainConfig config_from_json(const json& j) {
    TrainConfig c;
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.adam_eps = j.at("adam_eps").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.mode = parse_train_mode(j.at("mode").get<std::string>());
    c.eval_every = j.at("eval_every").get<int>();
    c.loss.temperature = j.at("temperature").get<double>();
    c.loss.alpha_max = j.at("alpha_max").get<double>();
    c.loss.warmup_epochs = j.at("warmup_epochs").get<int>();
    c.loss.clamp_margin_rho_at_zero = j.at("clamp_margin_rho_at_zero").get<bool>();
    c.switches.state_object = j.at("edge_so").get<std::string>() == "rho";
    c.switches.prim_to_comp = j.at("edge_pc").get<std::string>() == "rho";
    c.switches.comp_to_prim = j.at("edge_cp").get<std::string>() == "rho";
    c.mix_rule = parse_mix_rule(j.at("mix").get<std::string>());
    c.gcn_hidden = j.at("gcn_hidden").get<int>();
    c.shared_dim = j.at("shared_dim").get<int>();
    c.img_hidden = j.at("img_hidden").get<int>();
    c.dropout = j.at("dropout").get<double>();
    return c;
}

}  // namespace

void save_model_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    json manifest;
    manifest["format"] = "cocge-checkpoint";
    manifest["kind"] = to_string(ckpt.model.kind);
    manifest["config"] = config_to_json(ckpt.config);
    manifest["best_epoch"] = ckpt.best_epoch;
    manifest["gcn_layers"] = ckpt.model.gcn.weights.size();

    NamedTensors t;
    for (std::size_t i = 0; i < ckpt.model.gcn.weights.size(); ++i)
        t.add("gcn.w" + std::to_string(i), ckpt.model.gcn.weights[i]);
    const auto& h = ckpt.model.head;
    t.add("head.w1", h.w1);
    t.add("head.b1", h.b1);
    t.add("head.ln1.gamma", h.ln1.gamma);
    t.add("head.ln1.beta", h.ln1.beta);
    t.add("head.w2", h.w2);
    t.add("head.b2", h.b2);
    t.add("head.ln2.gamma", h.ln2.gamma);
    t.add("head.ln2.beta", h.ln2.beta);
    t.add("head.w3", h.w3);
    t.add("head.b3", h.b3);
    t.add("head.dropout", Matrix(Matrix::Constant(1, 1, h.dropout_p)));
    if (ckpt.model.state_protos.size() > 0) {
        t.add("vp.state_protos", ckpt.model.state_protos);
        t.add("vp.object_protos", ckpt.model.object_protos);
    }
    t.add("feasibility.rho", ckpt.feasibility.rho);
    Matrix seen(ckpt.feasibility.rho.rows(), ckpt.feasibility.rho.cols());
    for (Eigen::Index s = 0; s < seen.rows(); ++s)
        for (Eigen::Index o = 0; o < seen.cols(); ++o)
            seen(s, o) = ckpt.feasibility.seen[static_cast<std::size_t>(s)]
                                              [static_cast<std::size_t>(o)] ? 1.0 : 0.0;
    t.add("feasibility.seen", seen);
    save_checkpoint(path, manifest, t);
}

Checkpoint load_model_checkpoint(const std::string& path) {
    auto [manifest, t] = load_checkpoint(path);
    if (!manifest.contains("format") || manifest["format"] != "cocge-checkpoint")
        throw config_error(path + ": not a model checkpoint");
    Checkpoint ckpt;
    ckpt.model.kind = parse_model_kind(manifest.at("kind").get<std::string>());
    ckpt.config = config_from_json(manifest.at("config"));
    ckpt.best_epoch = manifest.at("best_epoch").get<int>();
    const auto layers = manifest.at("gcn_layers").get<std::size_t>();
    for (std::size_t i = 0; i < layers; ++i)
        ckpt.model.gcn.weights.push_back(t.at("gcn.w" + std::to_string(i)));
    auto& h = ckpt.model.head;
    h.w1 = t.at("head.w1");
    h.b1 = t.at("head.b1");
    h.ln1 = {Vector(t.at("head.ln1.gamma")), Vector(t.at("head.ln1.beta"))};
    h.w2 = t.at("head.w2");
    h.b2 = t.at("head.b2");
    h.ln2 = {Vector(t.at("head.ln2.gamma")), Vector(t.at("head.ln2.beta"))};
    h.w3 = t.at("head.w3");
    h.b3 = t.at("head.b3");
    h.dropout_p = t.at("head.dropout")(0, 0);
    if (t.contains("vp.state_protos")) {
        ckpt.model.state_protos = t.at("vp.state_protos");
        ckpt.model.object_protos = t.at("vp.object_protos");
    }
    ckpt.feasibility.rho = t.at("feasibility.rho");
    const Matrix& seen = t.at("feasibility.seen");
    ckpt.feasibility.seen.assign(static_cast<std::size_t>(seen.rows()),
                                 std::vector<bool>(static_cast<std::size_t>(seen.cols()), false));
    for (Eigen::Index s = 0; s < seen.rows(); ++s)
        for (Eigen::Index o = 0; o < seen.cols(); ++o)
            ckpt.feasibility.seen[static_cast<std::size_t>(s)][static_cast<std::size_t>(o)] =
                seen(s, o) != 0.0;
    return ckpt;
}

GraphPlan graph_plan_for(const Checkpoint& ckpt, WorldMode eval_mode) {
    GraphPlan plan;
    plan.node_world = (ckpt.config.mode != TrainMode::Closed || eval_mode == WorldMode::Open)
                          ? WorldMode::Open
                          : WorldMode::Closed;
    plan.weighted = ckpt.config.mode == TrainMode::Open && ckpt.model.kind == ModelKind::CoCge;
    plan.switches = ckpt.config.switches;
    return plan;
}

EvalReport evaluate_checkpoint(const Checkpoint& ckpt, const Dataset& ds,
                               const std::vector<Sample>& samples, WorldMode eval_mode,
                               std::optional<double> hard_tau) {
    return evaluate(ckpt.model, ckpt.feasibility, ds, samples, eval_mode,
                    graph_plan_for(ckpt, eval_mode), ckpt.config.loss.temperature, hard_tau);
}

FeasibilityTable initial_feasibility(const Dataset& ds, const TrainConfig& config) {
    config.validate();
    ds.vocab.validate();
    const ModelDims dims = dims_from_config(ds, config);
    Model model = init_model(ModelKind::CoCge, dims, ds.vocab.n_states(),
                             ds.vocab.n_objects(), Rng(config.seed).split("init"));
    const WorldMode world =
        config.mode == TrainMode::Closed ? WorldMode::Closed : WorldMode::Open;
    CompositionalGraph graph = build_graph(ds.vocab, ds.embeddings, world);
    return table_from_graph(model, graph, ds.vocab, config.mix_rule);
}

double select_tau_checkpoint(const Checkpoint& ckpt, const Dataset& ds, WorldMode eval_mode) {
    ScoredSplit split = score_split(ckpt.model, ckpt.feasibility, ds, ds.val, eval_mode,
                                    graph_plan_for(ckpt, eval_mode),
                                    ckpt.config.loss.temperature);
    return select_tau(split.scores, split.label_cols, ckpt.feasibility, split.candidate_mask);
}

std::string metrics_log_json(const std::vector<EpochRecord>& log) {
    std::string out;
    for (const auto& rec : log) {
        json j{{"epoch", rec.epoch},
               {"alpha", rec.alpha},
               {"mean_loss", rec.mean_loss}};
        if (rec.evaluated) {
            j["val_auc"] = rec.val_auc;
            j["val_best_hm"] = rec.val_best_hm;
            j["val_best_seen"] = rec.val_best_seen;
            j["val_best_unseen"] = rec.val_best_unseen;
            j["is_best"] = rec.is_best;
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

}  // namespace cocge
