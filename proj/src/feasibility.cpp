#include "cocge/feasibility.hpp"

#include <cstdio>
#include <sstream>

namespace cocge {

MixRule parse_mix_rule(const std::string& s) {
    if (s == "avg") return MixRule::Avg;
    if (s == "max") return MixRule::Max;
    throw config_error("unknown mixing function '" + s + "' (want avg|max)");
}

std::string to_string(MixRule g) { return g == MixRule::Avg ? "avg" : "max"; }

PrimitiveEmbeddings PrimitiveEmbeddings::from_node_embeddings(const Matrix& node_emb,
                                                              const NodeIndex& index) {
    PrimitiveEmbeddings p;
    p.states = node_emb.topRows(index.n_states);
    p.objects = node_emb.middleRows(index.n_states, index.n_objects);
    return p;
}

namespace {

double cosine_rows(const Matrix& m, int i, int j) {
    const double ni = m.row(i).norm();
    const double nj = m.row(j).norm();
    if (ni == 0.0 || nj == 0.0)
        throw numeric_error("zero-norm primitive embedding in feasibility computation");
    return m.row(i).dot(m.row(j)) / (ni * nj);
}

}  // namespace

double rho_obj(int s, int o, const PrimitiveEmbeddings& emb, const Vocabulary& vocab) {
    double best = -1.0;
    bool any = false;
    for (const auto& [ss, oo] : vocab.seen_pairs) {
        if (ss != s) continue;
        any = true;
        best = std::max(best, cosine_rows(emb.objects, o, oo));
    }
    if (!any)
        throw numeric_error("state '" + vocab.states[s] + "' has no seen objects");
    return best;
}

double rho_state(int s, int o, const PrimitiveEmbeddings& emb, const Vocabulary& vocab) {
    double best = -1.0;
    bool any = false;
    for (const auto& [ss, oo] : vocab.seen_pairs) {
        if (oo != o) continue;
        any = true;
        best = std::max(best, cosine_rows(emb.states, s, ss));
    }
    if (!any)
        throw numeric_error("object '" + vocab.objects[o] + "' has no seen states");
    return best;
}

double mix(double rs, double ro, MixRule g) {
    return g == MixRule::Avg ? 0.5 * (rs + ro) : std::max(rs, ro);
}

FeasibilityTable compute_table(const PrimitiveEmbeddings& emb, const Vocabulary& vocab,
                               MixRule g) {
    FeasibilityTable t;
    t.rho.resize(vocab.n_states(), vocab.n_objects());
    t.seen.assign(vocab.n_states(), std::vector<bool>(vocab.n_objects(), false));
    for (const auto& [s, o] : vocab.seen_pairs) t.seen[s][o] = true;
    for (int s = 0; s < vocab.n_states(); ++s) {
        for (int o = 0; o < vocab.n_objects(); ++o) {
            if (t.seen[s][o]) {
                t.rho(s, o) = 1.0;
            } else {
                t.rho(s, o) = mix(rho_state(s, o, emb, vocab), rho_obj(s, o, emb, vocab), g);
            }
        }
    }
    return t;
}

FeasibilityTable compute_table_direct(const PrimitiveEmbeddings& emb, const Vocabulary& vocab) {
    FeasibilityTable t;
    t.rho.resize(vocab.n_states(), vocab.n_objects());
    t.seen.assign(vocab.n_states(), std::vector<bool>(vocab.n_objects(), false));
    for (const auto& [s, o] : vocab.seen_pairs) t.seen[s][o] = true;
    for (int s = 0; s < vocab.n_states(); ++s) {
        const double sn = emb.states.row(s).norm();
        for (int o = 0; o < vocab.n_objects(); ++o) {
            if (t.seen[s][o]) {
                t.rho(s, o) = 1.0;
                continue;
            }
            const double on = emb.objects.row(o).norm();
            if (sn == 0.0 || on == 0.0)
                throw numeric_error("zero-norm primitive embedding in feasibility computation");
            t.rho(s, o) = emb.states.row(s).dot(emb.objects.row(o)) / (sn * on);
        }
    }
    return t;
}

std::string feasibility_to_csv(const FeasibilityTable& table, const Vocabulary& vocab) {
    std::ostringstream out;
    out << "state,object,rho,seen\n";
    char buf[40];
    for (int s = 0; s < vocab.n_states(); ++s) {
        for (int o = 0; o < vocab.n_objects(); ++o) {
            std::snprintf(buf, sizeof(buf), "%.17g", table.rho(s, o));
            out << vocab.states[s] << ',' << vocab.objects[o] << ',' << buf << ','
                << (table.seen[s][o] ? 1 : 0) << '\n';
        }
    }
    return out.str();
}

FeasibilityTable feasibility_from_csv(const std::string& csv_text, const Vocabulary& vocab) {
    std::map<std::string, int> s_idx, o_idx;
    for (int i = 0; i < vocab.n_states(); ++i) s_idx[vocab.states[i]] = i;
    for (int i = 0; i < vocab.n_objects(); ++i) o_idx[vocab.objects[i]] = i;
    FeasibilityTable t;
    t.rho = Matrix::Zero(vocab.n_states(), vocab.n_objects());
    t.seen.assign(vocab.n_states(), std::vector<bool>(vocab.n_objects(), false));
    std::istringstream in(csv_text);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string state, object, rho, seen;
        std::getline(ls, state, ',');
        std::getline(ls, object, ',');
        std::getline(ls, rho, ',');
        std::getline(ls, seen, ',');
        auto si = s_idx.find(state);
        auto oi = o_idx.find(object);
        if (si == s_idx.end() || oi == o_idx.end())
            throw config_error("feasibility csv: unknown primitive in line '" + line + "'");
        t.rho(si->second, oi->second) = std::stod(rho);
        t.seen[si->second][oi->second] = seen == "1";
    }
    return t;
}

}  // namespace cocge
