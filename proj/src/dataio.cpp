#include "cocge/dataio.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace cocge {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream iss(line);
    std::string tok;
    while (iss >> tok) out.push_back(tok);
    return out;
}

std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open file: " + path);
    return in;
}

}  // namespace

void Vocabulary::validate() const {
    for (const auto& [s, o] : seen_pairs) {
        if (s < 0 || s >= n_states() || o < 0 || o >= n_objects())
            throw config_error("seen pair index out of range");
        if (closed_unseen_pairs.count({s, o}))
            throw config_error("pair '" + states[s] + " " + objects[o] +
                               "' is tagged both seen and unseen");
    }
    for (const auto& [s, o] : closed_unseen_pairs) {
        if (s < 0 || s >= n_states() || o < 0 || o >= n_objects())
            throw config_error("unseen pair index out of range");
    }
    std::vector<bool> s_cov(states.size(), false), o_cov(objects.size(), false);
    for (const auto& [s, o] : seen_pairs) {
        s_cov[s] = true;
        o_cov[o] = true;
    }
    std::string missing;
    for (int i = 0; i < n_states(); ++i)
        if (!s_cov[i]) missing += " state:" + states[i];
    for (int i = 0; i < n_objects(); ++i)
        if (!o_cov[i]) missing += " object:" + objects[i];
    if (!missing.empty())
        throw config_error("primitives without any seen pair:" + missing);
}

const Vector& EmbeddingTable::at(const std::string& token) const {
    auto it = vectors.find(token);
    if (it == vectors.end()) throw config_error("no embedding for token '" + token + "'");
    return it->second;
}

// --- split files -------------------------------------------------------------

Vocabulary load_splits(const std::string& pairs_path,
                       const std::vector<std::string>& extra_split_paths) {
    Vocabulary v;
    std::map<std::string, int> s_idx, o_idx;
    auto intern = [](std::vector<std::string>& list, std::map<std::string, int>& idx,
                     const std::string& name) {
        auto it = idx.find(name);
        if (it != idx.end()) return it->second;
        int id = static_cast<int>(list.size());
        list.push_back(name);
        idx.emplace(name, id);
        return id;
    };

    std::vector<std::string> paths{pairs_path};
    paths.insert(paths.end(), extra_split_paths.begin(), extra_split_paths.end());
    for (const auto& path : paths) {
        auto in = open_or_throw(path);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#') continue;
            auto toks = split_ws(line);
            if (toks.empty()) continue;
            if (toks.size() != 3)
                throw config_error(path + ":" + std::to_string(lineno) +
                                   ": expected `state object split_tag`, got '" + line + "'");
            int s = intern(v.states, s_idx, toks[0]);
            int o = intern(v.objects, o_idx, toks[1]);
            const std::string& tag = toks[2];
            if (tag == "train") {
                v.seen_pairs.insert({s, o});
            } else if (tag.find("unseen") != std::string::npos) {
                v.closed_unseen_pairs.insert({s, o});
            } else {
                throw config_error(path + ":" + std::to_string(lineno) +
                                   ": unknown split tag '" + tag + "'");
            }
        }
    }
    v.validate();
    return v;
}

void save_splits(const Vocabulary& vocab, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw config_error("cannot write file: " + path);
    for (const auto& [s, o] : vocab.seen_pairs)
        out << vocab.states[s] << ' ' << vocab.objects[o] << " train\n";
    for (const auto& [s, o] : vocab.closed_unseen_pairs)
        out << vocab.states[s] << ' ' << vocab.objects[o] << " test_unseen\n";
}

// --- token-vector files --------------------------------------------------------

EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab) {
    EmbeddingTable table;
    auto in = open_or_throw(path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto toks = split_ws(line);
        if (toks.size() < 2)
            throw config_error(path + ":" + std::to_string(lineno) + ": expected `token v1 ... vm`");
        int m = static_cast<int>(toks.size()) - 1;
        if (table.dim == 0) table.dim = m;
        if (m != table.dim)
            throw config_error(path + ":" + std::to_string(lineno) + ": dimension mismatch (" +
                               std::to_string(m) + " vs " + std::to_string(table.dim) + ")");
        Vector vec(m);
        for (int i = 0; i < m; ++i) {
            try {
                vec[i] = std::stod(toks[i + 1]);
            } catch (const std::exception&) {
                throw config_error(path + ":" + std::to_string(lineno) + ": bad number '" +
                                   toks[i + 1] + "'");
            }
        }
        if (!all_finite(vec))
            throw config_error(path + ":" + std::to_string(lineno) + ": non-finite value");
        table.vectors[toks[0]] = std::move(vec);
    }
    if (table.dim == 0) throw config_error(path + ": empty embedding file");

    // Multi-word fallback: `faux_leather` -> mean of `faux` and `leather`.
    auto resolve = [&](const std::string& token) -> bool {
        if (table.contains(token)) return true;
        if (token.find('_') == std::string::npos) return false;
        Vector acc = Vector::Zero(table.dim);
        int n = 0;
        std::istringstream iss(token);
        std::string part;
        while (std::getline(iss, part, '_')) {
            if (!table.contains(part)) return false;
            acc += table.vectors.at(part);
            ++n;
        }
        if (n == 0) return false;
        table.vectors[token] = acc / static_cast<double>(n);
        return true;
    };

    std::string missing;
    for (const auto& s : vocab.states)
        if (!resolve(s)) missing += " " + s;
    for (const auto& o : vocab.objects)
        if (!resolve(o)) missing += " " + o;
    if (!missing.empty())
        throw config_error(path + ": tokens without embeddings:" + missing);
    return table;
}

void save_embeddings(const EmbeddingTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw config_error("cannot write file: " + path);
    for (const auto& [token, vec] : table.vectors) {
        out << token;
        for (int i = 0; i < vec.size(); ++i) out << ' ' << fmt_double(vec[i]);
        out << '\n';
    }
}

// --- feature files -------------------------------------------------------------

void save_features(const std::map<std::string, std::vector<Sample>>& by_split,
                   const Vocabulary& vocab, const std::string& stem) {
    std::size_t n = 0;
    int dim = -1;
    for (const auto& [split, samples] : by_split) {
        n += samples.size();
        for (const auto& s : samples) {
            if (dim < 0) dim = static_cast<int>(s.feature.size());
            if (s.feature.size() != dim)
                throw config_error("inconsistent feature dimensions while saving");
        }
    }
    std::ofstream bin(stem + ".bin", std::ios::binary);
    if (!bin) throw config_error("cannot write file: " + stem + ".bin");
    json meta;
    meta["shape"] = {n, static_cast<std::size_t>(std::max(dim, 0))};
    meta["dtype"] = "float64";
    json recs = json::array();
    for (const auto& [split, samples] : by_split) {
        for (const auto& s : samples) {
            // Eigen vectors are contiguous doubles; rely on little-endian hosts.
            bin.write(reinterpret_cast<const char*>(s.feature.data()),
                      static_cast<std::streamsize>(sizeof(double) * s.feature.size()));
            recs.push_back({{"id", s.id},
                            {"state", vocab.states[s.state]},
                            {"object", vocab.objects[s.object]},
                            {"split", split}});
        }
    }
    meta["samples"] = std::move(recs);
    std::ofstream js(stem + ".json");
    if (!js) throw config_error("cannot write file: " + stem + ".json");
    js << meta.dump(2) << '\n';
}

std::map<std::string, std::vector<Sample>> load_features(const std::string& stem,
                                                         const Vocabulary& vocab) {
    std::ifstream js(stem + ".json");
    if (!js) throw config_error("cannot open file: " + stem + ".json");
    json meta = json::parse(js, nullptr, true);
    const std::size_t n = meta.at("shape").at(0).get<std::size_t>();
    const std::size_t dim = meta.at("shape").at(1).get<std::size_t>();
    const auto& recs = meta.at("samples");
    if (recs.size() != n)
        throw config_error(stem + ".json: sample count does not match shape");

    std::ifstream bin(stem + ".bin", std::ios::binary);
    if (!bin) throw config_error("cannot open file: " + stem + ".bin");

    std::map<std::string, int> s_idx, o_idx;
    for (int i = 0; i < vocab.n_states(); ++i) s_idx[vocab.states[i]] = i;
    for (int i = 0; i < vocab.n_objects(); ++i) o_idx[vocab.objects[i]] = i;

    std::map<std::string, std::vector<Sample>> by_split;
    for (const auto& rec : recs) {
        Sample s;
        s.id = rec.at("id").get<std::string>();
        s.feature.resize(static_cast<Eigen::Index>(dim));
        bin.read(reinterpret_cast<char*>(s.feature.data()),
                 static_cast<std::streamsize>(sizeof(double) * dim));
        if (!bin) throw config_error(stem + ".bin: truncated feature data");
        if (!all_finite(s.feature))
            throw config_error(stem + ".bin: non-finite feature for sample " + s.id);
        auto si = s_idx.find(rec.at("state").get<std::string>());
        auto oi = o_idx.find(rec.at("object").get<std::string>());
        if (si == s_idx.end() || oi == o_idx.end())
            throw config_error(stem + ".json: unknown label for sample " + s.id);
        s.state = si->second;
        s.object = oi->second;
        by_split[rec.at("split").get<std::string>()].push_back(std::move(s));
    }
    return by_split;
}

std::map<std::string, std::vector<Sample>> load_features_csv(const std::string& path,
                                                             const Vocabulary& vocab) {
    auto in = open_or_throw(path);
    std::map<std::string, int> s_idx, o_idx;
    for (int i = 0; i < vocab.n_states(); ++i) s_idx[vocab.states[i]] = i;
    for (int i = 0; i < vocab.n_objects(); ++i) o_idx[vocab.objects[i]] = i;

    std::map<std::string, std::vector<Sample>> by_split;
    std::string line;
    int lineno = 0;
    std::getline(in, line);  // header
    ++lineno;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream iss(line);
        std::string cell;
        while (std::getline(iss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 5)
            throw config_error(path + ":" + std::to_string(lineno) + ": expected id,state,object,split,f0,...");
        Sample s;
        s.id = cells[0];
        auto si = s_idx.find(cells[1]);
        auto oi = o_idx.find(cells[2]);
        if (si == s_idx.end() || oi == o_idx.end())
            throw config_error(path + ":" + std::to_string(lineno) + ": unknown label");
        s.state = si->second;
        s.object = oi->second;
        s.feature.resize(static_cast<Eigen::Index>(cells.size() - 4));
        for (std::size_t i = 4; i < cells.size(); ++i) s.feature[static_cast<Eigen::Index>(i - 4)] = std::stod(cells[i]);
        by_split[cells[3]].push_back(std::move(s));
    }
    return by_split;
}

// --- synthetic benchmark ---------------------------------------------------------

SynthSpec SynthSpec::defaults() {
    SynthSpec s;
    s.object_groups = {{0, 1, 2, 3, 4}, {5, 6, 7, 8, 9}};
    s.applicable = {{0, 1, 2, 3, 4, 5}, {6, 7, 8, 9, 10, 11}};
    return s;
}

void SynthSpec::validate() const {
    if (n_states <= 0 || n_objects <= 0 || samples_per_seen_pair <= 0 || feature_dim <= 0)
        throw config_error("synth spec: sizes must be positive");
    if (noise_std < 0) throw config_error("synth spec: noise_std must be >= 0");
    std::vector<int> owner(n_objects, -1);
    for (std::size_t g = 0; g < object_groups.size(); ++g) {
        for (int o : object_groups[g]) {
            if (o < 0 || o >= n_objects)
                throw config_error("synth spec: object index out of range in group " + std::to_string(g));
            if (owner[o] != -1)
                throw config_error("synth spec: object " + std::to_string(o) +
                                   " assigned to groups " + std::to_string(owner[o]) + " and " +
                                   std::to_string(g));
            owner[o] = static_cast<int>(g);
        }
    }
    for (int o = 0; o < n_objects; ++o)
        if (owner[o] == -1)
            throw config_error("synth spec: object " + std::to_string(o) + " is in no group");
    if (applicable.size() != object_groups.size())
        throw config_error("synth spec: applicable must list one state set per group");
    for (std::size_t g = 0; g < applicable.size(); ++g) {
        if (applicable[g].empty())
            throw config_error("synth spec: applicable set for group " + std::to_string(g) + " is empty");
        for (int s : applicable[g])
            if (s < 0 || s >= n_states)
                throw config_error("synth spec: state index out of range in applicable set " +
                                   std::to_string(g));
    }
}

Dataset synthesize(const SynthSpec& spec) {
    spec.validate();
    const int ng = static_cast<int>(spec.object_groups.size());
    std::vector<int> group_of(spec.n_objects);
    for (int g = 0; g < ng; ++g)
        for (int o : spec.object_groups[g]) group_of[o] = g;
    std::vector<std::vector<bool>> state_in_group(ng, std::vector<bool>(spec.n_states, false));
    for (int g = 0; g < ng; ++g)
        for (int s : spec.applicable[g]) state_in_group[g][s] = true;

    Dataset ds;
    for (int s = 0; s < spec.n_states; ++s) ds.vocab.states.push_back("state" + std::to_string(s));
    for (int o = 0; o < spec.n_objects; ++o) ds.vocab.objects.push_back("object" + std::to_string(o));

    PairSet feasible;
    for (int s = 0; s < spec.n_states; ++s)
        for (int o = 0; o < spec.n_objects; ++o)
            if (state_in_group[group_of[o]][s]) feasible.insert({s, o});
    ds.feasible_gt = feasible;

    Rng root(spec.seed);

    // feature-space prototypes: objects are drawn independently (group
    // membership lives in the embeddings, not in pixels), state offsets
    // deliberately small against the default noise level so state identity
    // is the hard part of the problem
    const int F = spec.feature_dim;
    Rng proto_rng = root.split("synth.prototypes");
    std::vector<Vector> mu(spec.n_objects);
    for (int o = 0; o < spec.n_objects; ++o) {
        mu[o] = Vector(F);
        for (int i = 0; i < F; ++i) mu[o][i] = 0.45 * proto_rng.normal();
    }
    // paired state offsets: states at the same rank of their groups'
    // applicable lists render almost identically, so twin compositions
    // across groups are visually confusable and only feasibility separates
    // them
    std::vector<int> rank_of(spec.n_states, -1);
    int n_ranks = 0;
    for (int g = 0; g < ng; ++g)
        for (std::size_t i = 0; i < spec.applicable[g].size(); ++i) {
            int s = spec.applicable[g][i];
            if (rank_of[s] == -1) rank_of[s] = static_cast<int>(i);
            n_ranks = std::max(n_ranks, rank_of[s] + 1);
        }
    std::vector<Vector> rank_base(n_ranks);
    for (int r = 0; r < n_ranks; ++r) {
        rank_base[r] = Vector(F);
        for (int i = 0; i < F; ++i) rank_base[r][i] = 0.12 * proto_rng.normal();
    }
    std::vector<Vector> delta(spec.n_states);
    for (int s = 0; s < spec.n_states; ++s) {
        delta[s] = rank_of[s] >= 0 ? rank_base[rank_of[s]] : Vector(Vector::Zero(F));
        for (int i = 0; i < F; ++i) delta[s][i] += 0.02 * proto_rng.normal();
    }

    // word embeddings: group-indicator block + random block, so intra-group
    // similarity exceeds inter-group similarity
    const int rand_dim = 16;
    const double rand_scale = 0.2;
    Rng emb_rng = root.split("synth.embeddings");
    auto make_embedding = [&](const std::vector<int>& groups) {
        Vector e = Vector::Zero(ng + rand_dim);
        for (int g : groups) e[g] = 1.0;
        for (int i = 0; i < rand_dim; ++i) e[ng + i] = rand_scale * emb_rng.normal();
        return e;
    };
    ds.embeddings.dim = ng + rand_dim;
    for (int s = 0; s < spec.n_states; ++s) {
        std::vector<int> gs;
        for (int g = 0; g < ng; ++g)
            if (state_in_group[g][s]) gs.push_back(g);
        ds.embeddings.vectors[ds.vocab.states[s]] = make_embedding(gs);
    }
    for (int o = 0; o < spec.n_objects; ++o)
        ds.embeddings.vectors[ds.vocab.objects[o]] = make_embedding({group_of[o]});

    // seen pairs: greedy cover of every primitive, then top up to half the
    // feasible set, always leaving at least two pairs for val/test unseen
    Rng pair_rng = root.split("synth.pairs");
    std::vector<Pair> pool(feasible.begin(), feasible.end());
    pair_rng.shuffle(pool);
    std::vector<bool> s_cov(spec.n_states, false), o_cov(spec.n_objects, false);
    PairSet seen;
    for (const auto& p : pool) {
        if (!s_cov[p.first] || !o_cov[p.second]) {
            seen.insert(p);
            s_cov[p.first] = true;
            o_cov[p.second] = true;
        }
    }
    for (int s = 0; s < spec.n_states; ++s)
        if (!s_cov[s])
            throw config_error("synth spec: state " + std::to_string(s) +
                               " is applicable to no group; seen coverage impossible");
    for (int o = 0; o < spec.n_objects; ++o)
        if (!o_cov[o])
            throw config_error("synth spec: object " + std::to_string(o) +
                               " has no applicable state; seen coverage impossible");
    std::size_t target = std::max(seen.size(), feasible.size() / 2);
    if (target + 2 > feasible.size()) {
        if (seen.size() + 2 > feasible.size())
            throw config_error("synth spec: seen coverage leaves fewer than two unseen pairs");
        target = feasible.size() - 2;
    }
    for (const auto& p : pool) {
        if (seen.size() >= target) break;
        seen.insert(p);
    }
    ds.vocab.seen_pairs = seen;

    std::vector<Pair> rest;
    for (const auto& p : pool)
        if (!seen.count(p)) rest.push_back(p);
    std::vector<Pair> val_unseen(rest.begin(), rest.begin() + rest.size() / 2);
    std::vector<Pair> test_unseen(rest.begin() + rest.size() / 2, rest.end());
    for (const auto& p : rest) ds.vocab.closed_unseen_pairs.insert(p);
    ds.vocab.validate();

    // samples
    auto gen_split = [&](const std::string& split, const std::vector<Pair>& pairs, int per_pair,
                         std::vector<Sample>& out) {
        Rng rng = root.split("synth.samples." + split);
        int idx = 0;
        for (const auto& [s, o] : pairs) {
            for (int k = 0; k < per_pair; ++k) {
                Sample smp;
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%s-%05d", split.c_str(), idx++);
                smp.id = buf;
                smp.state = s;
                smp.object = o;
                smp.feature = mu[o] + delta[s];
                if (spec.noise_std > 0)
                    for (int i = 0; i < F; ++i) smp.feature[i] += spec.noise_std * rng.normal();
                out.push_back(std::move(smp));
            }
        }
    };
    std::vector<Pair> seen_sorted(seen.begin(), seen.end());
    std::sort(val_unseen.begin(), val_unseen.end());
    std::sort(test_unseen.begin(), test_unseen.end());
    const int n_eval = std::max(2, spec.samples_per_seen_pair / 4);

    gen_split("train", seen_sorted, spec.samples_per_seen_pair, ds.train);
    std::vector<Pair> val_pairs = seen_sorted;
    val_pairs.insert(val_pairs.end(), val_unseen.begin(), val_unseen.end());
    gen_split("val", val_pairs, n_eval, ds.val);
    std::vector<Pair> test_pairs = seen_sorted;
    test_pairs.insert(test_pairs.end(), test_unseen.begin(), test_unseen.end());
    gen_split("test", test_pairs, n_eval, ds.test);
    return ds;
}

// --- dataset directories -----------------------------------------------------------

void save_dataset(const Dataset& ds, const std::string& dir) {
    fs::create_directories(dir);
    save_splits(ds.vocab, (fs::path(dir) / "splits.txt").string());
    save_embeddings(ds.embeddings, (fs::path(dir) / "embeddings.txt").string());
    std::map<std::string, std::vector<Sample>> by_split{
        {"train", ds.train}, {"val", ds.val}, {"test", ds.test}};
    save_features(by_split, ds.vocab, (fs::path(dir) / "features").string());
    if (ds.feasible_gt) {
        std::ofstream gt(fs::path(dir) / "feasible_gt.csv");
        if (!gt) throw config_error("cannot write feasible_gt.csv in " + dir);
        gt << "state,object\n";
        for (const auto& [s, o] : *ds.feasible_gt)
            gt << ds.vocab.states[s] << ',' << ds.vocab.objects[o] << '\n';
    }
}

Dataset load_dataset(const std::string& dir) {
    Dataset ds;
    ds.vocab = load_splits((fs::path(dir) / "splits.txt").string());
    ds.embeddings = load_embeddings((fs::path(dir) / "embeddings.txt").string(), ds.vocab);
    std::map<std::string, std::vector<Sample>> by_split;
    if (fs::exists(fs::path(dir) / "features.json")) {
        by_split = load_features((fs::path(dir) / "features").string(), ds.vocab);
    } else if (fs::exists(fs::path(dir) / "features.csv")) {  // slow path
        by_split = load_features_csv((fs::path(dir) / "features.csv").string(), ds.vocab);
    } else {
        throw config_error(dir + ": neither features.json nor features.csv found");
    }
    ds.train = std::move(by_split["train"]);
    ds.val = std::move(by_split["val"]);
    ds.test = std::move(by_split["test"]);

    auto gt_path = fs::path(dir) / "feasible_gt.csv";
    if (fs::exists(gt_path)) {
        std::map<std::string, int> s_idx, o_idx;
        for (int i = 0; i < ds.vocab.n_states(); ++i) s_idx[ds.vocab.states[i]] = i;
        for (int i = 0; i < ds.vocab.n_objects(); ++i) o_idx[ds.vocab.objects[i]] = i;
        PairSet gt;
        std::ifstream in(gt_path);
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto comma = line.find(',');
            if (comma == std::string::npos) throw config_error("feasible_gt.csv: bad line '" + line + "'");
            gt.insert({s_idx.at(line.substr(0, comma)), o_idx.at(line.substr(comma + 1))});
        }
        ds.feasible_gt = std::move(gt);
    }
    return ds;
}

}  // namespace cocge
