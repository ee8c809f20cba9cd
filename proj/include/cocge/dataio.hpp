#pragma once

#include "cocge/common.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace cocge {

using Pair = std::pair<int, int>;  // (state index, object index)
using PairSet = std::set<Pair>;

/// The state/object/composition universe. Seen pairs appear in training
/// images; closed_unseen pairs are the extra candidates of the closed-world
/// target set. The open-world target set is the implicit full product.
struct Vocabulary {
    std::vector<std::string> states;
    std::vector<std::string> objects;
    PairSet seen_pairs;
    PairSet closed_unseen_pairs;

    int n_states() const { return static_cast<int>(states.size()); }
    int n_objects() const { return static_cast<int>(objects.size()); }
    bool is_seen(int s, int o) const { return seen_pairs.count({s, o}) > 0; }

    /// Throws config_error on any invariant breach: overlapping pair sets,
    /// out-of-range indices, or a primitive with no seen pair.
    void validate() const;
};

struct Sample {
    std::string id;
    Vector feature;
    int state = -1;
    int object = -1;
};

/// token -> m-dimensional vector, all rows the same length.
struct EmbeddingTable {
    std::map<std::string, Vector> vectors;
    int dim = 0;

    const Vector& at(const std::string& token) const;
    bool contains(const std::string& token) const { return vectors.count(token) > 0; }
};

/// Recipe for the synthetic benchmark generator. Objects are partitioned
/// into groups; a (state, object) pair is ground-truth feasible iff the
/// state is applicable to the object's group.
struct SynthSpec {
    int n_states = 12;
    int n_objects = 10;
    std::vector<std::vector<int>> object_groups;   // partition of object indices
    std::vector<std::vector<int>> applicable;      // group -> applicable state indices
    int samples_per_seen_pair = 40;
    int feature_dim = 48;
    double noise_std = 0.15;
    std::uint64_t seed = 0;

    /// Two groups, objects split evenly, disjoint applicable state halves.
    static SynthSpec defaults();

    void validate() const;
};

struct Dataset {
    Vocabulary vocab;
    EmbeddingTable embeddings;
    std::vector<Sample> train;
    std::vector<Sample> val;
    std::vector<Sample> test;
    std::optional<PairSet> feasible_gt;  // synthetic ground truth, if known
};

// --- split files: lines of `state object split_tag` ------------------------

/// Parses one or more split files. Tag `train` marks a seen pair; any tag
/// containing `unseen` marks a closed-world unseen pair. Vocabularies keep
/// first-appearance order. Throws config_error with file/line on bad input
/// and on Vocabulary invariant violations.
Vocabulary load_splits(const std::string& pairs_path,
                       const std::vector<std::string>& extra_split_paths = {});

/// Canonical writer: seen pairs tagged `train`, closed-unseen `test_unseen`,
/// in vocabulary index order. load_splits(save_splits(v)) == v.
void save_splits(const Vocabulary& vocab, const std::string& path);

// --- token-vector text files: lines of `token v1 v2 ... vm` -----------------

/// Loads a token-vector file and checks coverage of every state and object
/// token. A missing multi-word token (joined by `_`) falls back to the mean
/// of its constituent word vectors. Throws config_error listing tokens that
/// stay uncovered, or on inconsistent dimensions.
EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab);

void save_embeddings(const EmbeddingTable& table, const std::string& path);

// --- feature files ----------------------------------------------------------

/// Binary features: `<stem>.bin` holds row-major little-endian float64,
/// `<stem>.json` is the sidecar with shape and per-sample id/label/split.
/// Returns samples keyed by split name.
std::map<std::string, std::vector<Sample>> load_features(const std::string& stem,
                                                         const Vocabulary& vocab);

void save_features(const std::map<std::string, std::vector<Sample>>& by_split,
                   const Vocabulary& vocab, const std::string& stem);

/// CSV slow path: header `id,state,object,split,f0,...`.
std::map<std::string, std::vector<Sample>> load_features_csv(const std::string& path,
                                                             const Vocabulary& vocab);

// --- synthetic benchmark ----------------------------------------------------

/// Deterministic generator: object prototypes plus state offsets in feature
/// space, samples x = mu_o + delta_s + noise. Seen pairs are a feasible
/// subset covering every primitive; remaining feasible pairs split into
/// val/test unseen. Word embeddings carry a group-indicator block so objects
/// of a group stay mutually similar. Identical spec => identical output.
Dataset synthesize(const SynthSpec& spec);

/// Reads a dataset directory produced by the synth command (or assembled by
/// hand): splits.txt, embeddings.txt, features.bin/.json, optional
/// feasible_gt.csv.
Dataset load_dataset(const std::string& dir);

void save_dataset(const Dataset& ds, const std::string& dir);

}  // namespace cocge
