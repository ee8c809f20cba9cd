#pragma once

#include "cocge/common.hpp"
#include "cocge/dataio.hpp"
#include "cocge/graph.hpp"

#include <string>

namespace cocge {

enum class MixRule { Avg, Max };

MixRule parse_mix_rule(const std::string& s);
std::string to_string(MixRule g);

/// Primitive rows of the propagated node embeddings, as consumed by the
/// feasibility estimators.
struct PrimitiveEmbeddings {
    Matrix states;   // n_states x d
    Matrix objects;  // n_objects x d

    /// Slices the first n_states + n_objects rows of a full K x d matrix.
    static PrimitiveEmbeddings from_node_embeddings(const Matrix& node_emb,
                                                    const NodeIndex& index);
};

/// Highest cosine between object o and any object seen with state s.
double rho_obj(int s, int o, const PrimitiveEmbeddings& emb, const Vocabulary& vocab);

/// Highest cosine between state s and any state seen with object o.
double rho_state(int s, int o, const PrimitiveEmbeddings& emb, const Vocabulary& vocab);

double mix(double rs, double ro, MixRule g);

/// Full table over the open product: seen pairs pinned to 1, everything
/// else mix(rho_state, rho_obj).
FeasibilityTable compute_table(const PrimitiveEmbeddings& emb, const Vocabulary& vocab,
                               MixRule g);

/// Diagnostic variant: scores an unseen pair by the direct cosine between
/// its state and object embeddings instead of the seen-set transfer rule.
FeasibilityTable compute_table_direct(const PrimitiveEmbeddings& emb, const Vocabulary& vocab);

/// CSV dump `state,object,rho,seen`, rows in index order.
std::string feasibility_to_csv(const FeasibilityTable& table, const Vocabulary& vocab);

FeasibilityTable feasibility_from_csv(const std::string& csv_text, const Vocabulary& vocab);

}  // namespace cocge
