#include "cocge/feasibility.hpp"

#include "cocge/network.hpp"

#include <doctest.h>

#include <algorithm>

using namespace cocge;

namespace {

Vocabulary grid_vocab(int n_states, int n_objects, const PairSet& seen) {
    Vocabulary v;
    for (int s = 0; s < n_states; ++s) v.states.push_back("s" + std::to_string(s));
    for (int o = 0; o < n_objects; ++o) v.objects.push_back("o" + std::to_string(o));
    v.seen_pairs = seen;
    v.validate();
    return v;
}

PrimitiveEmbeddings random_embeddings(int n_states, int n_objects, int d, Rng& rng) {
    PrimitiveEmbeddings e;
    e.states.resize(n_states, d);
    e.objects.resize(n_objects, d);
    for (int i = 0; i < n_states; ++i)
        for (int j = 0; j < d; ++j) e.states(i, j) = rng.normal();
    for (int i = 0; i < n_objects; ++i)
        for (int j = 0; j < d; ++j) e.objects(i, j) = rng.normal();
    return e;
}

double cos_rows(const Matrix& m, int a, int b) {
    return m.row(a).dot(m.row(b)) / (m.row(a).norm() * m.row(b).norm());
}

}  // namespace

TEST_CASE("rho_obj: singleton seen set returns that cosine") {
    Vocabulary v = grid_vocab(2, 2, {{0, 0}, {1, 1}});
    Rng rng(1);
    PrimitiveEmbeddings e = random_embeddings(2, 2, 4, rng);
    // O^{s0} = {o0}; pair (s0, o1) unseen
    CHECK(rho_obj(0, 1, e, v) == doctest::Approx(cos_rows(e.objects, 1, 0)));
}

TEST_CASE("rho_obj: max over the seen object set") {
    // O^{s0} = {o0, o1, o2}; the query object o3 is covered through s1
    Vocabulary v = grid_vocab(2, 4, {{0, 0}, {0, 1}, {0, 2}, {1, 3}});
    PrimitiveEmbeddings e;
    e.states = Matrix::Ones(2, 2);
    e.objects.resize(4, 2);
    e.objects << 1, 0, 0, 1, 1, 1, 1, 0.2;  // o3 is the query
    double expect = std::max({cos_rows(e.objects, 3, 0), cos_rows(e.objects, 3, 1),
                              cos_rows(e.objects, 3, 2)});
    CHECK(rho_obj(0, 3, e, v) == doctest::Approx(expect));
}

TEST_CASE("rho_state: identical state embeddings give 1") {
    Vocabulary v = grid_vocab(2, 2, {{0, 0}, {1, 1}});
    PrimitiveEmbeddings e;
    e.states = Matrix::Ones(2, 3);
    e.objects = Matrix::Identity(2, 3);
    CHECK(rho_state(1, 0, e, v) == doctest::Approx(1.0));
}

TEST_CASE("rho_state: exhaustive max oracle over a size-4 seen set") {
    // S^{o0} = {s0..s3}; the query state s4 is covered through o1
    Vocabulary v = grid_vocab(5, 2, {{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 1}});
    Rng rng(7);
    PrimitiveEmbeddings e = random_embeddings(5, 2, 6, rng);
    double expect = -1.0;
    for (int s = 0; s < 4; ++s) expect = std::max(expect, cos_rows(e.states, 4, s));
    CHECK(rho_state(4, 0, e, v) == doctest::Approx(expect));
}

TEST_CASE("mix: avg and max") {
    CHECK(mix(0.2, 0.6, MixRule::Avg) == doctest::Approx(0.4));
    CHECK(mix(0.2, 0.6, MixRule::Max) == doctest::Approx(0.6));
}

TEST_CASE("compute_table: orthogonal primitives give zero unseen scores") {
    Vocabulary v = grid_vocab(2, 2, {{0, 0}, {1, 1}});
    PrimitiveEmbeddings e;
    e.states = Matrix::Identity(2, 2);
    e.objects = Matrix::Identity(2, 2);
    FeasibilityTable t = compute_table(e, v, MixRule::Avg);
    CHECK(t.at(0, 0) == 1.0);
    CHECK(t.at(1, 1) == 1.0);
    CHECK(t.at(0, 1) == doctest::Approx(0.0));
    CHECK(t.at(1, 0) == doctest::Approx(0.0));
}

TEST_CASE("compute_table: identical objects transfer states") {
    Vocabulary v = grid_vocab(2, 2, {{0, 0}, {1, 0}, {1, 1}});
    PrimitiveEmbeddings e;
    e.states = Matrix::Identity(2, 3);
    e.objects.resize(2, 3);
    e.objects << 0, 0, 1, 0, 0, 1;  // o0 == o1
    // (s0, o1) unseen; rho_obj = cos(o1, o0) = 1
    CHECK(rho_obj(0, 1, e, v) == doctest::Approx(1.0));
    FeasibilityTable t = compute_table(e, v, MixRule::Max);
    CHECK(t.at(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("compute_table matches a brute-force oracle on a random 3x3 vocabulary") {
    Vocabulary v = grid_vocab(3, 3, {{0, 0}, {1, 1}, {2, 2}, {0, 1}, {1, 2}});
    Rng rng(21);
    PrimitiveEmbeddings e = random_embeddings(3, 3, 5, rng);
    FeasibilityTable t = compute_table(e, v, MixRule::Avg);
    for (int s = 0; s < 3; ++s) {
        for (int o = 0; o < 3; ++o) {
            if (v.seen_pairs.count({s, o})) {
                CHECK(t.at(s, o) == 1.0);
                continue;
            }
            double r_obj = -1.0, r_state = -1.0;
            for (const auto& [ss, oo] : v.seen_pairs) {
                if (ss == s) r_obj = std::max(r_obj, cos_rows(e.objects, o, oo));
                if (oo == o) r_state = std::max(r_state, cos_rows(e.states, s, ss));
            }
            CHECK(t.at(s, o) == doctest::Approx(0.5 * (r_state + r_obj)).epsilon(1e-12));
            CHECK(t.at(s, o) >= -1.0);
            CHECK(t.at(s, o) <= 1.0);
        }
    }
}

TEST_CASE("compute_table: permuting object identities permutes the table") {
    Vocabulary v = grid_vocab(2, 3, {{0, 0}, {0, 1}, {1, 2}});
    Rng rng(33);
    PrimitiveEmbeddings e = random_embeddings(2, 3, 4, rng);
    FeasibilityTable t = compute_table(e, v, MixRule::Avg);

    // swap objects 0 and 2 everywhere
    std::vector<int> perm{2, 1, 0};
    Vocabulary vp = v;
    vp.seen_pairs.clear();
    for (const auto& [s, o] : v.seen_pairs) vp.seen_pairs.insert({s, perm[o]});
    PrimitiveEmbeddings ep = e;
    for (int o = 0; o < 3; ++o) ep.objects.row(perm[o]) = e.objects.row(o);
    FeasibilityTable tp = compute_table(ep, vp, MixRule::Avg);
    for (int s = 0; s < 2; ++s)
        for (int o = 0; o < 3; ++o)
            CHECK(tp.at(s, perm[o]) == doctest::Approx(t.at(s, o)).epsilon(1e-12));
}

TEST_CASE("compute_table: zero-norm embedding is a numeric error") {
    Vocabulary v = grid_vocab(2, 2, {{0, 0}, {1, 1}});
    PrimitiveEmbeddings e;
    e.states = Matrix::Identity(2, 2);
    e.objects = Matrix::Identity(2, 2);
    e.objects.row(1).setZero();
    CHECK_THROWS_AS(compute_table(e, v, MixRule::Avg), numeric_error);
}

TEST_CASE("compute_table_direct: direct cosine for unseen pairs, seen pinned at 1") {
    Vocabulary v = grid_vocab(2, 2, {{0, 0}, {1, 1}});
    Rng rng(6);
    PrimitiveEmbeddings e = random_embeddings(2, 2, 4, rng);
    FeasibilityTable t = compute_table_direct(e, v);
    CHECK(t.at(0, 0) == 1.0);
    CHECK(t.at(1, 1) == 1.0);
    const double expect = e.states.row(0).dot(e.objects.row(1)) /
                          (e.states.row(0).norm() * e.objects.row(1).norm());
    CHECK(t.at(0, 1) == doctest::Approx(expect));
}

TEST_CASE("feasibility csv round-trips") {
    Vocabulary v = grid_vocab(2, 2, {{0, 0}, {1, 1}});
    Rng rng(4);
    PrimitiveEmbeddings e = random_embeddings(2, 2, 3, rng);
    FeasibilityTable t = compute_table(e, v, MixRule::Avg);
    FeasibilityTable t2 = feasibility_from_csv(feasibility_to_csv(t, v), v);
    CHECK((t2.rho - t.rho).cwiseAbs().maxCoeff() == 0.0);
    CHECK(t2.seen == t.seen);
}
