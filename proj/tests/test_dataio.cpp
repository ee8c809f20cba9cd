#include "cocge/dataio.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace cocge;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("cocge_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string write_temp(const std::string& tag, const std::string& content) {
    fs::path p = fs::temp_directory_path() / ("cocge_test_" + tag + ".txt");
    std::ofstream out(p);
    out << content;
    return p.string();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("load_splits: direct transcription") {
    auto path = write_temp("splits_basic",
                           "wet dog train\nold dog test_unseen\nwet car train\nold car train\n");
    Vocabulary v = load_splits(path);
    CHECK(v.states == std::vector<std::string>{"wet", "old"});
    CHECK(v.objects == std::vector<std::string>{"dog", "car"});
    CHECK(v.seen_pairs == PairSet{{0, 0}, {0, 1}, {1, 1}});
    CHECK(v.closed_unseen_pairs == PairSet{{1, 0}});
}

TEST_CASE("load_splits: empty unseen section") {
    auto path = write_temp("splits_no_unseen", "wet dog train\nwet car train\n");
    Vocabulary v = load_splits(path);
    CHECK(v.closed_unseen_pairs.empty());
}

TEST_CASE("load_splits: primitive only in unseen pairs is an error") {
    auto path = write_temp("splits_bad", "wet dog train\nold dog test_unseen\n");
    CHECK_THROWS_AS(load_splits(path), config_error);
}

TEST_CASE("load_splits: malformed line reports the line number") {
    auto path = write_temp("splits_malformed", "wet dog train\nbroken line\n");
    try {
        load_splits(path);
        FAIL("expected a parse error");
    } catch (const config_error& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
}

namespace {

std::set<std::pair<std::string, std::string>> named_pairs(const Vocabulary& v,
                                                          const PairSet& pairs) {
    std::set<std::pair<std::string, std::string>> out;
    for (const auto& [s, o] : pairs) out.insert({v.states[s], v.objects[o]});
    return out;
}

}  // namespace

TEST_CASE("vocabulary round-trips through split files") {
    auto path = write_temp("splits_rt_src",
                           "wet dog train\nwet car train\nold car train\nold dog val_unseen\n");
    Vocabulary v = load_splits(path);
    auto out = fs::temp_directory_path() / "cocge_test_splits_rt.txt";
    save_splits(v, out.string());
    Vocabulary v2 = load_splits(out.string());
    CHECK(v2.states == v.states);
    CHECK(v2.objects == v.objects);
    CHECK(v2.seen_pairs == v.seen_pairs);
    CHECK(v2.closed_unseen_pairs == v.closed_unseen_pairs);
}

TEST_CASE("vocabulary round-trip preserves names when indices scramble") {
    // seen = {(s0,o1),(s1,o0)}: no line order can introduce states and
    // objects both in index order, so reload may relabel but never rename
    auto path = write_temp("splits_rt_scramble",
                           "s0 o0 test_unseen\ns0 o1 train\ns1 o0 train\n");
    Vocabulary v = load_splits(path);
    auto out = fs::temp_directory_path() / "cocge_test_splits_rt2.txt";
    save_splits(v, out.string());
    Vocabulary v2 = load_splits(out.string());
    CHECK(named_pairs(v2, v2.seen_pairs) == named_pairs(v, v.seen_pairs));
    CHECK(named_pairs(v2, v2.closed_unseen_pairs) == named_pairs(v, v.closed_unseen_pairs));
    // a second cycle is a fixed point
    auto out2 = fs::temp_directory_path() / "cocge_test_splits_rt3.txt";
    save_splits(v2, out2.string());
    CHECK(slurp(out) == slurp(out2));
}

TEST_CASE("load_embeddings: basic table") {
    auto sp = write_temp("emb_splits", "wet dog train\nold dog train\n");
    Vocabulary v = load_splits(sp);
    auto path = write_temp("emb_basic", "wet 1 0 0\nold 0 1 0\ndog 0 0 1\n");
    EmbeddingTable t = load_embeddings(path, v);
    CHECK(t.dim == 3);
    CHECK(t.at("wet")[0] == 1.0);
    CHECK(t.at("dog")[2] == 1.0);
}

TEST_CASE("load_embeddings: multi-word fallback averages constituents") {
    auto sp = write_temp("emb_mw_splits", "wet faux_leather train\n");
    Vocabulary v = load_splits(sp);
    auto path = write_temp("emb_mw", "wet 1 1\nfaux 1 0\nleather 0 1\n");
    EmbeddingTable t = load_embeddings(path, v);
    CHECK(t.at("faux_leather")[0] == doctest::Approx(0.5));
    CHECK(t.at("faux_leather")[1] == doctest::Approx(0.5));
}

TEST_CASE("load_embeddings: dimension mismatch is an error") {
    auto sp = write_temp("emb_dim_splits", "wet dog train\n");
    Vocabulary v = load_splits(sp);
    auto path = write_temp("emb_dim", "wet 1 0\ndog 0 1 1\n");
    CHECK_THROWS_AS(load_embeddings(path, v), config_error);
}

TEST_CASE("load_embeddings: missing token lists the offenders") {
    auto sp = write_temp("emb_missing_splits", "wet dog train\n");
    Vocabulary v = load_splits(sp);
    auto path = write_temp("emb_missing", "wet 1 0\n");
    try {
        load_embeddings(path, v);
        FAIL("expected an error");
    } catch (const config_error& e) {
        CHECK(std::string(e.what()).find("dog") != std::string::npos);
    }
}

TEST_CASE("synthesize: cross-group pairs are never feasible") {
    SynthSpec spec = SynthSpec::defaults();
    spec.seed = 7;
    Dataset ds = synthesize(spec);
    REQUIRE(ds.feasible_gt.has_value());
    for (const auto& [s, o] : *ds.feasible_gt) {
        const bool group0 = o <= 4;
        CHECK((group0 ? s <= 5 : s >= 6));
    }
}

TEST_CASE("synthesize: zero noise gives identical features per pair") {
    SynthSpec spec = SynthSpec::defaults();
    spec.noise_std = 0.0;
    spec.samples_per_seen_pair = 4;
    Dataset ds = synthesize(spec);
    std::map<Pair, Vector> seen_feature;
    for (const auto& s : ds.train) {
        Pair p{s.state, s.object};
        auto it = seen_feature.find(p);
        if (it == seen_feature.end())
            seen_feature[p] = s.feature;
        else
            CHECK((it->second - s.feature).norm() == 0.0);
    }
}

TEST_CASE("synthesize: identical spec gives byte-identical directories") {
    SynthSpec spec = SynthSpec::defaults();
    spec.samples_per_seen_pair = 4;
    spec.seed = 11;
    auto d1 = temp_dir("synth_det_a");
    auto d2 = temp_dir("synth_det_b");
    save_dataset(synthesize(spec), d1.string());
    save_dataset(synthesize(spec), d2.string());
    for (const char* f :
         {"splits.txt", "features.bin", "features.json", "embeddings.txt", "feasible_gt.csv"}) {
        CHECK(slurp(d1 / f) == slurp(d2 / f));
    }
}

TEST_CASE("synthesize: unseen pairs are feasible and disjoint from seen") {
    SynthSpec spec = SynthSpec::defaults();
    spec.seed = 3;
    Dataset ds = synthesize(spec);
    for (const auto& p : ds.vocab.closed_unseen_pairs) {
        CHECK(ds.feasible_gt->count(p) == 1);
        CHECK(ds.vocab.seen_pairs.count(p) == 0);
    }
}

TEST_CASE("synthesize: a state applicable to no group cannot be covered") {
    SynthSpec spec = SynthSpec::defaults();
    spec.applicable = {{0, 1, 2, 3, 4}, {6, 7, 8, 9, 10, 11}};  // state 5 orphaned
    CHECK_THROWS_AS(synthesize(spec), config_error);
}

TEST_CASE("synth spec validation rejects a broken partition") {
    SynthSpec spec = SynthSpec::defaults();
    spec.object_groups = {{0, 1, 2, 3, 4}, {4, 5, 6, 7, 8, 9}};  // object 4 twice
    CHECK_THROWS_AS(spec.validate(), config_error);
}

TEST_CASE("features CSV slow path matches the binary loader") {
    SynthSpec spec = SynthSpec::defaults();
    spec.samples_per_seen_pair = 2;
    Dataset ds = synthesize(spec);
    // write a small CSV by hand from the first few train samples
    auto csv_path = fs::temp_directory_path() / "cocge_test_features.csv";
    {
        std::ofstream out(csv_path);
        out << "id,state,object,split";
        for (int i = 0; i < ds.train[0].feature.size(); ++i) out << ",f" << i;
        out << "\n";
        for (int k = 0; k < 3; ++k) {
            const Sample& s = ds.train[k];
            out << s.id << ',' << ds.vocab.states[s.state] << ',' << ds.vocab.objects[s.object]
                << ",train";
            char buf[40];
            for (int i = 0; i < s.feature.size(); ++i) {
                std::snprintf(buf, sizeof(buf), "%.17g", s.feature[i]);
                out << ',' << buf;
            }
            out << "\n";
        }
    }
    auto by_split = load_features_csv(csv_path.string(), ds.vocab);
    REQUIRE(by_split["train"].size() == 3);
    for (int k = 0; k < 3; ++k) {
        CHECK(by_split["train"][k].state == ds.train[k].state);
        CHECK(by_split["train"][k].object == ds.train[k].object);
        CHECK((by_split["train"][k].feature - ds.train[k].feature).norm() == 0.0);
    }
}

TEST_CASE("dataset directory round-trip") {
    SynthSpec spec = SynthSpec::defaults();
    spec.samples_per_seen_pair = 4;
    Dataset ds = synthesize(spec);
    auto dir = temp_dir("ds_rt");
    save_dataset(ds, dir.string());
    Dataset ds2 = load_dataset(dir.string());
    CHECK(named_pairs(ds2.vocab, ds2.vocab.seen_pairs) ==
          named_pairs(ds.vocab, ds.vocab.seen_pairs));
    CHECK(ds2.train.size() == ds.train.size());
    CHECK(ds2.val.size() == ds.val.size());
    REQUIRE(ds2.feasible_gt.has_value());
    CHECK(named_pairs(ds2.vocab, *ds2.feasible_gt) == named_pairs(ds.vocab, *ds.feasible_gt));
    // binary features reload bit-exactly, labels by name
    for (std::size_t i = 0; i < ds.train.size(); ++i) {
        CHECK((ds2.train[i].feature - ds.train[i].feature).norm() == 0.0);
        CHECK(ds2.vocab.states[ds2.train[i].state] == ds.vocab.states[ds.train[i].state]);
        CHECK(ds2.vocab.objects[ds2.train[i].object] == ds.vocab.objects[ds.train[i].object]);
    }
}
