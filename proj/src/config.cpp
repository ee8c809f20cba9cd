#include "cocge/config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

using nlohmann::json;

namespace cocge {

const char* kToolVersion = "0.1.0";

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

// `0,2,4-6` -> {0,2,4,5,6}
std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
    std::vector<int> out;
    std::istringstream iss(text);
    std::string tok;
    while (std::getline(iss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        auto dash = tok.find('-');
        try {
            if (dash == std::string::npos) {
                out.push_back(std::stoi(tok));
            } else {
                int lo = std::stoi(tok.substr(0, dash));
                int hi = std::stoi(tok.substr(dash + 1));
                if (hi < lo) throw config_error(what + ": bad range '" + tok + "'");
                for (int i = lo; i <= hi; ++i) out.push_back(i);
            }
        } catch (const config_error&) {
            throw;
        } catch (const std::exception&) {
            throw config_error(what + ": bad integer '" + tok + "'");
        }
    }
    return out;
}

std::vector<std::vector<int>> parse_groups(const std::string& text, const std::string& what) {
    std::vector<std::vector<int>> out;
    std::istringstream iss(text);
    std::string part;
    while (std::getline(iss, part, ';')) out.push_back(parse_int_list(part, what));
    return out;
}

std::string groups_to_text(const std::vector<std::vector<int>>& groups) {
    std::string out;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (g) out += ';';
        for (std::size_t i = 0; i < groups[g].size(); ++i) {
            if (i) out += ',';
            out += std::to_string(groups[g][i]);
        }
    }
    return out;
}

}  // namespace

ConfigFile ConfigFile::parse_text(const std::string& text, const std::string& origin) {
    ConfigFile cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw config_error(origin + ":" + std::to_string(lineno) + ": bad section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error(origin + ":" + std::to_string(lineno) + ": expected `key = value`");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw config_error(origin + ":" + std::to_string(lineno) + ": empty key");
        cfg.values[section.empty() ? key : section + "." + key] = value;
    }
    return cfg;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str(), path);
}

std::string ConfigFile::get(const std::string& key, const std::string& fallback) const {
    auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw config_error("config key " + key + ": bad number '" + it->second + "'");
    }
}

int ConfigFile::get_int(const std::string& key, int fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    try {
        return std::stoi(it->second);
    } catch (const std::exception&) {
        throw config_error("config key " + key + ": bad integer '" + it->second + "'");
    }
}

std::uint64_t ConfigFile::get_u64(const std::string& key, std::uint64_t fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    try {
        return std::stoull(it->second);
    } catch (const std::exception&) {
        throw config_error("config key " + key + ": bad integer '" + it->second + "'");
    }
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw config_error("config key " + key + ": bad boolean '" + it->second + "'");
}

SynthSpec synth_spec_from_config(const ConfigFile& cfg) {
    SynthSpec def = SynthSpec::defaults();
    SynthSpec spec;
    spec.n_states = cfg.get_int("synth.n_states", def.n_states);
    spec.n_objects = cfg.get_int("synth.n_objects", def.n_objects);
    const bool is_default_shape =
        spec.n_states == def.n_states && spec.n_objects == def.n_objects;
    if (cfg.has("synth.object_groups")) {
        spec.object_groups =
            parse_groups(cfg.get("synth.object_groups", ""), "synth.object_groups");
    } else if (is_default_shape) {
        spec.object_groups = def.object_groups;
    } else {
        // split objects into two even groups
        std::vector<int> a, b;
        for (int o = 0; o < spec.n_objects; ++o) (o < spec.n_objects / 2 ? a : b).push_back(o);
        spec.object_groups = {a, b};
    }
    if (cfg.has("synth.applicable")) {
        spec.applicable = parse_groups(cfg.get("synth.applicable", ""), "synth.applicable");
    } else if (is_default_shape) {
        spec.applicable = def.applicable;
    } else {
        std::vector<int> a, b;
        for (int s = 0; s < spec.n_states; ++s) (s < spec.n_states / 2 ? a : b).push_back(s);
        spec.applicable.assign(spec.object_groups.size(), {});
        for (std::size_t g = 0; g < spec.object_groups.size(); ++g)
            spec.applicable[g] = g % 2 == 0 ? a : b;
    }
    spec.samples_per_seen_pair = cfg.get_int("synth.samples_per_seen_pair",
                                             def.samples_per_seen_pair);
    spec.feature_dim = cfg.get_int("synth.feature_dim", def.feature_dim);
    spec.noise_std = cfg.get_double("synth.noise_std", def.noise_std);
    spec.seed = cfg.get_u64("synth.seed", def.seed);
    spec.validate();
    return spec;
}

TrainConfig train_config_from_config(const ConfigFile& cfg) {
    TrainConfig c;
    c.epochs = cfg.get_int("train.epochs", c.epochs);
    c.batch_size = cfg.get_int("train.batch_size", c.batch_size);
    c.learning_rate = cfg.get_double("train.learning_rate", c.learning_rate);
    c.weight_decay = cfg.get_double("train.weight_decay", c.weight_decay);
    c.beta1 = cfg.get_double("train.beta1", c.beta1);
    c.beta2 = cfg.get_double("train.beta2", c.beta2);
    c.adam_eps = cfg.get_double("train.adam_eps", c.adam_eps);
    c.seed = cfg.get_u64("train.seed", c.seed);
    c.mode = parse_train_mode(cfg.get("train.mode", to_string(c.mode)));
    c.eval_every = cfg.get_int("train.eval_every", c.eval_every);

    c.loss.temperature = cfg.get_double("loss.temperature", c.loss.temperature);
    c.loss.alpha_max = cfg.get_double("loss.alpha_max", c.loss.alpha_max);
    c.loss.warmup_epochs = cfg.get_int("loss.warmup_epochs", c.loss.warmup_epochs);
    c.loss.clamp_margin_rho_at_zero =
        cfg.get_bool("loss.clamp_margin_rho_at_zero", c.loss.clamp_margin_rho_at_zero);

    auto edge = [&](const std::string& key, bool fallback) {
        const std::string v = cfg.get(key, fallback ? "rho" : "one");
        if (v == "rho") return true;
        if (v == "one") return false;
        throw config_error("config key " + key + ": want rho|one, got '" + v + "'");
    };
    c.switches.state_object = edge("train.edge_so", c.switches.state_object);
    c.switches.prim_to_comp = edge("train.edge_pc", c.switches.prim_to_comp);
    c.switches.comp_to_prim = edge("train.edge_cp", c.switches.comp_to_prim);
    c.mix_rule = parse_mix_rule(cfg.get("train.mix", to_string(c.mix_rule)));

    c.gcn_hidden = cfg.get_int("model.gcn_hidden", c.gcn_hidden);
    c.shared_dim = cfg.get_int("model.shared_dim", c.shared_dim);
    c.img_hidden = cfg.get_int("model.img_hidden", c.img_hidden);
    c.dropout = cfg.get_double("model.dropout", c.dropout);
    c.validate();
    return c;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string train_config_to_text(const TrainConfig& c) {
    std::ostringstream out;
    out << "[model]\n"
        << "gcn_hidden = " << c.gcn_hidden << "\n"
        << "shared_dim = " << c.shared_dim << "\n"
        << "img_hidden = " << c.img_hidden << "\n"
        << "dropout = " << fmt(c.dropout) << "\n"
        << "\n[loss]\n"
        << "temperature = " << fmt(c.loss.temperature) << "\n"
        << "alpha_max = " << fmt(c.loss.alpha_max) << "\n"
        << "warmup_epochs = " << c.loss.warmup_epochs << "\n"
        << "clamp_margin_rho_at_zero = " << (c.loss.clamp_margin_rho_at_zero ? "true" : "false")
        << "\n"
        << "\n[train]\n"
        << "epochs = " << c.epochs << "\n"
        << "batch_size = " << c.batch_size << "\n"
        << "learning_rate = " << fmt(c.learning_rate) << "\n"
        << "weight_decay = " << fmt(c.weight_decay) << "\n"
        << "beta1 = " << fmt(c.beta1) << "\n"
        << "beta2 = " << fmt(c.beta2) << "\n"
        << "adam_eps = " << fmt(c.adam_eps) << "\n"
        << "seed = " << c.seed << "\n"
        << "mode = " << to_string(c.mode) << "\n"
        << "eval_every = " << c.eval_every << "\n"
        << "edge_so = " << (c.switches.state_object ? "rho" : "one") << "\n"
        << "edge_pc = " << (c.switches.prim_to_comp ? "rho" : "one") << "\n"
        << "edge_cp = " << (c.switches.comp_to_prim ? "rho" : "one") << "\n"
        << "mix = " << to_string(c.mix_rule) << "\n";
    return out.str();
}

std::string synth_spec_to_text(const SynthSpec& spec) {
    std::ostringstream out;
    out << "[synth]\n"
        << "n_states = " << spec.n_states << "\n"
        << "n_objects = " << spec.n_objects << "\n"
        << "object_groups = " << groups_to_text(spec.object_groups) << "\n"
        << "applicable = " << groups_to_text(spec.applicable) << "\n"
        << "samples_per_seen_pair = " << spec.samples_per_seen_pair << "\n"
        << "feature_dim = " << spec.feature_dim << "\n"
        << "noise_std = " << fmt(spec.noise_std) << "\n"
        << "seed = " << spec.seed << "\n";
    return out.str();
}

std::string RunManifest::to_json() const {
    json j;
    j["command"] = command;
    j["config"] = config_text;
    j["seed"] = seed;
    j["artifacts"] = artifacts;
    j["tool_version"] = tool_version;
    if (wall_clock_sec) j["wall_clock_sec"] = *wall_clock_sec;
    return j.dump(2);
}

void RunManifest::write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw config_error("cannot write manifest: " + path);
    out << to_json() << '\n';
}

}  // namespace cocge
