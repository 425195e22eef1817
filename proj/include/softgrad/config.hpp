#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "softgrad/checkpoint.hpp"
#include "softgrad/error.hpp"

namespace softgrad {

/// Full training configuration. Config files and command-line overrides use
/// exactly these field names as keys.
struct AgentConfig {
    std::string env = "point-mass-2d";
    std::uint64_t seed = 1;
    double gamma = 0.99;
    double tau = 1.0;
    double clip_norm = 5.0;
    std::size_t batch_size = 100;
    std::size_t action_samples = 64;
    std::size_t train_steps_per_env_step = 4;
    double polyak_alpha = 0.01;
    double actor_lr = 5e-5;
    double critic_lr = 5e-4;
    double reward_scale = 5.0;
    std::size_t buffer_capacity = 3000000;
    std::size_t warmup = 1000;
    std::size_t total_env_steps = 50000;
    std::vector<std::size_t> hidden_sizes = {32, 32};
    double std_floor = 1e-3;
    std::size_t eval_interval = 1000;
    std::size_t eval_episodes = 5;
    std::size_t checkpoint_interval = 10000;

    void validate() const {
        std::vector<std::string> bad;
        if (!(gamma >= 0.0 && gamma < 1.0)) bad.push_back("gamma (need 0 <= gamma < 1)");
        if (!(tau >= 0.0)) bad.push_back("tau (need tau >= 0)");
        if (!(clip_norm > 0.0)) bad.push_back("clip_norm (need > 0)");
        if (batch_size < 1) bad.push_back("batch_size (need >= 1)");
        if (action_samples < 1) bad.push_back("action_samples (need >= 1)");
        if (train_steps_per_env_step < 1) bad.push_back("train_steps_per_env_step (need >= 1)");
        if (!(polyak_alpha >= 0.0 && polyak_alpha <= 1.0)) bad.push_back("polyak_alpha (need [0, 1])");
        if (!(actor_lr >= 0.0)) bad.push_back("actor_lr (need >= 0)");
        if (!(critic_lr >= 0.0)) bad.push_back("critic_lr (need >= 0)");
        if (!(reward_scale > 0.0)) bad.push_back("reward_scale (need > 0)");
        if (buffer_capacity < 1) bad.push_back("buffer_capacity (need >= 1)");
        if (hidden_sizes.empty()) bad.push_back("hidden_sizes (need at least one layer)");
        if (!(std_floor > 0.0)) bad.push_back("std_floor (need > 0)");
        if (eval_interval < 1) bad.push_back("eval_interval (need >= 1)");
        if (eval_episodes < 1) bad.push_back("eval_episodes (need >= 1)");
        if (checkpoint_interval < 1) bad.push_back("checkpoint_interval (need >= 1)");
        if (!bad.empty()) {
            std::string msg = "invalid config values:";
            for (const auto& b : bad) msg += " " + b + ";";
            throw ConfigError(msg);
        }
    }
};

namespace detail {

inline double parse_double(const std::string& s, const std::string& key) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw ConfigError("config key '" + key + "': expected a number, got '" + s + "'");
    return v;
}

inline std::uint64_t parse_unsigned(const std::string& s, const std::string& key) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0' || s.find('-') != std::string::npos)
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + s +
                          "'");
    return v;
}

inline std::vector<std::size_t> parse_size_list(const std::string& s, const std::string& key) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(static_cast<std::size_t>(parse_unsigned(item, key)));
    return out;
}

inline std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

inline std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

}  // namespace detail

struct ConfigField {
    std::string name;
    std::function<void(AgentConfig&, const std::string&)> set;
    std::function<std::string(const AgentConfig&)> get;
};

inline const std::vector<ConfigField>& config_fields() {
    using detail::parse_double;
    using detail::parse_unsigned;
    static const std::vector<ConfigField> fields = {
        {"env", [](AgentConfig& c, const std::string& v) { c.env = v; },
         [](const AgentConfig& c) { return c.env; }},
        {"seed", [](AgentConfig& c, const std::string& v) { c.seed = parse_unsigned(v, "seed"); },
         [](const AgentConfig& c) { return std::to_string(c.seed); }},
        {"gamma", [](AgentConfig& c, const std::string& v) { c.gamma = parse_double(v, "gamma"); },
         [](const AgentConfig& c) { return fmt17(c.gamma); }},
        {"tau", [](AgentConfig& c, const std::string& v) { c.tau = parse_double(v, "tau"); },
         [](const AgentConfig& c) { return fmt17(c.tau); }},
        {"clip_norm",
         [](AgentConfig& c, const std::string& v) { c.clip_norm = parse_double(v, "clip_norm"); },
         [](const AgentConfig& c) { return fmt17(c.clip_norm); }},
        {"batch_size",
         [](AgentConfig& c, const std::string& v) {
             c.batch_size = static_cast<std::size_t>(parse_unsigned(v, "batch_size"));
         },
         [](const AgentConfig& c) { return std::to_string(c.batch_size); }},
        {"action_samples",
         [](AgentConfig& c, const std::string& v) {
             c.action_samples = static_cast<std::size_t>(parse_unsigned(v, "action_samples"));
         },
         [](const AgentConfig& c) { return std::to_string(c.action_samples); }},
        {"train_steps_per_env_step",
         [](AgentConfig& c, const std::string& v) {
             c.train_steps_per_env_step =
                 static_cast<std::size_t>(parse_unsigned(v, "train_steps_per_env_step"));
         },
         [](const AgentConfig& c) { return std::to_string(c.train_steps_per_env_step); }},
        {"polyak_alpha",
         [](AgentConfig& c, const std::string& v) { c.polyak_alpha = parse_double(v, "polyak_alpha"); },
         [](const AgentConfig& c) { return fmt17(c.polyak_alpha); }},
        {"actor_lr",
         [](AgentConfig& c, const std::string& v) { c.actor_lr = parse_double(v, "actor_lr"); },
         [](const AgentConfig& c) { return fmt17(c.actor_lr); }},
        {"critic_lr",
         [](AgentConfig& c, const std::string& v) { c.critic_lr = parse_double(v, "critic_lr"); },
         [](const AgentConfig& c) { return fmt17(c.critic_lr); }},
        {"reward_scale",
         [](AgentConfig& c, const std::string& v) { c.reward_scale = parse_double(v, "reward_scale"); },
         [](const AgentConfig& c) { return fmt17(c.reward_scale); }},
        {"buffer_capacity",
         [](AgentConfig& c, const std::string& v) {
             c.buffer_capacity = static_cast<std::size_t>(parse_unsigned(v, "buffer_capacity"));
         },
         [](const AgentConfig& c) { return std::to_string(c.buffer_capacity); }},
        {"warmup",
         [](AgentConfig& c, const std::string& v) {
             c.warmup = static_cast<std::size_t>(parse_unsigned(v, "warmup"));
         },
         [](const AgentConfig& c) { return std::to_string(c.warmup); }},
        {"total_env_steps",
         [](AgentConfig& c, const std::string& v) {
             c.total_env_steps = static_cast<std::size_t>(parse_unsigned(v, "total_env_steps"));
         },
         [](const AgentConfig& c) { return std::to_string(c.total_env_steps); }},
        {"hidden_sizes",
         [](AgentConfig& c, const std::string& v) {
             c.hidden_sizes = detail::parse_size_list(v, "hidden_sizes");
         },
         [](const AgentConfig& c) { return detail::join_sizes(c.hidden_sizes); }},
        {"std_floor",
         [](AgentConfig& c, const std::string& v) { c.std_floor = parse_double(v, "std_floor"); },
         [](const AgentConfig& c) { return fmt17(c.std_floor); }},
        {"eval_interval",
         [](AgentConfig& c, const std::string& v) {
             c.eval_interval = static_cast<std::size_t>(parse_unsigned(v, "eval_interval"));
         },
         [](const AgentConfig& c) { return std::to_string(c.eval_interval); }},
        {"eval_episodes",
         [](AgentConfig& c, const std::string& v) {
             c.eval_episodes = static_cast<std::size_t>(parse_unsigned(v, "eval_episodes"));
         },
         [](const AgentConfig& c) { return std::to_string(c.eval_episodes); }},
        {"checkpoint_interval",
         [](AgentConfig& c, const std::string& v) {
             c.checkpoint_interval = static_cast<std::size_t>(parse_unsigned(v, "checkpoint_interval"));
         },
         [](const AgentConfig& c) { return std::to_string(c.checkpoint_interval); }},
    };
    return fields;
}

/// Applies key=value pairs in order; unknown keys are collected and reported
/// together.
inline void apply_config_entries(AgentConfig& config,
                                 const std::vector<std::pair<std::string, std::string>>& entries) {
    std::vector<std::string> unknown;
    for (const auto& [key, value] : entries) {
        bool found = false;
        for (const auto& field : config_fields()) {
            if (field.name == key) {
                field.set(config, value);
                found = true;
                break;
            }
        }
        if (!found) unknown.push_back(key);
    }
    if (!unknown.empty()) {
        std::string msg = "unknown config keys:";
        for (const auto& k : unknown) msg += " " + k;
        throw ConfigError(msg);
    }
}

/// key = value lines; '#' starts a comment, blank lines ignored.
inline std::vector<std::pair<std::string, std::string>> parse_config_text(std::istream& in) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        entries.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    return entries;
}

inline AgentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    AgentConfig config;
    apply_config_entries(config, parse_config_text(in));
    return config;
}

inline std::map<std::string, std::string> config_to_map(const AgentConfig& config) {
    std::map<std::string, std::string> out;
    for (const auto& field : config_fields()) out[field.name] = field.get(config);
    return out;
}

inline void write_config(std::ostream& out, const AgentConfig& config) {
    for (const auto& field : config_fields()) out << field.name << " = " << field.get(config) << '\n';
}

}  // namespace softgrad
