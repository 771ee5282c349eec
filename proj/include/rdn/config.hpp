// Copyright 2026 The RDN-SR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rdn/errors.hpp"
#include "rdn/model.hpp"
#include "rdn/optim.hpp"

namespace rdn {

struct EvalConfig {
    std::size_t shave = 0;
    bool luma_only = false;
};

// Everything a run can be configured with. Keys are flat and dotted:
// model.*, train.*, eval.*.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    EvalConfig eval;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
    }
    return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
    std::istringstream is(v);
    is.imbue(std::locale::classic());
    double out = 0;
    is >> out;
    if (is.fail() || !is.eof()) throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("'" + key + "' expects a boolean, got '" + v + "'");
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& raw) {
    using namespace detail;
    const std::string v = trim(raw);
    auto u = [&] { return static_cast<std::size_t>(parse_uint(key, v)); };
    if (key == "model.scale") cfg.model.scale = u();
    else if (key == "model.num_rdb") cfg.model.num_rdb = u();
    else if (key == "model.layers_per_rdb") cfg.model.layers_per_rdb = u();
    else if (key == "model.growth") cfg.model.growth = u();
    else if (key == "model.base_channels") cfg.model.base_channels = u();
    else if (key == "model.in_channels") cfg.model.in_channels = u();
    else if (key == "model.disable_global_residual") cfg.model.ablation.disable_global_residual = parse_bool(key, v);
    else if (key == "model.disable_dense_connections") cfg.model.ablation.disable_dense_connections = parse_bool(key, v);
    else if (key == "model.disable_local_residual") cfg.model.ablation.disable_local_residual = parse_bool(key, v);
    else if (key == "train.lr0") cfg.train.lr0 = parse_double(key, v);
    else if (key == "train.lr_halving_period") cfg.train.lr_halving_period = u();
    else if (key == "train.adam_beta1") cfg.train.adam_beta1 = parse_double(key, v);
    else if (key == "train.adam_beta2") cfg.train.adam_beta2 = parse_double(key, v);
    else if (key == "train.adam_eps") cfg.train.adam_eps = parse_double(key, v);
    else if (key == "train.batch_train") cfg.train.batch_train = u();
    else if (key == "train.batch_eval") cfg.train.batch_eval = u();
    else if (key == "train.epochs") cfg.train.epochs = u();
    else if (key == "train.seed") cfg.train.seed = parse_uint(key, v);
    else if (key == "train.checkpoint_every") cfg.train.checkpoint_every = u();
    else if (key == "train.patch_lr") cfg.train.patch_lr = u();
    else if (key == "train.patches_per_image") cfg.train.patches_per_image = u();
    else if (key == "train.augment") cfg.train.augment = parse_bool(key, v);
    else if (key == "eval.shave") cfg.eval.shave = u();
    else if (key == "eval.luma_only") cfg.eval.luma_only = parse_bool(key, v);
    else throw ConfigError("unknown configuration key '" + key + "'");
}

// "key = value" lines; '#' starts a comment.
inline std::vector<std::pair<std::string, std::string>> parse_settings(const std::string& text, const std::string& origin) {
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        out.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    return out;
}

inline void apply_settings(RunConfig& cfg, const std::string& text, const std::string& origin) {
    for (const auto& [k, v] : parse_settings(text, origin)) apply_setting(cfg, k, v);
}

inline void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    apply_settings(cfg, text.str(), path);
}

// "key=value" override as given on the command line.
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    apply_setting(cfg, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

inline std::string model_settings(const ModelConfig& m) {
    std::ostringstream os;
    os << "model.scale=" << m.scale << '\n'
       << "model.num_rdb=" << m.num_rdb << '\n'
       << "model.layers_per_rdb=" << m.layers_per_rdb << '\n'
       << "model.growth=" << m.growth << '\n'
       << "model.base_channels=" << m.base_channels << '\n'
       << "model.in_channels=" << m.in_channels << '\n'
       << "model.disable_global_residual=" << (m.ablation.disable_global_residual ? "true" : "false") << '\n'
       << "model.disable_dense_connections=" << (m.ablation.disable_dense_connections ? "true" : "false") << '\n'
       << "model.disable_local_residual=" << (m.ablation.disable_local_residual ? "true" : "false") << '\n';
    return os.str();
}

inline std::string train_settings(const TrainConfig& t) {
    using detail::format_double;
    std::ostringstream os;
    os << "train.lr0=" << format_double(t.lr0) << '\n'
       << "train.lr_halving_period=" << t.lr_halving_period << '\n'
       << "train.adam_beta1=" << format_double(t.adam_beta1) << '\n'
       << "train.adam_beta2=" << format_double(t.adam_beta2) << '\n'
       << "train.adam_eps=" << format_double(t.adam_eps) << '\n'
       << "train.batch_train=" << t.batch_train << '\n'
       << "train.batch_eval=" << t.batch_eval << '\n'
       << "train.epochs=" << t.epochs << '\n'
       << "train.seed=" << t.seed << '\n'
       << "train.checkpoint_every=" << t.checkpoint_every << '\n'
       << "train.patch_lr=" << t.patch_lr << '\n'
       << "train.patches_per_image=" << t.patches_per_image << '\n'
       << "train.augment=" << (t.augment ? "true" : "false") << '\n';
    return os.str();
}

inline std::string run_settings(const RunConfig& cfg) {
    std::ostringstream os;
    os << model_settings(cfg.model) << train_settings(cfg.train) << "eval.shave=" << cfg.eval.shave << '\n'
       << "eval.luma_only=" << (cfg.eval.luma_only ? "true" : "false") << '\n';
    return os.str();
}

}  // namespace rdn
