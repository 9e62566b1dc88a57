#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "cvit/operators/cvit.hpp"
#include "cvit/training.hpp"

namespace cvit {

struct ModelConfig {
    std::string model = "cvit";
    std::string preset = "S";
    std::size_t patch_size = 8;
    std::size_t grid_nx = 96;
    std::size_t grid_ny = 192;
    std::size_t grid_dim = 512;
    double epsilon = 1e5;

    /// CViT spec for single-frame inputs of shape [height, width, channels].
    /// One-dimensional data (height 1) uses 1 x patch_size patches.
    [[nodiscard]] CvitSpec to_spec(std::size_t height, std::size_t width, std::size_t channels) const
    {
        if (model != "cvit") throw ConfigError("unsupported model '" + model + "' (only cvit is trainable)");
        CvitSpec s;
        s.frames = 1;
        s.height = height;
        s.width = width;
        s.channels = channels;
        s.out_dim = channels;
        s.patch_h = height == 1 ? 1 : patch_size;
        s.patch_w = patch_size;
        s.grid_nx = grid_nx;
        s.grid_ny = grid_ny;
        s.grid_dim = grid_dim;
        s.epsilon = epsilon;
        s = apply_preset(s, preset);
        s.validate();
        return s;
    }
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    std::string data_path;
    std::string checkpoint_dir = "checkpoints";

    /// Resolved configuration in the input syntax, one key per line.
    [[nodiscard]] std::string echo() const
    {
        std::ostringstream os;
        os.precision(17);
        os << "model = " << model.model << '\n'
           << "preset = " << model.preset << '\n'
           << "patch_size = " << model.patch_size << '\n'
           << "grid_nx = " << model.grid_nx << '\n'
           << "grid_ny = " << model.grid_ny << '\n'
           << "grid_dim = " << model.grid_dim << '\n'
           << "epsilon = " << model.epsilon << '\n'
           << "batch_size = " << train.batch_size << '\n'
           << "queries = " << train.queries << '\n'
           << "steps = " << train.steps << '\n'
           << "warmup = " << train.warmup << '\n'
           << "peak_lr = " << train.peak_lr << '\n'
           << "decay = " << train.decay << '\n'
           << "weight_decay = " << train.weight_decay << '\n'
           << "clip_norm = " << train.clip_norm << '\n'
           << "seed = " << train.seed << '\n'
           << "data_path = " << data_path << '\n'
           << "checkpoint_dir = " << checkpoint_dir << '\n'
           << "checkpoint_every = " << train.checkpoint_every << '\n';
        return os.str();
    }
};

namespace detail {

inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <class N>
N parse_number(const std::string& v, std::size_t line, const std::string& key)
{
    N out{};
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || p != end) {
        throw ConfigError("line " + std::to_string(line) + ": cannot parse value '" + v + "' for key '" + key + "'");
    }
    return out;
}

}  // namespace detail

/// Parses `key = value` lines. Blank lines and lines starting with '#' are
/// ignored. model and data_path are required; every other key has a default.
inline RunConfig parse_config_text(const std::string& text)
{
    static const std::set<std::string> keys{"model",     "preset",      "patch_size",  "grid_nx",        "grid_ny",
                                            "grid_dim",  "epsilon",     "batch_size",  "queries",        "steps",
                                            "warmup",    "peak_lr",     "decay",       "weight_decay",   "clip_norm",
                                            "seed",      "data_path",   "checkpoint_dir", "checkpoint_every"};
    RunConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::size_t line_no = 0;
    for (std::string raw; std::getline(in, raw);) {
        ++line_no;
        const auto line = detail::trim(raw);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value', got '" + line + "'");
        }
        const auto key = detail::trim(line.substr(0, eq));
        const auto value = detail::trim(line.substr(eq + 1));
        if (!keys.contains(key)) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        if (!seen.insert(key).second) {
            throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        }
        if (value.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty value for key '" + key + "'");
        auto size = [&] { return detail::parse_number<std::size_t>(value, line_no, key); };
        auto real = [&] { return detail::parse_number<double>(value, line_no, key); };

        if (key == "model") cfg.model.model = value;
        else if (key == "preset") cfg.model.preset = value;
        else if (key == "patch_size") cfg.model.patch_size = size();
        else if (key == "grid_nx") cfg.model.grid_nx = size();
        else if (key == "grid_ny") cfg.model.grid_ny = size();
        else if (key == "grid_dim") cfg.model.grid_dim = size();
        else if (key == "epsilon") cfg.model.epsilon = real();
        else if (key == "batch_size") cfg.train.batch_size = size();
        else if (key == "queries") cfg.train.queries = size();
        else if (key == "steps") cfg.train.steps = size();
        else if (key == "warmup") cfg.train.warmup = size();
        else if (key == "peak_lr") cfg.train.peak_lr = real();
        else if (key == "decay") cfg.train.decay = real();
        else if (key == "weight_decay") cfg.train.weight_decay = real();
        else if (key == "clip_norm") cfg.train.clip_norm = real();
        else if (key == "seed") cfg.train.seed = detail::parse_number<std::uint64_t>(value, line_no, key);
        else if (key == "data_path") cfg.data_path = value;
        else if (key == "checkpoint_dir") cfg.checkpoint_dir = value;
        else if (key == "checkpoint_every") cfg.train.checkpoint_every = size();
    }
    for (const char* req : {"model", "data_path"}) {
        if (!seen.contains(req)) {
            throw ConfigError("line " + std::to_string(line_no) + ": missing required key '" + req + "'");
        }
    }
    if (cfg.model.model != "cvit") {
        throw ConfigError("unsupported model '" + cfg.model.model + "' (only cvit is trainable)");
    }
    cvit_preset(cfg.model.preset);
    if (cfg.model.patch_size == 0) throw ConfigError("patch_size must be positive");
    if (cfg.model.epsilon < 0) throw ConfigError("epsilon must be non-negative");
    cfg.train.validate();
    return cfg;
}

inline RunConfig parse_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace cvit
