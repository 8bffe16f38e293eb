#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hansnet/data.hpp"

namespace hansnet {

struct ModelConfig {
    std::size_t base_channels = 16;
    std::vector<std::size_t> multipliers{1, 2, 4};
    bool use_hconv = true;
    bool use_wavelet = true;
    bool use_ata = true;
    bool use_spm = true;
    bool use_inr = true;
    bool use_ue = true;
    std::size_t kernel = 3;
    double kappa = -1.0;
    double epsilon = 1e-7;
    bool learnable_curvature = false;
    double alpha = 0.1;
    bool plasticity_ema = false;
    std::size_t pe_levels = 6;
    std::size_t inr_hidden = 64;
    /// Also sample the full-resolution filter-bank features in the implicit head.
    bool inr_multiscale = true;
    std::size_t mc_samples = 10;
    double dropout_p = 0.2;
    std::size_t ue_hidden = 8;
    double init_noise = 1e-2;

    std::size_t block_channels(std::size_t i) const { return base_channels * multipliers.at(i); }
    std::size_t final_channels() const { return block_channels(multipliers.size() - 1); }
    /// Throws ConfigError on invalid combinations for an input of size x size.
    void validate(std::size_t size) const;
};

struct TrainConfig {
    double lr = 1e-3;
    std::size_t batch_size = 8;
    std::size_t epochs = 20;
    std::uint64_t seed = 42;
    double w_dice = 0.5;
    double w_bce = 0.5;

    void validate() const;
};

struct DataConfig {
    /// Directory with manifest.json and HVOL pairs; empty means generate phantoms in memory.
    std::string data_dir;
    std::size_t train_slices = 200;
    std::size_t val_slices = 40;
    std::size_t test_slices = 40;
    std::string eval_split = "test";
    /// Checkpoint to load for eval / predict / uncertainty.
    std::string checkpoint;
    /// Directory of "<volume>_pred.hvol" label files scored by eval instead of running a model.
    std::string pred_dir;
    /// "volume" (3D surfaces) or "slice" (2D surfaces per slice).
    std::string assd_mode = "volume";
    PhantomSpec phantom;

    void validate() const;
};

struct Config {
    ModelConfig model;
    TrainConfig train;
    DataConfig data;

    std::size_t image_size() const { return data.phantom.size; }
    void validate() const;
};

/// Applies one `key = value` setting. Unknown keys and unparsable values throw ConfigError.
void apply_setting(Config& cfg, const std::string& key, const std::string& value);
/// Parses the flat `key = value` format with `#` comments onto `cfg`.
void apply_config_text(Config& cfg, const std::string& text, const std::string& origin = "<config>");
void apply_config_file(Config& cfg, const std::filesystem::path& path);
/// Splits "key=value" and applies it.
void apply_override(Config& cfg, const std::string& assignment);

/// Every setting in declaration order, as `key = value` lines.
std::string dump_config(const Config& cfg);

struct ConfigKey {
    std::string name;
    std::string help;
};
const std::vector<ConfigKey>& config_keys();

}  // namespace hansnet
