#include "hansnet/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "hansnet/errors.hpp"

namespace hansnet {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw ConfigError("invalid value '" + value + "' for " + key + " (expected " + expected + ")");
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    bad_value(key, v, "true/false");
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad_value(key, v, "a nonnegative integer");
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        bad_value(key, v, "a number");
    }
    if (used != v.size()) bad_value(key, v, "a number");
    return out;
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_u64(key, trim(item)));
    if (out.empty()) bad_value(key, v, "a comma-separated list");
    return out;
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Entry {
    ConfigKey key;
    std::function<void(Config&, const std::string&)> set;
    std::function<std::string(const Config&)> get;
};

#define HN_BOOL(name, field, help)                                                                   \
    Entry {                                                                                          \
        {name, help}, [](Config& c, const std::string& v) { c.field = parse_bool(name, v); },        \
            [](const Config& c) { return fmt_bool(c.field); }                                        \
    }
#define HN_SIZE(name, field, help)                                                                   \
    Entry {                                                                                          \
        {name, help}, [](Config& c, const std::string& v) { c.field = parse_u64(name, v); },         \
            [](const Config& c) { return std::to_string(c.field); }                                  \
    }
#define HN_REAL(name, field, help)                                                                   \
    Entry {                                                                                          \
        {name, help}, [](Config& c, const std::string& v) { c.field = parse_double(name, v); },      \
            [](const Config& c) { return fmt_double(c.field); }                                      \
    }
#define HN_TEXT(name, field, help)                                                                   \
    Entry {                                                                                          \
        {name, help}, [](Config& c, const std::string& v) { c.field = v; },                          \
            [](const Config& c) { return c.field; }                                                  \
    }

const std::vector<Entry>& entries() {
    static const std::vector<Entry> table = {
        HN_SIZE("base_channels", model.base_channels, "channels of the first block"),
        Entry{{"multipliers", "per-block channel multipliers, comma-separated"},
              [](Config& c, const std::string& v) { c.model.multipliers = parse_list("multipliers", v); },
              [](const Config& c) {
                  std::string s;
                  for (std::size_t i = 0; i < c.model.multipliers.size(); ++i)
                      s += (i ? "," : "") + std::to_string(c.model.multipliers[i]);
                  return s;
              }},
        HN_BOOL("use_hconv", model.use_hconv, "hyperbolic conv blocks (off: conv + relu)"),
        HN_BOOL("use_wavelet", model.use_wavelet, "filter-bank layer (off: conv + relu)"),
        HN_BOOL("use_ata", model.use_ata, "gated self-attention (off: identity)"),
        HN_BOOL("use_spm", model.use_spm, "plasticity module (off: identity)"),
        HN_BOOL("use_inr", model.use_inr, "implicit head (off: upsample + conv head)"),
        HN_BOOL("use_ue", model.use_ue, "MC-dropout head (off: sigmoid of logits)"),
        HN_SIZE("kernel", model.kernel, "odd spatial kernel size"),
        HN_REAL("kappa", model.kappa, "Poincare curvature, negative"),
        HN_REAL("epsilon", model.epsilon, "exponential map stability constant"),
        HN_BOOL("learnable_curvature", model.learnable_curvature, "train kappa = -softplus(c)"),
        HN_REAL("alpha", model.alpha, "plasticity rate"),
        HN_BOOL("plasticity_ema", model.plasticity_ema, "moving-average trace update instead of the literal rule"),
        HN_SIZE("pe_levels", model.pe_levels, "positional encoding octaves"),
        HN_SIZE("inr_hidden", model.inr_hidden, "implicit head hidden width"),
        HN_BOOL("inr_multiscale", model.inr_multiscale, "implicit head also samples full-resolution features"),
        HN_SIZE("mc_samples", model.mc_samples, "Monte Carlo passes at evaluation"),
        HN_REAL("dropout_p", model.dropout_p, "channel dropout probability"),
        HN_SIZE("ue_hidden", model.ue_hidden, "uncertainty head hidden channels"),
        HN_REAL("init_noise", model.init_noise, "noise added to structured initializations"),
        HN_REAL("lr", train.lr, "Adam learning rate"),
        HN_SIZE("batch_size", train.batch_size, "slices per step"),
        HN_SIZE("epochs", train.epochs, "training epochs"),
        HN_SIZE("seed", train.seed, "master seed"),
        HN_REAL("w_dice", train.w_dice, "soft-Dice loss weight"),
        HN_REAL("w_bce", train.w_bce, "binary cross-entropy loss weight"),
        HN_TEXT("data_dir", data.data_dir, "dataset directory (empty: in-memory phantoms)"),
        HN_SIZE("train_slices", data.train_slices, "tumor slices in the training set"),
        HN_SIZE("val_slices", data.val_slices, "tumor slices in the validation set"),
        HN_SIZE("test_slices", data.test_slices, "tumor slices in the test set"),
        HN_TEXT("eval_split", data.eval_split, "split scored by eval/predict/uncertainty"),
        HN_TEXT("checkpoint", data.checkpoint, "checkpoint file to load"),
        HN_TEXT("pred_dir", data.pred_dir, "score existing <volume>_pred.hvol files instead of a model"),
        HN_TEXT("assd_mode", data.assd_mode, "volume or slice"),
        HN_SIZE("image_size", data.phantom.size, "in-plane size, divisible by 8"),
        HN_SIZE("phantom_depth", data.phantom.depth, "slices per phantom volume"),
        HN_REAL("spacing_xy", data.phantom.spacing_xy, "in-plane spacing in mm"),
        HN_REAL("spacing_z", data.phantom.spacing_z, "slice spacing in mm"),
        HN_SIZE("tumor_min", data.phantom.tumor_min, "minimum tumors per volume"),
        HN_SIZE("tumor_max", data.phantom.tumor_max, "maximum tumors per volume"),
        HN_REAL("tumor_radius_min", data.phantom.tumor_radius.lo, "smallest tumor radius in mm"),
        HN_REAL("tumor_radius_max", data.phantom.tumor_radius.hi, "largest tumor radius in mm"),
        HN_REAL("liver_a_min", data.phantom.liver_a.lo, "liver in-plane semi-axis a, lower bound (mm)"),
        HN_REAL("liver_a_max", data.phantom.liver_a.hi, "liver in-plane semi-axis a, upper bound (mm)"),
        HN_REAL("liver_b_min", data.phantom.liver_b.lo, "liver in-plane semi-axis b, lower bound (mm)"),
        HN_REAL("liver_b_max", data.phantom.liver_b.hi, "liver in-plane semi-axis b, upper bound (mm)"),
        HN_REAL("liver_c_min", data.phantom.liver_c.lo, "liver axial semi-axis, lower bound (mm)"),
        HN_REAL("liver_c_max", data.phantom.liver_c.hi, "liver axial semi-axis, upper bound (mm)"),
        HN_REAL("noise_sigma", data.phantom.noise_sigma, "Gaussian noise in HU"),
    };
    return table;
}

#undef HN_BOOL
#undef HN_SIZE
#undef HN_REAL
#undef HN_TEXT

}  // namespace

void ModelConfig::validate(std::size_t size) const {
    if (base_channels == 0 || multipliers.empty()) throw ConfigError("base_channels and multipliers must be positive");
    for (auto m : multipliers)
        if (m == 0) throw ConfigError("channel multipliers must be positive");
    if (kernel % 2 == 0) throw ConfigError("kernel must be odd");
    const std::size_t pools = std::size_t{1} << multipliers.size();
    if (size == 0 || size % pools != 0)
        throw ConfigError("image_size " + std::to_string(size) + " must be divisible by " + std::to_string(pools));
    if (use_wavelet && base_channels % 4 != 0) throw ConfigError("base_channels must be divisible by 4 with the filter bank");
    if (use_ata && final_channels() % 8 != 0)
        throw ConfigError("final block channels must be divisible by 8 with attention");
    if (!(kappa < 0.0)) throw ConfigError("kappa must be negative");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (alpha < 0.0) throw ConfigError("alpha must be nonnegative");
    if (pe_levels < 1 || inr_hidden < 1 || ue_hidden < 1) throw ConfigError("pe_levels, inr_hidden, ue_hidden must be >= 1");
    if (mc_samples < 1) throw ConfigError("mc_samples must be at least 1");
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("dropout_p must be in [0, 1)");
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (w_dice < 0.0 || w_bce < 0.0 || !(w_dice + w_bce > 0.0))
        throw ConfigError("loss weights must be nonnegative with a positive sum");
}

void DataConfig::validate() const {
    phantom.validate();
    if (assd_mode != "volume" && assd_mode != "slice") throw ConfigError("assd_mode must be volume or slice");
    if (eval_split != "train" && eval_split != "val" && eval_split != "test")
        throw ConfigError("eval_split must be train, val or test");
}

void Config::validate() const {
    model.validate(image_size());
    train.validate();
    data.validate();
}

void apply_setting(Config& cfg, const std::string& key, const std::string& value) {
    for (const auto& e : entries())
        if (e.key.name == key) {
            e.set(cfg, value);
            return;
        }
    throw ConfigError("unknown config key '" + key + "'");
}

void apply_config_text(Config& cfg, const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        try {
            apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void apply_config_file(Config& cfg, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_text(cfg, ss.str(), path.string());
}

void apply_override(Config& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    apply_setting(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string dump_config(const Config& cfg) {
    std::string out;
    for (const auto& e : entries()) out += e.key.name + " = " + e.get(cfg) + "\n";
    return out;
}

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        for (const auto& e : entries()) k.push_back(e.key);
        return k;
    }();
    return keys;
}

}  // namespace hansnet
