#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "hansnet/checkpoint.hpp"
#include "hansnet/config.hpp"
#include "hansnet/data.hpp"
#include "hansnet/dataset.hpp"
#include "hansnet/metrics.hpp"
#include "hansnet/model.hpp"
#include "hansnet/png.hpp"
#include "hansnet/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace hansnet;

namespace {

enum class Level { error = 0, info = 1, debug = 2 };

Level log_level() {
    const char* env = std::getenv("HANSNET_LOG");
    if (!env) return Level::info;
    const std::string v = env;
    if (v == "error") return Level::error;
    if (v == "debug") return Level::debug;
    return Level::info;
}

std::mutex log_mutex;

void log(Level level, const std::string& msg) {
    if (level > log_level()) return;
    std::lock_guard lock(log_mutex);
    std::cerr << msg << "\n";
}

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::string out = ".";
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "Flat key = value config file")->check(CLI::ExistingFile);
    app->add_option("--set", c.sets, "Override one config key (repeatable), KEY=VALUE");
    app->add_option("--out", c.out, "Output directory")->capture_default_str();
    app->add_option("--seed", c.seed, "Master seed (same as --set seed=N)");
}

Config load_config(const Common& c) {
    Config cfg;
    if (!c.config.empty()) apply_config_file(cfg, c.config);
    for (const auto& s : c.sets) apply_override(cfg, s);
    if (c.seed) cfg.train.seed = *c.seed;
    cfg.validate();
    return cfg;
}

fs::path out_dir(const Common& c) {
    fs::path dir = c.out;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

std::vector<const VolumeCase*> split_cases(const std::vector<VolumeCase>& cases, const std::string& split) {
    std::vector<const VolumeCase*> out;
    for (const auto& c : cases)
        if (c.split == split) out.push_back(&c);
    if (out.empty()) throw ConfigError("no volumes in split '" + split + "'");
    return out;
}

HansNet load_model(const Config& cfg) {
    if (cfg.data.checkpoint.empty()) throw ConfigError("checkpoint is not set (use --set checkpoint=PATH)");
    HansNet net(cfg.model, cfg.image_size(), cfg.train.seed);
    net.load_state(load_checkpoint(cfg.data.checkpoint));
    net.set_plasticity_frozen(true);
    return net;
}

std::string slice_tag(std::size_t z) {
    std::ostringstream os;
    os << "z" << std::setw(3) << std::setfill('0') << z;
    return os.str();
}

// ------------------------------------------------------------ prediction

struct VolumePrediction {
    Hvol labels;                 // u8 at the volume's own resolution
    std::array<Hvol, 2> mean;    // f32 probabilities per class
    std::optional<std::array<Hvol, 2>> variance;
};

Hvol plane_to_hvol(const Hvol& like, const std::vector<Image2D>& planes) {
    Hvol v = make_hvol_f32(like.dims[0], like.dims[1], like.dims[2], like.spacing);
    for (std::size_t z = 0; z < planes.size(); ++z) {
        const Image2D r = resize_image(planes[z], like.dims[1], like.dims[2]);
        for (std::size_t i = 0; i < r.data.size(); ++i) v.f32[z * like.slice_size() + i] = static_cast<float>(r.data[i]);
    }
    return v;
}

VolumePrediction predict_volume(HansNet& net, const VolumeCase& c, std::size_t batch_size, std::uint64_t seed) {
    const std::size_t s = net.image_size();
    const SliceSet slices = volume_slices(c, s);
    const std::size_t d = slices.size(), area = s * s;
    std::vector<Image2D> mean[2], var[2];
    NoGradScope no_grad;
    for (std::size_t start = 0, batch = 0; start < d; start += batch_size, ++batch) {
        std::vector<std::size_t> rows;
        for (std::size_t i = start; i < std::min(d, start + batch_size); ++i) rows.push_back(i);
        const ForwardResult r =
            net.forward(take_rows(slices.images, rows), Mode::eval, nullptr, derive_seed(seed, Stream::mc, batch));
        for (std::size_t b = 0; b < rows.size(); ++b)
            for (std::size_t k = 0; k < 2; ++k) {
                const std::size_t off = (b * 2 + k) * area;
                const auto p = r.probs.data().subspan(off, area);
                mean[k].push_back({s, s, {p.begin(), p.end()}});
                if (r.uncertainty) {
                    const auto v = r.uncertainty->variance.data().subspan(off, area);
                    var[k].push_back({s, s, {v.begin(), v.end()}});
                }
            }
    }
    VolumePrediction out;
    out.labels = make_hvol_u8(c.labels.dims[0], c.labels.dims[1], c.labels.dims[2], c.labels.spacing);
    for (std::size_t z = 0; z < d; ++z) {
        Mask2D m{s, s, std::vector<std::uint8_t>(area, 0)};
        for (std::size_t i = 0; i < area; ++i) {
            if (mean[0][z].data[i] >= 0.5) m.data[i] = 1;
            if (mean[1][z].data[i] >= 0.5) m.data[i] = 2;
        }
        const Mask2D r = resize_mask(m, c.labels.dims[1], c.labels.dims[2]);
        std::copy(r.data.begin(), r.data.end(), out.labels.u8.begin() + static_cast<std::ptrdiff_t>(z * r.data.size()));
    }
    for (std::size_t k = 0; k < 2; ++k) out.mean[k] = plane_to_hvol(c.labels, mean[k]);
    if (!var[0].empty()) out.variance = std::array<Hvol, 2>{plane_to_hvol(c.labels, var[0]), plane_to_hvol(c.labels, var[1])};
    return out;
}

std::uint64_t volume_seed(const Config& cfg, std::size_t index) {
    return derive_seed(cfg.train.seed, Stream::mc, 1000 + index);
}

// ------------------------------------------------------------ subcommands

int cmd_phantom_gen(const Common& common) {
    const Config cfg = load_config(common);
    const fs::path dir = out_dir(common);
    const auto cases = generate_phantom_cases(cfg.data, cfg.train.seed);
    save_cases(dir, cases, cfg.train.seed);
    log(Level::info, "wrote " + std::to_string(cases.size()) + " phantom volumes to " + dir.string());
    return 0;
}

int cmd_train(const Common& common) {
    const Config cfg = load_config(common);
    const fs::path dir = out_dir(common);
    const auto cases = obtain_cases(cfg);
    const SliceSet train = slice_set(cases, "train", cfg.image_size());
    const SliceSet val = slice_set(cases, "val", cfg.image_size());
    log(Level::info, "training on " + std::to_string(train.size()) + " slices, validating on " +
                         std::to_string(val.size()));
    HansNet net(cfg.model, cfg.image_size(), cfg.train.seed);
    log(Level::debug, "parameters: " + std::to_string(net.parameter_count()));
    std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
    if (!metrics) throw IoError("cannot write " + (dir / "metrics.jsonl").string());
    train_model(net, train, val, cfg.train, [&](const EpochLog& l) {
        const std::string line = epoch_log_json(l);
        metrics << line << "\n" << std::flush;
        log(Level::info, line);
    });
    save_checkpoint(dir / "model.hnsw", net.state());
    write_text(dir / "config.txt", dump_config(cfg));
    log(Level::info, "checkpoint written to " + (dir / "model.hnsw").string());
    return 0;
}

int cmd_eval(const Common& common) {
    const Config cfg = load_config(common);
    const fs::path dir = out_dir(common);
    const auto cases = obtain_cases(cfg);
    const auto chosen = split_cases(cases, cfg.data.eval_split);
    std::vector<Hvol> preds;
    preds.reserve(chosen.size());
    if (!cfg.data.pred_dir.empty()) {
        for (const auto* c : chosen) preds.push_back(read_hvol(fs::path(cfg.data.pred_dir) / (c->name + "_pred.hvol")));
    } else {
        HansNet net = load_model(cfg);
        for (std::size_t i = 0; i < chosen.size(); ++i)
            preds.push_back(predict_volume(net, *chosen[i], cfg.train.batch_size, volume_seed(cfg, i)).labels);
    }
    std::vector<CaseInput> inputs;
    for (std::size_t i = 0; i < chosen.size(); ++i) inputs.push_back({chosen[i]->name, &preds[i], &chosen[i]->labels});
    const MetricsReport report = build_report(inputs, cfg.data.assd_mode);
    write_text(dir / "report.json", report.to_json());
    write_text(dir / "report.txt", report.to_table());
    std::cout << report.to_table();
    for (const auto& d : report.diagnostics) log(Level::info, d);
    return 0;
}

int cmd_predict(const Common& common) {
    const Config cfg = load_config(common);
    const fs::path dir = out_dir(common);
    fs::create_directories(dir / "png");
    const auto cases = obtain_cases(cfg);
    const auto chosen = split_cases(cases, cfg.data.eval_split);
    HansNet net = load_model(cfg);
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        const VolumeCase& c = *chosen[i];
        const VolumePrediction p = predict_volume(net, c, cfg.train.batch_size, volume_seed(cfg, i));
        write_hvol(dir / (c.name + "_pred.hvol"), p.labels);
        const std::size_t h = c.labels.dims[1], w = c.labels.dims[2];
        for (std::size_t z = 0; z < c.labels.dims[0]; ++z) {
            std::vector<std::uint8_t> px(h * w);
            for (std::size_t k = 0; k < h * w; ++k)
                px[k] = static_cast<std::uint8_t>(127 * p.labels.u8[z * h * w + k]);
            write_png_gray(dir / "png" / (c.name + "_" + slice_tag(z) + ".png"), h, w, px);
        }
        log(Level::info, "predicted " + c.name);
    }
    return 0;
}

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

int cmd_uncertainty(const Common& common) {
    const Config cfg = load_config(common);
    if (!cfg.model.use_ue) throw ConfigError("uncertainty export needs use_ue = true");
    const fs::path dir = out_dir(common);
    fs::create_directories(dir / "png");
    const auto cases = obtain_cases(cfg);
    const auto chosen = split_cases(cases, cfg.data.eval_split);
    HansNet net = load_model(cfg);
    nlohmann::ordered_json summary;
    summary["mc_samples"] = cfg.model.mc_samples;
    summary["dropout_p"] = cfg.model.dropout_p;
    summary["cases"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        const VolumeCase& c = *chosen[i];
        const VolumePrediction p = predict_volume(net, c, cfg.train.batch_size, volume_seed(cfg, i));
        const std::size_t d = c.labels.dims[0], h = c.labels.dims[1], w = c.labels.dims[2], n = d * h * w;
        // [D,2,H,W] tensors for the summary statistics
        Tensor mean({d, 2, h, w}), var({d, 2, h, w}), pred({d, 2, h, w}), gt({d, 2, h, w});
        for (std::size_t k = 0; k < 2; ++k) {
            const std::string cls = kClassNames[k];
            write_hvol(dir / (c.name + "_mean_" + cls + ".hvol"), p.mean[k]);
            write_hvol(dir / (c.name + "_var_" + cls + ".hvol"), (*p.variance)[k]);
            for (std::size_t v = 0; v < n; ++v) {
                const std::size_t z = v / (h * w), px = v % (h * w), at = (z * 2 + k) * h * w + px;
                mean.mutable_data()[at] = p.mean[k].f32[v];
                var.mutable_data()[at] = (*p.variance)[k].f32[v];
                const std::uint8_t pl = p.labels.u8[v], gl = c.labels.u8[v];
                pred.mutable_data()[at] = k == 0 ? pl >= 1 : pl == 2;
                gt.mutable_data()[at] = k == 0 ? gl >= 1 : gl == 2;
            }
            for (std::size_t z = 0; z < d; ++z) {
                const auto& f = (*p.variance)[k].f32;
                const std::vector<double> plane(f.begin() + static_cast<std::ptrdiff_t>(z * h * w),
                                                f.begin() + static_cast<std::ptrdiff_t>((z + 1) * h * w));
                write_png_gray(dir / "png" / (c.name + "_var_" + cls + "_" + slice_tag(z) + ".png"), h, w,
                               to_gray8(plane, 0.0, 0.25));
            }
        }
        const UncertaintyMap map{mean, var};
        const auto split = uncertainty_error_correlation(map, pred, gt);
        nlohmann::ordered_json row;
        row["name"] = c.name;
        row["foreground_uncertainty"] = optional_json(foreground_uncertainty(map, pred));
        for (std::size_t k = 0; k < 2; ++k) {
            row[kClassNames[k]]["variance_correct"] = optional_json(split[k].correct);
            row[kClassNames[k]]["variance_incorrect"] = optional_json(split[k].incorrect);
        }
        summary["cases"].push_back(row);
        log(Level::info, "uncertainty maps for " + c.name);
    }
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    return 0;
}

// ------------------------------------------------------------ ablation

struct AblationRow {
    std::string name;
    bool hc, wdm, ata, spm, inr, ue;
};

const AblationRow kRows[] = {
    {"A1", false, false, false, false, false, false}, {"A2", true, false, false, false, false, false},
    {"A3", true, true, false, false, false, false},   {"A4", true, true, true, false, false, false},
    {"A5", true, true, true, true, false, false},     {"A6", true, true, true, true, true, false},
    {"A7", true, true, true, true, true, true},
};

struct SetScores {
    double dice = 0, iou = 0, voe = 0;
    std::optional<double> assd;
};

// Averaged over both classes; Dice/IoU pooled over slices, ASSD per slice.
SetScores score_set(HansNet& net, const SliceSet& set, std::size_t batch_size, std::uint64_t seed, double spacing) {
    Tensor probs;
    const SegCounts counts = evaluate(net, set, batch_size, seed, &probs);
    const Tensor pred = threshold(probs);
    const std::size_t n = set.size(), s = net.image_size(), area = s * s;
    SetScores out;
    double assd_sum = 0.0;
    std::size_t assd_n = 0;
    for (int k = 0; k < 2; ++k) {
        out.dice += 0.5 * counts.dice(k);
        out.iou += 0.5 * counts.iou(k);
        BinaryMask pm({n, s, s}, {1.0, spacing, spacing}), gm({n, s, s}, {1.0, spacing, spacing});
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t i = 0; i < area; ++i) {
                const std::size_t at = (b * 2 + static_cast<std::size_t>(k)) * area + i;
                pm.grid[b * area + i] = pred.at(at) != 0.0;
                gm.grid[b * area + i] = set.targets.at(at) != 0.0;
            }
        if (const auto a = assd_per_slice(pm, gm)) {
            assd_sum += *a;
            ++assd_n;
        }
    }
    out.voe = 1.0 - out.iou;
    if (assd_n > 0) out.assd = assd_sum / static_cast<double>(assd_n);
    return out;
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

int cmd_ablate(const Common& common, std::size_t jobs) {
    const Config cfg = load_config(common);
    const fs::path dir = out_dir(common);
    const auto cases = obtain_cases(cfg);
    const SliceSet train = slice_set(cases, "train", cfg.image_size());
    const SliceSet val = slice_set(cases, "val", cfg.image_size());
    const double spacing = cases.front().image.spacing[1] * static_cast<double>(cases.front().image.dims[2]) /
                           static_cast<double>(cfg.image_size());
    constexpr std::size_t kCount = std::size(kRows);
    std::vector<std::string> lines(kCount);
    std::vector<std::exception_ptr> errors(kCount);

    auto run = [&](std::size_t r) {
        try {
            const AblationRow& row = kRows[r];
            Config c = cfg;
            c.model.use_hconv = row.hc;
            c.model.use_wavelet = row.wdm;
            c.model.use_ata = row.ata;
            c.model.use_spm = row.spm;
            c.model.use_inr = row.inr;
            c.model.use_ue = row.ue;
            c.validate();
            HansNet net(c.model, c.image_size(), c.train.seed);
            train_model(net, train, val, c.train, [&](const EpochLog& l) {
                log(Level::debug, row.name + " " + epoch_log_json(l));
            });
            net.set_plasticity_frozen(true);
            const std::uint64_t seed = derive_seed(c.train.seed, Stream::mc, 2000 + r);
            const SetScores tr = score_set(net, train, c.train.batch_size, seed, spacing);
            const SetScores va = score_set(net, val, c.train.batch_size, seed, spacing);
            std::ostringstream os;
            os << row.name << ',' << row.hc << ',' << row.wdm << ',' << row.ata << ',' << row.spm << ',' << row.inr
               << ',' << row.ue << ',' << fmt(100 * tr.dice) << ',' << fmt(100 * va.dice) << ',' << fmt(100 * tr.iou)
               << ',' << fmt(100 * va.iou) << ',' << fmt(tr.assd) << ',' << fmt(va.assd) << ',' << fmt(100 * tr.voe)
               << ',' << fmt(100 * va.voe) << ',' << c.train.epochs << ','
               << fmt(static_cast<double>(net.parameter_count()) / 1e6, 6);
            lines[r] = os.str();
            log(Level::info, "finished " + row.name);
        } catch (...) {
            errors[r] = std::current_exception();
        }
    };

    jobs = std::clamp<std::size_t>(jobs, 1, kCount);
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t j = 0; j < jobs; ++j)
        workers.emplace_back([&] {
            for (std::size_t r = next++; r < kCount; r = next++) run(r);
        });
    for (auto& t : workers) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::string csv =
        "exp,hc,wdm,ata,spm,inr,ue,dice_train,dice_val,iou_train,iou_val,assd_train_mm,assd_val_mm,voe_train,voe_val,"
        "epochs,params_m\n";
    for (const auto& l : lines) csv += l + "\n";
    write_text(dir / "ablation.csv", csv);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Liver and tumor segmentation toolkit: phantoms, training, evaluation, uncertainty, ablations",
                 "hansnet"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "hansnet 1.0");

    Common phantom, train, eval, predict, unc, ablate;
    std::size_t jobs = 1;
    auto* c_phantom = app.add_subcommand("phantom-gen", "Generate synthetic phantom volumes and a manifest");
    add_common(c_phantom, phantom);
    auto* c_train = app.add_subcommand("train", "Train a model; writes model.hnsw, metrics.jsonl, config.txt");
    add_common(c_train, train);
    auto* c_eval = app.add_subcommand("eval", "Score predictions; writes report.json and report.txt");
    add_common(c_eval, eval);
    auto* c_predict = app.add_subcommand("predict", "Write predicted label volumes and PNG slices");
    add_common(c_predict, predict);
    auto* c_unc = app.add_subcommand("uncertainty", "Write MC-dropout mean/variance volumes, heatmaps, summary.json");
    add_common(c_unc, unc);
    auto* c_ablate = app.add_subcommand("ablate", "Train the seven component configurations; writes ablation.csv");
    add_common(c_ablate, ablate);
    c_ablate->add_option("--jobs", jobs, "Configurations trained concurrently")->check(CLI::Range(1, 64))->capture_default_str();
    app.footer("Environment: HANSNET_LOG=error|info|debug (default info).\n"
               "Exit codes: 1 configuration error, 2 numerical error, 3 I/O error.");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*c_phantom) return cmd_phantom_gen(phantom);
        if (*c_train) return cmd_train(train);
        if (*c_eval) return cmd_eval(eval);
        if (*c_predict) return cmd_predict(predict);
        if (*c_unc) return cmd_uncertainty(unc);
        if (*c_ablate) return cmd_ablate(ablate, jobs);
    } catch (const ConfigError& e) {
        log(Level::error, std::string("configuration error: ") + e.what());
        return 1;
    } catch (const ContractError& e) {
        log(Level::error, std::string("invalid request: ") + e.what());
        return 1;
    } catch (const DimensionError& e) {
        log(Level::error, std::string("shape mismatch: ") + e.what());
        return 1;
    } catch (const NumericalError& e) {
        log(Level::error, std::string("numerical error: ") + e.what());
        return 2;
    } catch (const IoError& e) {
        log(Level::error, std::string("I/O error: ") + e.what());
        return 3;
    } catch (const fs::filesystem_error& e) {
        log(Level::error, std::string("I/O error: ") + e.what());
        return 3;
    }
    return 0;
}
