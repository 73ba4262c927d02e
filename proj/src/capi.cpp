#include "uareg.h"

#include "uareg/augment.hpp"
#include "uareg/common.hpp"
#include "uareg/config.hpp"
#include "uareg/data.hpp"
#include "uareg/eval.hpp"
#include "uareg/feature_io.hpp"
#include "uareg/manifest.hpp"
#include "uareg/synth.hpp"
#include "uareg/train.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

namespace fs = std::filesystem;

struct uareg_session {
    uareg::Config config;
    std::string last_error;
    std::string config_value; // backs uareg_config_get
};

namespace {

using namespace uareg;

int guard(uareg_session* s, const std::function<void()>& body) {
    if (s == nullptr) return UAREG_ERR_USAGE;
    s->last_error.clear();
    try {
        body();
        return UAREG_OK;
    } catch (const UsageError& e) {
        s->last_error = e.what();
        return UAREG_ERR_USAGE;
    } catch (const std::exception& e) {
        s->last_error = e.what();
        return UAREG_ERR_RUNTIME;
    }
}

std::string require_arg(const char* value, const char* what) {
    if (value == nullptr || *value == '\0')
        throw UsageError(std::string(what) + " is required");
    return value;
}

std::uint64_t resolved_seed(const Config& cfg) {
    if (const char* env = std::getenv("UAREG_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw UsageError(std::string("UAREG_SEED is not an integer: ") + env);
        }
    }
    return static_cast<std::uint64_t>(cfg.get_i64("seed", 0));
}

void write_resolved(const Config& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    Config copy = cfg;
    copy.set("seed", std::to_string(resolved_seed(cfg)));
    copy.write_resolved((fs::path(out_dir) / "config.resolved").string());
}

FeatureConfig feature_from_config(const Config& cfg) {
    FeatureConfig fc;
    fc.kind = feature_kind_from_name(cfg.get_str("feature", "mel"));
    fc.frame.frame_len_s = cfg.get_f64("frame_len_s", 0.05);
    fc.frame.frame_shift_s = cfg.get_f64("frame_shift_s", 0.025);
    const std::string window = cfg.get_str("window", "hann");
    if (window != "hann" && window != "rectangular")
        throw UsageError("config key 'window' must be hann or rectangular");
    fc.frame.window = window == "hann" ? WindowKind::hann : WindowKind::rectangular;
    const auto band = cfg.get_range("band", {100.0, 0.0}); // f_hi 0 = Nyquist
    fc.band.f_lo = band.first;
    fc.band.f_hi = band.second;
    fc.n_filters = static_cast<std::size_t>(cfg.get_i64("n_filters", 300));
    fc.cqt_octave_resolution = static_cast<int>(cfg.get_i64("cqt_octave_resolution", 30));
    fc.cqt_f_base = cfg.get_f64("cqt_f_base", 10.0);
    fc.cqt_fps = static_cast<int>(cfg.get_i64("cqt_fps", 30));
    return fc;
}

ModelConfig model_from_config(const Config& cfg, std::int64_t n_classes) {
    ModelConfig mc;
    mc.stem_channels = cfg.get_i64("model.stem_channels", 16);
    mc.stage_widths = cfg.get_i64_list("model.stage_widths", {16, 32, 64, 128});
    mc.blocks_per_stage = cfg.get_i64("model.blocks_per_stage", 2);
    mc.attention_heads = cfg.get_i64("model.attention_heads", 4);
    mc.crop_frames = cfg.get_i64("model.crop_frames", 384);
    mc.stem_freq_stride_above = cfg.get_i64("model.stem_freq_stride_above", 512);
    mc.n_classes = n_classes;
    return mc;
}

TrainConfig train_from_config(const Config& cfg) {
    TrainConfig tc;
    tc.alpha = cfg.get_f64("alpha", 0.0);
    tc.p_lmr = cfg.get_f64("p_lmr", 0.0);
    const auto snr = cfg.get_range("snr", {5.0, 30.0});
    tc.snr_lo_db = snr.first;
    tc.snr_hi_db = snr.second;
    tc.lr = cfg.get_f64("lr", 5e-4);
    tc.batch = cfg.get_i64("batch", 64);
    tc.weight_decay = cfg.get_f64("weight_decay", 1e-5);
    tc.epochs = cfg.get_i64("epochs", 100);
    tc.beta1 = cfg.get_f64("beta1", 0.9);
    tc.beta2 = cfg.get_f64("beta2", 0.999);
    tc.eps = cfg.get_f64("eps", 1e-8);
    tc.seed = resolved_seed(cfg);
    tc.kl_on_mixed = cfg.get_bool("kl_on_mixed", false);
    tc.fixed_noise = cfg.get_bool("fixed_noise", false);
    return tc;
}

DatasetProvider provider_for(const Config& cfg, const std::string& manifest_path,
                             const FeatureConfig& fc) {
    Manifest m = load_manifest(manifest_path);
    return DatasetProvider(std::move(m), fc, cfg.get_str("audio_root", ""),
                           cfg.get_f64("segment_s", 30.0), cfg.get_str("feature_cache", ""));
}

// Checkpoint trailer wins over session config for feature geometry, so a
// model is always evaluated on the features it was trained with.
FeatureConfig feature_from_trailer(const Config& cfg, const nlohmann::json& trailer) {
    if (trailer.contains("feature")) return FeatureConfig::from_json(trailer.at("feature"));
    return feature_from_config(cfg);
}

void check_classes(const nlohmann::json& trailer, const Manifest& manifest) {
    if (!trailer.contains("classes")) return;
    const auto classes = trailer.at("classes").get<std::vector<std::string>>();
    if (classes != manifest.class_names) {
        std::string msg = "checkpoint classes [";
        for (std::size_t i = 0; i < classes.size(); ++i)
            msg += (i ? "," : "") + classes[i];
        msg += "] do not match manifest classes [";
        for (std::size_t i = 0; i < manifest.class_names.size(); ++i)
            msg += (i ? "," : "") + manifest.class_names[i];
        msg += "]";
        throw Error(msg);
    }
}

} // namespace

extern "C" {

const char* uareg_version(void) { return "1.0.0"; }

uareg_session* uareg_session_new(void) { return new (std::nothrow) uareg_session(); }

void uareg_session_free(uareg_session* s) { delete s; }

const char* uareg_last_error(const uareg_session* s) {
    return s == nullptr ? "" : s->last_error.c_str();
}

int uareg_config_set(uareg_session* s, const char* key, const char* value) {
    return guard(s, [&] {
        s->config.set(require_arg(key, "config key"), value == nullptr ? "" : value);
    });
}

int uareg_config_load_file(uareg_session* s, const char* path) {
    return guard(s, [&] {
        s->config.merge(Config::from_file(require_arg(path, "config path")));
    });
}

const char* uareg_config_get(uareg_session* s, const char* key) {
    if (s == nullptr || key == nullptr || !s->config.has(key)) return nullptr;
    s->config_value = s->config.get_str(key);
    return s->config_value.c_str();
}

int uareg_split(uareg_session* s, const char* out_manifest) {
    return guard(s, [&] {
        const std::string out = require_arg(out_manifest, "output manifest path");
        const std::string data_dir = s->config.get_str("data_dir");
        const SplitSpec spec = SplitSpec::from_file(s->config.get_str("split_spec"));

        if (!fs::is_directory(data_dir)) throw Error("not a directory: " + data_dir);
        std::vector<std::pair<std::string, std::string>> labeled_dirs;
        for (const auto& entry : fs::directory_iterator(data_dir))
            if (entry.is_directory())
                labeled_dirs.emplace_back(entry.path().filename().string(),
                                          entry.path().string());
        std::sort(labeled_dirs.begin(), labeled_dirs.end());
        if (labeled_dirs.empty())
            throw Error("no class directories under " + data_dir);

        BuildOptions opts;
        opts.seg_len_s = s->config.get_f64("segment_s", 30.0);
        opts.overlap_s = s->config.get_f64("overlap_s", 15.0);
        opts.val_fraction = s->config.get_f64("val_fraction", 0.15);
        opts.seed = resolved_seed(s->config);
        opts.record_level_val = s->config.get_bool("record_level_val", false);

        BuildReport report;
        const Manifest manifest = build_manifest(labeled_dirs, spec, opts, &report);
        for (const auto& w : report.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
        save_manifest(manifest, out);
    });
}

int uareg_validate_split(uareg_session* s, const char* manifest) {
    return guard(s, [&] {
        const Manifest m = load_manifest(require_arg(manifest, "manifest path"));
        const std::vector<std::string> leaked = validate_split(m);
        if (!leaked.empty()) {
            std::string msg = "records on both sides of the train/test divide:";
            for (const auto& id : leaked) msg += " " + id;
            throw Error(msg);
        }
    });
}

int uareg_extract(uareg_session* s, const char* manifest, const char* out_dir) {
    return guard(s, [&] {
        const std::string out = require_arg(out_dir, "output directory");
        Config cfg = s->config;
        cfg.set("feature_cache", out); // extraction is exactly "fill the cache"
        DatasetProvider data =
            provider_for(cfg, require_arg(manifest, "manifest path"), feature_from_config(cfg));
        write_resolved(cfg, out);
        for (std::size_t i = 0; i < data.manifest().entries.size(); ++i) data.feature(i);
    });
}

int uareg_augment_preview(uareg_session* s, const char* manifest, const char* out_dir) {
    return guard(s, [&] {
        const std::string out = require_arg(out_dir, "output directory");
        const std::string mode = s->config.get_str("mode", "lmr");
        if (mode != "noise" && mode != "lmr" && mode != "mixup")
            throw UsageError("config key 'mode' must be noise, lmr, or mixup");

        const FeatureConfig fc = feature_from_config(s->config);
        DatasetProvider data = provider_for(s->config, require_arg(manifest, "manifest path"), fc);
        write_resolved(s->config, out);

        std::vector<std::size_t> idx = data.split_indices("train");
        if (idx.empty()) throw Error("training split is empty");
        const auto count = std::min<std::size_t>(
            idx.size(), static_cast<std::size_t>(s->config.get_i64("preview_count", 8)));
        Rng rng(resolved_seed(s->config));
        const auto snr_range = s->config.get_range("snr", {5.0, 30.0});

        for (std::size_t k = 0; k < count; ++k) {
            const std::size_t i = idx[k];
            const std::size_t j = idx[(k + 1) % idx.size()];
            nlohmann::json sidecar{{"mode", mode}};
            Spectrogram spec;
            spec.meta.feature_kind = feature_kind_name(fc.kind);
            spec.meta.sample_rate = 0.0;
            spec.meta.band = fc.band;
            spec.meta.config_hash = "";
            spec.meta.record_id = data.entry(i).record_id;
            spec.meta.offset_s = data.entry(i).offset_s;

            if (mode == "noise") {
                const double snr = rng.uniform(snr_range.first, snr_range.second);
                spec.values = data.noisy_feature(i, snr, rng);
                sidecar["snr_db"] = snr;
                sidecar["parents"] = {data.entry(i).record_id};
            } else {
                const Matrix& xi = data.feature(i);
                const Matrix& xj = data.feature(j);
                MixedSample mix;
                if (mode == "lmr") {
                    const LmrPatch patch =
                        sample_lmr_patch(static_cast<std::int64_t>(xi.rows),
                                         static_cast<std::int64_t>(xi.cols), rng);
                    mix = lmr_mix(xi, xj, patch, data.label(i), data.label(j));
                    sidecar["patch"] = {{"a", mix.patch.a},
                                        {"b", mix.patch.b},
                                        {"t0", mix.patch.t0},
                                        {"f0", mix.patch.f0}};
                } else {
                    mix = mixup_mix(xi, xj, rng, data.label(i), data.label(j),
                                    s->config.get_f64("mixup_beta", 0.0));
                }
                spec.values = std::move(mix.values);
                sidecar["lambda"] = mix.lambda;
                sidecar["labels"] = {mix.label_i, mix.label_j};
                sidecar["parents"] = {data.entry(i).record_id, data.entry(j).record_id};
            }

            char stem[32];
            std::snprintf(stem, sizeof(stem), "preview-%03zu", k);
            save_feature(spec, (fs::path(out) / (std::string(stem) + ".uaspec")).string());
            std::ofstream side((fs::path(out) / (std::string(stem) + ".json")).string());
            if (!side) throw Error("cannot write sidecar for " + std::string(stem));
            side << sidecar.dump(2) << '\n';
        }
    });
}

int uareg_synth_data(uareg_session* s, const char* out_dir) {
    return guard(s, [&] {
        const std::string out = require_arg(out_dir, "output directory");
        const Config& cfg = s->config;
        SynthConfig sc;
        if (cfg.get_bool("synth.perturbed", false))
            sc = SynthConfig::perturbed_task(out, resolved_seed(cfg));
        else {
            sc.out_dir = out;
            sc.seed = resolved_seed(cfg);
        }
        sc.sample_rate = cfg.get_f64("synth.sample_rate", sc.sample_rate);
        sc.segment_s = cfg.get_f64("synth.segment_s", sc.segment_s);
        sc.train_records = static_cast<int>(cfg.get_i64("synth.train_records", sc.train_records));
        sc.test_records = static_cast<int>(cfg.get_i64("synth.test_records", sc.test_records));
        sc.tone_lo_hz = cfg.get_f64("synth.tone_lo_hz", sc.tone_lo_hz);
        sc.tone_hi_hz = cfg.get_f64("synth.tone_hi_hz", sc.tone_hi_hz);
        sc.amplitude = cfg.get_f64("synth.amplitude", sc.amplitude);
        sc.noise_sd = cfg.get_f64("synth.noise_sd", sc.noise_sd);
        sc.freq_jitter = cfg.get_f64("synth.freq_jitter", sc.freq_jitter);
        sc.amp_jitter = cfg.get_f64("synth.amp_jitter", sc.amp_jitter);
        const auto snr = cfg.get_range("synth.snr", {sc.snr_lo_db, sc.snr_hi_db});
        sc.snr_lo_db = snr.first;
        sc.snr_hi_db = snr.second;
        sc.val_fraction = cfg.get_f64("val_fraction", sc.val_fraction);
        synth_dataset(sc);
        write_resolved(cfg, out);
    });
}

int uareg_train(uareg_session* s, const char* manifest, const char* out_dir,
                double* best_val_acc) {
    return guard(s, [&] {
        const std::string out = require_arg(out_dir, "output directory");
        const FeatureConfig fc = feature_from_config(s->config);
        DatasetProvider data = provider_for(s->config, require_arg(manifest, "manifest path"), fc);
        const ModelConfig mc = model_from_config(
            s->config, static_cast<std::int64_t>(data.class_names().size()));
        const TrainConfig tc = train_from_config(s->config);
        write_resolved(s->config, out);
        const TrainResult result = train_model(data, mc, tc, out);
        if (best_val_acc != nullptr) *best_val_acc = result.best_val_acc;
    });
}

int uareg_eval(uareg_session* s, const char* ckpt, const char* manifest, const char* split,
               const char* out_dir, double* accuracy) {
    return guard(s, [&] {
        const std::string out = require_arg(out_dir, "output directory");
        auto [model, trailer] = load_checkpoint(require_arg(ckpt, "checkpoint path"));
        const FeatureConfig fc = feature_from_trailer(s->config, trailer);
        const double seg_s = trailer.contains("segment_s")
                                 ? trailer.at("segment_s").get<double>()
                                 : s->config.get_f64("segment_s", 30.0);
        Manifest m = load_manifest(require_arg(manifest, "manifest path"));
        check_classes(trailer, m);
        DatasetProvider data(std::move(m), fc, s->config.get_str("audio_root", ""), seg_s,
                             s->config.get_str("feature_cache", ""));
        write_resolved(s->config, out);

        const EvalResult ev =
            evaluate(model, data, split == nullptr || *split == '\0' ? "test" : split,
                     s->config.get_i64("batch", 64));
        std::ofstream csv((fs::path(out) / "confusion.csv").string());
        if (!csv) throw Error("cannot write confusion.csv");
        csv << ev.confusion.to_csv();
        ev.confusion.write_pgm((fs::path(out) / "confusion.pgm").string());
        if (accuracy != nullptr) *accuracy = ev.accuracy;
    });
}

int uareg_snr_sweep(uareg_session* s, const char* ckpt, const char* manifest,
                    const char* out_dir) {
    return guard(s, [&] {
        const std::string out = require_arg(out_dir, "output directory");
        auto [model, trailer] = load_checkpoint(require_arg(ckpt, "checkpoint path"));
        const FeatureConfig fc = feature_from_trailer(s->config, trailer);
        const double seg_s = trailer.contains("segment_s")
                                 ? trailer.at("segment_s").get<double>()
                                 : s->config.get_f64("segment_s", 30.0);
        Manifest m = load_manifest(require_arg(manifest, "manifest path"));
        check_classes(trailer, m);
        DatasetProvider data(std::move(m), fc, s->config.get_str("audio_root", ""), seg_s,
                             s->config.get_str("feature_cache", ""));
        write_resolved(s->config, out);

        const std::vector<SnrRange> ranges =
            parse_snr_ranges(s->config.get_str("ranges", "5:30,-5:20,-15:10"));
        const SnrSweepResult result = snr_sweep(
            model, data, ranges, resolved_seed(s->config),
            static_cast<int>(s->config.get_i64("repeats", 1)),
            s->config.get_str("split", "test"));
        std::ofstream csv((fs::path(out) / "snr_sweep.csv").string());
        if (!csv) throw Error("cannot write snr_sweep.csv");
        csv << result.to_csv();
    });
}

int uareg_alpha_sweep(uareg_session* s, const char* manifest, const char* out_dir) {
    return guard(s, [&] {
        const std::string out = require_arg(out_dir, "output directory");
        const FeatureConfig fc = feature_from_config(s->config);
        DatasetProvider data = provider_for(s->config, require_arg(manifest, "manifest path"), fc);
        const ModelConfig mc = model_from_config(
            s->config, static_cast<std::int64_t>(data.class_names().size()));
        const TrainConfig tc = train_from_config(s->config);
        const std::vector<double> alphas =
            s->config.get_f64_list("alphas", {0.0, 0.5, 1.0, 2.0});
        write_resolved(s->config, out);

        const std::vector<AlphaSweepRow> rows = alpha_sweep(data, mc, tc, alphas, out);
        std::ofstream csv((fs::path(out) / "alpha_sweep.csv").string());
        if (!csv) throw Error("cannot write alpha_sweep.csv");
        csv << alpha_table_csv(rows);
    });
}

int uareg_gradcheck(uareg_session* s, double* max_rel_err) {
    return guard(s, [&] {
        const double err = objective_gradient_check();
        if (max_rel_err != nullptr) *max_rel_err = err;
        if (!(err < 1e-5))
            throw Error("gradient check failed: max relative error " + std::to_string(err));
    });
}

} // extern "C"
