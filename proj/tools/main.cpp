// Command-line front end. Everything goes through the C API in uareg.h so the
// binary exercises exactly what a foreign-language binding would see.
#include "uareg.h"

#include "CLI11.hpp"

#include <cstdio>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

namespace {

struct Session {
    uareg_session* s = uareg_session_new();
    ~Session() { uareg_session_free(s); }
    Session() = default;
    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;
};

// Exit codes: UAREG_OK on success, the C API's code otherwise, with the
// error printed as a single line.
int finish(uareg_session* s, int rc) {
    if (rc != UAREG_OK) std::fprintf(stderr, "error: %s\n", uareg_last_error(s));
    return rc;
}

// Binds CLI flags to flat config keys. A flag the user did not pass is never
// set, so values layer as defaults < --config file < flags.
class FlagMap {
public:
    explicit FlagMap(CLI::App* cmd) : cmd_(cmd) {
        cmd->add_option("--config", config_path_, "key = value file; flags override its entries");
    }

    CLI::Option* opt(const std::string& flag, const std::string& key, const std::string& desc) {
        auto store = std::make_shared<std::string>();
        CLI::Option* o = cmd_->add_option(flag, *store, desc);
        opts_.emplace_back(o, key, store);
        return o;
    }

    CLI::Option* on_off(const std::string& flag, const std::string& key, const std::string& desc) {
        CLI::Option* o = cmd_->add_flag(flag, desc);
        opts_.emplace_back(o, key, nullptr);
        return o;
    }

    int apply(uareg_session* s) const {
        if (!config_path_.empty()) {
            int rc = uareg_config_load_file(s, config_path_.c_str());
            if (rc != UAREG_OK) return rc;
        }
        for (const auto& [o, key, store] : opts_) {
            if (o->count() == 0) continue;
            int rc = uareg_config_set(s, key.c_str(), store ? store->c_str() : "true");
            if (rc != UAREG_OK) return rc;
        }
        return UAREG_OK;
    }

private:
    CLI::App* cmd_;
    std::string config_path_;
    std::vector<std::tuple<CLI::Option*, std::string, std::shared_ptr<std::string>>> opts_;
};

void add_feature_flags(FlagMap& f) {
    f.opt("--feature", "feature", "stft | mel | bark | cqt");
    f.opt("--band", "band", "analysis band LO:HI in Hz; HI = 0 means Nyquist");
    f.opt("--n-filters", "n_filters", "triangular filter count for mel/bark");
    f.opt("--frame-len-s", "frame_len_s", "frame length in seconds");
    f.opt("--frame-shift-s", "frame_shift_s", "frame shift in seconds");
    f.opt("--window", "window", "hann | rectangular");
    f.opt("--cqt-octave-resolution", "cqt_octave_resolution", "constant-Q bins per octave");
    f.opt("--cqt-f-base", "cqt_f_base", "constant-Q anchor frequency in Hz");
    f.opt("--cqt-fps", "cqt_fps", "constant-Q output frames per second");
}

void add_data_flags(FlagMap& f) {
    f.opt("--audio-root", "audio_root", "base directory for relative manifest paths");
    f.opt("--segment-s", "segment_s", "segment length in seconds");
    f.opt("--feature-cache", "feature_cache", "directory for cached clean features");
}

void add_train_flags(FlagMap& f) {
    f.opt("--alpha", "alpha", "consistency term weight; 0 disables");
    f.opt("--lmr-p", "p_lmr", "per-batch probability of patch mixing");
    f.opt("--snr", "snr", "training noise SNR range LO:HI in dB");
    f.opt("--lr", "lr", "learning rate");
    f.opt("--batch", "batch", "batch size");
    f.opt("--epochs", "epochs", "training epochs");
    f.opt("--weight-decay", "weight_decay", "decoupled weight decay");
    f.opt("--beta1", "beta1", "first-moment decay");
    f.opt("--beta2", "beta2", "second-moment decay");
    f.opt("--eps", "eps", "denominator offset");
    f.on_off("--kl-on-mixed", "kl_on_mixed", "consistency against mixed instead of raw logits");
    f.on_off("--fixed-noise", "fixed_noise", "reuse first-epoch noise realizations");
    f.opt("--stem-channels", "model.stem_channels", "stem output channels");
    f.opt("--stage-widths", "model.stage_widths", "comma-separated stage widths");
    f.opt("--blocks-per-stage", "model.blocks_per_stage", "residual blocks per stage");
    f.opt("--attention-heads", "model.attention_heads", "attention pooling heads");
    f.opt("--crop-frames", "model.crop_frames", "time-axis crop/pad before the stem");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app("underwater acoustic target recognition pipeline");
    app.set_version_flag("--version", []() { return std::string(uareg_version()); });
    app.require_subcommand(1);

    // ---- split
    auto* split = app.add_subcommand("split", "scan class directories into a segment manifest");
    FlagMap split_f(split);
    std::string split_out;
    split_f.opt("--data", "data_dir", "directory with one subdirectory per class")->required();
    split_f.opt("--split-spec", "split_spec", "record split JSON (id -> train|test)")->required();
    split->add_option("--out", split_out, "output manifest path")->required();
    split_f.opt("--overlap-s", "overlap_s", "segment overlap in seconds");
    split_f.opt("--val-fraction", "val_fraction", "fraction of train promoted to val");
    split_f.on_off("--record-level-val", "record_level_val", "draw validation per record");
    split_f.opt("--segment-s", "segment_s", "segment length in seconds");
    split_f.opt("--seed", "seed", "validation draw seed");

    // ---- validate-split
    auto* vsplit = app.add_subcommand("validate-split", "check a manifest for record-level leaks");
    std::string vsplit_manifest;
    vsplit->add_option("--manifest", vsplit_manifest, "manifest to check")->required();

    // ---- extract
    auto* extract = app.add_subcommand("extract", "featurize every manifest entry into a cache");
    FlagMap extract_f(extract);
    std::string extract_manifest, extract_out;
    extract->add_option("--manifest", extract_manifest, "input manifest")->required();
    extract->add_option("--out", extract_out, "feature cache directory")->required();
    add_feature_flags(extract_f);
    add_data_flags(extract_f);
    extract_f.opt("--seed", "seed", "recorded in config.resolved");

    // ---- augment-preview
    auto* preview = app.add_subcommand("augment-preview", "write a few augmented features plus sidecars");
    FlagMap preview_f(preview);
    std::string preview_manifest, preview_out;
    preview->add_option("--manifest", preview_manifest, "input manifest")->required();
    preview->add_option("--out", preview_out, "output directory")->required();
    preview_f.opt("--mode", "mode", "noise | lmr | mixup");
    preview_f.opt("--count", "preview_count", "how many samples to write");
    preview_f.opt("--snr", "snr", "noise mode SNR range LO:HI in dB");
    add_feature_flags(preview_f);
    add_data_flags(preview_f);
    preview_f.opt("--seed", "seed", "draw seed");

    // ---- train
    auto* train = app.add_subcommand("train", "train a classifier and keep the best checkpoint");
    FlagMap train_f(train);
    std::string train_manifest, train_out;
    train->add_option("--manifest", train_manifest, "input manifest")->required();
    train->add_option("--out", train_out, "run directory")->required();
    add_feature_flags(train_f);
    add_data_flags(train_f);
    add_train_flags(train_f);
    train_f.opt("--seed", "seed", "master seed");

    // ---- eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on one split");
    FlagMap eval_f(eval);
    std::string eval_ckpt, eval_manifest, eval_split = "test", eval_out;
    eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
    eval->add_option("--manifest", eval_manifest, "input manifest")->required();
    eval->add_option("--split", eval_split, "train | val | test");
    eval->add_option("--out", eval_out, "output directory for the confusion matrix")->required();
    eval_f.opt("--batch", "batch", "evaluation batch size");
    add_data_flags(eval_f);

    // ---- snr-sweep
    auto* sweep = app.add_subcommand("snr-sweep", "accuracy under test-time noise ranges");
    FlagMap sweep_f(sweep);
    std::string sweep_ckpt, sweep_manifest, sweep_out;
    sweep->add_option("--ckpt", sweep_ckpt, "checkpoint path")->required();
    sweep->add_option("--manifest", sweep_manifest, "input manifest")->required();
    sweep->add_option("--out", sweep_out, "output directory")->required();
    sweep_f.opt("--ranges", "ranges", "comma-separated LO:HI dB ranges, or clean");
    sweep_f.opt("--repeats", "repeats", "noise realizations to average per range");
    sweep_f.opt("--split", "split", "split to perturb");
    sweep_f.opt("--seed", "seed", "noise seed");
    add_data_flags(sweep_f);

    // ---- alpha-sweep
    auto* alpha = app.add_subcommand("alpha-sweep", "one training per consistency weight");
    FlagMap alpha_f(alpha);
    std::string alpha_manifest, alpha_out;
    alpha->add_option("--manifest", alpha_manifest, "input manifest")->required();
    alpha->add_option("--out", alpha_out, "parent run directory")->required();
    alpha_f.opt("--alphas", "alphas", "comma-separated consistency weights");
    add_feature_flags(alpha_f);
    add_data_flags(alpha_f);
    add_train_flags(alpha_f);
    alpha_f.opt("--seed", "seed", "master seed");

    // ---- gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the full objective");
    std::string gc_precision = "f64";
    gradcheck->add_option("--precision", gc_precision, "f64 (the check runs in 64-bit)")
        ->check(CLI::IsMember({"f64"}));

    // ---- synth-data
    auto* synth = app.add_subcommand("synth-data", "generate the two-tone WAV corpus");
    FlagMap synth_f(synth);
    std::string synth_out;
    synth->add_option("--out", synth_out, "dataset root directory")->required();
    synth_f.on_off("--perturbed", "synth.perturbed", "jittered, noise-floored variant of the task");
    synth_f.opt("--sample-rate", "synth.sample_rate", "sample rate in Hz");
    synth_f.opt("--segment-s", "synth.segment_s", "record length in seconds");
    synth_f.opt("--train-records", "synth.train_records", "records on the training side");
    synth_f.opt("--test-records", "synth.test_records", "records on the test side");
    synth_f.opt("--tone-lo", "synth.tone_lo_hz", "class 0 tone in Hz");
    synth_f.opt("--tone-hi", "synth.tone_hi_hz", "class 1 tone in Hz");
    synth_f.opt("--amplitude", "synth.amplitude", "tone amplitude");
    synth_f.opt("--noise-sd", "synth.noise_sd", "additive noise floor");
    synth_f.opt("--freq-jitter", "synth.freq_jitter", "relative per-record frequency jitter");
    synth_f.opt("--amp-jitter", "synth.amp_jitter", "relative per-record amplitude jitter");
    synth_f.opt("--snr", "synth.snr", "per-record extra noise SNR range LO:HI in dB");
    synth_f.opt("--val-fraction", "val_fraction", "fraction of train promoted to val");
    synth_f.opt("--seed", "seed", "generation seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::RequiredError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const CLI::ExtrasError&) {
        std::fprintf(stderr, "error: unknown subcommand\n");
        return 2;
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }

    Session session;
    uareg_session* s = session.s;

    if (split->parsed()) {
        if (int rc = split_f.apply(s); rc != UAREG_OK) return finish(s, rc);
        return finish(s, uareg_split(s, split_out.c_str()));
    }
    if (vsplit->parsed()) {
        int rc = uareg_validate_split(s, vsplit_manifest.c_str());
        if (rc == UAREG_OK) std::printf("split is record-disjoint\n");
        return finish(s, rc);
    }
    if (extract->parsed()) {
        if (int rc = extract_f.apply(s); rc != UAREG_OK) return finish(s, rc);
        return finish(s, uareg_extract(s, extract_manifest.c_str(), extract_out.c_str()));
    }
    if (preview->parsed()) {
        if (int rc = preview_f.apply(s); rc != UAREG_OK) return finish(s, rc);
        return finish(s, uareg_augment_preview(s, preview_manifest.c_str(), preview_out.c_str()));
    }
    if (train->parsed()) {
        if (int rc = train_f.apply(s); rc != UAREG_OK) return finish(s, rc);
        double best = 0.0;
        int rc = uareg_train(s, train_manifest.c_str(), train_out.c_str(), &best);
        if (rc == UAREG_OK) std::printf("best_val_acc %.6f\n", best);
        return finish(s, rc);
    }
    if (eval->parsed()) {
        if (int rc = eval_f.apply(s); rc != UAREG_OK) return finish(s, rc);
        double acc = 0.0;
        int rc = uareg_eval(s, eval_ckpt.c_str(), eval_manifest.c_str(), eval_split.c_str(),
                            eval_out.c_str(), &acc);
        if (rc == UAREG_OK) std::printf("accuracy %.6f\n", acc);
        return finish(s, rc);
    }
    if (sweep->parsed()) {
        if (int rc = sweep_f.apply(s); rc != UAREG_OK) return finish(s, rc);
        int rc = uareg_snr_sweep(s, sweep_ckpt.c_str(), sweep_manifest.c_str(), sweep_out.c_str());
        if (rc == UAREG_OK) std::printf("wrote %s/snr_sweep.csv\n", sweep_out.c_str());
        return finish(s, rc);
    }
    if (alpha->parsed()) {
        if (int rc = alpha_f.apply(s); rc != UAREG_OK) return finish(s, rc);
        int rc = uareg_alpha_sweep(s, alpha_manifest.c_str(), alpha_out.c_str());
        if (rc == UAREG_OK) std::printf("wrote %s/alpha_sweep.csv\n", alpha_out.c_str());
        return finish(s, rc);
    }
    if (gradcheck->parsed()) {
        double err = 0.0;
        int rc = uareg_gradcheck(s, &err);
        std::printf("max relative error %.3e\n", err);
        return finish(s, rc);
    }
    if (synth->parsed()) {
        if (int rc = synth_f.apply(s); rc != UAREG_OK) return finish(s, rc);
        int rc = uareg_synth_data(s, synth_out.c_str());
        if (rc == UAREG_OK) std::printf("wrote dataset under %s\n", synth_out.c_str());
        return finish(s, rc);
    }
    std::fprintf(stderr, "error: unknown subcommand\n");
    return 2;
}
