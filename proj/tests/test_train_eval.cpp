#include "doctest.h"
#include "helpers.hpp"

#include "uareg/data.hpp"
#include "uareg/eval.hpp"
#include "uareg/synth.hpp"
#include "uareg/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace uareg;
namespace fs = std::filesystem;

namespace {

// One tiny separable corpus per fixture: 4 train / 2 val / 4 test segments of
// 1 s at 2 kHz, mel features narrow enough for a toy model to digest fast.
struct MicroTask {
    testutil::TempDir tmp{"traineval"};
    SynthResult synth;
    DatasetProvider data;

    static SynthResult make_synth(const std::string& dir, double val_fraction) {
        SynthConfig cfg;
        cfg.out_dir = dir;
        cfg.sample_rate = 2000.0;
        cfg.segment_s = 1.0;
        cfg.train_records = 6;
        cfg.test_records = 4;
        cfg.val_fraction = val_fraction;
        cfg.seed = 21;
        return synth_dataset(cfg);
    }

    static FeatureConfig feature() {
        FeatureConfig f;
        f.kind = FeatureKind::mel;
        f.band.f_lo = 50.0;
        f.band.f_hi = 1000.0;
        f.n_filters = 16;
        return f;
    }

    explicit MicroTask(double val_fraction = 0.25)
        : synth(make_synth(tmp.sub("corpus"), val_fraction)),
          data(synth.manifest, feature(), "", 1.0) {}
};

ModelConfig micro_model() {
    ModelConfig m;
    m.stem_channels = 4;
    m.stage_widths = {4, 8};
    m.blocks_per_stage = 1;
    m.attention_heads = 2;
    m.n_classes = 2;
    m.crop_frames = 16;
    return m;
}

TrainConfig micro_train(std::uint64_t seed) {
    TrainConfig t;
    t.alpha = 0.5;
    t.p_lmr = 0.5;
    t.batch = 4;
    t.epochs = 2;
    t.seed = seed;
    return t;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ls(line);
        std::string f;
        while (std::getline(ls, f, ',')) fields.push_back(f);
        rows.push_back(std::move(fields));
    }
    return rows;
}

} // namespace

TEST_CASE("training writes metrics, history, and a loadable best checkpoint") {
    MicroTask task;
    const auto tcfg = micro_train(1);
    const auto result = train_model(task.data, micro_model(), tcfg, task.tmp.sub("run"));

    REQUIRE(result.history.size() == 2);
    CHECK(result.history[0].epoch == 1);
    CHECK(result.history[1].epoch == 2);
    for (const auto& e : result.history) {
        CHECK(std::isfinite(e.train_loss));
        CHECK(e.reg > 0.0); // alpha > 0: the consistency term is live
        CHECK(e.val_acc >= 0.0);
        CHECK(e.val_acc <= 1.0);
    }
    REQUIRE(result.best_epoch >= 1);
    REQUIRE(result.best_epoch <= 2);
    CHECK(result.best_val_acc ==
          result.history[static_cast<std::size_t>(result.best_epoch - 1)].val_acc);

    const auto rows = parse_csv(testutil::slurp(result.metrics_path));
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == std::vector<std::string>{"epoch", "train_loss", "ce", "reg", "val_acc"});
    for (std::size_t r = 1; r < rows.size(); ++r) {
        REQUIRE(rows[r].size() == 5);
        CHECK(std::stoll(rows[r][0]) == static_cast<long long>(r));
        CHECK(std::stod(rows[r][1]) ==
              doctest::Approx(result.history[r - 1].train_loss).epsilon(1e-15));
        CHECK(std::stod(rows[r][3]) == doctest::Approx(result.history[r - 1].reg).epsilon(1e-15));
    }

    auto [model, trailer] = load_checkpoint(result.checkpoint_path);
    CHECK(trailer["classes"] == nlohmann::json({"tone-hi", "tone-lo"}));
    CHECK(trailer["segment_s"] == 1.0);
    CHECK(trailer["train"]["alpha"] == 0.5);
    CHECK(trailer["model"]["n_classes"] == 2);
    const auto fcfg = FeatureConfig::from_json(trailer["feature"]);
    CHECK(fcfg.kind == FeatureKind::mel);
    CHECK(fcfg.n_filters == 16);
    CHECK(model.cfg.crop_frames == 16);

    // The checkpointed model evaluates cleanly on the task it was trained on.
    const auto ev = evaluate(model, task.data, "test");
    CHECK(ev.confusion.total() == 4);
}

TEST_CASE("training is bit-deterministic in the seed") {
    MicroTask task;
    const auto a = train_model(task.data, micro_model(), micro_train(5), task.tmp.sub("a"));
    const auto b = train_model(task.data, micro_model(), micro_train(5), task.tmp.sub("b"));
    const auto c = train_model(task.data, micro_model(), micro_train(6), task.tmp.sub("c"));

    CHECK(testutil::slurp(a.metrics_path) == testutil::slurp(b.metrics_path));
    CHECK(testutil::slurp(a.checkpoint_path) == testutil::slurp(b.checkpoint_path));
    CHECK(testutil::slurp(a.metrics_path) != testutil::slurp(c.metrics_path));
}

TEST_CASE("training without a validation split selects by train loss") {
    MicroTask task(0.0);
    auto tcfg = micro_train(2);
    tcfg.alpha = 0.0;
    tcfg.p_lmr = 0.0;
    const auto result = train_model(task.data, micro_model(), tcfg, task.tmp.sub("noval"));

    REQUIRE(result.history.size() == 2);
    for (const auto& e : result.history) CHECK(std::isnan(e.val_acc));
    CHECK(std::isnan(result.best_val_acc));

    std::size_t argmin = 0;
    for (std::size_t i = 1; i < result.history.size(); ++i)
        if (result.history[i].train_loss < result.history[argmin].train_loss) argmin = i;
    CHECK(result.best_epoch == static_cast<std::int64_t>(argmin + 1));

    const auto text = testutil::slurp(result.metrics_path);
    CHECK(text.find("nan") != std::string::npos);
}

TEST_CASE("training validates configs and split coverage") {
    MicroTask task;
    auto bad_classes = micro_model();
    bad_classes.n_classes = 3;
    CHECK_THROWS_WITH_AS(train_model(task.data, bad_classes, micro_train(1), task.tmp.sub("x")),
                         doctest::Contains("model declares 3 classes but the manifest has 2"),
                         Error);

    Manifest test_only = task.synth.manifest;
    for (auto& e : test_only.entries) e.split = "test";
    DatasetProvider no_train(test_only, MicroTask::feature(), "", 1.0);
    CHECK_THROWS_WITH_AS(train_model(no_train, micro_model(), micro_train(1), task.tmp.sub("y")),
                         doctest::Contains("training split is empty"), Error);

    auto check_cfg = [&](auto mutate, const char* msg) {
        auto t = micro_train(1);
        mutate(t);
        CHECK_THROWS_WITH_AS(t.validate(), doctest::Contains(msg), Error);
    };
    check_cfg([](TrainConfig& t) { t.alpha = -0.1; }, "alpha must be >= 0");
    check_cfg([](TrainConfig& t) { t.p_lmr = 1.5; }, "p_lmr must lie in [0, 1]");
    check_cfg([](TrainConfig& t) { t.snr_lo_db = 31.0; }, "snr_lo_db must be <=");
    check_cfg([](TrainConfig& t) { t.lr = 0.0; }, "lr must be > 0");
    check_cfg([](TrainConfig& t) { t.batch = 0; }, "batch must be >= 1");
    check_cfg([](TrainConfig& t) { t.epochs = 0; }, "epochs must be >= 1");
}

TEST_CASE("evaluation fills a consistent confusion matrix and restores the mode") {
    MicroTask task;
    Rng rng(31);
    auto model = build_model<float>(micro_model(), rng);

    model.set_training(true);
    const auto ev = evaluate(model, task.data, "test", 3); // uneven batching on purpose
    CHECK(model.training); // restored

    CHECK(ev.confusion.class_names == task.data.class_names());
    CHECK(ev.confusion.total() == 4);
    CHECK(ev.accuracy == ev.confusion.accuracy());
    CHECK(ev.accuracy == doctest::Approx(static_cast<double>(ev.confusion.trace()) / 4.0));
    CHECK(ev.mean_ce >= 0.0);

    // Row sums equal the per-class test counts: two segments per class.
    CHECK(ev.confusion.at(0, 0) + ev.confusion.at(0, 1) == 2);
    CHECK(ev.confusion.at(1, 0) + ev.confusion.at(1, 1) == 2);

    model.set_training(false);
    (void)evaluate(model, task.data, "test");
    CHECK_FALSE(model.training);

    CHECK_THROWS_WITH_AS(evaluate(model, task.data, "bogus"),
                         doctest::Contains("split 'bogus' is empty"), Error);
    CHECK_THROWS_WITH_AS(evaluate(model, task.data, "test", 0),
                         doctest::Contains("batch must be >= 1"), Error);

    Rng rng3(32);
    auto three = micro_model();
    three.n_classes = 3;
    auto wrong = build_model<float>(three, rng3);
    CHECK_THROWS_WITH_AS(evaluate(wrong, task.data, "test"),
                         doctest::Contains("checkpoint expects 3 classes but the manifest has 2"),
                         Error);
}

TEST_CASE("confusion matrix summaries and serialization") {
    ConfusionMatrix cm;
    cm.class_names = {"a", "b"};
    cm.counts = {3, 1, 0, 2};
    CHECK(cm.total() == 6);
    CHECK(cm.trace() == 5);
    CHECK(cm.accuracy() == doctest::Approx(5.0 / 6.0));
    CHECK(cm.to_csv() == "true\\predicted,a,b\na,3,1\nb,0,2\n");

    ConfusionMatrix empty;
    CHECK(empty.accuracy() == 0.0);

    testutil::TempDir tmp("pgm");
    cm.write_pgm(tmp.sub("cm.pgm"), 2);
    const auto bytes = testutil::slurp(tmp.sub("cm.pgm"));
    const std::string header = "P5\n4 4\n255\n";
    REQUIRE(bytes.substr(0, header.size()) == header);
    REQUIRE(bytes.size() == header.size() + 16);
    const auto* px = reinterpret_cast<const unsigned char*>(bytes.data() + header.size());
    CHECK(px[0] == 255); // count 3 of max 3
    CHECK(px[2] == 85);  // llround(255 * 1/3)
    CHECK(px[8] == 0);   // zero-count cell
    CHECK(px[14] == 170); // llround(255 * 2/3)

    CHECK_THROWS_WITH_AS(cm.write_pgm(tmp.sub("bad.pgm"), 0),
                         doctest::Contains("cell_px >= 1"), Error);
}

TEST_CASE("snr range parsing") {
    const auto def = default_snr_ranges();
    REQUIRE(def.size() == 3);
    CHECK(def[0].lo_db == 5.0);
    CHECK(def[0].hi_db == 30.0);
    CHECK(def[2].lo_db == -15.0);
    CHECK(def[2].hi_db == 10.0);
    CHECK_FALSE(def[0].clean());

    const auto parsed = parse_snr_ranges("clean,5:30,-5:20");
    REQUIRE(parsed.size() == 3);
    CHECK(parsed[0].clean());
    CHECK(parsed[1].lo_db == 5.0);
    CHECK(parsed[1].hi_db == 30.0);
    CHECK(parsed[2].lo_db == -5.0);

    CHECK_THROWS_WITH_AS(parse_snr_ranges("5-30"), doctest::Contains("is not LO:HI"), Error);
    CHECK_THROWS_WITH_AS(parse_snr_ranges("a:b"), doctest::Contains("is not numeric"), Error);
    CHECK_THROWS_WITH_AS(parse_snr_ranges("10:5"), doctest::Contains("has lo > hi"), Error);
    CHECK_THROWS_WITH_AS(parse_snr_ranges(""), doctest::Contains("no SNR ranges given"), Error);
    CHECK_THROWS_WITH_AS(parse_snr_ranges(",,"), doctest::Contains("no SNR ranges given"), Error);
}

TEST_CASE("snr sweep reuses the clean accuracy and is seed-deterministic") {
    MicroTask task;
    Rng rng(41);
    auto model = build_model<float>(micro_model(), rng);

    const std::vector<SnrRange> ranges = {SnrRange{}, {5.0, 30.0}};
    const auto sweep = snr_sweep(model, task.data, ranges, 77, 2);
    REQUIRE(sweep.rows.size() == 2);
    CHECK(sweep.clean_accuracy == evaluate(model, task.data, "test").accuracy);
    CHECK(sweep.rows[0].accuracy == sweep.clean_accuracy);
    CHECK(sweep.rows[1].accuracy >= 0.0);
    CHECK(sweep.rows[1].accuracy <= 1.0);

    const auto again = snr_sweep(model, task.data, ranges, 77, 2);
    CHECK(again.rows[1].accuracy == sweep.rows[1].accuracy);

    const auto csv = parse_csv(sweep.to_csv());
    REQUIRE(csv.size() == 4);
    CHECK(csv[0] == std::vector<std::string>{"snr_lo_db", "snr_hi_db", "accuracy"});
    CHECK(csv[1][0] == "clean");
    CHECK(csv[1][1] == "clean");
    CHECK(csv[2][0] == "clean"); // explicit clean range in the list
    CHECK(csv[3][0] == "5");
    CHECK(csv[3][1] == "30");

    CHECK_THROWS_WITH_AS(snr_sweep(model, task.data, ranges, 1, 0),
                         doctest::Contains("repeats must lie in [1, 4096]"), Error);
    CHECK_THROWS_WITH_AS(snr_sweep(model, task.data, ranges, 1, 4097),
                         doctest::Contains("repeats must lie in [1, 4096]"), Error);
    CHECK_THROWS_WITH_AS(snr_sweep(model, task.data, ranges, 1, 1, "bogus"),
                         doctest::Contains("split 'bogus' is empty"), Error);
}

TEST_CASE("alpha sweep trains one run per alpha in its own directory") {
    MicroTask task;
    auto base = micro_train(3);
    base.epochs = 1;
    base.p_lmr = 0.0;

    const auto rows = alpha_sweep(task.data, micro_model(), base, {0.0, 0.5}, task.tmp.sub("asw"));
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].alpha == 0.0);
    CHECK(rows[1].alpha == 0.5);
    for (const auto& r : rows) {
        CHECK(r.test_acc >= 0.0);
        CHECK(r.test_acc <= 1.0);
    }
    for (const char* sub : {"asw/alpha-0/best.ckpt", "asw/alpha-0/metrics.csv",
                            "asw/alpha-0.5/best.ckpt", "asw/alpha-0.5/metrics.csv"})
        CHECK(fs::exists(task.tmp.path() / sub));

    const auto table = parse_csv(alpha_table_csv(rows));
    REQUIRE(table.size() == 3);
    CHECK(table[0] == std::vector<std::string>{"alpha", "val_acc", "test_acc"});
    CHECK(table[1][0] == "0");
    CHECK(table[2][0] == "0.5");

    CHECK_THROWS_WITH_AS(alpha_sweep(task.data, micro_model(), base, {}, task.tmp.sub("e")),
                         doctest::Contains("needs at least one alpha"), Error);
}

TEST_CASE("the full objective passes a finite-difference check") {
    CHECK(objective_gradient_check() < 1e-5);
}
