#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <spectraforge/training.hpp>

using namespace spectraforge;
namespace fs = std::filesystem;

namespace {

NetworkConfig micro_net() {
    NetworkConfig c;
    c.in_h = 8;
    c.in_w = 8;
    c.in_c = 2;
    c.out_h = 6;
    c.out_w = 6;
    c.out_c = 3;
    c.encoder_channels = {2, 3, 4};
    c.decoder_channels = {4, 3};
    return c;
}

// Default warps can invalidate a micro ground truth wholesale; these stay
// gentle enough that the gt-resolution mask keeps interior neighbor pairs.
AffineRanges gentle_ranges() {
    AffineRanges r;
    r.tx = {-0.04, 0.04};
    r.ty = {-0.04, 0.04};
    r.scale = {1.0, 1.1};
    r.rotate_deg = {-3.0, 3.0};
    r.shear_deg = {-1.0, 1.0};
    return r;
}

// Two LED rows over three reference bands, rows summing to one.
ProjectionMatrix micro_pm() {
    ProjectionMatrix pm;
    pm.rows = 2;
    pm.cols = 3;
    pm.weights = {1.0, 0.0, 0.0, 0.0, 0.5, 0.5};
    pm.grid = {450, 550, 650};
    pm.band_wavelengths = {500, 600};
    return pm;
}

TrainSample micro_sample(const std::string& id, Rng& rng) {
    TrainSample s;
    s.id = id;
    s.input = SpectralCube(8, 8, {500, 600});
    for (auto& v : s.input.data) v = static_cast<float>(rng.uniform(0.2, 0.8));
    s.gt = SpectralCube(6, 6, {450, 550, 650});
    for (auto& v : s.gt.data) v = static_cast<float>(rng.uniform(0.2, 0.8));
    return s;
}

TrainSet micro_set(size_t n, std::uint64_t seed) {
    Rng rng(seed);
    TrainSet set;
    for (size_t i = 0; i < n; ++i) set.push_back(micro_sample("s" + std::to_string(i), rng));
    return set;
}

fs::path fresh_dir(const std::string& name) {
    fs::path d = fs::temp_directory_path() / ("spectraforge_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

StageConfig quick_pretrain(int epochs) {
    StageConfig c = StageConfig::pretrain_defaults();
    c.epochs = epochs;
    c.batch_size = 2;
    c.checkpoint_cadence = 0;
    c.ranges = gentle_ranges();
    return c;
}

}  // namespace

TEST_CASE("dataset split is a seed-deterministic partition") {
    std::vector<std::string> ids;
    for (int i = 0; i < 10; ++i) ids.push_back("c" + std::to_string(i));

    auto [train, test] = split_dataset(ids, 5, 3);
    REQUIRE(train.size() == 7);
    REQUIRE(test.size() == 3);
    std::vector<std::string> all = train;
    all.insert(all.end(), test.begin(), test.end());
    std::sort(all.begin(), all.end());
    std::vector<std::string> want = ids;
    std::sort(want.begin(), want.end());
    REQUIRE(all == want);

    auto [train2, test2] = split_dataset(ids, 5, 3);
    REQUIRE(train2 == train);
    REQUIRE(test2 == test);
    auto [train3, test3] = split_dataset(ids, 6, 3);
    REQUIRE((train3 != train || test3 != test));

    REQUIRE_THROWS_AS(split_dataset(ids, 1, 10), ValidationError);
}

TEST_CASE("manifest round-trips and resolves paths against its directory") {
    fs::path dir = fresh_dir("manifest");
    Manifest m;
    m.samples = {{"a", "a_in.hsc", "a_gt.hsc", "a_seg.png"}, {"b", "b_in.hsc", "b_gt.hsc", ""}};
    m.train_ids = {"a"};
    m.test_ids = {"b"};
    m.seed = 99;
    const std::string path = (dir / "set.manifest").string();
    save_manifest(m, path);

    Manifest r = load_manifest(path);
    REQUIRE(r.samples.size() == 2);
    REQUIRE(r.seed == 99);
    REQUIRE(r.train_ids == m.train_ids);
    REQUIRE(r.test_ids == m.test_ids);
    REQUIRE(r.entry("a").input_path == (dir / "a_in.hsc").string());
    REQUIRE(r.entry("a").seg_path == (dir / "a_seg.png").string());
    REQUIRE(r.entry("b").gt_path == (dir / "b_gt.hsc").string());
    REQUIRE(r.entry("b").seg_path.empty());
    REQUIRE_THROWS_AS(r.entry("zz"), ValidationError);
}

TEST_CASE("manifest text accepts comments and rejects malformed content") {
    fs::path dir = fresh_dir("manifest_text");
    auto write = [&dir](const std::string& name, const std::string& text) {
        std::ofstream f(dir / name);
        f << text;
        return (dir / name).string();
    };

    Manifest ok = load_manifest(write("ok.manifest",
                                      "# capture session 12\n"
                                      "sample a a.hsc a_gt.hsc  # no segmentation yet\n"
                                      "train a\n"
                                      "test\n"
                                      "seed 7\n"));
    REQUIRE(ok.samples.size() == 1);
    REQUIRE(ok.test_ids.empty());

    REQUIRE_THROWS_AS(load_manifest(write("k.manifest", "volume a b c\n")), ValidationError);
    REQUIRE_THROWS_AS(load_manifest(write("s.manifest", "sample a only_one\ntrain a\ntest\n")),
                      ValidationError);
    REQUIRE_THROWS_AS(load_manifest((dir / "missing.manifest").string()), IoError);

    // split must partition the sample ids exactly
    REQUIRE_THROWS_AS(
        load_manifest(write("dup.manifest",
                            "sample a a.hsc g.hsc\nsample b b.hsc g.hsc\ntrain a b\ntest a\n")),
        ValidationError);
    REQUIRE_THROWS_AS(
        load_manifest(write("gap.manifest",
                            "sample a a.hsc g.hsc\nsample b b.hsc g.hsc\ntrain a\ntest\n")),
        ValidationError);
    REQUIRE_THROWS_AS(
        load_manifest(write("ghost.manifest", "sample a a.hsc g.hsc\ntrain a\ntest q\n")),
        ValidationError);
}

TEST_CASE("samples load through the manifest with optional segmentation") {
    fs::path dir = fresh_dir("samples");
    Rng rng(21);
    TrainSample src = micro_sample("a", rng);
    save_cube(src.input, (dir / "a_in.hsc").string());
    save_cube(src.gt, (dir / "a_gt.hsc").string());
    ValidityMask seg(6, 6);
    seg.set(1, 1, false);
    seg.set(2, 0, false);
    save_mask_png(seg, 0, (dir / "a_seg.png").string());

    Manifest m;
    m.samples = {{"a", "a_in.hsc", "a_gt.hsc", "a_seg.png"}};
    m.train_ids = {"a"};
    save_manifest(m, (dir / "set.manifest").string());
    Manifest loaded = load_manifest((dir / "set.manifest").string());

    TrainSet set = load_samples(loaded, loaded.train_ids);
    REQUIRE(set.size() == 1);
    REQUIRE(set[0].input.data == src.input.data);
    REQUIRE(set[0].gt.data == src.gt.data);
    REQUIRE(set[0].gt.wavelengths == src.gt.wavelengths);
    REQUIRE(set[0].has_seg);
    REQUIRE(set[0].seg.bits == seg.bits);

    // segmentation dims must match the ground truth
    save_mask_png(ValidityMask(8, 8), 0, (dir / "bad_seg.png").string());
    Manifest bad = loaded;
    bad.samples[0].seg_path = (dir / "bad_seg.png").string();
    REQUIRE_THROWS_AS(load_samples(bad, bad.train_ids), ValidationError);
}

TEST_CASE("stage config validation pins the batch contract") {
    REQUIRE_NOTHROW(StageConfig::pretrain_defaults().validate());
    REQUIRE_NOTHROW(StageConfig::main_defaults().validate());

    auto broken = [](auto mutate) {
        StageConfig c = StageConfig::main_defaults();
        mutate(c);
        return c;
    };
    REQUIRE_THROWS_AS(broken([](StageConfig& c) { c.epochs = -1; }).validate(), ValidationError);
    REQUIRE_THROWS_AS(broken([](StageConfig& c) { c.batch_size = 0; }).validate(),
                      ValidationError);
    REQUIRE_THROWS_AS(broken([](StageConfig& c) { c.raw_per_batch = 3; }).validate(),
                      ValidationError);
    REQUIRE_THROWS_AS(broken([](StageConfig& c) { c.smoothl1_beta = 0; }).validate(),
                      ValidationError);
    REQUIRE_THROWS_AS(broken([](StageConfig& c) { c.val_fraction = 1.0; }).validate(),
                      ValidationError);
    REQUIRE_THROWS_AS(broken([](StageConfig& c) { c.val_cadence = 0; }).validate(),
                      ValidationError);
    REQUIRE_THROWS_AS(broken([](StageConfig& c) { c.checkpoint_cadence = -2; }).validate(),
                      ValidationError);

    // the 3:2 mix applies to the main stage only
    StageConfig pre = StageConfig::pretrain_defaults();
    pre.projected_per_batch = 9;
    pre.raw_per_batch = 9;
    REQUIRE_NOTHROW(pre.validate());
}

TEST_CASE("main batches carry the exact projected-to-raw mix") {
    TrainSet data = micro_set(6, 31);
    StageConfig cfg = StageConfig::main_defaults();
    cfg.augment = false;
    ProjectionMatrix pm = micro_pm();
    Rng rng(5);

    std::vector<size_t> pattern_seen;
    int batches = 1000;
    for (int b = 0; b < batches; ++b) {
        std::vector<size_t> idx(5);
        for (auto& i : idx) i = rng.below(6);
        auto batch = make_main_batch(data, idx, pm, rng, cfg, 8, 8);
        REQUIRE(batch.size() == 5);
        int projected = 0;
        size_t pattern = 0;
        for (size_t k = 0; k < batch.size(); ++k) {
            projected += batch[k].projected ? 1 : 0;
            pattern = pattern * 2 + (batch[k].projected ? 1 : 0);
        }
        REQUIRE(projected == 3);
        pattern_seen.push_back(pattern);
    }
    // provenance positions shuffle: all C(5,3) arrangements show up
    std::sort(pattern_seen.begin(), pattern_seen.end());
    pattern_seen.erase(std::unique(pattern_seen.begin(), pattern_seen.end()), pattern_seen.end());
    REQUIRE(pattern_seen.size() == 10);

    std::vector<size_t> wrong(4, 0);
    REQUIRE_THROWS_AS(make_main_batch(data, wrong, pm, rng, cfg, 8, 8), ValidationError);
}

TEST_CASE("pretrain items project the ground truth to input dims") {
    TrainSet data = micro_set(3, 32);
    StageConfig cfg = StageConfig::pretrain_defaults();
    cfg.augment = false;
    Rng rng(6);
    auto batch = make_pretrain_batch(data, {0, 1, 2}, micro_pm(), rng, cfg, 8, 8);
    REQUIRE(batch.size() == 3);
    for (const auto& item : batch) {
        REQUIRE(item.projected);
        REQUIRE(item.input.size() == 2u * 8 * 8);
        REQUIRE(item.gt.size() == 3u * 6 * 6);
        REQUIRE(item.mask.bits.empty());
    }

    cfg.augment = true;
    cfg.ranges = gentle_ranges();
    auto warped = make_pretrain_batch(data, {0, 1, 2}, micro_pm(), rng, cfg, 8, 8);
    REQUIRE(warped[0].mask.bits.size() == 36);  // spatial mask at gt resolution
}

TEST_CASE("training is bit-deterministic for a fixed seed") {
    TrainSet data = micro_set(4, 33);
    StageConfig cfg = quick_pretrain(2);
    cfg.val_fraction = 0.5;
    cfg.val_cadence = 1;

    auto run = [&]() {
        Trainer t = make_trainer(micro_net(), 17);
        train_stage(t, data, cfg, micro_pm());
        return t;
    };
    Trainer a = run();
    Trainer b = run();
    REQUIRE(a.progress.loss_history == b.progress.loss_history);
    REQUIRE(a.progress.val_history == b.progress.val_history);
    REQUIRE(a.progress.loss_history.size() == 2);
    for (size_t i = 0; i < a.net.params.size(); ++i)
        REQUIRE(a.net.params[i]->val == b.net.params[i]->val);

    Trainer c = make_trainer(micro_net(), 18);
    train_stage(c, data, cfg, micro_pm());
    REQUIRE(a.progress.loss_history != c.progress.loss_history);
}

TEST_CASE("main stage training runs deterministically") {
    TrainSet data = micro_set(6, 34);
    StageConfig cfg = StageConfig::main_defaults();
    cfg.epochs = 2;
    cfg.checkpoint_cadence = 0;
    cfg.ranges = gentle_ranges();

    auto run = [&]() {
        Trainer t = make_trainer(micro_net(), 19);
        train_stage(t, data, cfg, micro_pm());
        return t.progress.loss_history;
    };
    auto h1 = run();
    auto h2 = run();
    REQUIRE(h1 == h2);
    REQUIRE(h1.size() == 2);
    for (double v : h1) REQUIRE(std::isfinite(v));
}

TEST_CASE("validation history follows the cadence on the leading slice") {
    TrainSet data = micro_set(4, 35);
    StageConfig cfg = quick_pretrain(4);
    cfg.val_fraction = 0.5;
    cfg.val_cadence = 2;
    Trainer t = make_trainer(micro_net(), 20);
    train_stage(t, data, cfg, micro_pm());
    REQUIRE(t.progress.val_history.size() == 2);
    REQUIRE(t.progress.val_history[0].first == 2);
    REQUIRE(t.progress.val_history[1].first == 4);
    for (const auto& [e, angle] : t.progress.val_history) {
        REQUIRE(angle >= 0.0);
        REQUIRE(angle <= 1.0);
    }

    cfg.val_fraction = 0.0;
    Trainer u = make_trainer(micro_net(), 20);
    train_stage(u, data, cfg, micro_pm());
    REQUIRE(u.progress.val_history.empty());
}

TEST_CASE("training rejects mismatched sample dimensions") {
    StageConfig cfg = quick_pretrain(1);
    ProjectionMatrix pm = micro_pm();

    Trainer t = make_trainer(micro_net(), 22);
    TrainSet empty;
    REQUIRE_THROWS_AS(train_stage(t, empty, cfg, pm), ValidationError);

    TrainSet bad_gt = micro_set(2, 36);
    bad_gt[1].gt = SpectralCube(4, 4, {450, 550, 650});
    REQUIRE_THROWS_AS(train_stage(t, bad_gt, cfg, pm), ValidationError);

    TrainSet bad_in = micro_set(2, 37);
    bad_in[0].input = SpectralCube(9, 8, {500, 600});
    StageConfig main_cfg = StageConfig::main_defaults();
    main_cfg.epochs = 1;
    REQUIRE_THROWS_AS(train_stage(t, bad_in, main_cfg, pm), ValidationError);
}

TEST_CASE("training aborts when the loss turns non-finite") {
    TrainSet data = micro_set(1, 38);
    data[0].gt.data[4] = std::numeric_limits<float>::quiet_NaN();
    StageConfig cfg = StageConfig::main_defaults();
    cfg.epochs = 1;
    cfg.batch_size = 1;
    cfg.projected_per_batch = 0;
    cfg.raw_per_batch = 1;
    cfg.augment = false;
    Trainer t = make_trainer(micro_net(), 23);
    REQUIRE_THROWS_WITH(train_stage(t, data, cfg, micro_pm()),
                        Catch::Matchers::ContainsSubstring("non-finite"));
}

TEST_CASE("checkpoints restore the trainer exactly") {
    fs::path dir = fresh_dir("ckpt");
    TrainSet data = micro_set(4, 39);
    StageConfig cfg = quick_pretrain(2);
    cfg.val_fraction = 0.5;
    cfg.val_cadence = 1;
    Trainer t = make_trainer(micro_net(), 24);
    train_stage(t, data, cfg, micro_pm());

    const std::string path = (dir / "state.bin").string();
    save_checkpoint(t, Stage::Pretrain, path);
    LoadedCheckpoint lc = load_checkpoint(path);
    REQUIRE(lc.stage == Stage::Pretrain);
    REQUIRE(lc.trainer.progress.epoch == 2);
    REQUIRE(lc.trainer.progress.loss_history == t.progress.loss_history);
    REQUIRE(lc.trainer.progress.val_history == t.progress.val_history);
    REQUIRE(lc.trainer.rng.serialize() == t.rng.serialize());
    REQUIRE(lc.trainer.net.params.size() == t.net.params.size());
    for (size_t p = 0; p < t.net.params.size(); ++p) {
        REQUIRE(lc.trainer.net.params[p]->val == t.net.params[p]->val);
        REQUIRE(lc.trainer.opt[p].m == t.opt[p].m);
        REQUIRE(lc.trainer.opt[p].v == t.opt[p].v);
        REQUIRE(lc.trainer.opt[p].t == t.opt[p].t);
    }
}

TEST_CASE("corrupt checkpoints are rejected") {
    fs::path dir = fresh_dir("ckpt_bad");
    REQUIRE_THROWS_AS(load_checkpoint((dir / "missing.bin").string()), IoError);

    std::ofstream junk(dir / "junk.bin", std::ios::binary);
    junk << "NOT_A_CHECKPOINT\n";
    junk.close();
    REQUIRE_THROWS_AS(load_checkpoint((dir / "junk.bin").string()), ValidationError);

    Trainer t = make_trainer(micro_net(), 25);
    const std::string good = (dir / "good.bin").string();
    save_checkpoint(t, Stage::Main, good);
    auto bytes = slurp(good);
    std::ofstream cut(dir / "cut.bin", std::ios::binary);
    cut.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 64));
    cut.close();
    REQUIRE_THROWS(load_checkpoint((dir / "cut.bin").string()));
}

TEST_CASE("a resumed run reproduces the uninterrupted checkpoint byte for byte") {
    TrainSet data = micro_set(4, 40);
    StageConfig cfg = quick_pretrain(4);
    cfg.checkpoint_cadence = 2;
    cfg.val_fraction = 0.5;
    cfg.val_cadence = 2;

    fs::path full_dir = fresh_dir("resume_full");
    Trainer full = make_trainer(micro_net(), 26);
    train_stage(full, data, cfg, micro_pm(), full_dir.string());
    REQUIRE(fs::exists(full_dir / "ckpt_epoch_0002.bin"));
    REQUIRE(fs::exists(full_dir / "ckpt_epoch_0004.bin"));

    fs::path resume_dir = fresh_dir("resume_half");
    LoadedCheckpoint mid = load_checkpoint((full_dir / "ckpt_epoch_0002.bin").string());
    REQUIRE(mid.trainer.progress.epoch == 2);
    train_stage(mid.trainer, data, cfg, micro_pm(), resume_dir.string());

    REQUIRE(slurp(resume_dir / "ckpt_epoch_0004.bin") == slurp(full_dir / "ckpt_epoch_0004.bin"));
}

TEST_CASE("prediction enforces the io contract") {
    Rng rng(41);
    Trainer t = make_trainer(micro_net(), 27);
    SpectralCube in(8, 8, {500, 600}, 0.5f);
    SpectralCube pred = predict(t.net, in, {450, 550, 650});
    REQUIRE(pred.width == 6);
    REQUIRE(pred.height == 6);
    REQUIRE(pred.bands == 3);
    for (float v : pred.data) {
        REQUIRE(v > 0.0f);
        REQUIRE(v < 1.0f);
    }
    REQUIRE_THROWS_AS(predict(t.net, SpectralCube(7, 8, {500, 600}), {450, 550, 650}),
                      ValidationError);
    REQUIRE_THROWS_AS(predict(t.net, in, {450, 550}), ValidationError);
}

TEST_CASE("evaluation aggregates per-sample rows") {
    TrainSet test = micro_set(2, 42);
    test[0].has_seg = true;
    test[0].seg = ValidityMask(6, 6);
    test[0].seg.set(0, 0, false);
    test[0].seg.set(1, 2, false);

    Trainer t = make_trainer(micro_net(), 28);
    EvalReport rep = evaluate(t.net, test);
    REQUIRE(rep.rows.size() == 2);
    REQUIRE(rep.rows[0].id == "s0");
    REQUIRE(rep.rows[0].has_seg);
    REQUIRE(rep.rows[0].classes.root.count == 34);
    REQUIRE(rep.rows[0].classes.soil.count == 2);
    REQUIRE_FALSE(rep.rows[1].has_seg);
    REQUIRE(rep.mean_mae ==
            Catch::Approx((rep.rows[0].mae + rep.rows[1].mae) / 2).margin(1e-12));
    REQUIRE(rep.mean_angle ==
            Catch::Approx((rep.rows[0].mean_angle + rep.rows[1].mean_angle) / 2).margin(1e-12));

    TrainSet none;
    REQUIRE_THROWS_AS(evaluate(t.net, none), ValidationError);
}

TEST_CASE("pair metrics hit exact fixtures for identical cubes") {
    Rng rng(43);
    SpectralCube gt(3, 3, {450, 550, 650});
    for (auto& v : gt.data) v = static_cast<float>(rng.uniform(0.2, 0.8));
    EvalRow same = eval_pair("same", gt, gt, nullptr);
    REQUIRE(same.mae == 0.0);
    REQUIRE(same.mse == 0.0);
    REQUIRE(same.mean_angle < 1e-9);

    SpectralCube shifted = gt;
    for (auto& v : shifted.data) v += 0.1f;
    EvalRow off = eval_pair("off", shifted, gt, nullptr);
    REQUIRE(off.mae == Catch::Approx(0.1).margin(1e-6));
    REQUIRE(off.mse == Catch::Approx(0.01).margin(1e-6));

    SpectralCube wrong(4, 3, {450, 550, 650});
    REQUIRE_THROWS_AS(eval_pair("bad", wrong, gt, nullptr), ValidationError);
}
