// Command-line front end: every pipeline stage as a subcommand. Exit codes:
// 0 success, 1 validation failure, 2 I/O failure. Subcommands that draw
// random numbers require --seed so runs are reproducible; identical
// invocations produce byte-identical reports.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <spectraforge/spectraforge.hpp>

namespace sf = spectraforge;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// SPECTRAFORGE_LOG: quiet | info (default) | debug
int log_level() {
    static int level = [] {
        const char* v = std::getenv("SPECTRAFORGE_LOG");
        if (!v) return 1;
        std::string s(v);
        if (s == "quiet") return 0;
        if (s == "debug") return 2;
        return 1;
    }();
    return level;
}

void log_info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << msg << '\n';
}

void write_report(const json& j, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw sf::IoError("cannot write report: " + path);
    f << j.dump(2) << '\n';
}

json stats_json(const sf::ClassStats& s) {
    return json{{"mean", s.mean}, {"stddev", s.stddev}, {"count", s.count}, {"defined", s.defined}};
}

json eval_row_json(const sf::EvalRow& r) {
    json j{{"id", r.id}, {"mae", r.mae}, {"mse", r.mse}, {"mean_angle", r.mean_angle}};
    if (r.has_seg) {
        j["root"] = stats_json(r.classes.root);
        j["soil"] = stats_json(r.classes.soil);
    }
    return j;
}

void print_eval_table(const sf::EvalReport& rep) {
    std::cout << std::left << std::setw(16) << "id" << std::right << std::setw(12) << "mae"
              << std::setw(12) << "mse" << std::setw(12) << "angle" << '\n';
    std::cout << std::fixed << std::setprecision(6);
    for (const auto& r : rep.rows)
        std::cout << std::left << std::setw(16) << r.id << std::right << std::setw(12) << r.mae
                  << std::setw(12) << r.mse << std::setw(12) << r.mean_angle << '\n';
    std::cout << std::left << std::setw(16) << "mean" << std::right << std::setw(12)
              << rep.mean_mae << std::setw(12) << rep.mean_mse << std::setw(12) << rep.mean_angle
              << '\n';
    std::cout.unsetf(std::ios::fixed);
    std::cout << std::setprecision(6);
}

std::vector<sf::LedBandSpec> leds_from(const std::string& path) {
    return path.empty() ? sf::default_led_table() : sf::load_led_table(path);
}

// Collapse a per-band validity mask to one spatial plane (valid iff every
// band is valid) so it fits a single PNG.
sf::ValidityMask collapse_mask(const sf::ValidityMask& m) {
    if (m.bands == 1) return m;
    sf::ValidityMask out(m.width, m.height, 1, true);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            bool all = true;
            for (int b = 0; b < m.bands && all; ++b) all = m.get(x, y, b);
            out.set(x, y, all);
        }
    return out;
}

std::string zero_pad(int v, int width) {
    std::ostringstream os;
    os << std::setw(width) << std::setfill('0') << v;
    return os.str();
}

// ------------------------------------------------------------- calibrate

struct CalibrateOpts {
    std::string raw, white, dark, corners, out, mask_out, report;
    double epsilon = 1e-4;
    double scale = 1.0;
    double pitch = 1.0;
    double radius_norm = 0.0;  // 0 = half image diagonal
};

void run_calibrate(const CalibrateOpts& o) {
    sf::SpectralCube raw = sf::load_cube(o.raw);
    sf::SpectralCube white = sf::load_cube(o.white);
    if (!o.dark.empty()) {
        sf::SpectralCube dark = sf::load_cube(o.dark);
        raw = sf::dark_field_subtract(raw, dark);
        white = sf::dark_field_subtract(white, dark);
    }
    sf::FlatFieldRef ref;
    ref.white = std::move(white);
    ref.epsilon = o.epsilon;
    ref.scale = o.scale;
    auto [flat, flat_mask] = sf::flat_field_correct(raw, ref);

    sf::CornerSet corners = sf::load_corners(o.corners, o.pitch);
    double rn = o.radius_norm > 0
                    ? o.radius_norm
                    : 0.5 * std::hypot(static_cast<double>(raw.width), static_cast<double>(raw.height));
    sf::FitResult fit = sf::fit_distortion(corners, rn);
    log_info("distortion fit: rms " + std::to_string(fit.rms) + " px after " +
             std::to_string(fit.iterations) + " iterations");

    auto [corrected, mask] = sf::undistort(flat, fit.model, flat_mask);
    sf::save_cube(corrected, o.out);
    sf::save_mask_png(collapse_mask(mask), 0, o.mask_out);

    if (!o.report.empty()) {
        const auto& m = fit.model;
        write_report(json{{"k1", m.k1},
                          {"k2", m.k2},
                          {"cx", m.cx},
                          {"cy", m.cy},
                          {"radius_norm", m.radius_norm},
                          {"affine", m.affine.m},
                          {"rms", fit.rms},
                          {"iterations", fit.iterations}},
                     o.report);
    }
}

// ------------------------------------------------------------------ mask

struct MaskOpts {
    std::string in, mask_out, inpaint_out;
    double spot_ratio = 2.0;
};

void run_mask(const MaskOpts& o) {
    sf::SpectralCube cube = sf::load_cube(o.in);
    sf::ValidityMask mask = sf::spot_mask(cube, o.spot_ratio);
    fs::create_directories(o.mask_out);
    for (int b = 0; b < mask.bands; ++b)
        sf::save_mask_png(mask, b, (fs::path(o.mask_out) / ("band_" + zero_pad(b, 3) + ".png")).string());
    sf::SpectralCube fixed = sf::inpaint_spectral(cube, mask);
    sf::save_cube(fixed, o.inpaint_out);
    size_t masked = 0;
    for (auto v : mask.bits) masked += v ? 0 : 1;
    log_info("masked " + std::to_string(masked) + " band-pixels");
}

// ----------------------------------------------------------------- align

struct AlignOpts {
    std::string ours, ref, out_pair, report;
    double factor = 0.0;
    int band = 0;
    bool multiband = false;
};

void run_align(const AlignOpts& o) {
    sf::SpectralCube ours = sf::load_cube(o.ours);
    sf::SpectralCube ref = sf::load_cube(o.ref);
    sf::PairSample pair = sf::pair_samples(ours, ref, o.factor, o.band, o.multiband);

    fs::create_directories(o.out_pair);
    sf::save_cube(pair.input, (fs::path(o.out_pair) / "input.hsc").string());
    sf::save_cube(pair.gt, (fs::path(o.out_pair) / "gt.hsc").string());

    double mm_mean = 0, mm_max = 0;
    for (float v : pair.mismatch.v) {
        mm_mean += v;
        mm_max = std::max(mm_max, static_cast<double>(v));
    }
    if (!pair.mismatch.v.empty()) mm_mean /= static_cast<double>(pair.mismatch.v.size());

    const auto& m = pair.match;
    log_info("match at row " + std::to_string(m.row) + " col " + std::to_string(m.col) +
             " score " + std::to_string(m.score));
    if (!o.report.empty())
        write_report(json{{"row", m.row},
                          {"col", m.col},
                          {"score", m.score},
                          {"factor", m.scale},
                          {"crop", {{"x", m.crop.x}, {"y", m.crop.y}, {"w", m.crop.w}, {"h", m.crop.h}}},
                          {"mismatch", {{"mean", mm_mean}, {"max", mm_max}}}},
                     o.report);
}

// --------------------------------------------------------------- project

struct ProjectOpts {
    std::string gt, leds, out;
    bool nearest = false;
};

void run_project(const ProjectOpts& o) {
    sf::SpectralCube gt = sf::load_cube(o.gt);
    auto table = leds_from(o.leds);
    sf::ProjectionMatrix pm = o.nearest ? sf::build_projection_nearest(table, gt.wavelengths)
                                        : sf::build_projection(table, gt.wavelengths);
    sf::SpectralCube out = sf::project_cube(gt, pm);
    sf::save_cube(out, o.out);
}

// --------------------------------------------------------------- augment

struct AugmentOpts {
    std::string in, gt, out;
    std::uint64_t seed = 0;
    int count = 1;
    bool no_warp_gt = false;
    sf::AffineRanges ranges;
};

void run_augment(const AugmentOpts& o) {
    sf::SpectralCube input = sf::load_cube(o.in);
    sf::SpectralCube gt = sf::load_cube(o.gt);
    fs::create_directories(o.out);
    sf::Rng rng(o.seed);
    std::ofstream params((fs::path(o.out) / "params.txt").string());
    if (!params) throw sf::IoError("cannot write params.txt");
    params << std::setprecision(17);
    for (int k = 0; k < o.count; ++k) {
        sf::AugmentedPair ap = sf::augment_pair(input, gt, rng, o.ranges, !o.no_warp_gt);
        const std::string tag = zero_pad(k, 3);
        sf::save_cube(ap.input, (fs::path(o.out) / ("input_" + tag + ".hsc")).string());
        sf::save_cube(ap.gt, (fs::path(o.out) / ("gt_" + tag + ".hsc")).string());
        sf::save_mask_png(ap.mask, 0, (fs::path(o.out) / ("mask_" + tag + ".png")).string());
        params << tag << " tx " << ap.params.tx << " ty " << ap.params.ty << " scale "
               << ap.params.scale << " rotate_deg " << ap.params.rotate_deg << " shear_deg "
               << ap.params.shear_deg << '\n';
    }
}

// ----------------------------------------------------------------- synth

struct SynthSpec {
    sf::SceneSpec scene;
    sf::CaptureSpec cap;
    int input_width = 64;
    int input_height = 64;
    int random_spots = 2;
    double spot_radius = 3.0;
    double spot_intensity = 1.0;
};

SynthSpec default_synth_spec() {
    SynthSpec s;
    s.scene.width = 16;
    s.scene.height = 16;
    s.scene.bands = 32;
    s.scene.strokes.count = 2;
    s.scene.strokes.width_px = 1.5;
    s.scene.strokes.steps = 40;
    s.cap.vignette_strength = 0.15;
    s.cap.noise_sigma = 0.01;
    return s;
}

SynthSpec load_synth_spec(const std::string& path) {
    SynthSpec s = default_synth_spec();
    std::ifstream f(path);
    if (!f) throw sf::IoError("synth: cannot open spec: " + path);
    std::string line;
    while (std::getline(f, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        auto want = [&](bool ok) {
            if (!ok) throw sf::ValidationError("synth spec: bad value for key: " + key);
        };
        if (key == "gt_width") want(static_cast<bool>(ls >> s.scene.width));
        else if (key == "gt_height") want(static_cast<bool>(ls >> s.scene.height));
        else if (key == "bands") want(static_cast<bool>(ls >> s.scene.bands));
        else if (key == "grid_lo") want(static_cast<bool>(ls >> s.scene.grid_lo_nm));
        else if (key == "grid_hi") want(static_cast<bool>(ls >> s.scene.grid_hi_nm));
        else if (key == "input_width") want(static_cast<bool>(ls >> s.input_width));
        else if (key == "input_height") want(static_cast<bool>(ls >> s.input_height));
        else if (key == "soil_mean") want(static_cast<bool>(ls >> s.scene.soil.mean_nm));
        else if (key == "soil_width") want(static_cast<bool>(ls >> s.scene.soil.width_nm));
        else if (key == "soil_amp") want(static_cast<bool>(ls >> s.scene.soil.amplitude));
        else if (key == "soil_jitter") want(static_cast<bool>(ls >> s.scene.soil.jitter));
        else if (key == "root_gauss_mean") want(static_cast<bool>(ls >> s.scene.root.gauss_mean_nm));
        else if (key == "root_gauss_width") want(static_cast<bool>(ls >> s.scene.root.gauss_width_nm));
        else if (key == "root_gauss_amp") want(static_cast<bool>(ls >> s.scene.root.gauss_amp));
        else if (key == "root_edge_center") want(static_cast<bool>(ls >> s.scene.root.edge_center_nm));
        else if (key == "root_edge_width") want(static_cast<bool>(ls >> s.scene.root.edge_width_nm));
        else if (key == "root_edge_height") want(static_cast<bool>(ls >> s.scene.root.edge_height));
        else if (key == "root_jitter") want(static_cast<bool>(ls >> s.scene.root.jitter));
        else if (key == "strokes") want(static_cast<bool>(ls >> s.scene.strokes.count));
        else if (key == "stroke_width") want(static_cast<bool>(ls >> s.scene.strokes.width_px));
        else if (key == "stroke_steps") want(static_cast<bool>(ls >> s.scene.strokes.steps));
        else if (key == "stroke_turn") want(static_cast<bool>(ls >> s.scene.strokes.turn_sigma));
        else if (key == "vignette") want(static_cast<bool>(ls >> s.cap.vignette_strength));
        else if (key == "noise") want(static_cast<bool>(ls >> s.cap.noise_sigma));
        else if (key == "random_spots") want(static_cast<bool>(ls >> s.random_spots));
        else if (key == "spot_radius") want(static_cast<bool>(ls >> s.spot_radius));
        else if (key == "spot_intensity") want(static_cast<bool>(ls >> s.spot_intensity));
        else if (key == "distort") {
            s.cap.distort = true;
            auto& d = s.cap.distortion;
            want(static_cast<bool>(ls >> d.k1 >> d.k2 >> d.cx >> d.cy >> d.radius_norm));
        } else if (key == "spot") {
            sf::Spot sp;
            want(static_cast<bool>(ls >> sp.band >> sp.cx >> sp.cy >> sp.radius >> sp.intensity));
            s.cap.spots.push_back(sp);
        } else {
            throw sf::ValidationError("synth spec: unknown key: " + key);
        }
    }
    return s;
}

struct SynthOpts {
    std::string spec, out, leds;
    int count = 1;
    std::uint64_t seed = 0;
    int test_count = -1;  // -1: round(count * 10 / 95)
};

void run_synth(const SynthOpts& o) {
    SynthSpec s = o.spec.empty() ? default_synth_spec() : load_synth_spec(o.spec);
    if (!o.leds.empty()) s.cap.leds = sf::load_led_table(o.leds);
    sf::require(o.count > 0, "synth: count must be positive");
    fs::create_directories(o.out);

    sf::Manifest man;
    std::vector<std::string> ids;
    for (int i = 0; i < o.count; ++i) {
        sf::SceneSpec scene = s.scene;
        scene.seed = sf::Rng::splitmix64(o.seed ^ sf::Rng::splitmix64(2u * i));
        sf::Scene sc = sf::gen_scene(scene);

        sf::CaptureSpec cap = s.cap;
        cap.seed = sf::Rng::splitmix64(o.seed ^ sf::Rng::splitmix64(2u * i + 1));
        if (s.random_spots > 0) {
            sf::Rng srng(cap.seed ^ 0x5f0757a35f0757a3ull);
            for (int k = 0; k < s.random_spots; ++k) {
                sf::Spot sp;
                sp.band = static_cast<int>(srng.below(static_cast<std::uint64_t>(s.cap.leds.size())));
                sp.cx = srng.uniform(0.0, s.input_width - 1.0);
                sp.cy = srng.uniform(0.0, s.input_height - 1.0);
                sp.radius = s.spot_radius;
                sp.intensity = s.spot_intensity;
                cap.spots.push_back(sp);
            }
        }

        sf::SpectralCube up = sf::resize_bilinear(sc.cube, s.input_width, s.input_height);
        sf::SpectralCube input = sf::capture(up, cap);
        input.raw = true;

        const std::string id = "s" + zero_pad(i, 3);
        sf::ManifestEntry e;
        e.id = id;
        e.input_path = "input_" + zero_pad(i, 3) + ".hsc";
        e.gt_path = "gt_" + zero_pad(i, 3) + ".hsc";
        e.seg_path = "seg_" + zero_pad(i, 3) + ".png";
        sf::save_cube(input, (fs::path(o.out) / e.input_path).string());
        sf::save_cube(sc.cube, (fs::path(o.out) / e.gt_path).string());
        sf::save_mask_png(sc.seg, 0, (fs::path(o.out) / e.seg_path).string());
        man.samples.push_back(e);
        ids.push_back(id);
    }

    size_t tc = o.test_count >= 0
                    ? static_cast<size_t>(o.test_count)
                    : static_cast<size_t>(std::lround(o.count * 10.0 / 95.0));
    auto [train_ids, test_ids] = sf::split_dataset(ids, o.seed, tc);
    man.train_ids = train_ids;
    man.test_ids = test_ids;
    man.seed = o.seed;
    sf::save_manifest(man, (fs::path(o.out) / "manifest.txt").string());
    log_info("wrote " + std::to_string(o.count) + " pairs (" + std::to_string(train_ids.size()) +
             " train / " + std::to_string(test_ids.size()) + " test)");
}

// ----------------------------------------------------------------- train

struct TrainOpts {
    std::string manifest, config, resume, out, leds, dump_pred;
    std::string stage = "pretrain";
    std::uint64_t seed = 0;
    int epochs = -1;
    int batch_size = 5;
    int projected_per_batch = 3;
    int raw_per_batch = 2;
    double lr = 0.0;  // 0: stage default
    double beta = 1.0;
    bool no_augment = false;
    bool delta_vs_gt = false;
    bool inpaint_raw = false;
    double spot_ratio = 2.0;
    int checkpoint_cadence = 50;
    double val_fraction = 0.0;
    int val_cadence = 10;
};

void run_train(const TrainOpts& o) {
    sf::Stage stage = sf::stage_from(o.stage);
    sf::StageConfig cfg = stage == sf::Stage::Pretrain ? sf::StageConfig::pretrain_defaults()
                                                       : sf::StageConfig::main_defaults();
    if (o.epochs >= 0) cfg.epochs = o.epochs;
    cfg.batch_size = o.batch_size;
    cfg.projected_per_batch = o.projected_per_batch;
    cfg.raw_per_batch = o.raw_per_batch;
    if (o.lr > 0) cfg.adam.lr = o.lr;
    cfg.smoothl1_beta = o.beta;
    cfg.augment = !o.no_augment;
    cfg.delta_vs_gt = o.delta_vs_gt;
    cfg.inpaint_raw = o.inpaint_raw;
    cfg.spot_ratio = o.spot_ratio;
    cfg.seed = o.seed;
    cfg.checkpoint_cadence = o.checkpoint_cadence;
    cfg.val_fraction = o.val_fraction;
    cfg.val_cadence = o.val_cadence;
    cfg.validate();

    sf::Manifest man = sf::load_manifest(o.manifest);
    sf::TrainSet train = sf::load_samples(man, man.train_ids);
    sf::require(!train.empty(), "train: manifest has no training samples");

    sf::Trainer trainer;
    if (!o.resume.empty()) {
        sf::LoadedCheckpoint lc = sf::load_checkpoint(o.resume);
        trainer = std::move(lc.trainer);
        if (lc.stage != stage) {
            // Stage hand-off keeps the learned weights and starts the new
            // stage's schedule from scratch.
            trainer.opt.assign(trainer.net.params.size(), {});
            trainer.rng = sf::Rng(o.seed);
            trainer.progress = {};
            log_info("stage hand-off from checkpointed " + sf::stage_name(lc.stage));
        } else {
            log_info("resuming at epoch " + std::to_string(trainer.progress.epoch));
        }
        if (!o.config.empty()) log_info("note: --config ignored, network comes from the checkpoint");
    } else {
        sf::require(!o.config.empty(), "train: --config is required unless resuming");
        sf::NetworkConfig ncfg = sf::load_network_config(o.config);
        trainer = sf::make_trainer(ncfg, o.seed);
    }

    sf::ProjectionMatrix pm = sf::build_projection(leds_from(o.leds), train[0].gt.wavelengths);
    fs::create_directories(o.out);
    std::ostream* log = log_level() >= 2 ? &std::cerr : nullptr;
    sf::train_stage(trainer, train, cfg, pm, o.out, log);
    sf::save_checkpoint(trainer, stage, (fs::path(o.out) / "final.ckpt").string());

    std::ofstream hist((fs::path(o.out) / "loss_history.txt").string());
    hist << std::setprecision(17);
    for (size_t i = 0; i < trainer.progress.loss_history.size(); ++i)
        hist << (i + 1) << ' ' << trainer.progress.loss_history[i] << '\n';
    log_info("trained to epoch " + std::to_string(trainer.progress.epoch));

    if (!o.dump_pred.empty()) {
        fs::create_directories(o.dump_pred);
        sf::TrainSet test = sf::load_samples(man, man.test_ids);
        for (const auto& smp : test) {
            sf::SpectralCube pred = sf::predict(trainer.net, smp.input, smp.gt.wavelengths);
            sf::save_cube(pred, (fs::path(o.dump_pred) / ("pred_" + smp.id + ".hsc")).string());
        }
        log_info("dumped " + std::to_string(test.size()) + " test predictions");
    }
}

// ------------------------------------------------------------------ eval

struct EvalOpts {
    std::string gt, pred, seg, report;
    std::string manifest, pred_dir;
};

void run_eval(const EvalOpts& o) {
    sf::EvalReport rep;
    if (!o.manifest.empty()) {
        sf::require(!o.pred_dir.empty(), "eval: --manifest needs --pred-dir");
        sf::Manifest man = sf::load_manifest(o.manifest);
        sf::TrainSet test = sf::load_samples(man, man.test_ids);
        sf::require(!test.empty(), "eval: manifest has no test samples");
        for (const auto& smp : test) {
            sf::SpectralCube pred =
                sf::load_cube((fs::path(o.pred_dir) / ("pred_" + smp.id + ".hsc")).string());
            rep.rows.push_back(
                sf::eval_pair(smp.id, pred, smp.gt, smp.has_seg ? &smp.seg : nullptr));
        }
    } else {
        sf::require(!o.gt.empty() && !o.pred.empty(), "eval: need --gt and --pred (or --manifest)");
        sf::SpectralCube gt = sf::load_cube(o.gt);
        sf::SpectralCube pred = sf::load_cube(o.pred);
        sf::ValidityMask seg;
        const sf::ValidityMask* segp = nullptr;
        if (!o.seg.empty()) {
            seg = sf::load_mask_png(o.seg);
            segp = &seg;
        }
        rep.rows.push_back(sf::eval_pair(fs::path(o.pred).stem().string(), pred, gt, segp));
    }
    for (const auto& r : rep.rows) {
        rep.mean_mae += r.mae;
        rep.mean_mse += r.mse;
        rep.mean_angle += r.mean_angle;
    }
    const double inv = 1.0 / static_cast<double>(rep.rows.size());
    rep.mean_mae *= inv;
    rep.mean_mse *= inv;
    rep.mean_angle *= inv;

    print_eval_table(rep);
    if (!o.report.empty()) {
        json rows = json::array();
        for (const auto& r : rep.rows) rows.push_back(eval_row_json(r));
        write_report(json{{"samples", rows},
                          {"mean_mae", rep.mean_mae},
                          {"mean_mse", rep.mean_mse},
                          {"mean_angle", rep.mean_angle}},
                     o.report);
    }
}

// ------------------------------------------------------------------ info

void run_info(const std::string& path) {
    std::ifstream f(sf::detail::header_path(path));
    if (!f) throw sf::IoError("info: cannot open header: " + sf::detail::header_path(path));
    json j = json::parse(f, nullptr, true);
    std::cout << "width " << j.at("width").get<int>() << '\n';
    std::cout << "height " << j.at("height").get<int>() << '\n';
    std::cout << "bands " << j.at("bands").get<int>() << '\n';
    std::cout << "raw " << (j.at("raw").get<bool>() ? "true" : "false") << '\n';
    std::cout << "byte_order " << j.at("byte_order").get<std::string>() << '\n';
    std::cout << "value_type " << j.at("value_type").get<std::string>() << '\n';
    const auto& wl = j.at("wavelengths_nm");
    std::cout << "wavelengths_nm " << wl.front().get<double>() << " .. " << wl.back().get<double>()
              << " (" << wl.size() << ")\n";
}

void add_range_flags(CLI::App* cmd, sf::AffineRanges& r) {
    cmd->add_option("--tx-lo", r.tx.lo, "translate-x fraction, lower bound")->group("ranges");
    cmd->add_option("--tx-hi", r.tx.hi, "translate-x fraction, upper bound")->group("ranges");
    cmd->add_option("--ty-lo", r.ty.lo, "translate-y fraction, lower bound")->group("ranges");
    cmd->add_option("--ty-hi", r.ty.hi, "translate-y fraction, upper bound")->group("ranges");
    cmd->add_option("--scale-lo", r.scale.lo, "scale lower bound")->group("ranges");
    cmd->add_option("--scale-hi", r.scale.hi, "scale upper bound")->group("ranges");
    cmd->add_option("--rotate-lo", r.rotate_deg.lo, "rotation degrees, lower bound")->group("ranges");
    cmd->add_option("--rotate-hi", r.rotate_deg.hi, "rotation degrees, upper bound")->group("ranges");
    cmd->add_option("--shear-lo", r.shear_deg.lo, "shear degrees, lower bound")->group("ranges");
    cmd->add_option("--shear-hi", r.shear_deg.hi, "shear degrees, upper bound")->group("ranges");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spectraforge: active-illumination multispectral reconstruction pipeline"};
    app.require_subcommand(1);
    app.fallthrough();
    int threads = 1;
    app.add_option("--threads", threads, "worker threads")->capture_default_str();

    auto use_threads = [&threads] { sf::thread_count() = threads; };

    CalibrateOpts cal;
    auto* c_cal = app.add_subcommand("calibrate", "flat-field and undistort a raw capture");
    c_cal->add_option("--raw", cal.raw, "raw capture .hsc")->required();
    c_cal->add_option("--white", cal.white, "white reference .hsc")->required();
    c_cal->add_option("--dark", cal.dark, "dark frame .hsc");
    c_cal->add_option("--corners", cal.corners, "checkerboard corners file")->required();
    c_cal->add_option("--out", cal.out, "corrected cube path")->required();
    c_cal->add_option("--mask-out", cal.mask_out, "validity mask PNG path")->required();
    c_cal->add_option("--report", cal.report, "JSON report path");
    c_cal->add_option("--epsilon", cal.epsilon, "white level below which pixels are invalid")
        ->capture_default_str();
    c_cal->add_option("--scale", cal.scale, "post-division scale")->capture_default_str();
    c_cal->add_option("--pitch", cal.pitch, "checkerboard square pitch, px")->capture_default_str();
    c_cal->add_option("--radius-norm", cal.radius_norm, "radial normalization, px (0: half diagonal)")
        ->capture_default_str();
    c_cal->callback([&] { use_threads(); run_calibrate(cal); });

    MaskOpts msk;
    auto* c_msk = app.add_subcommand("mask", "detect LED spots and inpaint them");
    c_msk->add_option("--in", msk.in, "input cube .hsc")->required();
    c_msk->add_option("--mask-out", msk.mask_out, "output directory for per-band mask PNGs")->required();
    c_msk->add_option("--inpaint-out", msk.inpaint_out, "inpainted cube path")->required();
    c_msk->add_option("--spot-ratio", msk.spot_ratio, "bimodality ratio guard")->capture_default_str();
    c_msk->callback([&] { use_threads(); run_mask(msk); });

    AlignOpts aln;
    auto* c_aln = app.add_subcommand("align", "register our capture against the reference cube");
    c_aln->add_option("--ours", aln.ours, "our-camera cube .hsc")->required();
    c_aln->add_option("--ref", aln.ref, "reference cube .hsc")->required();
    c_aln->add_option("--factor", aln.factor, "resolution ratio ours/reference, >= 1")->required();
    c_aln->add_option("--out-pair", aln.out_pair, "output directory for the matched pair")->required();
    c_aln->add_option("--report", aln.report, "JSON report path");
    c_aln->add_option("--band", aln.band, "our band used for matching")->capture_default_str();
    c_aln->add_flag("--multiband", aln.multiband, "sum NCC over all bands");
    c_aln->callback([&] { use_threads(); run_align(aln); });

    ProjectOpts prj;
    auto* c_prj = app.add_subcommand("project", "project a reference cube to the LED bands");
    c_prj->add_option("--gt", prj.gt, "reference cube .hsc")->required();
    c_prj->add_option("--leds", prj.leds, "LED table file (default: built-in head)");
    c_prj->add_option("--out", prj.out, "projected cube path")->required();
    c_prj->add_flag("--nearest-band", prj.nearest, "nearest-band picking instead of Gaussian weights");
    c_prj->callback([&] { use_threads(); run_project(prj); });

    AugmentOpts aug;
    auto* c_aug = app.add_subcommand("augment", "draw random affine warps of a sample pair");
    c_aug->add_option("--in", aug.in, "input cube .hsc")->required();
    c_aug->add_option("--gt", aug.gt, "ground-truth cube .hsc")->required();
    c_aug->add_option("--seed", aug.seed, "rng seed")->required();
    c_aug->add_option("--count", aug.count, "number of draws")->capture_default_str();
    c_aug->add_option("--out", aug.out, "output directory")->required();
    c_aug->add_flag("--no-warp-gt", aug.no_warp_gt, "keep gt unwarped (ablation)");
    add_range_flags(c_aug, aug.ranges);
    c_aug->callback([&] { use_threads(); run_augment(aug); });

    SynthOpts syn;
    auto* c_syn = app.add_subcommand("synth", "generate synthetic capture/reference pairs");
    c_syn->add_option("--spec", syn.spec, "scene/capture spec file (default: built-in)");
    c_syn->add_option("--count", syn.count, "number of pairs")->required();
    c_syn->add_option("--seed", syn.seed, "rng seed")->required();
    c_syn->add_option("--out", syn.out, "output directory")->required();
    c_syn->add_option("--leds", syn.leds, "LED table file (default: built-in head)");
    c_syn->add_option("--test-count", syn.test_count, "held-out test samples (-1: auto)")
        ->capture_default_str();
    c_syn->callback([&] { use_threads(); run_synth(syn); });

    TrainOpts trn;
    auto* c_trn = app.add_subcommand("train", "run one training stage");
    c_trn->add_option("--manifest", trn.manifest, "dataset manifest")->required();
    c_trn->add_option("--config", trn.config, "network config file");
    c_trn->add_option("--stage", trn.stage, "pretrain | main")->required();
    c_trn->add_option("--resume", trn.resume, "checkpoint to resume from");
    c_trn->add_option("--out", trn.out, "output directory")->required();
    c_trn->add_option("--seed", trn.seed, "rng seed")->required();
    c_trn->add_option("--epochs", trn.epochs, "total epochs for the stage (-1: stage default)")
        ->capture_default_str();
    c_trn->add_option("--batch-size", trn.batch_size, "items per batch")->capture_default_str();
    c_trn->add_option("--projected-per-batch", trn.projected_per_batch,
                      "projected items per main-stage batch")
        ->capture_default_str();
    c_trn->add_option("--raw-per-batch", trn.raw_per_batch, "raw items per main-stage batch")
        ->capture_default_str();
    c_trn->add_option("--lr", trn.lr, "Adam learning rate (0: stage default)")->capture_default_str();
    c_trn->add_option("--beta", trn.beta, "smooth-L1 transition point")->capture_default_str();
    c_trn->add_flag("--no-augment", trn.no_augment, "disable affine augmentation");
    c_trn->add_flag("--delta-vs-gt", trn.delta_vs_gt, "difference losses on pred - gt");
    c_trn->add_flag("--inpaint-raw", trn.inpaint_raw, "spot-inpaint raw items");
    c_trn->add_option("--spot-ratio", trn.spot_ratio, "bimodality guard for --inpaint-raw")
        ->capture_default_str();
    c_trn->add_option("--checkpoint-cadence", trn.checkpoint_cadence, "epochs between checkpoints")
        ->capture_default_str();
    c_trn->add_option("--val-fraction", trn.val_fraction, "train slice tracked by spectral angle")
        ->capture_default_str();
    c_trn->add_option("--val-cadence", trn.val_cadence, "epochs between validation passes")
        ->capture_default_str();
    c_trn->add_option("--leds", trn.leds, "LED table file (default: built-in head)");
    c_trn->add_option("--dump-pred", trn.dump_pred, "directory for test-split predictions");
    c_trn->callback([&] { use_threads(); run_train(trn); });

    EvalOpts evl;
    auto* c_evl = app.add_subcommand("eval", "score predictions against ground truth");
    c_evl->add_option("--gt", evl.gt, "ground-truth cube .hsc");
    c_evl->add_option("--pred", evl.pred, "predicted cube .hsc");
    c_evl->add_option("--seg", evl.seg, "root/soil segmentation PNG");
    c_evl->add_option("--manifest", evl.manifest, "dataset manifest (batch mode)");
    c_evl->add_option("--pred-dir", evl.pred_dir, "directory with pred_<id>.hsc files");
    c_evl->add_option("--report", evl.report, "JSON report path");
    c_evl->callback([&] { use_threads(); run_eval(evl); });

    std::string info_path;
    auto* c_nfo = app.add_subcommand("info", "print cube header fields");
    c_nfo->add_option("cube", info_path, "cube .hsc path")->required();
    c_nfo->callback([&] { run_info(info_path); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return 1;
    } catch (const sf::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const sf::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
