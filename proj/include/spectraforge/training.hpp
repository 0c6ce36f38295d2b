#pragma once

// Dataset manifests, the two-stage training driver, checkpointing, and test
// evaluation. Everything that consumes randomness pulls from one sequential
// stream owned by the Trainer, so a checkpointed engine state is enough to
// resume a run bit-exactly.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spectraforge/augment.hpp"
#include "spectraforge/common.hpp"
#include "spectraforge/cube.hpp"
#include "spectraforge/losses.hpp"
#include "spectraforge/network.hpp"
#include "spectraforge/rng.hpp"
#include "spectraforge/spectral.hpp"
#include "spectraforge/spotmask.hpp"
#include "spectraforge/tensor.hpp"

namespace spectraforge {

// ---------------------------------------------------------------- manifest

struct ManifestEntry {
    std::string id;
    std::string input_path;
    std::string gt_path;
    std::string seg_path;  // optional
};

struct Manifest {
    std::vector<ManifestEntry> samples;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    std::uint64_t seed = 0;

    const ManifestEntry& entry(const std::string& id) const {
        for (const auto& e : samples)
            if (e.id == id) return e;
        throw ValidationError("manifest: unknown sample id: " + id);
    }

    void validate() const {
        require(!samples.empty(), "manifest: no samples");
        for (const auto& id : train_ids)
            for (const auto& t : test_ids)
                require(id != t, "manifest: id in both splits: " + id);
        require(train_ids.size() + test_ids.size() == samples.size(),
                "manifest: split does not cover all samples exactly once");
        for (const auto& id : train_ids) entry(id);
        for (const auto& id : test_ids) entry(id);
    }
};

// Uniform random split, deterministic per seed. Returns (train, test).
inline std::pair<std::vector<std::string>, std::vector<std::string>> split_dataset(
    std::vector<std::string> ids, std::uint64_t seed, size_t test_count) {
    require(test_count < ids.size(), "split_dataset: test_count must be below the id count");
    Rng rng(seed);
    rng.shuffle(ids);
    std::vector<std::string> test(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(test_count));
    std::vector<std::string> train(ids.begin() + static_cast<std::ptrdiff_t>(test_count), ids.end());
    return {std::move(train), std::move(test)};
}

inline void save_manifest(const Manifest& m, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("manifest: cannot write: " + path);
    for (const auto& e : m.samples) {
        f << "sample " << e.id << ' ' << e.input_path << ' ' << e.gt_path;
        if (!e.seg_path.empty()) f << ' ' << e.seg_path;
        f << '\n';
    }
    f << "train";
    for (const auto& id : m.train_ids) f << ' ' << id;
    f << "\ntest";
    for (const auto& id : m.test_ids) f << ' ' << id;
    f << "\nseed " << m.seed << '\n';
}

// Paths inside the manifest resolve relative to the manifest's directory.
inline Manifest load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("manifest: cannot open: " + path);
    const auto dir = std::filesystem::path(path).parent_path();
    auto resolve = [&dir](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp.string() : (dir / fp).string();
    };
    Manifest m;
    std::string line;
    while (std::getline(f, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        if (key == "sample") {
            ManifestEntry e;
            require(static_cast<bool>(ls >> e.id >> e.input_path >> e.gt_path),
                    "manifest: bad sample line");
            ls >> e.seg_path;
            e.input_path = resolve(e.input_path);
            e.gt_path = resolve(e.gt_path);
            if (!e.seg_path.empty()) e.seg_path = resolve(e.seg_path);
            m.samples.push_back(std::move(e));
        } else if (key == "train") {
            std::string id;
            while (ls >> id) m.train_ids.push_back(id);
        } else if (key == "test") {
            std::string id;
            while (ls >> id) m.test_ids.push_back(id);
        } else if (key == "seed") {
            require(static_cast<bool>(ls >> m.seed), "manifest: bad seed line");
        } else {
            throw ValidationError("manifest: unknown key: " + key);
        }
    }
    m.validate();
    return m;
}

// ---------------------------------------------------------------- samples

struct TrainSample {
    std::string id;
    SpectralCube input;  // our-camera cube at network input dims
    SpectralCube gt;     // reference cube at network output dims
    bool has_seg = false;
    ValidityMask seg;    // valid bit marks root pixels
};

using TrainSet = std::vector<TrainSample>;

inline TrainSet load_samples(const Manifest& m, const std::vector<std::string>& ids) {
    TrainSet set;
    set.reserve(ids.size());
    for (const auto& id : ids) {
        const ManifestEntry& e = m.entry(id);
        TrainSample s;
        s.id = id;
        s.input = load_cube(e.input_path);
        s.gt = load_cube(e.gt_path);
        if (!e.seg_path.empty()) {
            s.seg = load_mask_png(e.seg_path);
            require(s.seg.width == s.gt.width && s.seg.height == s.gt.height,
                    "manifest: segmentation dims do not match gt for " + id);
            s.has_seg = true;
        }
        set.push_back(std::move(s));
    }
    return set;
}

// ---------------------------------------------------------------- config

enum class Stage { Pretrain, Main };

inline std::string stage_name(Stage s) { return s == Stage::Pretrain ? "pretrain" : "main"; }

inline Stage stage_from(const std::string& s) {
    if (s == "pretrain") return Stage::Pretrain;
    if (s == "main") return Stage::Main;
    throw ValidationError("unknown stage: " + s);
}

struct StageConfig {
    Stage stage = Stage::Pretrain;
    int epochs = 1200;
    int batch_size = 5;
    int projected_per_batch = 3;  // main stage batch mix
    int raw_per_batch = 2;
    LossWeights weights = LossWeights::pretrain();
    double smoothl1_beta = 1.0;
    bool delta_vs_gt = false;
    bool augment = true;
    AffineRanges ranges;
    bool warp_gt = true;
    bool inpaint_raw = false;  // spot-inpaint raw items before feeding them
    double spot_ratio = 2.0;
    AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
    std::uint64_t seed = 1;
    int checkpoint_cadence = 50;  // epochs; 0 = final checkpoint only
    double val_fraction = 0.0;    // leading slice of train tracked by angle
    int val_cadence = 10;

    static StageConfig pretrain_defaults() { return {}; }

    static StageConfig main_defaults() {
        StageConfig c;
        c.stage = Stage::Main;
        c.weights = LossWeights::main_stage();
        c.adam.lr = 1e-4;
        return c;
    }

    void validate() const {
        require(epochs >= 0, "train config: negative epochs");
        require(batch_size > 0, "train config: batch_size must be positive");
        if (stage == Stage::Main)
            require(projected_per_batch >= 0 && raw_per_batch >= 0 &&
                        projected_per_batch + raw_per_batch == batch_size,
                    "train config: projected + raw must equal batch_size");
        require(smoothl1_beta > 0, "train config: smoothl1 beta must be positive");
        require(val_fraction >= 0 && val_fraction < 1, "train config: bad val_fraction");
        require(val_cadence > 0, "train config: val_cadence must be positive");
        require(checkpoint_cadence >= 0, "train config: negative checkpoint cadence");
    }
};

// ---------------------------------------------------------------- batches

struct BatchItem {
    std::vector<float> input;  // (in_c, in_h, in_w)
    std::vector<float> gt;     // (out_c, out_h, out_w)
    ElementMask mask;          // spatial at gt resolution
    bool projected = false;
};

namespace detail {

inline ElementMask mask_from(const ValidityMask& m) {
    ElementMask em;
    em.bits = m.bits;
    return em;
}

inline BatchItem finish_item(SpectralCube input, SpectralCube gt, Rng& rng,
                             const StageConfig& cfg, bool projected) {
    BatchItem item;
    item.projected = projected;
    if (cfg.augment) {
        AugmentedPair ap = augment_pair(input, gt, rng, cfg.ranges, cfg.warp_gt);
        item.input = std::move(ap.input.data);
        item.gt = std::move(ap.gt.data);
        item.mask = mask_from(ap.mask);
    } else {
        item.input = std::move(input.data);
        item.gt = std::move(gt.data);
    }
    return item;
}

}  // namespace detail

// Pretrain item: the ground truth itself plays input, projected to the LED
// bands and upsampled to the input dims.
inline BatchItem make_pretrain_item(const TrainSample& s, const ProjectionMatrix& pm, Rng& rng,
                                    const StageConfig& cfg, int in_h, int in_w) {
    SpectralCube projected = project_cube(s.gt, pm);
    SpectralCube input = resize_bilinear(projected, in_w, in_h);
    return detail::finish_item(std::move(input), s.gt, rng, cfg, true);
}

inline BatchItem make_raw_item(const TrainSample& s, Rng& rng, const StageConfig& cfg) {
    SpectralCube input = s.input;
    if (cfg.inpaint_raw) {
        ValidityMask spots = spot_mask(input, cfg.spot_ratio);
        input = inpaint_spectral(input, spots);
    }
    return detail::finish_item(std::move(input), s.gt, rng, cfg, false);
}

inline std::vector<BatchItem> make_pretrain_batch(const TrainSet& data,
                                                  const std::vector<size_t>& indices,
                                                  const ProjectionMatrix& pm, Rng& rng,
                                                  const StageConfig& cfg, int in_h, int in_w) {
    std::vector<BatchItem> batch;
    batch.reserve(indices.size());
    for (size_t i : indices)
        batch.push_back(make_pretrain_item(data[i], pm, rng, cfg, in_h, in_w));
    return batch;
}

// Main-stage batch: exactly projected_per_batch projected + raw_per_batch raw
// items, provenance positions shuffled per batch.
inline std::vector<BatchItem> make_main_batch(const TrainSet& data,
                                              const std::vector<size_t>& indices,
                                              const ProjectionMatrix& pm, Rng& rng,
                                              const StageConfig& cfg, int in_h, int in_w) {
    require(indices.size() == static_cast<size_t>(cfg.batch_size),
            "make_main_batch: index count must equal batch_size");
    std::vector<std::uint8_t> provenance;
    for (int i = 0; i < cfg.projected_per_batch; ++i) provenance.push_back(1);
    for (int i = 0; i < cfg.raw_per_batch; ++i) provenance.push_back(0);
    rng.shuffle(provenance);

    std::vector<BatchItem> batch;
    batch.reserve(indices.size());
    for (size_t k = 0; k < indices.size(); ++k) {
        const TrainSample& s = data[indices[k]];
        if (provenance[k])
            batch.push_back(make_pretrain_item(s, pm, rng, cfg, in_h, in_w));
        else
            batch.push_back(make_raw_item(s, rng, cfg));
    }
    return batch;
}

// ---------------------------------------------------------------- trainer

struct TrainProgress {
    int epoch = 0;  // completed epochs
    std::vector<double> loss_history;                 // per-epoch mean item loss
    std::vector<std::pair<int, double>> val_history;  // (epoch, mean angle)
};

struct Trainer {
    Network net;
    std::vector<AdamState> opt;
    Rng rng;
    TrainProgress progress;
};

inline Trainer make_trainer(const NetworkConfig& ncfg, std::uint64_t seed) {
    Trainer t;
    t.rng = Rng(seed);
    t.net = Network::build(ncfg, t.rng);
    t.opt.resize(t.net.params.size());
    return t;
}

inline SpectralCube predict(const Network& net, const SpectralCube& input,
                            const std::vector<double>& out_wavelengths) {
    require(input.bands == net.cfg.in_c && input.width == net.cfg.in_w &&
                input.height == net.cfg.in_h,
            "predict: input dims do not match the network");
    require(static_cast<int>(out_wavelengths.size()) == net.cfg.out_c,
            "predict: wavelength count does not match the network output");
    auto x = make_input({1, net.cfg.in_c, net.cfg.in_h, net.cfg.in_w}, input.data);
    TensorPtr y = net.forward(x);
    SpectralCube out(net.cfg.out_w, net.cfg.out_h, out_wavelengths);
    out.data = y->val;
    return out;
}

namespace detail {

inline double validation_angle(const Network& net, const TrainSet& data, size_t count,
                               const ProjectionMatrix& pm, const StageConfig& cfg) {
    double acc = 0;
    size_t n = 0;
    for (size_t i = 0; i < count; ++i) {
        const TrainSample& s = data[i];
        SpectralCube input = cfg.stage == Stage::Pretrain
                                 ? resize_bilinear(project_cube(s.gt, pm), net.cfg.in_w, net.cfg.in_h)
                                 : s.input;
        SpectralCube pred = predict(net, input, s.gt.wavelengths);
        AngularErrorMap m = spectral_angle(pred, s.gt);
        for (float v : m.e) {
            acc += v;
            ++n;
        }
    }
    return n ? acc / static_cast<double>(n) : 0.0;
}

}  // namespace detail

// ------------------------------------------------------------- checkpoint

inline void save_checkpoint(const Trainer& t, Stage stage, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot write: " + path);
    f << "SPECTRAFORGE_CKPT 1\n";
    f << "stage " << stage_name(stage) << '\n';
    f << "epoch " << t.progress.epoch << '\n';
    f << "config_begin\n";
    save_network_config(t.net.cfg, f);
    f << "config_end\n";
    f << "rng " << t.rng.serialize() << '\n';
    // 17 significant digits round-trips IEEE doubles exactly through text.
    f << std::setprecision(17);
    f << "loss_history " << t.progress.loss_history.size();
    for (double v : t.progress.loss_history) f << ' ' << v;
    f << "\nval_history " << t.progress.val_history.size();
    for (const auto& [e, v] : t.progress.val_history) f << ' ' << e << ' ' << v;
    f << "\nparams " << t.net.params.size() << '\n';
    f << "BINARY\n";
    for (size_t p = 0; p < t.net.params.size(); ++p) {
        const Tensor& param = *t.net.params[p];
        const AdamState& st = t.opt[p];
        const std::uint64_t numel = param.val.size();
        f.write(reinterpret_cast<const char*>(&numel), sizeof numel);
        f.write(reinterpret_cast<const char*>(param.val.data()),
                static_cast<std::streamsize>(numel * sizeof(float)));
        const std::uint64_t has_state = st.m.size() == param.val.size() ? 1 : 0;
        f.write(reinterpret_cast<const char*>(&has_state), sizeof has_state);
        if (has_state) {
            f.write(reinterpret_cast<const char*>(st.m.data()),
                    static_cast<std::streamsize>(numel * sizeof(float)));
            f.write(reinterpret_cast<const char*>(st.v.data()),
                    static_cast<std::streamsize>(numel * sizeof(float)));
            const std::int64_t steps = st.t;
            f.write(reinterpret_cast<const char*>(&steps), sizeof steps);
        }
    }
    if (!f) throw IoError("checkpoint: write failed: " + path);
}

struct LoadedCheckpoint {
    Trainer trainer;
    Stage stage = Stage::Pretrain;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot open: " + path);
    std::string line;
    auto next_line = [&]() -> std::string {
        if (!std::getline(f, line)) throw IoError("checkpoint: truncated header: " + path);
        return line;
    };
    require(next_line() == "SPECTRAFORGE_CKPT 1", "checkpoint: bad magic");

    LoadedCheckpoint lc;
    {
        std::istringstream ls(next_line());
        std::string key, v;
        ls >> key >> v;
        require(key == "stage", "checkpoint: expected stage");
        lc.stage = stage_from(v);
    }
    int epoch = 0;
    {
        std::istringstream ls(next_line());
        std::string key;
        ls >> key >> epoch;
        require(key == "epoch", "checkpoint: expected epoch");
    }
    require(next_line() == "config_begin", "checkpoint: expected config_begin");
    std::ostringstream cfg_text;
    for (;;) {
        std::string l = next_line();
        if (l == "config_end") break;
        cfg_text << l << '\n';
    }
    std::istringstream cfg_in(cfg_text.str());
    NetworkConfig ncfg = load_network_config(cfg_in);

    std::string rng_state;
    {
        std::string l = next_line();
        require(l.rfind("rng ", 0) == 0, "checkpoint: expected rng");
        rng_state = l.substr(4);
    }
    TrainProgress progress;
    progress.epoch = epoch;
    {
        std::istringstream ls(next_line());
        std::string key;
        size_t n = 0;
        ls >> key >> n;
        require(key == "loss_history", "checkpoint: expected loss_history");
        progress.loss_history.resize(n);
        for (size_t i = 0; i < n; ++i)
            require(static_cast<bool>(ls >> progress.loss_history[i]),
                    "checkpoint: short loss_history");
    }
    {
        std::istringstream ls(next_line());
        std::string key;
        size_t n = 0;
        ls >> key >> n;
        require(key == "val_history", "checkpoint: expected val_history");
        progress.val_history.resize(n);
        for (size_t i = 0; i < n; ++i)
            require(static_cast<bool>(ls >> progress.val_history[i].first >>
                                      progress.val_history[i].second),
                    "checkpoint: short val_history");
    }
    size_t param_count = 0;
    {
        std::istringstream ls(next_line());
        std::string key;
        ls >> key >> param_count;
        require(key == "params", "checkpoint: expected params");
    }
    require(next_line() == "BINARY", "checkpoint: expected BINARY marker");

    Trainer t;
    {
        Rng scratch(0);  // parameter shapes come from the config; values overwritten below
        t.net = Network::build(ncfg, scratch);
    }
    t.opt.resize(t.net.params.size());
    t.rng.deserialize(rng_state);
    t.progress = std::move(progress);
    require(param_count == t.net.params.size(), "checkpoint: parameter count mismatch");

    for (size_t p = 0; p < t.net.params.size(); ++p) {
        Tensor& param = *t.net.params[p];
        std::uint64_t numel = 0;
        f.read(reinterpret_cast<char*>(&numel), sizeof numel);
        require(f.good() && numel == param.val.size(), "checkpoint: parameter size mismatch");
        f.read(reinterpret_cast<char*>(param.val.data()),
               static_cast<std::streamsize>(numel * sizeof(float)));
        std::uint64_t has_state = 0;
        f.read(reinterpret_cast<char*>(&has_state), sizeof has_state);
        if (has_state) {
            AdamState& st = t.opt[p];
            st.m.resize(numel);
            st.v.resize(numel);
            f.read(reinterpret_cast<char*>(st.m.data()),
                   static_cast<std::streamsize>(numel * sizeof(float)));
            f.read(reinterpret_cast<char*>(st.v.data()),
                   static_cast<std::streamsize>(numel * sizeof(float)));
            std::int64_t steps = 0;
            f.read(reinterpret_cast<char*>(&steps), sizeof steps);
            st.t = steps;
        }
        if (!f) throw IoError("checkpoint: truncated parameter data: " + path);
    }
    lc.trainer = std::move(t);
    return lc;
}

// ---------------------------------------------------------------- driver

// Runs the stage from the trainer's current epoch up to cfg.epochs. One
// sequential rng stream drives shuffling, batch provenance, and augmentation;
// validation consumes none of it, so checkpoints at epoch boundaries resume
// exactly.
inline void train_stage(Trainer& t, const TrainSet& data, const StageConfig& cfg,
                        const ProjectionMatrix& pm, const std::string& ckpt_dir = "",
                        std::ostream* log = nullptr) {
    cfg.validate();
    require(!data.empty(), "train_stage: empty training set");
    const int in_h = t.net.cfg.in_h, in_w = t.net.cfg.in_w;
    for (const TrainSample& s : data) {
        require(s.gt.bands == t.net.cfg.out_c && s.gt.width == t.net.cfg.out_w &&
                    s.gt.height == t.net.cfg.out_h,
                "train_stage: gt dims do not match the network for " + s.id);
        if (cfg.stage == Stage::Main)
            require(s.input.bands == t.net.cfg.in_c && s.input.width == in_w &&
                        s.input.height == in_h,
                    "train_stage: input dims do not match the network for " + s.id);
    }

    const size_t n = data.size();
    const int batches_per_epoch =
        static_cast<int>((n + cfg.batch_size - 1) / static_cast<size_t>(cfg.batch_size));
    const size_t val_count =
        cfg.val_fraction > 0 ? static_cast<size_t>(std::ceil(cfg.val_fraction * n)) : 0;

    std::vector<float> grad_acc;
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;

    auto checkpoint_path = [&](int epoch) {
        std::ostringstream name;
        name << "ckpt_epoch_" << std::setw(4) << std::setfill('0') << epoch << ".bin";
        return (std::filesystem::path(ckpt_dir) / name.str()).string();
    };

    while (t.progress.epoch < cfg.epochs) {
        for (size_t i = 0; i < n; ++i) order[i] = i;
        t.rng.shuffle(order);

        double epoch_loss = 0;
        std::int64_t item_count = 0;
        for (int b = 0; b < batches_per_epoch; ++b) {
            // Wrap around the shuffled order so every batch is full-size.
            std::vector<size_t> idx(static_cast<size_t>(cfg.batch_size));
            for (int j = 0; j < cfg.batch_size; ++j)
                idx[static_cast<size_t>(j)] =
                    order[(static_cast<size_t>(b) * cfg.batch_size + j) % n];

            std::vector<BatchItem> batch =
                cfg.stage == Stage::Pretrain
                    ? make_pretrain_batch(data, idx, pm, t.rng, cfg, in_h, in_w)
                    : make_main_batch(data, idx, pm, t.rng, cfg, in_h, in_w);

            // Accumulate parameter gradients across the batch items.
            size_t total_params = 0;
            for (const auto& p : t.net.params) total_params += p->val.size();
            grad_acc.assign(total_params, 0.0f);

            for (const BatchItem& item : batch) {
                auto x = make_input({1, t.net.cfg.in_c, in_h, in_w}, item.input);
                TensorPtr pred = t.net.forward(x);
                TensorPtr loss = composite_loss(pred, item.gt, item.mask, cfg.weights,
                                                cfg.smoothl1_beta, cfg.delta_vs_gt);
                if (!std::isfinite(loss->val[0]))
                    throw ValidationError("train_stage: non-finite loss at epoch " +
                                          std::to_string(t.progress.epoch) + " batch " +
                                          std::to_string(b));
                backward(loss);
                epoch_loss += loss->val[0];
                ++item_count;
                size_t off = 0;
                for (const auto& p : t.net.params) {
                    for (size_t i = 0; i < p->grad.size(); ++i) grad_acc[off + i] += p->grad[i];
                    off += p->val.size();
                }
            }

            const float inv = 1.0f / static_cast<float>(batch.size());
            size_t off = 0;
            for (size_t p = 0; p < t.net.params.size(); ++p) {
                Tensor& param = *t.net.params[p];
                param.ensure_grad();
                for (size_t i = 0; i < param.grad.size(); ++i)
                    param.grad[i] = grad_acc[off + i] * inv;
                off += param.val.size();
                adam_step(param, t.opt[p], cfg.adam);
            }
        }

        ++t.progress.epoch;
        t.progress.loss_history.push_back(epoch_loss / static_cast<double>(item_count));

        if (val_count > 0 && t.progress.epoch % cfg.val_cadence == 0)
            t.progress.val_history.emplace_back(
                t.progress.epoch, detail::validation_angle(t.net, data, val_count, pm, cfg));

        if (log)
            (*log) << "epoch " << t.progress.epoch << " loss "
                   << t.progress.loss_history.back() << '\n';

        if (!ckpt_dir.empty() && cfg.checkpoint_cadence > 0 &&
            t.progress.epoch % cfg.checkpoint_cadence == 0 && t.progress.epoch < cfg.epochs)
            save_checkpoint(t, cfg.stage, checkpoint_path(t.progress.epoch));
    }

    if (!ckpt_dir.empty()) save_checkpoint(t, cfg.stage, checkpoint_path(t.progress.epoch));
}

// ---------------------------------------------------------------- evaluate

struct EvalRow {
    std::string id;
    double mae = 0;
    double mse = 0;
    double mean_angle = 0;
    bool has_seg = false;
    RootSoilStats classes;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    double mean_mae = 0;
    double mean_mse = 0;
    double mean_angle = 0;
};

inline EvalRow eval_pair(const std::string& id, const SpectralCube& pred, const SpectralCube& gt,
                         const ValidityMask* seg) {
    require(pred.width == gt.width && pred.height == gt.height && pred.bands == gt.bands,
            "eval: pred and gt dims differ for " + id);
    EvalRow row;
    row.id = id;
    double mae = 0, mse = 0;
    for (size_t i = 0; i < gt.data.size(); ++i) {
        const double d = static_cast<double>(pred.data[i]) - gt.data[i];
        mae += std::abs(d);
        mse += d * d;
    }
    row.mae = mae / static_cast<double>(gt.data.size());
    row.mse = mse / static_cast<double>(gt.data.size());
    AngularErrorMap am = spectral_angle(pred, gt);
    double aa = 0;
    for (float v : am.e) aa += v;
    row.mean_angle = aa / static_cast<double>(am.e.size());
    if (seg) {
        row.has_seg = true;
        row.classes = class_stats(am, *seg);
    }
    return row;
}

inline EvalReport evaluate(const Network& net, const TrainSet& test) {
    require(!test.empty(), "evaluate: empty test split");
    EvalReport rep;
    for (const TrainSample& s : test) {
        SpectralCube pred = predict(net, s.input, s.gt.wavelengths);
        rep.rows.push_back(eval_pair(s.id, pred, s.gt, s.has_seg ? &s.seg : nullptr));
        rep.mean_mae += rep.rows.back().mae;
        rep.mean_mse += rep.rows.back().mse;
        rep.mean_angle += rep.rows.back().mean_angle;
    }
    const double inv = 1.0 / static_cast<double>(rep.rows.size());
    rep.mean_mae *= inv;
    rep.mean_mse *= inv;
    rep.mean_angle *= inv;
    return rep;
}

}  // namespace spectraforge
