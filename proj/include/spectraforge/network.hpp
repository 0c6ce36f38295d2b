#pragma once

// The asymmetric encoder-decoder. The encoder halves spatial resolution at
// every level while the decoder restores fewer levels than were taken, so
// the output is spatially smaller than the input; channel counts instead
// climb gradually toward the output band count. Skip connections cross the
// resolution mismatch through bilinear resizers.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "spectraforge/common.hpp"
#include "spectraforge/rng.hpp"
#include "spectraforge/tensor.hpp"

namespace spectraforge {

enum class Activation { LeakyRelu, Sigmoid, Identity };

inline std::string activation_name(Activation a) {
    switch (a) {
        case Activation::LeakyRelu: return "leaky_relu";
        case Activation::Sigmoid: return "sigmoid";
        default: return "identity";
    }
}

inline Activation activation_from(const std::string& s) {
    if (s == "leaky_relu") return Activation::LeakyRelu;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "identity") return Activation::Identity;
    throw ValidationError("unknown activation: " + s);
}

struct NetworkConfig {
    int in_h = 64, in_w = 64, in_c = 8;
    int out_h = 16, out_w = 16, out_c = 32;
    std::vector<int> encoder_channels{8, 16, 32, 64, 128};  // [0] = input channels
    std::vector<int> decoder_channels{128, 64, 32};         // [0] = encoder tail
    Activation activation = Activation::LeakyRelu;
    Activation output_activation = Activation::Sigmoid;

    int encoder_levels() const { return static_cast<int>(encoder_channels.size()) - 1; }
    int decoder_levels() const { return static_cast<int>(decoder_channels.size()) - 1; }

    void validate() const {
        require(in_h > 0 && in_w > 0 && in_c > 0 && out_h > 0 && out_w > 0 && out_c > 0,
                "network config: dims must be positive");
        require(encoder_channels.size() >= 2, "network config: encoder needs at least one level");
        require(decoder_channels.size() >= 2, "network config: decoder needs at least one level");
        require(decoder_levels() < encoder_levels(),
                "network config: decoder must have fewer levels than the encoder");
        require(encoder_channels.front() == in_c,
                "network config: encoder_channels[0] must equal input channels");
        require(decoder_channels.front() == encoder_channels.back(),
                "network config: decoder_channels[0] must equal the encoder tail");
        require(decoder_channels.back() == out_c,
                "network config: decoder_channels must end at the output band count");
        for (int ch : encoder_channels) require(ch > 0, "network config: channel counts positive");
        for (size_t i = 1; i < decoder_channels.size(); ++i) {
            const double a = decoder_channels[i - 1], b = decoder_channels[i];
            require(b > 0 && std::max(a, b) / std::min(a, b) <= 2.0,
                    "network config: decoder channel ratio above 2");
        }
        int div = 1 << encoder_levels();
        require(in_h % div == 0 && in_w % div == 0,
                "network config: input dims must divide by 2^encoder_levels");
    }
};

// Full-scale defaults: 1024x1024x8 in, 286x286x299 out.
inline NetworkConfig full_config() {
    NetworkConfig c;
    c.in_h = 1024;
    c.in_w = 1024;
    c.in_c = 8;
    c.out_h = 286;
    c.out_w = 286;
    c.out_c = 299;
    c.encoder_channels = {8, 32, 64, 128, 256, 512};
    c.decoder_channels = {512, 416, 352, 299};
    return c;
}

inline NetworkConfig tiny_config() { return {}; }

inline void save_network_config(const NetworkConfig& c, std::ostream& os) {
    os << "input " << c.in_h << ' ' << c.in_w << ' ' << c.in_c << '\n';
    os << "output " << c.out_h << ' ' << c.out_w << ' ' << c.out_c << '\n';
    os << "encoder";
    for (int ch : c.encoder_channels) os << ' ' << ch;
    os << "\ndecoder";
    for (int ch : c.decoder_channels) os << ' ' << ch;
    os << "\nactivation " << activation_name(c.activation) << '\n';
    os << "output_activation " << activation_name(c.output_activation) << '\n';
}

inline NetworkConfig load_network_config(std::istream& is) {
    NetworkConfig c;
    c.encoder_channels.clear();
    c.decoder_channels.clear();
    std::string line;
    while (std::getline(is, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        if (key == "input") {
            require(static_cast<bool>(ls >> c.in_h >> c.in_w >> c.in_c), "config: bad input line");
        } else if (key == "output") {
            require(static_cast<bool>(ls >> c.out_h >> c.out_w >> c.out_c), "config: bad output line");
        } else if (key == "encoder") {
            int ch;
            while (ls >> ch) c.encoder_channels.push_back(ch);
        } else if (key == "decoder") {
            int ch;
            while (ls >> ch) c.decoder_channels.push_back(ch);
        } else if (key == "activation") {
            std::string a;
            ls >> a;
            c.activation = activation_from(a);
        } else if (key == "output_activation") {
            std::string a;
            ls >> a;
            c.output_activation = activation_from(a);
        } else {
            throw ValidationError("config: unknown key: " + key);
        }
    }
    c.validate();
    return c;
}

inline NetworkConfig load_network_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("config: cannot open: " + path);
    return load_network_config(f);
}

inline TensorPtr apply_activation(const TensorPtr& x, Activation a) {
    switch (a) {
        case Activation::LeakyRelu: return leaky_relu(x);
        case Activation::Sigmoid: return sigmoid(x);
        default: return x;
    }
}

struct Network {
    NetworkConfig cfg;
    // Parameter order is fixed (encoder convs, decoder convs, head) and is
    // the checkpoint serialization order.
    std::vector<TensorPtr> params;

    struct ConvP {
        TensorPtr k, b;
    };
    std::vector<ConvP> enc;   // 2 per level
    std::vector<ConvP> dec;   // 2 per level
    ConvP head;

    static Network build(const NetworkConfig& cfg, Rng& rng) {
        cfg.validate();
        Network net;
        net.cfg = cfg;
        auto conv_param = [&](int out_c, int in_c, int k) {
            ConvP p;
            p.k = make_param({out_c, in_c, k, k}, rng, in_c * k * k);
            p.b = make_param({1, 1, 1, out_c}, rng, in_c * k * k);
            net.params.push_back(p.k);
            net.params.push_back(p.b);
            return p;
        };
        const auto& ec = cfg.encoder_channels;
        for (int l = 0; l < cfg.encoder_levels(); ++l) {
            net.enc.push_back(conv_param(ec[l + 1], ec[l], 3));
            net.enc.push_back(conv_param(ec[l + 1], ec[l + 1], 3));
        }
        const auto& dc = cfg.decoder_channels;
        for (int d = 0; d < cfg.decoder_levels(); ++d) {
            // Skip source: encoder level (L-1-d) pre-pool output channels.
            const int skip_c = ec[static_cast<size_t>(cfg.encoder_levels() - d)];
            net.dec.push_back(conv_param(dc[d + 1], dc[d] + skip_c, 3));
            net.dec.push_back(conv_param(dc[d + 1], dc[d + 1], 3));
        }
        net.head = conv_param(cfg.out_c, dc.back(), 1);
        return net;
    }

    // One forward pass; x is (N, in_c, in_h, in_w).
    TensorPtr forward(const TensorPtr& x) const {
        require(x->shape.c == cfg.in_c && x->shape.h == cfg.in_h && x->shape.w == cfg.in_w,
                "network forward: input shape " + x->shape.str() + " does not match config");
        const int L = cfg.encoder_levels(), D = cfg.decoder_levels();
        std::vector<TensorPtr> skips;
        TensorPtr cur = x;
        for (int l = 0; l < L; ++l) {
            cur = apply_activation(conv2d(cur, enc[2 * l].k, enc[2 * l].b), cfg.activation);
            cur = apply_activation(conv2d(cur, enc[2 * l + 1].k, enc[2 * l + 1].b), cfg.activation);
            skips.push_back(cur);
            cur = maxpool2(cur);
        }
        for (int d = 0; d < D; ++d) {
            const int oh = cur->shape.h * 2, ow = cur->shape.w * 2;
            TensorPtr up = bilinear_resize(cur, oh, ow);
            TensorPtr skip = bilinear_resize(skips[static_cast<size_t>(L - 1 - d)], oh, ow);
            cur = concat_channels(up, skip);
            cur = apply_activation(conv2d(cur, dec[2 * d].k, dec[2 * d].b), cfg.activation);
            cur = apply_activation(conv2d(cur, dec[2 * d + 1].k, dec[2 * d + 1].b), cfg.activation);
        }
        cur = bilinear_resize(cur, cfg.out_h, cfg.out_w);
        cur = conv2d(cur, head.k, head.b);
        return apply_activation(cur, cfg.output_activation);
    }

    size_t parameter_count() const {
        size_t n = 0;
        for (const auto& p : params) n += p->val.size();
        return n;
    }
};

}  // namespace spectraforge
