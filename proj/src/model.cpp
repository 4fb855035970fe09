// Copyright 2026 The T1 Authors
// SPDX-License-Identifier: Apache-2.0

#include "t1/model.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "t1/masking.hpp"
#include "json.hpp"

namespace t1 {

int ModelConfig::total_blocks() const {
    int n = 0;
    for (const auto& g : groups) n += g.num_blocks;
    return n;
}

static int embed_out_len(const ModelConfig& c) {
    // same-padded conv: L0 = (T-1)/stride + 1
    return (c.seq_len - 1) / c.embed_stride + 1;
}

int ModelConfig::final_len() const {
    int L = embed_out_len(*this);
    for (const auto& g : groups)
        if (g.downsample_after) L = (L + 1) / 2;
    return L;
}

void ModelConfig::validate() const {
    if (channels < 1) throw std::invalid_argument("config: channels must be >= 1");
    if (num_vars < 1) throw std::invalid_argument("config: num_vars must be >= 1");
    if (seq_len < 1) throw std::invalid_argument("config: seq_len must be >= 1");
    if (channels_per_head < 1 || channels % channels_per_head != 0)
        throw std::invalid_argument("config: channels not divisible by channels_per_head");
    if (ffn_ratio <= 0) throw std::invalid_argument("config: ffn_ratio must be > 0");
    if (embed_kernel < 1 || embed_stride < 1) throw std::invalid_argument("config: bad embed conv");
    if (groups.empty()) throw std::invalid_argument("config: no block groups");
    int L = embed_out_len(*this);
    for (const auto& g : groups) {
        if (g.num_blocks < 1) throw std::invalid_argument("config: group with no blocks");
        if (g.large_kernel < 1 || g.small_kernel < 1)
            throw std::invalid_argument("config: kernel sizes must be >= 1");
        if (g.large_kernel > 2 * L || g.small_kernel > 2 * L)
            throw std::invalid_argument("config: kernel exceeds latent length " + std::to_string(L));
        if (g.downsample_after) L = (L + 1) / 2;
    }
    if (upsampler == Upsampler::PixelShuffle) {
        const int Lf = final_len();
        if (seq_len % Lf != 0)
            throw std::invalid_argument("config: seq_len not divisible by final latent length");
        const int r = seq_len / Lf;
        if (channels % r != 0)
            throw std::invalid_argument("config: channels not divisible by upsample ratio r=" +
                                        std::to_string(r));
    }
}

ModelConfig scale_kernels(const ModelConfig& config, int new_T, std::vector<std::string>* warnings) {
    if (new_T < 8) throw std::invalid_argument("scale_kernels: new_T must be >= 8");
    ModelConfig out = config;
    out.seq_len = new_T;
    const double f = static_cast<double>(new_T) / kReferenceSeqLen;
    for (auto& g : out.groups) {
        int k = static_cast<int>(std::floor(f * g.large_kernel));
        if (k < 1) {
            if (warnings)
                warnings->push_back("large kernel " + std::to_string(g.large_kernel) +
                                    " scaled below 1 at T=" + std::to_string(new_T) + "; clamped");
            k = 1;
        }
        g.large_kernel = k;
    }
    return out;
}

std::pair<Tensor, NormStats> masked_instance_norm(const Tensor& x, const Tensor& omega_eff) {
    if (!x.same_shape(omega_eff) || x.ndim() != 3)
        throw std::invalid_argument("masked_instance_norm: need matching [B,M,T]");
    const int B = x.dim(0), M = x.dim(1), T = x.dim(2);
    Tensor xn({B, M, T});
    NormStats st;
    st.mu = Tensor({B, M});
    st.sigma = Tensor({B, M});
    st.valid = Tensor({B, M});
    for (int b = 0; b < B; ++b)
        for (int m = 0; m < M; ++m) {
            const int64_t row = (static_cast<int64_t>(b) * M + m) * T;
            int n = 0;
            double sum = 0.0;
            for (int t = 0; t < T; ++t)
                if (omega_eff[row + t] != 0.0) {
                    sum += x[row + t];
                    ++n;
                }
            double mu = 0.0, sigma = 1.0, valid = 0.0;
            if (n > 0) {
                valid = 1.0;
                mu = sum / n;
                double var = 0.0;
                for (int t = 0; t < T; ++t)
                    if (omega_eff[row + t] != 0.0) {
                        const double d = x[row + t] - mu;
                        var += d * d;
                    }
                var /= n;
                sigma = std::max(std::sqrt(var), kNormEps);
            }
            st.mu[static_cast<int64_t>(b) * M + m] = mu;
            st.sigma[static_cast<int64_t>(b) * M + m] = sigma;
            st.valid[static_cast<int64_t>(b) * M + m] = valid;
            for (int t = 0; t < T; ++t)
                xn[row + t] = omega_eff[row + t] != 0.0 ? (x[row + t] - mu) / sigma : 0.0;
        }
    return {std::move(xn), std::move(st)};
}

// ---- parameter init ----

namespace {

constexpr uint64_t kInitUniform = 10;
constexpr uint64_t kInitNormalA = 11;
constexpr uint64_t kInitNormalB = 12;

void fill_uniform(Tensor& t, double bound, uint64_t seed, uint64_t pidx) {
    for (int64_t i = 0; i < t.size(); ++i) {
        const double u = rng::uniform(seed, pidx, static_cast<uint64_t>(i), 0, kInitUniform);
        t[i] = (2.0 * u - 1.0) * bound;
    }
}

void fill_normal(Tensor& t, double sd, uint64_t seed, uint64_t pidx) {
    for (int64_t i = 0; i < t.size(); ++i) {
        const double u1 =
            1.0 - rng::uniform(seed, pidx, static_cast<uint64_t>(i), 0, kInitNormalA);  // (0,1]
        const double u2 = rng::uniform(seed, pidx, static_cast<uint64_t>(i), 0, kInitNormalB);
        t[i] = sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
}

int ffn_hidden(const ModelConfig& c) {
    return std::max(1, static_cast<int>(std::lround(c.ffn_ratio * c.channels)));
}

struct ParamBuilder {
    ParamStore& ps;
    uint64_t seed;
    uint64_t pidx = 0;

    void uniform(const std::string& name, std::vector<int> shape, int fan_in) {
        Tensor t(std::move(shape));
        fill_uniform(t, 1.0 / std::sqrt(static_cast<double>(fan_in)), seed, pidx++);
        ps.add(name, std::move(t));
    }
    void normal(const std::string& name, std::vector<int> shape, double sd) {
        Tensor t(std::move(shape));
        fill_normal(t, sd, seed, pidx++);
        ps.add(name, std::move(t));
    }
    void constant(const std::string& name, std::vector<int> shape, double v) {
        ps.add(name, Tensor::full(std::move(shape), v));
        ++pidx;
    }
};

}  // namespace

ParamStore init_params(const ModelConfig& config, uint64_t seed) {
    config.validate();
    ParamStore ps;
    ParamBuilder b{ps, seed};
    const int C = config.channels, M = config.num_vars;
    const int cin = config.use_mask_channel ? 2 : 1;
    const int L0 = embed_out_len(config);

    b.uniform("embed.conv.w", {C, cin, config.embed_kernel}, cin * config.embed_kernel);
    b.constant("embed.conv.b", {C}, 0.0);
    b.normal("embed.e_var", {M, C, L0}, 0.02);

    const int H = ffn_hidden(config);
    for (size_t gi = 0; gi < config.groups.size(); ++gi) {
        const auto& g = config.groups[gi];
        for (int bi = 0; bi < g.num_blocks; ++bi) {
            const std::string p = "g" + std::to_string(gi) + ".b" + std::to_string(bi) + ".";
            for (const char* proj : {"q", "k", "v"}) {
                b.uniform(p + proj + "_large", {C, g.large_kernel}, g.large_kernel);
                b.uniform(p + proj + "_small", {C, g.small_kernel}, g.small_kernel);
            }
            b.uniform(p + "attn_pw.w", {C, C}, C);
            b.constant(p + "attn_pw.b", {C}, 0.0);
            b.constant(p + "ln1.gamma", {C}, 1.0);
            b.constant(p + "ln1.beta", {C}, 0.0);
            b.uniform(p + "ffn1.w", {H, C}, C);
            b.constant(p + "ffn1.b", {H}, 0.0);
            b.uniform(p + "ffn2.w", {C, H}, H);
            b.constant(p + "ffn2.b", {C}, 0.0);
            b.constant(p + "ln2.gamma", {C}, 1.0);
            b.constant(p + "ln2.beta", {C}, 0.0);
        }
        if (g.downsample_after) b.uniform("g" + std::to_string(gi) + ".down.w", {C, 2}, 2);
    }

    const int Lf = config.final_len();
    if (config.upsampler == Upsampler::PixelShuffle) {
        const int r = config.seq_len / Lf;
        b.uniform("recon.pw.w", {1, C / r}, C / r);
        b.constant("recon.pw.b", {1}, 0.0);
    } else {
        b.uniform("recon.linear.w", {M, config.seq_len, C * Lf}, C * Lf);
        b.constant("recon.linear.b", {M, config.seq_len}, 0.0);
    }
    return ps;
}

// ---- forward ----

TapeForward forward_tape(Tape& tape, const SeriesBatch& batch, const ModelConfig& config,
                         ParamStore& params) {
    config.validate();
    if (batch.vars() != config.num_vars)
        throw std::invalid_argument("forward: batch has " + std::to_string(batch.vars()) +
                                    " variables but E_var was built for " +
                                    std::to_string(config.num_vars));
    if (batch.len() != config.seq_len)
        throw std::invalid_argument("forward: batch length " + std::to_string(batch.len()) +
                                    " != config seq_len " + std::to_string(config.seq_len));
    const int B = batch.batch(), M = batch.vars(), T = batch.len();
    const int C = config.channels;

    const Tensor eff = batch.effective_mask();
    auto [x_norm, stats] = masked_instance_norm(batch.x, eff);

    const int cin = config.use_mask_channel ? 2 : 1;
    Tensor embed_in({B, M, cin, T});
    for (int bb = 0; bb < B; ++bb)
        for (int m = 0; m < M; ++m)
            for (int t = 0; t < T; ++t) {
                const int64_t src = (static_cast<int64_t>(bb) * M + m) * T + t;
                embed_in.at({bb, m, 0, t}) = x_norm[src];
                if (cin == 2) embed_in.at({bb, m, 1, t}) = eff[src];
            }

    TapeForward out;
    out.stats = stats;

    Tape::NodeId z = tape.conv1d(tape.constant(std::move(embed_in)),
                                 tape.param(params, "embed.conv.w"),
                                 tape.param(params, "embed.conv.b"), config.embed_stride, true);
    z = tape.add_var_encoding(z, tape.param(params, "embed.e_var"));
    int L = tape.value(z).dim(3);
    out.trace.latent_lengths.push_back(L);

    for (size_t gi = 0; gi < config.groups.size(); ++gi) {
        const auto& g = config.groups[gi];
        for (int bi = 0; bi < g.num_blocks; ++bi) {
            const std::string p = "g" + std::to_string(gi) + ".b" + std::to_string(bi) + ".";
            auto proj = [&](const char* name) {
                Tape::NodeId large =
                    tape.dwconv(z, tape.param(params, p + name + std::string("_large")), 1, true);
                Tape::NodeId small =
                    tape.dwconv(z, tape.param(params, p + name + std::string("_small")), 1, true);
                return tape.add(large, small);
            };
            Tape::NodeId q = proj("q"), k = proj("k"), v = proj("v");
            Tensor weights;
            Tape::NodeId o = tape.chead_attention(q, k, v, config.channels_per_head, &weights);
            out.trace.attention_weights.push_back(std::move(weights));
            Tape::NodeId a = tape.pwconv(o, tape.param(params, p + "attn_pw.w"),
                                         tape.param(params, p + "attn_pw.b"));
            a = tape.layernorm(a, tape.param(params, p + "ln1.gamma"),
                               tape.param(params, p + "ln1.beta"));
            Tape::NodeId z_attn = tape.add(z, a);
            Tape::NodeId f = tape.pwconv(z_attn, tape.param(params, p + "ffn1.w"),
                                         tape.param(params, p + "ffn1.b"));
            f = tape.gelu(f);
            f = tape.pwconv(f, tape.param(params, p + "ffn2.w"),
                            tape.param(params, p + "ffn2.b"));
            f = tape.layernorm(f, tape.param(params, p + "ln2.gamma"),
                               tape.param(params, p + "ln2.beta"));
            z = tape.add(z_attn, f);
        }
        if (g.downsample_after) {
            if (L % 2 != 0) z = tape.pad_last(z, 1);
            z = tape.dwconv(z, tape.param(params, "g" + std::to_string(gi) + ".down.w"), 2, false);
            L = tape.value(z).dim(3);
            out.trace.latent_lengths.push_back(L);
        }
    }

    Tape::NodeId xn_hat;
    if (config.upsampler == Upsampler::PixelShuffle) {
        const int Lf = L;
        const int r = T / Lf;
        Tape::NodeId ps_node = tape.pixel_shuffle(z, r);
        Tape::NodeId y = tape.pwconv(ps_node, tape.param(params, "recon.pw.w"),
                                     tape.param(params, "recon.pw.b"));
        xn_hat = tape.reshape(y, {B, M, T});
    } else {
        xn_hat = tape.var_linear(z, tape.param(params, "recon.linear.w"),
                                 tape.param(params, "recon.linear.b"));
    }
    out.x_hat = tape.denorm(xn_hat, stats.sigma, stats.mu);
    (void)C;
    return out;
}

std::pair<Tensor, ForwardTrace> forward(const SeriesBatch& batch, const ModelConfig& config,
                                        ParamStore& params) {
    Tape tape;
    TapeForward r = forward_tape(tape, batch, config, params);
    return {tape.value(r.x_hat), std::move(r.trace)};
}

// ---- config json ----

std::string model_config_to_json(const ModelConfig& c) {
    nlohmann::json j;
    j["channels"] = c.channels;
    j["groups"] = nlohmann::json::array();
    for (const auto& g : c.groups)
        j["groups"].push_back({{"num_blocks", g.num_blocks},
                               {"large_kernel", g.large_kernel},
                               {"small_kernel", g.small_kernel},
                               {"downsample_after", g.downsample_after}});
    j["ffn_ratio"] = c.ffn_ratio;
    j["channels_per_head"] = c.channels_per_head;
    j["embed_kernel"] = c.embed_kernel;
    j["embed_stride"] = c.embed_stride;
    j["use_mask_channel"] = c.use_mask_channel;
    j["upsampler"] = c.upsampler == Upsampler::PixelShuffle ? "pixel_shuffle" : "linear";
    j["seq_len"] = c.seq_len;
    j["num_vars"] = c.num_vars;
    return j.dump(2);
}

ModelConfig model_config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ModelConfig c;
    c.channels = j.value("channels", c.channels);
    if (j.contains("groups")) {
        c.groups.clear();
        for (const auto& gj : j.at("groups")) {
            BlockGroup g;
            g.num_blocks = gj.value("num_blocks", g.num_blocks);
            g.large_kernel = gj.value("large_kernel", g.large_kernel);
            g.small_kernel = gj.value("small_kernel", g.small_kernel);
            g.downsample_after = gj.value("downsample_after", g.downsample_after);
            c.groups.push_back(g);
        }
    }
    c.ffn_ratio = j.value("ffn_ratio", c.ffn_ratio);
    c.channels_per_head = j.value("channels_per_head", c.channels_per_head);
    c.embed_kernel = j.value("embed_kernel", c.embed_kernel);
    c.embed_stride = j.value("embed_stride", c.embed_stride);
    c.use_mask_channel = j.value("use_mask_channel", c.use_mask_channel);
    const std::string up = j.value("upsampler", std::string("pixel_shuffle"));
    if (up == "pixel_shuffle")
        c.upsampler = Upsampler::PixelShuffle;
    else if (up == "linear")
        c.upsampler = Upsampler::Linear;
    else
        throw std::invalid_argument("config: unknown upsampler '" + up + "'");
    c.seq_len = j.value("seq_len", c.seq_len);
    c.num_vars = j.value("num_vars", c.num_vars);
    return c;
}

// ---- checkpoint ----

static const char kMagic[8] = {'T', '1', 'C', 'K', 'P', 'T', '1', '\n'};

template <typename T>
static void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
static T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw std::invalid_argument("checkpoint: truncated file");
    return v;
}

void save_checkpoint(const std::string& path, const ModelConfig& config, const ParamStore& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, sizeof kMagic);
    const std::string cfg = model_config_to_json(config);
    write_pod<uint32_t>(os, static_cast<uint32_t>(cfg.size()));
    os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    write_pod<uint32_t>(os, static_cast<uint32_t>(params.count()));
    for (const auto& name : params.names()) {
        const Tensor& v = params.entry(name).value;
        write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<uint32_t>(os, static_cast<uint32_t>(v.ndim()));
        for (int d : v.shape()) write_pod<int32_t>(os, d);
        os.write(reinterpret_cast<const char*>(v.data()),
                 static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::pair<ModelConfig, ParamStore> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::invalid_argument("checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw std::invalid_argument("checkpoint: bad magic in " + path);
    const auto cfg_len = read_pod<uint32_t>(is);
    std::string cfg(cfg_len, '\0');
    is.read(cfg.data(), cfg_len);
    if (!is) throw std::invalid_argument("checkpoint: truncated config");
    ModelConfig config = model_config_from_json(cfg);
    const auto n = read_pod<uint32_t>(is);
    ParamStore ps;
    for (uint32_t i = 0; i < n; ++i) {
        const auto name_len = read_pod<uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto ndim = read_pod<uint32_t>(is);
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = read_pod<int32_t>(is);
        Tensor v(shape);
        is.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(double)));
        if (!is) throw std::invalid_argument("checkpoint: truncated payload for " + name);
        ps.add(name, std::move(v));
    }
    return {std::move(config), std::move(ps)};
}

}  // namespace t1
