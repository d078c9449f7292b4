#pragma once

// Small bidirectional transformer: full attention (no causal mask), learned
// absolute position embeddings, pre-norm residual blocks, tanh GELU.
// forward_partial runs attention for a contiguous active range against
// caller-supplied K/V for every other position, which is what the block-wise
// caches feed it. In MathMode::Strict a row's activations are bit-identical
// whether it is computed inside a full pass or a partial one.

#include <mdmlab/numerics.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mdmlab {

struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CacheLayoutError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ModelConfig {
    int vocab_size = 0;
    int num_layers = 0;
    int num_heads = 0;
    int model_dim = 0;
    int ffn_dim = 0;
    int max_seq_len = 0;
    int mask_token_id = 1;
    int eos_token_id = 2;
    int pad_token_id = 0;

    int head_dim() const { return model_dim / num_heads; }

    void validate() const {
        if (vocab_size < 2 || num_layers < 1 || num_heads < 1 || model_dim < 1 || ffn_dim < 1 ||
            max_seq_len < 1) {
            throw DimError("ModelConfig: all extents must be positive");
        }
        if (model_dim % num_heads != 0) {
            throw DimError("ModelConfig: model_dim not divisible by num_heads");
        }
        const int ids[3] = {mask_token_id, eos_token_id, pad_token_id};
        for (int id : ids) {
            if (id < 0 || id >= vocab_size) throw DimError("ModelConfig: sentinel id out of vocab");
        }
        if (mask_token_id == eos_token_id || mask_token_id == pad_token_id ||
            eos_token_id == pad_token_id) {
            throw DimError("ModelConfig: sentinel ids must be distinct");
        }
    }

    bool operator==(const ModelConfig&) const = default;
};

template <typename Scalar>
struct LayerWeights {
    Vec<Scalar> ln1_gain, ln1_bias, ln2_gain, ln2_bias;
    Mat<Scalar> wq, wk, wv, wo;  // [D x D]
    Mat<Scalar> w1;              // [D x F]
    Mat<Scalar> w2;              // [F x D]
};

// flat view over one parameter tensor, used by the optimizer, the weight
// file writer and the finite-difference probes
template <typename Scalar>
struct TensorRef {
    std::string name;
    Scalar* data = nullptr;
    int64_t rows = 0;
    int64_t cols = 0;
    int64_t size() const { return rows * cols; }
};

template <typename Scalar>
struct Weights {
    ModelConfig config;
    Mat<Scalar> tok_embed;  // [V x D]
    Mat<Scalar> pos_embed;  // [max_seq_len x D]
    std::vector<LayerWeights<Scalar>> layers;
    Vec<Scalar> lnf_gain, lnf_bias;
    Mat<Scalar> unembed;  // [D x V]

    static Weights zeros(const ModelConfig& cfg) {
        cfg.validate();
        Weights w;
        w.config = cfg;
        const int d = cfg.model_dim, f = cfg.ffn_dim;
        w.tok_embed = Mat<Scalar>::Zero(cfg.vocab_size, d);
        w.pos_embed = Mat<Scalar>::Zero(cfg.max_seq_len, d);
        w.layers.resize(size_t(cfg.num_layers));
        for (auto& l : w.layers) {
            l.ln1_gain = Vec<Scalar>::Zero(d);
            l.ln1_bias = Vec<Scalar>::Zero(d);
            l.ln2_gain = Vec<Scalar>::Zero(d);
            l.ln2_bias = Vec<Scalar>::Zero(d);
            l.wq = Mat<Scalar>::Zero(d, d);
            l.wk = Mat<Scalar>::Zero(d, d);
            l.wv = Mat<Scalar>::Zero(d, d);
            l.wo = Mat<Scalar>::Zero(d, d);
            l.w1 = Mat<Scalar>::Zero(d, f);
            l.w2 = Mat<Scalar>::Zero(f, d);
        }
        w.lnf_gain = Vec<Scalar>::Zero(d);
        w.lnf_bias = Vec<Scalar>::Zero(d);
        w.unembed = Mat<Scalar>::Zero(d, cfg.vocab_size);
        return w;
    }

    static Weights random_init(const ModelConfig& cfg, uint64_t seed, double stddev = 0.02) {
        Weights w = zeros(cfg);
        Rng rng(seed);
        auto fill = [&rng, stddev](auto& t) {
            for (Eigen::Index i = 0; i < t.rows(); ++i)
                for (Eigen::Index j = 0; j < t.cols(); ++j) t(i, j) = Scalar(rng.normal() * stddev);
        };
        fill(w.tok_embed);
        fill(w.pos_embed);
        for (auto& l : w.layers) {
            fill(l.wq);
            fill(l.wk);
            fill(l.wv);
            fill(l.wo);
            fill(l.w1);
            fill(l.w2);
            l.ln1_gain.setOnes();
            l.ln2_gain.setOnes();
        }
        w.lnf_gain.setOnes();
        fill(w.unembed);
        return w;
    }

    std::vector<TensorRef<Scalar>> tensor_refs() {
        std::vector<TensorRef<Scalar>> refs;
        auto mat = [&refs](const std::string& name, Mat<Scalar>& m) {
            refs.push_back({name, m.data(), m.rows(), m.cols()});
        };
        auto vec = [&refs](const std::string& name, Vec<Scalar>& v) {
            refs.push_back({name, v.data(), v.size(), 1});
        };
        mat("tok_embed", tok_embed);
        mat("pos_embed", pos_embed);
        for (size_t li = 0; li < layers.size(); ++li) {
            const std::string p = "layer" + std::to_string(li) + ".";
            auto& l = layers[li];
            vec(p + "ln1_gain", l.ln1_gain);
            vec(p + "ln1_bias", l.ln1_bias);
            mat(p + "wq", l.wq);
            mat(p + "wk", l.wk);
            mat(p + "wv", l.wv);
            mat(p + "wo", l.wo);
            vec(p + "ln2_gain", l.ln2_gain);
            vec(p + "ln2_bias", l.ln2_bias);
            mat(p + "w1", l.w1);
            mat(p + "w2", l.w2);
        }
        vec("lnf_gain", lnf_gain);
        vec("lnf_bias", lnf_bias);
        mat("unembed", unembed);
        return refs;
    }

    void check_all_finite() const {
        auto refs = const_cast<Weights*>(this)->tensor_refs();
        for (const auto& r : refs) {
            for (int64_t i = 0; i < r.size(); ++i) {
                if (!std::isfinite(double(r.data[i]))) {
                    throw NumericError("weights: non-finite value in " + r.name);
                }
            }
        }
    }
};

template <typename Scalar>
struct LayerKV {
    Mat<Scalar> k, v;                // [rows x model_dim], heads concatenated along columns
    std::vector<int32_t> positions;  // absolute positions, strictly increasing

    void validate(int max_seq_len) const {
        if (k.rows() != v.rows() || int64_t(positions.size()) != k.rows()) {
            throw CacheLayoutError("LayerKV: row/position count mismatch");
        }
        if (int64_t(positions.size()) > max_seq_len) {
            throw CacheLayoutError("LayerKV: more entries than max_seq_len");
        }
        for (size_t i = 1; i < positions.size(); ++i) {
            if (positions[i] <= positions[i - 1]) {
                throw CacheLayoutError("LayerKV: positions not strictly increasing");
            }
        }
    }
};

template <typename Scalar>
using KVStack = std::vector<LayerKV<Scalar>>;

struct ForwardOptions {
    MathMode math = MathMode::Fast;
    bool use_pos_embed = true;  // test hook for position-symmetry checks
};

template <typename Scalar>
struct ForwardResult {
    Mat<Scalar> logits;  // [active_rows x vocab]
    KVStack<Scalar> kv;  // fresh K/V for the active rows only
};

namespace detail {

// cached rows plus the active range must tile [0, total) exactly
inline void check_coverage(const std::vector<int32_t>& cached, int active_start, int active_len,
                           int total) {
    std::vector<bool> seen(size_t(total), false);
    auto mark = [&seen, total](int pos) {
        if (pos < 0 || pos >= total) throw CacheLayoutError("position outside [0, total)");
        if (seen[size_t(pos)]) throw CacheLayoutError("overlapping position coverage");
        seen[size_t(pos)] = true;
    };
    for (int32_t p : cached) mark(p);
    for (int i = 0; i < active_len; ++i) mark(active_start + i);
    // everything marked exactly once: counts already add up to total
}

}  // namespace detail

template <typename Scalar>
ForwardResult<Scalar> run_transformer(const Weights<Scalar>& w, std::span<const int32_t> active_tokens,
                                      int active_start, const KVStack<Scalar>* cache,
                                      const ForwardOptions& opt = {}) {
    const ModelConfig& cfg = w.config;
    const int m = int(active_tokens.size());
    if (m < 1) throw DimError("forward: empty active range");

    int cached_rows = 0;
    if (cache) {
        if (int(cache->size()) != cfg.num_layers) {
            throw CacheLayoutError("cache layer count mismatch");
        }
        cached_rows = int((*cache)[0].positions.size());
        for (const auto& layer : *cache) {
            layer.validate(cfg.max_seq_len);
            if (int(layer.positions.size()) != cached_rows || layer.positions != (*cache)[0].positions) {
                throw CacheLayoutError("cache layers disagree on positions");
            }
        }
    }
    const int total = cached_rows + m;
    if (total > cfg.max_seq_len) {
        throw CapacityError("sequence length " + std::to_string(total) + " exceeds max_seq_len " +
                            std::to_string(cfg.max_seq_len));
    }
    if (cache) {
        detail::check_coverage((*cache)[0].positions, active_start, m, total);
    } else if (active_start != 0) {
        throw CacheLayoutError("no cache supplied but active range does not start at 0");
    }

    const int d = cfg.model_dim, hd = cfg.head_dim(), vocab = cfg.vocab_size;
    Mat<Scalar> x(m, d);
    for (int i = 0; i < m; ++i) {
        const int32_t tok = active_tokens[size_t(i)];
        if (tok < 0 || tok >= vocab) throw DimError("token id out of vocab range");
        x.row(i) = w.tok_embed.row(tok);
        if (opt.use_pos_embed) x.row(i) += w.pos_embed.row(active_start + i);
    }

    std::vector<int32_t> active_positions(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) active_positions[size_t(i)] = active_start + i;

    const Scalar scale = Scalar(1) / std::sqrt(Scalar(hd));
    ForwardResult<Scalar> out;
    out.kv.resize(size_t(cfg.num_layers));

    for (int li = 0; li < cfg.num_layers; ++li) {
        const LayerWeights<Scalar>& l = w.layers[size_t(li)];
        const Mat<Scalar> a = layer_norm_rows(x, l.ln1_gain, l.ln1_bias);
        Mat<Scalar> q = matmul(a, l.wq, opt.math);
        Mat<Scalar> k = matmul(a, l.wk, opt.math);
        Mat<Scalar> v = matmul(a, l.wv, opt.math);

        // K/V for all positions, ordered by absolute position
        Mat<Scalar> k_all, v_all;
        if (cache) {
            k_all.resize(total, d);
            v_all.resize(total, d);
            const auto& ckv = (*cache)[size_t(li)];
            for (int r = 0; r < cached_rows; ++r) {
                k_all.row(ckv.positions[size_t(r)]) = ckv.k.row(r);
                v_all.row(ckv.positions[size_t(r)]) = ckv.v.row(r);
            }
            for (int i = 0; i < m; ++i) {
                k_all.row(active_start + i) = k.row(i);
                v_all.row(active_start + i) = v.row(i);
            }
        } else {
            k_all = k;
            v_all = v;
        }

        Mat<Scalar> ctx(m, d);
        for (int h = 0; h < cfg.num_heads; ++h) {
            const Mat<Scalar> qh = q.middleCols(h * hd, hd);
            const Mat<Scalar> kh = k_all.middleCols(h * hd, hd);
            const Mat<Scalar> vh = v_all.middleCols(h * hd, hd);
            Mat<Scalar> scores = matmul_nt(qh, kh, opt.math);
            scores *= scale;
            softmax_rows_inplace(scores);
            ctx.middleCols(h * hd, hd) = matmul(scores, vh, opt.math);
        }
        x += matmul(ctx, l.wo, opt.math);

        const Mat<Scalar> b = layer_norm_rows(x, l.ln2_gain, l.ln2_bias);
        const Mat<Scalar> f1 = matmul(b, l.w1, opt.math);
        const Mat<Scalar> f2 = gelu(f1);
        x += matmul(f2, l.w2, opt.math);

        out.kv[size_t(li)].k = std::move(k);
        out.kv[size_t(li)].v = std::move(v);
        out.kv[size_t(li)].positions = active_positions;
    }

    const Mat<Scalar> y = layer_norm_rows(x, w.lnf_gain, w.lnf_bias);
    out.logits = matmul(y, w.unembed, opt.math);
    return out;
}

template <typename Scalar>
ForwardResult<Scalar> forward_full(const Weights<Scalar>& w, std::span<const int32_t> tokens,
                                   const ForwardOptions& opt = {}) {
    return run_transformer<Scalar>(w, tokens, 0, nullptr, opt);
}

template <typename Scalar>
ForwardResult<Scalar> forward_partial(const Weights<Scalar>& w, std::span<const int32_t> active_tokens,
                                      int active_start, const KVStack<Scalar>& cache,
                                      const ForwardOptions& opt = {}) {
    if (cache.empty() || cache[0].positions.empty()) {
        // empty cache degenerates to a full pass over the active range
        if (active_start != 0) throw CacheLayoutError("empty cache with nonzero active start");
        return run_transformer<Scalar>(w, active_tokens, 0, nullptr, opt);
    }
    return run_transformer<Scalar>(w, active_tokens, active_start, &cache, opt);
}

}  // namespace mdmlab
