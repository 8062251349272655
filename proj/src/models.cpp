#include "iclab/models.hpp"

#include <cmath>

#include "iclab/errors.hpp"
#include "iclab/rng.hpp"

namespace iclab {

namespace op = iclab::ops;

const char* backbone_name(BackboneKind k) {
    switch (k) {
        case BackboneKind::transformer: return "transformer";
        case BackboneKind::vanilla_rnn: return "rnn";
        case BackboneKind::lstm: return "lstm";
    }
    return "?";
}

BackboneKind parse_backbone(const std::string& name) {
    if (name == "transformer") return BackboneKind::transformer;
    if (name == "rnn" || name == "vanilla_rnn") return BackboneKind::vanilla_rnn;
    if (name == "lstm") return BackboneKind::lstm;
    throw ConfigError("unknown model kind '" + name + "' (transformer|rnn|lstm)");
}

void ModelConfig::validate() const {
    if (label_count < 1) {
        throw ConfigError("model: label_count must be >= 1");
    }
    if (embedder.out_dim < 1 || embedder.channels.empty() || embedder.blocks_per_group < 1) {
        throw ConfigError("model: bad embedder config");
    }
    if (kind == BackboneKind::transformer) {
        if (transformer.dim != embedder.out_dim) {
            throw ConfigError("model: transformer dim must equal embedder out_dim");
        }
        if (transformer.dim % transformer.heads != 0) {
            throw ConfigError("model: transformer dim must be divisible by heads");
        }
        if (transformer.layers < 1) {
            throw ConfigError("model: transformer needs >= 1 layer");
        }
    } else {
        if (recurrent.layers < 1 || recurrent.hidden_dim < 1) {
            throw ConfigError("model: bad recurrent config");
        }
    }
}

Tensor sinusoidal_positions(int tokens, int dim) {
    Tensor pos({tokens, dim});
    for (int t = 0; t < tokens; ++t) {
        for (int i = 0; i < dim; i += 2) {
            const double angle =
                static_cast<double>(t) /
                std::pow(10000.0, static_cast<double>(i) / static_cast<double>(dim));
            pos.at(t, i) = std::sin(angle);
            if (i + 1 < dim) {
                pos.at(t, i + 1) = std::cos(angle);
            }
        }
    }
    return pos;
}

namespace {

Tensor causal_mask(int tokens) {
    Tensor m({tokens, tokens});
    for (int i = 0; i < tokens; ++i) {
        for (int j = 0; j <= i; ++j) {
            m.at(i, j) = 1.0;
        }
    }
    return m;
}

Tensor dense_init(int64_t fan_in, std::vector<int64_t> shape, Rng& rng, double gain = 1.0) {
    return Tensor::randn(std::move(shape), rng, gain / std::sqrt(static_cast<double>(fan_in)));
}

struct ResnetShape {
    // conv params as (out, in, kh, kw); block entry stride 2 per group
    struct Block {
        int in_ch = 0, out_ch = 0, stride = 1;
        bool needs_proj() const { return stride != 1 || in_ch != out_ch; }
    };
    int stem_ch = 0;
    std::vector<Block> blocks;  // flattened group-major
    int last_ch = 0;
};

ResnetShape resnet_shape(const EmbedderConfig& cfg) {
    ResnetShape s;
    s.stem_ch = cfg.channels.front();
    int ch = s.stem_ch;
    for (size_t g = 0; g < cfg.channels.size(); ++g) {
        for (int b = 0; b < cfg.blocks_per_group; ++b) {
            ResnetShape::Block blk;
            blk.in_ch = ch;
            blk.out_ch = cfg.channels[g];
            blk.stride = (b == 0) ? 2 : 1;
            s.blocks.push_back(blk);
            ch = blk.out_ch;
        }
    }
    s.last_ch = ch;
    return s;
}

std::string block_key(size_t i, const char* leaf) {
    return "emb/b" + std::to_string(i) + "/" + leaf;
}

}  // namespace

Model::Model(ModelConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng = Rng::stream(seed, "init");
    const int d = cfg_.token_dim();
    const ResnetShape rs = resnet_shape(cfg_.embedder);

    params_["emb/stem/w"] = dense_init(9, {rs.stem_ch, 1, 3, 3}, rng);
    params_["emb/stem/b"] = Tensor::zeros({rs.stem_ch});
    for (size_t i = 0; i < rs.blocks.size(); ++i) {
        const auto& blk = rs.blocks[i];
        params_[block_key(i, "conv1/w")] =
            dense_init(blk.in_ch * 9, {blk.out_ch, blk.in_ch, 3, 3}, rng);
        params_[block_key(i, "conv1/b")] = Tensor::zeros({blk.out_ch});
        params_[block_key(i, "conv2/w")] =
            dense_init(blk.out_ch * 9, {blk.out_ch, blk.out_ch, 3, 3}, rng);
        params_[block_key(i, "conv2/b")] = Tensor::zeros({blk.out_ch});
        if (blk.needs_proj()) {
            params_[block_key(i, "proj/w")] =
                dense_init(blk.in_ch, {blk.out_ch, blk.in_ch, 1, 1}, rng);
            params_[block_key(i, "proj/b")] = Tensor::zeros({blk.out_ch});
        }
    }
    params_["emb/out/w"] = dense_init(rs.last_ch, {rs.last_ch, d}, rng);
    params_["emb/out/b"] = Tensor::zeros({d});

    params_["lab/table"] = Tensor::randn({cfg_.label_count, d}, rng, 1.0);

    if (cfg_.kind == BackboneKind::transformer) {
        const auto& tf = cfg_.transformer;
        // residual-branch projections start small so deep stacks stay stable
        const double res_gain = 1.0 / std::sqrt(2.0 * tf.layers);
        for (int l = 0; l < tf.layers; ++l) {
            const std::string p = "tf/l" + std::to_string(l) + "/";
            params_[p + "ln1/g"] = Tensor::full({tf.dim}, 1.0);
            params_[p + "ln1/b"] = Tensor::zeros({tf.dim});
            params_[p + "attn/wq"] = dense_init(tf.dim, {tf.dim, tf.dim}, rng);
            params_[p + "attn/bq"] = Tensor::zeros({tf.dim});
            params_[p + "attn/wk"] = dense_init(tf.dim, {tf.dim, tf.dim}, rng);
            params_[p + "attn/bk"] = Tensor::zeros({tf.dim});
            params_[p + "attn/wv"] = dense_init(tf.dim, {tf.dim, tf.dim}, rng);
            params_[p + "attn/bv"] = Tensor::zeros({tf.dim});
            params_[p + "attn/wo"] = dense_init(tf.dim, {tf.dim, tf.dim}, rng, res_gain);
            params_[p + "attn/bo"] = Tensor::zeros({tf.dim});
            params_[p + "ln2/g"] = Tensor::full({tf.dim}, 1.0);
            params_[p + "ln2/b"] = Tensor::zeros({tf.dim});
            params_[p + "mlp/w1"] = dense_init(tf.dim, {tf.dim, tf.hidden()}, rng);
            params_[p + "mlp/b1"] = Tensor::zeros({tf.hidden()});
            params_[p + "mlp/w2"] = dense_init(tf.hidden(), {tf.hidden(), tf.dim}, rng, res_gain);
            params_[p + "mlp/b2"] = Tensor::zeros({tf.dim});
        }
        params_["tf/final_ln/g"] = Tensor::full({tf.dim}, 1.0);
        params_["tf/final_ln/b"] = Tensor::zeros({tf.dim});
    } else {
        const auto& rc = cfg_.recurrent;
        const char* tag = cfg_.kind == BackboneKind::lstm ? "lstm" : "rnn";
        const int gate_mult = cfg_.kind == BackboneKind::lstm ? 4 : 1;
        for (int l = 0; l < rc.layers; ++l) {
            const std::string p = std::string(tag) + "/l" + std::to_string(l) + "/";
            const int in_dim = l == 0 ? d : rc.hidden_dim;
            params_[p + "wx"] = dense_init(in_dim, {in_dim, gate_mult * rc.hidden_dim}, rng);
            params_[p + "wh"] =
                dense_init(rc.hidden_dim, {rc.hidden_dim, gate_mult * rc.hidden_dim}, rng);
            Tensor b = Tensor::zeros({gate_mult * rc.hidden_dim});
            if (cfg_.kind == BackboneKind::lstm) {
                // forget gate bias up: gate order i, f, g, o
                for (int j = rc.hidden_dim; j < 2 * rc.hidden_dim; ++j) {
                    b.at(j) = 1.0;
                }
            }
            params_[p + "b"] = std::move(b);
        }
    }

    params_["head/w"] = dense_init(cfg_.backbone_out_dim(),
                                   {cfg_.backbone_out_dim(), cfg_.label_count}, rng);
    params_["head/b"] = Tensor::zeros({cfg_.label_count});

    positions_ = sinusoidal_positions(cfg_.tokens(), d);
    causal_mask_ = causal_mask(cfg_.tokens());
}

Model::Model(ModelConfig cfg, ParamMap params) : cfg_(std::move(cfg)), params_(std::move(params)) {
    cfg_.validate();
    Model fresh(cfg_, 0);
    if (fresh.params_.size() != params_.size()) {
        throw ConfigError("model: checkpoint parameter set does not match config");
    }
    for (const auto& [name, t] : fresh.params_) {
        auto it = params_.find(name);
        if (it == params_.end() || !it->second.same_shape(t)) {
            throw ConfigError("model: checkpoint parameter '" + name + "' missing or mis-shaped");
        }
    }
    positions_ = sinusoidal_positions(cfg_.tokens(), cfg_.token_dim());
    causal_mask_ = causal_mask(cfg_.tokens());
}

Var Model::resnet(Tape& /*tape*/, Var images, const std::map<std::string, Var>& pv) const {
    const ResnetShape rs = resnet_shape(cfg_.embedder);
    Var x = op::conv2d(images, pv.at("emb/stem/w"), pv.at("emb/stem/b"), 1, 1);
    for (size_t i = 0; i < rs.blocks.size(); ++i) {
        const auto& blk = rs.blocks[i];
        Var h = op::gelu(x);
        Var y = op::conv2d(h, pv.at(block_key(i, "conv1/w")), pv.at(block_key(i, "conv1/b")),
                           blk.stride, 1);
        y = op::gelu(y);
        y = op::conv2d(y, pv.at(block_key(i, "conv2/w")), pv.at(block_key(i, "conv2/b")), 1, 1);
        Var skip = blk.needs_proj()
                       ? op::conv2d(h, pv.at(block_key(i, "proj/w")),
                                    pv.at(block_key(i, "proj/b")), blk.stride, 0)
                       : x;
        x = op::add(y, skip);
    }
    x = op::gelu(x);
    x = op::mean_pool_hw(x);
    return op::add(op::matmul(x, pv.at("emb/out/w")), pv.at("emb/out/b"));
}

Var Model::embed_episodes(Tape& tape, std::span<const Episode> eps,
                          const std::map<std::string, Var>& pv) const {
    if (eps.empty()) {
        throw UsageError("embed_episodes: empty batch");
    }
    const int b = static_cast<int>(eps.size());
    const int pairs = cfg_.context_pairs;
    const int tokens = cfg_.tokens();
    const int d = cfg_.token_dim();
    const int h = cfg_.embedder.image_h, w = cfg_.embedder.image_w;

    Tensor image_batch({static_cast<int64_t>(b) * (pairs + 1), 1, h, w});
    std::vector<int64_t> label_ids;
    label_ids.reserve(static_cast<size_t>(b) * pairs);
    for (int e = 0; e < b; ++e) {
        const Episode& ep = eps[static_cast<size_t>(e)];
        if (static_cast<int>(ep.images.size()) != pairs + 1 ||
            static_cast<int>(ep.labels.size()) != pairs) {
            throw ConfigError("embed_episodes: episode layout does not match context_pairs");
        }
        for (int i = 0; i < pairs + 1; ++i) {
            const Image& im = ep.images[static_cast<size_t>(i)];
            if (im.h != h || im.w != w) {
                throw ConfigError("embed_episodes: image size mismatch");
            }
            double* dst = image_batch.data.data() +
                          (static_cast<int64_t>(e) * (pairs + 1) + i) * h * w;
            for (size_t p = 0; p < im.pix.size(); ++p) {
                dst[p] = static_cast<double>(im.pix[p]);
            }
        }
        for (int l : ep.labels) {
            if (l < 0 || l >= cfg_.label_count) {
                throw ConfigError("embed_episodes: label id " + std::to_string(l) +
                                  " out of range for L=" + std::to_string(cfg_.label_count));
            }
            label_ids.push_back(l);
        }
    }

    Var img_emb = resnet(tape, tape.constant(std::move(image_batch)), pv);  // (B*9, D)
    Var lab_emb = op::gather_rows(pv.at("lab/table"), label_ids);           // (B*8, D)

    // Interleave into (B * tokens, D): images at even token indices, labels odd.
    // Build a gather over a concatenated [img_emb; lab_emb] matrix.
    Var stacked = op::concat({img_emb, lab_emb}, 0);
    const int64_t img_base = 0;
    const int64_t lab_base = static_cast<int64_t>(b) * (pairs + 1);
    std::vector<int64_t> order;
    order.reserve(static_cast<size_t>(b) * tokens);
    for (int e = 0; e < b; ++e) {
        for (int p = 0; p < pairs; ++p) {
            order.push_back(img_base + static_cast<int64_t>(e) * (pairs + 1) + p);
            order.push_back(lab_base + static_cast<int64_t>(e) * pairs + p);
        }
        order.push_back(img_base + static_cast<int64_t>(e) * (pairs + 1) + pairs);
    }
    Var interleaved = op::gather_rows(stacked, order);

    Tensor pos_tiled({static_cast<int64_t>(b) * tokens, d});
    for (int e = 0; e < b; ++e) {
        std::copy(positions_.data.begin(), positions_.data.end(),
                  pos_tiled.data.begin() + static_cast<int64_t>(e) * tokens * d);
    }
    return op::add(interleaved, tape.constant(std::move(pos_tiled)));
}

Var Model::backbone(Tape& tape, Var tokens, const std::map<std::string, Var>& pv, int batch,
                    bool query_only, const Tensor* mask_override) const {
    const int t_len = cfg_.tokens();
    if (cfg_.kind == BackboneKind::transformer) {
        const auto& tf = cfg_.transformer;
        const int dh = tf.dim / tf.heads;
        Var x = tokens;
        for (int l = 0; l < tf.layers; ++l) {
            const std::string p = "tf/l" + std::to_string(l) + "/";
            Var h = op::layer_norm(x, pv.at(p + "ln1/g"), pv.at(p + "ln1/b"));
            Var q = op::add(op::matmul(h, pv.at(p + "attn/wq")), pv.at(p + "attn/bq"));
            Var k = op::add(op::matmul(h, pv.at(p + "attn/wk")), pv.at(p + "attn/bk"));
            Var v = op::add(op::matmul(h, pv.at(p + "attn/wv")), pv.at(p + "attn/bv"));
            auto split = [&](Var m) {
                Var r = op::reshape(m, {batch, t_len, tf.heads, dh});
                r = op::permute(r, {0, 2, 1, 3});
                return op::reshape(r, {static_cast<int64_t>(batch) * tf.heads, t_len, dh});
            };
            Var qh = split(q), kh = split(k), vh = split(v);
            Var scores = op::scale(op::bmm_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
            Var probs = op::softmax(scores, mask_override ? *mask_override : causal_mask_);
            Var ctx = op::bmm(probs, vh);
            ctx = op::reshape(ctx, {batch, tf.heads, t_len, dh});
            ctx = op::permute(ctx, {0, 2, 1, 3});
            ctx = op::reshape(ctx, {static_cast<int64_t>(batch) * t_len, tf.dim});
            Var attn = op::add(op::matmul(ctx, pv.at(p + "attn/wo")), pv.at(p + "attn/bo"));
            x = op::add(x, attn);
            Var h2 = op::layer_norm(x, pv.at(p + "ln2/g"), pv.at(p + "ln2/b"));
            Var m1 = op::gelu(op::add(op::matmul(h2, pv.at(p + "mlp/w1")), pv.at(p + "mlp/b1")));
            Var m2 = op::add(op::matmul(m1, pv.at(p + "mlp/w2")), pv.at(p + "mlp/b2"));
            x = op::add(x, m2);
        }
        x = op::layer_norm(x, pv.at("tf/final_ln/g"), pv.at("tf/final_ln/b"));
        if (query_only) {
            std::vector<int64_t> idx;
            idx.reserve(static_cast<size_t>(batch));
            for (int e = 0; e < batch; ++e) {
                idx.push_back(static_cast<int64_t>(e) * t_len + t_len - 1);
            }
            x = op::gather_rows(x, idx);
        }
        return x;
    }

    // Recurrent backbones, processed left to right.
    const auto& rc = cfg_.recurrent;
    const char* tag = cfg_.kind == BackboneKind::lstm ? "lstm" : "rnn";
    const int hd = rc.hidden_dim;
    Var input = tokens;
    for (int l = 0; l < rc.layers; ++l) {
        const std::string p = std::string(tag) + "/l" + std::to_string(l) + "/";
        Var h = tape.constant(Tensor::zeros({batch, hd}));
        Var c = tape.constant(Tensor::zeros({batch, hd}));
        std::vector<Var> states;
        states.reserve(static_cast<size_t>(t_len));
        for (int t = 0; t < t_len; ++t) {
            std::vector<int64_t> idx;
            idx.reserve(static_cast<size_t>(batch));
            for (int e = 0; e < batch; ++e) {
                idx.push_back(static_cast<int64_t>(e) * t_len + t);
            }
            Var xt = op::gather_rows(input, idx);  // (B, in_dim)
            Var pre = op::add(op::add(op::matmul(xt, pv.at(p + "wx")),
                                      op::matmul(h, pv.at(p + "wh"))),
                              pv.at(p + "b"));
            if (cfg_.kind == BackboneKind::lstm) {
                Var ig = op::sigmoid(op::slice(pre, 1, 0, hd));
                Var fg = op::sigmoid(op::slice(pre, 1, hd, 2 * hd));
                Var gg = op::tanh(op::slice(pre, 1, 2 * hd, 3 * hd));
                Var og = op::sigmoid(op::slice(pre, 1, 3 * hd, 4 * hd));
                c = op::add(op::mul(fg, c), op::mul(ig, gg));
                h = op::mul(og, op::tanh(c));
            } else {
                h = op::tanh(pre);
            }
            states.push_back(h);
        }
        const bool last_layer = (l == rc.layers - 1);
        if (last_layer && query_only) {
            return states.back();  // (B, H) at the final token
        }
        // Stack (t-major) then reorder to batch-major rows.
        Var stacked = op::concat(states, 0);  // (T*B, H), row = t*B + e
        std::vector<int64_t> perm;
        perm.reserve(static_cast<size_t>(batch) * t_len);
        for (int e = 0; e < batch; ++e) {
            for (int t = 0; t < t_len; ++t) {
                perm.push_back(static_cast<int64_t>(t) * batch + e);
            }
        }
        input = op::gather_rows(stacked, perm);  // (B*T, H)
    }
    return input;
}

Var Model::forward(Tape& tape, Var tokens, const std::map<std::string, Var>& pv, int batch,
                   const Tensor* mask_override) const {
    Var feats = backbone(tape, tokens, pv, batch, /*query_only=*/false, mask_override);
    return op::add(op::matmul(feats, pv.at("head/w")), pv.at("head/b"));
}

Var Model::query_logits(Tape& tape, std::span<const Episode> eps,
                        const std::map<std::string, Var>& pv) const {
    Var tokens = embed_episodes(tape, eps, pv);
    Var feats = backbone(tape, tokens, pv, static_cast<int>(eps.size()), /*query_only=*/true);
    return op::add(op::matmul(feats, pv.at("head/w")), pv.at("head/b"));
}

Tensor Model::query_logits_eval(std::span<const Episode> eps) const {
    Tape tape;
    std::map<std::string, Var> pv;
    for (const auto& [name, t] : params_) {
        pv.emplace(name, tape.constant(t));
    }
    return query_logits(tape, eps, pv).val();
}

ParamCountBreakdown Model::count_params() const {
    ParamCountBreakdown out;
    for (const auto& [name, t] : params_) {
        const int64_t n = t.numel();
        out.total += n;
        if (name.rfind("emb/", 0) == 0) {
            out.image_embedder += n;
        } else if (name.rfind("lab/", 0) == 0) {
            out.label_embedder += n;
        } else if (name.rfind("head/", 0) == 0) {
            out.head += n;
        } else {
            out.backbone += n;
        }
    }
    return out;
}

Var loss(Var query_logits, const std::vector<int64_t>& targets) {
    return op::cross_entropy_with_logits(query_logits, targets);
}

int match_hidden_dim(BackboneKind kind, int layers, const ModelConfig& reference,
                     int64_t target_total) {
    if (kind == BackboneKind::transformer) {
        throw ConfigError("match_hidden_dim: only recurrent backbones are tuned");
    }
    auto total_for = [&](int hd) {
        ModelConfig cfg = reference;
        cfg.kind = kind;
        cfg.recurrent.layers = layers;
        cfg.recurrent.hidden_dim = hd;
        return Model(cfg, 0).count_params().total;
    };
    int best = 1;
    int64_t best_gap = std::numeric_limits<int64_t>::max();
    int lo = 1, hi = 4096;
    while (lo <= hi) {
        const int mid = (lo + hi) / 2;
        const int64_t tot = total_for(mid);
        const int64_t gap = std::llabs(tot - target_total);
        if (gap < best_gap) {
            best_gap = gap;
            best = mid;
        }
        if (tot < target_total) {
            lo = mid + 1;
        } else {
            hi = mid - 1;
        }
    }
    // param count is monotone in hidden dim; check the neighbors of the
    // bisection endpoint too
    for (int hd : {lo - 1, lo, lo + 1}) {
        if (hd < 1) continue;
        const int64_t gap = std::llabs(total_for(hd) - target_total);
        if (gap < best_gap) {
            best_gap = gap;
            best = hd;
        }
    }
    return best;
}

}  // namespace iclab
