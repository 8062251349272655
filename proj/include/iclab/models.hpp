#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "iclab/ops.hpp"
#include "iclab/seqgen.hpp"
#include "iclab/tape.hpp"

namespace iclab {

// Small pre-activation ResNet over 1-channel images: stem conv, one stride-2
// entry per group, global mean pool, dense to the token dimension.
struct EmbedderConfig {
    int blocks_per_group = 2;
    std::vector<int> channels = {16, 32, 32, 64};
    int out_dim = 64;
    int image_h = 28;
    int image_w = 28;
};

struct TransformerConfig {
    int layers = 12;
    int dim = 64;
    int heads = 8;
    int mlp_hidden = 0;  // 0 means 4 * dim

    int hidden() const { return mlp_hidden > 0 ? mlp_hidden : 4 * dim; }
};

enum class BackboneKind : uint8_t { transformer = 0, vanilla_rnn = 1, lstm = 2 };

const char* backbone_name(BackboneKind k);
BackboneKind parse_backbone(const std::string& name);

struct RecurrentConfig {
    int layers = 12;
    int hidden_dim = 64;
};

struct ModelConfig {
    BackboneKind kind = BackboneKind::transformer;
    EmbedderConfig embedder;
    TransformerConfig transformer;
    RecurrentConfig recurrent;
    int label_count = 0;    // L, size of the output projection
    int context_pairs = 8;  // sequence length = 2 * pairs + 1

    int tokens() const { return 2 * context_pairs + 1; }
    int token_dim() const { return embedder.out_dim; }
    int backbone_out_dim() const {
        return kind == BackboneKind::transformer ? transformer.dim : recurrent.hidden_dim;
    }
    void validate() const;
};

struct ParamCountBreakdown {
    int64_t image_embedder = 0;
    int64_t label_embedder = 0;
    int64_t backbone = 0;
    int64_t head = 0;
    int64_t total = 0;
};

// Standard sinusoidal positions, (tokens, dim).
Tensor sinusoidal_positions(int tokens, int dim);

class Model {
public:
    Model(ModelConfig cfg, uint64_t seed);
    Model(ModelConfig cfg, ParamMap params);  // from a checkpoint

    const ModelConfig& config() const { return cfg_; }
    ParamMap& params() { return params_; }
    const ParamMap& params() const { return params_; }

    // Token matrix for a batch of episodes: (B * tokens, D), odd positions
    // (1-indexed) are image embeddings, even positions label embeddings,
    // sinusoidal positions added everywhere.
    Var embed_episodes(Tape& tape, std::span<const Episode> eps,
                       const std::map<std::string, Var>& pv) const;

    // Logits over L at every position: (B * tokens, L). `mask_override`
    // replaces the causal mask (transformer only); used to verify attention
    // is order-blind apart from positions and mask.
    Var forward(Tape& tape, Var tokens, const std::map<std::string, Var>& pv, int batch,
                const Tensor* mask_override = nullptr) const;

    // Query-position logits only: (B, L). The training and evaluation path.
    Var query_logits(Tape& tape, std::span<const Episode> eps,
                     const std::map<std::string, Var>& pv) const;

    // No-grad convenience for evaluation loops.
    Tensor query_logits_eval(std::span<const Episode> eps) const;

    ParamCountBreakdown count_params() const;

private:
    Var backbone(Tape& tape, Var tokens, const std::map<std::string, Var>& pv, int batch,
                 bool query_only, const Tensor* mask_override = nullptr) const;
    Var resnet(Tape&, Var images, const std::map<std::string, Var>& pv) const;

    ModelConfig cfg_;
    ParamMap params_;
    Tensor positions_;   // (tokens, dim)
    Tensor causal_mask_; // (tokens, tokens), lower triangular ones
};

// Mean cross entropy of query logits (B, L) against targets.
Var loss(Var query_logits, const std::vector<int64_t>& targets);

// Smallest hidden dim whose full-model parameter count is closest to
// `target_total` for the given recurrent architecture.
int match_hidden_dim(BackboneKind kind, int layers, const ModelConfig& reference,
                     int64_t target_total);

}  // namespace iclab
