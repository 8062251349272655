#include "iclab/seqgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "iclab/errors.hpp"

namespace iclab {

std::vector<double> zipf_weights(int n, double alpha) {
    if (n < 1) {
        throw ConfigError("zipf_weights: n must be >= 1");
    }
    if (alpha < 0.0) {
        throw ConfigError("zipf_weights: alpha must be >= 0");
    }
    std::vector<double> w(static_cast<size_t>(n));
    if (alpha == 0.0) {
        std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(n));
        return w;
    }
    double total = 0.0;
    for (int x = 1; x <= n; ++x) {
        w[static_cast<size_t>(x - 1)] = std::pow(static_cast<double>(x), -alpha);
        total += w[static_cast<size_t>(x - 1)];
    }
    for (double& v : w) v /= total;
    return w;
}

void DistributionConfig::validate() const {
    if (p_bursty < 0.0 || p_bursty > 1.0) {
        throw ConfigError("p_bursty must lie in [0, 1]");
    }
    if (zipf_alpha < 0.0) {
        throw ConfigError("zipf_alpha must be >= 0");
    }
    if (label_multiplicity < 1) {
        throw ConfigError("label_multiplicity must be >= 1");
    }
    if (context_pairs < 1 || bursty_shots < 1) {
        throw ConfigError("context_pairs and bursty_shots must be >= 1");
    }
    if (2 * bursty_shots > context_pairs) {
        throw ConfigError("2 * bursty_shots must not exceed context_pairs");
    }
    if (eval_shots * eval_ways != context_pairs) {
        throw ConfigError("eval_shots * eval_ways must equal context_pairs");
    }
    if (eval_ways != 2) {
        throw ConfigError("only 2-way evaluation is supported");
    }
    exemplar_policy.validate();
}

// ---------------------------------------------------------------- sampler

ZipfSampler::ZipfSampler(std::vector<int> class_ids, double alpha, uint64_t seed)
    : alpha_(alpha) {
    if (class_ids.empty()) {
        throw ConfigError("ZipfSampler: no classes");
    }
    by_rank_ = std::move(class_ids);
    // Rank assignment is a fixed seed-determined permutation of the classes.
    Rng rng = Rng::stream(seed, "zipf-ranks");
    rng.shuffle(by_rank_);
    int max_id = 0;
    for (int id : by_rank_) max_id = std::max(max_id, id);
    rank_lookup_.assign(static_cast<size_t>(max_id) + 1, 0);
    for (size_t i = 0; i < by_rank_.size(); ++i) {
        rank_lookup_[static_cast<size_t>(by_rank_[i])] = static_cast<int>(i) + 1;
    }
    weights_ = zipf_weights(static_cast<int>(by_rank_.size()), alpha);
    cdf_.resize(weights_.size());
    double acc = 0.0;
    for (size_t i = 0; i < weights_.size(); ++i) {
        acc += weights_[i];
        cdf_[i] = acc;
    }
    cdf_.back() = 1.0;
}

int ZipfSampler::rank_of(int class_id) const {
    if (class_id < 0 || class_id >= static_cast<int>(rank_lookup_.size())) {
        return 0;
    }
    return rank_lookup_[static_cast<size_t>(class_id)];
}

int ZipfSampler::sample(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    const size_t idx = std::min(static_cast<size_t>(it - cdf_.begin()), cdf_.size() - 1);
    return by_rank_[idx];
}

int ZipfSampler::sample_excluding(Rng& rng, const std::vector<int>& exclude) const {
    if (exclude.empty()) {
        return sample(rng);
    }
    if (exclude.size() >= by_rank_.size()) {
        // may still be fine if exclude has duplicates; the exact path decides
    }
    // Rejection is exact for the renormalized distribution and cheap while the
    // excluded mass is small; fall back to an explicit renormalized scan if it
    // drags on.
    for (int attempt = 0; attempt < 256; ++attempt) {
        const int c = sample(rng);
        if (std::find(exclude.begin(), exclude.end(), c) == exclude.end()) {
            return c;
        }
    }
    double kept = 0.0;
    for (size_t i = 0; i < by_rank_.size(); ++i) {
        if (std::find(exclude.begin(), exclude.end(), by_rank_[i]) == exclude.end()) {
            kept += weights_[i];
        }
    }
    if (kept <= 0.0) {
        throw ConfigError("sample_excluding: every class is excluded");
    }
    const double u = rng.uniform() * kept;
    double acc = 0.0;
    int last_ok = -1;
    for (size_t i = 0; i < by_rank_.size(); ++i) {
        if (std::find(exclude.begin(), exclude.end(), by_rank_[i]) != exclude.end()) {
            continue;
        }
        last_ok = by_rank_[i];
        acc += weights_[i];
        if (u < acc) {
            return by_rank_[i];
        }
    }
    return last_ok;
}

// ---------------------------------------------------------------- labels

LabelTable::LabelTable(const ZipfSampler& sampler, int multiplicity, int n_total_classes)
    : multiplicity_(multiplicity) {
    if (multiplicity < 1) {
        throw ConfigError("LabelTable: multiplicity must be >= 1");
    }
    by_class_.assign(static_cast<size_t>(n_total_classes), {});
    // Deal label ids in rank order: the most common class owns the lowest
    // labels. Under skew, eval labels {0, 1} are then the two most common
    // classes' labels, matching how the training distribution is probed.
    for (int r = 1; r <= sampler.size(); ++r) {
        const int cls = sampler.class_at_rank(r);
        std::vector<int>& lab = by_class_[static_cast<size_t>(cls)];
        lab.reserve(static_cast<size_t>(multiplicity));
        for (int j = 0; j < multiplicity; ++j) {
            lab.push_back((r - 1) * multiplicity + j);
        }
    }
    total_labels_ = sampler.size() * multiplicity;
}

const std::vector<int>& LabelTable::labels_of(int class_id) const {
    if (class_id < 0 || class_id >= static_cast<int>(by_class_.size())) {
        throw ConfigError("LabelTable: class id out of range");
    }
    const std::vector<int>& lab = by_class_[static_cast<size_t>(class_id)];
    if (lab.empty()) {
        throw ConfigError("LabelTable: class " + std::to_string(class_id) +
                          " has no labels (holdout class?)");
    }
    return lab;
}

// ---------------------------------------------------------------- episodes

const char* episode_kind_name(EpisodeKind k) {
    switch (k) {
        case EpisodeKind::bursty: return "bursty";
        case EpisodeKind::nonbursty: return "nonbursty";
        case EpisodeKind::fewshot_eval: return "fewshot_eval";
        case EpisodeKind::inweights_eval: return "inweights_eval";
    }
    return "?";
}

int Episode::query_support() const {
    const int query_class = class_ids.back();
    int count = 0;
    for (size_t i = 0; i + 1 < class_ids.size(); ++i) {
        if (class_ids[i] == query_class) ++count;
    }
    return count;
}

EpisodeGenerator::EpisodeGenerator(DistributionConfig cfg, const ClassRegistry& reg,
                                   uint64_t run_seed)
    : cfg_(std::move(cfg)),
      reg_(&reg),
      sampler_(reg.training_ids(), cfg_.zipf_alpha, run_seed),
      table_(sampler_, cfg_.label_multiplicity, reg.size()) {
    cfg_.validate();
}

Image EpisodeGenerator::draw_image(int class_id, Rng& rng) const {
    return sample_exemplar(reg_->by_id(class_id), cfg_.exemplar_policy, rng);
}

int EpisodeGenerator::pick_label(int class_id, Rng& rng) const {
    const std::vector<int>& lab = table_.labels_of(class_id);
    if (lab.size() == 1) {
        return lab[0];
    }
    return lab[static_cast<size_t>(rng.below(static_cast<int64_t>(lab.size())))];
}

Episode EpisodeGenerator::make_bursty(Rng& rng) const {
    const int pairs = cfg_.context_pairs;
    const int shots = cfg_.bursty_shots;
    const int distinct_needed = 2 + (pairs - 2 * shots);
    if (sampler_.size() < distinct_needed) {
        throw ConfigError("bursty episode needs " + std::to_string(distinct_needed) +
                          " distinct training classes, have " + std::to_string(sampler_.size()));
    }
    std::vector<int> used;
    const int query = sampler_.sample(rng);
    used.push_back(query);
    const int distractor = sampler_.sample_excluding(rng, used);
    used.push_back(distractor);
    std::vector<int> context;
    context.insert(context.end(), static_cast<size_t>(shots), query);
    context.insert(context.end(), static_cast<size_t>(shots), distractor);
    for (int f = 0; f < pairs - 2 * shots; ++f) {
        const int filler = sampler_.sample_excluding(rng, used);
        used.push_back(filler);
        context.push_back(filler);
    }
    rng.shuffle(context);

    // One label per class for the whole episode.
    std::unordered_map<int, int> episode_label;
    for (int cls : used) {
        episode_label.emplace(cls, pick_label(cls, rng));
    }

    Episode ep;
    ep.kind = EpisodeKind::bursty;
    ep.class_ids = context;
    ep.class_ids.push_back(query);
    for (int cls : context) {
        ep.images.push_back(draw_image(cls, rng));
        ep.labels.push_back(episode_label.at(cls));
    }
    ep.images.push_back(draw_image(query, rng));
    ep.target = episode_label.at(query);
    ep.query_rank = sampler_.rank_of(query);
    return ep;
}

Episode EpisodeGenerator::make_nonbursty(Rng& rng) const {
    Episode ep;
    ep.kind = EpisodeKind::nonbursty;
    std::unordered_map<int, int> episode_label;
    auto label_for = [&](int cls) {
        auto it = episode_label.find(cls);
        if (it == episode_label.end()) {
            it = episode_label.emplace(cls, pick_label(cls, rng)).first;
        }
        return it->second;
    };
    for (int i = 0; i < cfg_.context_pairs; ++i) {
        const int cls = sampler_.sample(rng);
        ep.class_ids.push_back(cls);
        ep.labels.push_back(label_for(cls));
        ep.images.push_back(draw_image(cls, rng));
    }
    const int query = sampler_.sample(rng);
    ep.class_ids.push_back(query);
    ep.images.push_back(draw_image(query, rng));
    ep.target = label_for(query);
    ep.query_rank = sampler_.rank_of(query);
    return ep;
}

Episode EpisodeGenerator::make_training_episode(Rng& rng) const {
    return rng.bernoulli(cfg_.p_bursty) ? make_bursty(rng) : make_nonbursty(rng);
}

Episode EpisodeGenerator::make_fewshot_eval(Rng& rng, FewshotPool pool) const {
    std::vector<int> candidates =
        pool == FewshotPool::holdout ? reg_->holdout_list() : reg_->training_ids();
    if (candidates.size() < 2) {
        throw ConfigError("few-shot eval pool has fewer than 2 classes");
    }
    const int64_t i = rng.below(static_cast<int64_t>(candidates.size()));
    int64_t j = rng.below(static_cast<int64_t>(candidates.size()) - 1);
    if (j >= i) ++j;
    const int class_a = candidates[static_cast<size_t>(i)];
    const int class_b = candidates[static_cast<size_t>(j)];

    // Fresh label assignment each episode: one class -> 0, the other -> 1.
    const bool a_is_zero = rng.bernoulli(0.5);
    const int label_a = a_is_zero ? 0 : 1;
    const int label_b = 1 - label_a;

    std::vector<int> context;
    context.insert(context.end(), static_cast<size_t>(cfg_.eval_shots), class_a);
    context.insert(context.end(), static_cast<size_t>(cfg_.eval_shots), class_b);
    rng.shuffle(context);

    Episode ep;
    ep.kind = EpisodeKind::fewshot_eval;
    ep.class_ids = context;
    for (int cls : context) {
        ep.images.push_back(draw_image(cls, rng));
        ep.labels.push_back(cls == class_a ? label_a : label_b);
    }
    const bool query_a = rng.bernoulli(0.5);
    const int query = query_a ? class_a : class_b;
    ep.class_ids.push_back(query);
    ep.images.push_back(draw_image(query, rng));
    ep.target = query_a ? label_a : label_b;
    ep.query_rank = sampler_.rank_of(query);
    return ep;
}

Episode EpisodeGenerator::make_inweights_eval(Rng& rng, QueryPool pool) const {
    std::vector<int> training = reg_->training_ids();
    if (static_cast<int>(training.size()) < cfg_.context_pairs + 1) {
        throw ConfigError("in-weights eval needs context_pairs + 1 training classes");
    }
    int query = 0;
    switch (pool) {
        case QueryPool::all:
            query = training[static_cast<size_t>(rng.below(static_cast<int64_t>(training.size())))];
            break;
        case QueryPool::common10: {
            const int top = std::min(10, sampler_.size());
            query = sampler_.class_at_rank(static_cast<int>(rng.below(top)) + 1);
            break;
        }
        case QueryPool::rare: {
            if (sampler_.size() <= 10) {
                throw ConfigError("rare pool is empty: 10 or fewer training classes");
            }
            const int r = static_cast<int>(rng.below(sampler_.size() - 10)) + 11;
            query = sampler_.class_at_rank(r);
            break;
        }
    }
    // Context: distinct classes, uniform without replacement, query excluded.
    std::vector<int> chosen{query};
    Episode ep;
    ep.kind = EpisodeKind::inweights_eval;
    for (int k = 0; k < cfg_.context_pairs; ++k) {
        int cls = 0;
        do {
            cls = training[static_cast<size_t>(rng.below(static_cast<int64_t>(training.size())))];
        } while (std::find(chosen.begin(), chosen.end(), cls) != chosen.end());
        chosen.push_back(cls);
        ep.class_ids.push_back(cls);
        ep.labels.push_back(pick_label(cls, rng));
        ep.images.push_back(draw_image(cls, rng));
    }
    ep.class_ids.push_back(query);
    ep.images.push_back(draw_image(query, rng));
    ep.target = pick_label(query, rng);
    ep.query_rank = sampler_.rank_of(query);
    return ep;
}

// ---------------------------------------------------------------- wire

namespace {

constexpr char kEpMagic[4] = {'I', 'C', 'E', 'P'};

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) {
        throw LoadError("truncated episode record");
    }
    return v;
}

}  // namespace

void write_episode(std::ostream& os, const Episode& ep) {
    os.write(kEpMagic, sizeof(kEpMagic));
    put<uint16_t>(os, 1);  // version
    put<uint8_t>(os, static_cast<uint8_t>(ep.kind));
    const int h = ep.images.empty() ? 0 : ep.images[0].h;
    const int w = ep.images.empty() ? 0 : ep.images[0].w;
    put<int32_t>(os, static_cast<int32_t>(ep.images.size()));
    put<int32_t>(os, h);
    put<int32_t>(os, w);
    for (const Image& im : ep.images) {
        os.write(reinterpret_cast<const char*>(im.pix.data()),
                 static_cast<std::streamsize>(im.pix.size() * sizeof(float)));
    }
    put<int32_t>(os, static_cast<int32_t>(ep.labels.size()));
    for (int l : ep.labels) put<int32_t>(os, l);
    put<int32_t>(os, ep.target);
    for (int c : ep.class_ids) put<int32_t>(os, c);
    put<int32_t>(os, ep.query_rank);
}

Episode read_episode(std::istream& is) {
    char magic[4];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kEpMagic, sizeof(magic)) != 0) {
        throw LoadError("bad episode record magic");
    }
    const uint16_t version = get<uint16_t>(is);
    if (version != 1) {
        throw LoadError("unsupported episode record version " + std::to_string(version));
    }
    Episode ep;
    ep.kind = static_cast<EpisodeKind>(get<uint8_t>(is));
    const int32_t n_images = get<int32_t>(is);
    const int32_t h = get<int32_t>(is);
    const int32_t w = get<int32_t>(is);
    for (int32_t i = 0; i < n_images; ++i) {
        Image im(h, w);
        is.read(reinterpret_cast<char*>(im.pix.data()),
                static_cast<std::streamsize>(im.pix.size() * sizeof(float)));
        if (!is) {
            throw LoadError("truncated episode record");
        }
        ep.images.push_back(std::move(im));
    }
    const int32_t n_labels = get<int32_t>(is);
    for (int32_t i = 0; i < n_labels; ++i) ep.labels.push_back(get<int32_t>(is));
    ep.target = get<int32_t>(is);
    for (int32_t i = 0; i < n_images; ++i) ep.class_ids.push_back(get<int32_t>(is));
    ep.query_rank = get<int32_t>(is);
    return ep;
}

std::string episode_debug_dump(const Episode& ep) {
    std::ostringstream os;
    os << episode_kind_name(ep.kind) << " episode, " << ep.labels.size() << " context pairs\n";
    int token = 1;
    for (size_t i = 0; i < ep.labels.size(); ++i) {
        os << "  token " << token++ << ": img[class " << ep.class_ids[i] << "]\n";
        os << "  token " << token++ << ": label " << ep.labels[i] << "\n";
    }
    os << "  token " << token << ": img[class " << ep.class_ids.back() << "]  (query)\n";
    os << "  target: " << ep.target << "\n";
    return os.str();
}

}  // namespace iclab
