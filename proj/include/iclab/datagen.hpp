#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "iclab/image.hpp"
#include "iclab/rng.hpp"

namespace iclab {

enum class ClassSource : uint8_t { omniglot = 0, synthetic = 1 };

struct ClassDef {
    int class_id = 0;
    std::vector<Image> exemplars;
    ClassSource source = ClassSource::synthetic;
    Rotation rotation = Rotation::r0;
    bool flipped = false;
    // Orbit identity: the pre-augmentation class this one came from. Equal to
    // class_id for untransformed classes.
    int base_id = 0;
};

// Immutable after construction; class_id == index into `classes`.
struct ClassRegistry {
    std::vector<ClassDef> classes;
    std::set<int> holdout_ids;
    int image_h = 0;
    int image_w = 0;
    bool augmented = false;

    int size() const { return static_cast<int>(classes.size()); }
    const ClassDef& by_id(int id) const { return classes[static_cast<size_t>(id)]; }
    bool is_holdout(int id) const { return holdout_ids.count(id) > 0; }
    std::vector<int> training_ids() const;
    std::vector<int> holdout_list() const;
    void check_invariants() const;  // id density, exemplar sizes, orbit-disjoint holdout
};

struct ExemplarPolicy {
    enum class Mode : uint8_t { single_exemplar = 0, single_plus_noise = 1, full_set = 2 };
    Mode mode = Mode::single_exemplar;
    double noise_sigma = 0.0;  // pixel units

    void validate() const;
    static ExemplarPolicy parse(const std::string& name, double sigma);
    std::string name() const;
};

struct OmniglotOptions {
    int image_h = 28;
    int image_w = 28;
    double holdout_fraction = 0.1;
    uint64_t split_seed = 0;
};

// Directory layout: root/alphabet/character/*.png. One class per character
// directory, loaded in lexicographic path order.
ClassRegistry load_omniglot(const std::string& root, const OmniglotOptions& opts = {});

struct SynthOptions {
    int exemplars_per_class = 20;
    double holdout_fraction = 0.1;
};

// Procedural classes: a fixed thresholded low-frequency random field per
// class, plus elastically jittered exemplars. Deterministic in (n, seed, h, w).
ClassRegistry synth_classes(int n, uint64_t seed, int h, int w, const SynthOptions& opts = {});

// 4 rotations x 2 flips per input class, fresh dense ids, holdout recomputed
// at the orbit level so no transform of a training class lands in holdout.
ClassRegistry augment_x8(const ClassRegistry& reg);

Image sample_exemplar(const ClassDef& cls, const ExemplarPolicy& policy, Rng& rng);

// Single-file binary archive (version-tagged) for synthetic registries.
void save_registry(const ClassRegistry& reg, const std::string& path);
ClassRegistry load_registry(const std::string& path);

}  // namespace iclab
