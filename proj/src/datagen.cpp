#include "iclab/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <unordered_set>

#include "iclab/errors.hpp"
#include "iclab/png_io.hpp"

namespace fs = std::filesystem;

namespace iclab {

// ---------------------------------------------------------------- images

Image resize_bilinear(const Image& src, int h, int w) {
    if (src.h == h && src.w == w) {
        return src;
    }
    Image dst(h, w);
    const float sy = static_cast<float>(src.h) / static_cast<float>(h);
    const float sx = static_cast<float>(src.w) / static_cast<float>(w);
    for (int y = 0; y < h; ++y) {
        const float fy = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
        const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, src.h - 1);
        const int y1 = std::min(y0 + 1, src.h - 1);
        const float wy = std::clamp(fy - static_cast<float>(y0), 0.0f, 1.0f);
        for (int x = 0; x < w; ++x) {
            const float fx = (static_cast<float>(x) + 0.5f) * sx - 0.5f;
            const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, src.w - 1);
            const int x1 = std::min(x0 + 1, src.w - 1);
            const float wx = std::clamp(fx - static_cast<float>(x0), 0.0f, 1.0f);
            const float top = src.at(y0, x0) * (1.0f - wx) + src.at(y0, x1) * wx;
            const float bot = src.at(y1, x0) * (1.0f - wx) + src.at(y1, x1) * wx;
            dst.at(y, x) = top * (1.0f - wy) + bot * wy;
        }
    }
    return dst;
}

Image transform_image(const Image& src, Rotation rot, bool flip) {
    if (rot != Rotation::r0 && src.h != src.w) {
        throw ConfigError("transform_image: rotations need square images");
    }
    Image flipped = src;
    if (flip) {
        for (int y = 0; y < src.h; ++y) {
            for (int x = 0; x < src.w; ++x) {
                flipped.at(y, x) = src.at(y, src.w - 1 - x);
            }
        }
    }
    if (rot == Rotation::r0) {
        return flipped;
    }
    const int n = src.h;
    Image out(n, n);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            switch (rot) {
                case Rotation::r90:  out.at(x, n - 1 - y) = flipped.at(y, x); break;
                case Rotation::r180: out.at(n - 1 - y, n - 1 - x) = flipped.at(y, x); break;
                case Rotation::r270: out.at(n - 1 - x, y) = flipped.at(y, x); break;
                case Rotation::r0:   break;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------- registry

std::vector<int> ClassRegistry::training_ids() const {
    std::vector<int> out;
    out.reserve(classes.size() - holdout_ids.size());
    for (const ClassDef& c : classes) {
        if (!is_holdout(c.class_id)) {
            out.push_back(c.class_id);
        }
    }
    return out;
}

std::vector<int> ClassRegistry::holdout_list() const {
    return std::vector<int>(holdout_ids.begin(), holdout_ids.end());
}

void ClassRegistry::check_invariants() const {
    for (size_t i = 0; i < classes.size(); ++i) {
        const ClassDef& c = classes[i];
        if (c.class_id != static_cast<int>(i)) {
            throw ConfigError("registry: class_id must equal its index");
        }
        if (c.exemplars.empty()) {
            throw ConfigError("registry: class " + std::to_string(c.class_id) + " has no exemplars");
        }
        for (const Image& im : c.exemplars) {
            if (im.h != image_h || im.w != image_w) {
                throw ConfigError("registry: exemplar size mismatch in class " +
                                  std::to_string(c.class_id));
            }
        }
    }
    for (int h : holdout_ids) {
        if (h < 0 || h >= size()) {
            throw ConfigError("registry: holdout id out of range");
        }
    }
    // Orbit disjointness: a holdout class must not share its base with any
    // training class.
    std::unordered_set<int> holdout_bases, training_bases;
    for (const ClassDef& c : classes) {
        (is_holdout(c.class_id) ? holdout_bases : training_bases).insert(c.base_id);
    }
    for (int b : holdout_bases) {
        if (training_bases.count(b)) {
            throw ConfigError("registry: holdout class shares a transform orbit with training");
        }
    }
}

namespace {

std::set<int> split_holdout(int n_classes, double fraction, uint64_t seed) {
    const int n_holdout = static_cast<int>(std::llround(fraction * n_classes));
    std::vector<int> ids(static_cast<size_t>(n_classes));
    for (int i = 0; i < n_classes; ++i) ids[static_cast<size_t>(i)] = i;
    Rng rng = Rng::stream(seed, "holdout-split");
    rng.shuffle(ids);
    return std::set<int>(ids.begin(), ids.begin() + n_holdout);
}

}  // namespace

// ---------------------------------------------------------------- policies

void ExemplarPolicy::validate() const {
    if (noise_sigma < 0.0) {
        throw ConfigError("exemplar policy: noise_sigma must be >= 0");
    }
    if (mode == Mode::single_exemplar && noise_sigma != 0.0) {
        throw ConfigError("exemplar policy: single_exemplar requires noise_sigma == 0");
    }
}

ExemplarPolicy ExemplarPolicy::parse(const std::string& name, double sigma) {
    ExemplarPolicy p;
    p.noise_sigma = sigma;
    if (name == "single") {
        p.mode = Mode::single_exemplar;
    } else if (name == "noise") {
        p.mode = Mode::single_plus_noise;
    } else if (name == "full") {
        p.mode = Mode::full_set;
    } else {
        throw ConfigError("unknown exemplar policy '" + name + "' (single|noise|full)");
    }
    p.validate();
    return p;
}

std::string ExemplarPolicy::name() const {
    switch (mode) {
        case Mode::single_exemplar: return "single";
        case Mode::single_plus_noise: return "noise";
        case Mode::full_set: return "full";
    }
    return "?";
}

Image sample_exemplar(const ClassDef& cls, const ExemplarPolicy& policy, Rng& rng) {
    policy.validate();
    switch (policy.mode) {
        case ExemplarPolicy::Mode::single_exemplar:
            return cls.exemplars[0];
        case ExemplarPolicy::Mode::single_plus_noise: {
            Image out = cls.exemplars[0];
            for (float& p : out.pix) {
                p = std::clamp(p + static_cast<float>(rng.normal(0.0, policy.noise_sigma)),
                               0.0f, 1.0f);
            }
            return out;
        }
        case ExemplarPolicy::Mode::full_set: {
            if (cls.exemplars.size() < 2) {
                throw ConfigError("full_set policy needs >= 2 exemplars per class");
            }
            const int64_t k = rng.below(static_cast<int64_t>(cls.exemplars.size()));
            return cls.exemplars[static_cast<size_t>(k)];
        }
    }
    throw ConfigError("unreachable exemplar policy mode");
}

// ---------------------------------------------------------------- omniglot

ClassRegistry load_omniglot(const std::string& root, const OmniglotOptions& opts) {
    if (!fs::is_directory(root)) {
        throw LoadError("omniglot root is not a directory: " + root);
    }
    std::vector<fs::path> char_dirs;
    std::vector<fs::path> alphabets;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory()) alphabets.push_back(e.path());
    }
    std::sort(alphabets.begin(), alphabets.end());
    for (const auto& a : alphabets) {
        std::vector<fs::path> chars;
        for (const auto& e : fs::directory_iterator(a)) {
            if (e.is_directory()) chars.push_back(e.path());
        }
        std::sort(chars.begin(), chars.end());
        char_dirs.insert(char_dirs.end(), chars.begin(), chars.end());
    }
    if (char_dirs.empty()) {
        throw LoadError("no character classes under omniglot root: " + root);
    }
    ClassRegistry reg;
    reg.image_h = opts.image_h;
    reg.image_w = opts.image_w;
    int next_id = 0;
    for (const auto& dir : char_dirs) {
        std::vector<fs::path> pngs;
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.is_regular_file() && e.path().extension() == ".png") {
                pngs.push_back(e.path());
            }
        }
        std::sort(pngs.begin(), pngs.end());
        if (pngs.empty()) {
            throw LoadError("character directory has no .png files: " + dir.string());
        }
        if (pngs.size() != 20) {
            std::cerr << "warning: class " << dir.string() << " has " << pngs.size()
                      << " exemplars (expected 20), keeping it\n";
        }
        ClassDef cls;
        cls.class_id = next_id;
        cls.base_id = next_id;
        cls.source = ClassSource::omniglot;
        for (const auto& p : pngs) {
            cls.exemplars.push_back(resize_bilinear(read_png_gray(p.string()), opts.image_h,
                                                    opts.image_w));
        }
        reg.classes.push_back(std::move(cls));
        ++next_id;
    }
    reg.holdout_ids = split_holdout(reg.size(), opts.holdout_fraction, opts.split_seed);
    reg.check_invariants();
    return reg;
}

// ---------------------------------------------------------------- synthetic

namespace {

// Low-frequency random field: coarse Gaussian grid, bilinear upsample.
Image random_field(int h, int w, int grid, Rng& rng) {
    Image coarse(grid, grid);
    for (float& p : coarse.pix) {
        p = static_cast<float>(rng.normal());
    }
    return resize_bilinear(coarse, h, w);
}

Image make_base_pattern(int h, int w, Rng& rng) {
    const Image field = random_field(h, w, 4, rng);
    Image out(h, w);
    for (size_t i = 0; i < out.pix.size(); ++i) {
        out.pix[i] = field.pix[i] > 0.0f ? 1.0f : 0.0f;
    }
    return out;
}

// Smooth random warp of the base pattern; displacement ~1.5 px.
Image elastic_jitter(const Image& base, Rng& rng) {
    const Image dx = random_field(base.h, base.w, 3, rng);
    const Image dy = random_field(base.h, base.w, 3, rng);
    Image out(base.h, base.w);
    for (int y = 0; y < base.h; ++y) {
        for (int x = 0; x < base.w; ++x) {
            const float fy = static_cast<float>(y) + 1.5f * dy.at(y, x);
            const float fx = static_cast<float>(x) + 1.5f * dx.at(y, x);
            const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, base.h - 1);
            const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, base.w - 1);
            const int y1 = std::min(y0 + 1, base.h - 1);
            const int x1 = std::min(x0 + 1, base.w - 1);
            const float wy = std::clamp(fy - static_cast<float>(y0), 0.0f, 1.0f);
            const float wx = std::clamp(fx - static_cast<float>(x0), 0.0f, 1.0f);
            const float top = base.at(y0, x0) * (1.0f - wx) + base.at(y0, x1) * wx;
            const float bot = base.at(y1, x0) * (1.0f - wx) + base.at(y1, x1) * wx;
            out.at(y, x) = std::clamp(top * (1.0f - wy) + bot * wy, 0.0f, 1.0f);
        }
    }
    return out;
}

uint64_t pattern_hash(const Image& img) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (float p : img.pix) {
        h ^= (p > 0.5f) ? 0x9Eu : 0x31u;
        h *= 0x100000001B3ull;
    }
    return h;
}

}  // namespace

ClassRegistry synth_classes(int n, uint64_t seed, int h, int w, const SynthOptions& opts) {
    if (n < 1) {
        throw ConfigError("synth_classes: n must be >= 1");
    }
    if (static_cast<double>(h) * w < std::log2(static_cast<double>(n))) {
        throw ConfigError("synth_classes: " + std::to_string(h) + "x" + std::to_string(w) +
                          " pixels cannot distinguish " + std::to_string(n) + " classes");
    }
    ClassRegistry reg;
    reg.image_h = h;
    reg.image_w = w;
    std::unordered_set<uint64_t> seen;
    for (int c = 0; c < n; ++c) {
        ClassDef cls;
        cls.class_id = c;
        cls.base_id = c;
        cls.source = ClassSource::synthetic;
        Image base;
        // Distinctness guard: bump the salt until the thresholded pattern is new.
        for (uint64_t salt = 0;; ++salt) {
            Rng rng = Rng::stream(seed, "synth-class",
                                  static_cast<uint64_t>(c) * 1000003ull + salt);
            base = make_base_pattern(h, w, rng);
            const uint64_t hash = pattern_hash(base);
            if (seen.insert(hash).second) break;
            if (salt > 10000) {
                throw ConfigError("synth_classes: could not generate distinct patterns");
            }
        }
        cls.exemplars.push_back(base);
        for (int e = 1; e < opts.exemplars_per_class; ++e) {
            Rng rng = Rng::stream(seed, "synth-exemplar",
                                  static_cast<uint64_t>(c) * 1000003ull + static_cast<uint64_t>(e));
            cls.exemplars.push_back(elastic_jitter(base, rng));
        }
        reg.classes.push_back(std::move(cls));
    }
    reg.holdout_ids = split_holdout(n, opts.holdout_fraction, seed);
    reg.check_invariants();
    return reg;
}

// ---------------------------------------------------------------- augment

ClassRegistry augment_x8(const ClassRegistry& reg) {
    if (reg.augmented) {
        throw ConfigError("augment_x8: registry is already augmented");
    }
    if (reg.image_h != reg.image_w) {
        throw ConfigError("augment_x8: rotations need square images");
    }
    static constexpr Rotation kRots[4] = {Rotation::r0, Rotation::r90, Rotation::r180,
                                          Rotation::r270};
    ClassRegistry out;
    out.image_h = reg.image_h;
    out.image_w = reg.image_w;
    out.augmented = true;
    out.classes.reserve(reg.classes.size() * 8);
    int next_id = 0;
    for (const ClassDef& src : reg.classes) {
        for (bool flip : {false, true}) {
            for (Rotation rot : kRots) {
                ClassDef cls;
                cls.class_id = next_id++;
                cls.base_id = src.class_id;
                cls.source = src.source;
                cls.rotation = rot;
                cls.flipped = flip;
                cls.exemplars.reserve(src.exemplars.size());
                for (const Image& im : src.exemplars) {
                    cls.exemplars.push_back(transform_image(im, rot, flip));
                }
                // Whole orbits go to holdout together, so no holdout class is a
                // transformed training class.
                if (reg.is_holdout(src.class_id)) {
                    out.holdout_ids.insert(cls.class_id);
                }
                out.classes.push_back(std::move(cls));
            }
        }
    }
    out.check_invariants();
    return out;
}

// ---------------------------------------------------------------- archive

namespace {

constexpr char kRegMagic[8] = {'I', 'C', 'L', 'R', 'E', 'G', '0', '1'};

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& path) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) {
        throw LoadError("truncated registry archive: " + path);
    }
    return v;
}

}  // namespace

void save_registry(const ClassRegistry& reg, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw LoadError("cannot open registry archive for writing: " + path);
    }
    os.write(kRegMagic, sizeof(kRegMagic));
    put<uint32_t>(os, 1);  // version
    put<int32_t>(os, reg.size());
    put<int32_t>(os, reg.image_h);
    put<int32_t>(os, reg.image_w);
    put<uint8_t>(os, reg.augmented ? 1 : 0);
    put<int32_t>(os, static_cast<int32_t>(reg.holdout_ids.size()));
    for (int id : reg.holdout_ids) put<int32_t>(os, id);
    for (const ClassDef& c : reg.classes) {
        put<int32_t>(os, c.class_id);
        put<uint8_t>(os, static_cast<uint8_t>(c.source));
        put<uint8_t>(os, static_cast<uint8_t>(c.rotation));
        put<uint8_t>(os, c.flipped ? 1 : 0);
        put<int32_t>(os, c.base_id);
        put<int32_t>(os, static_cast<int32_t>(c.exemplars.size()));
        for (const Image& im : c.exemplars) {
            os.write(reinterpret_cast<const char*>(im.pix.data()),
                     static_cast<std::streamsize>(im.pix.size() * sizeof(float)));
        }
    }
    if (!os) {
        throw LoadError("failed writing registry archive: " + path);
    }
}

ClassRegistry load_registry(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw LoadError("cannot open registry archive: " + path);
    }
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kRegMagic, sizeof(magic)) != 0) {
        throw LoadError("bad registry archive magic: " + path);
    }
    const uint32_t version = get<uint32_t>(is, path);
    if (version != 1) {
        throw LoadError("unsupported registry archive version " + std::to_string(version) +
                        ": " + path);
    }
    ClassRegistry reg;
    const int32_t n = get<int32_t>(is, path);
    reg.image_h = get<int32_t>(is, path);
    reg.image_w = get<int32_t>(is, path);
    reg.augmented = get<uint8_t>(is, path) != 0;
    const int32_t n_holdout = get<int32_t>(is, path);
    for (int32_t i = 0; i < n_holdout; ++i) {
        reg.holdout_ids.insert(get<int32_t>(is, path));
    }
    const size_t npix = static_cast<size_t>(reg.image_h) * static_cast<size_t>(reg.image_w);
    for (int32_t i = 0; i < n; ++i) {
        ClassDef c;
        c.class_id = get<int32_t>(is, path);
        c.source = static_cast<ClassSource>(get<uint8_t>(is, path));
        c.rotation = static_cast<Rotation>(get<uint8_t>(is, path));
        c.flipped = get<uint8_t>(is, path) != 0;
        c.base_id = get<int32_t>(is, path);
        const int32_t n_ex = get<int32_t>(is, path);
        for (int32_t e = 0; e < n_ex; ++e) {
            Image im(reg.image_h, reg.image_w);
            is.read(reinterpret_cast<char*>(im.pix.data()),
                    static_cast<std::streamsize>(npix * sizeof(float)));
            if (!is) {
                throw LoadError("truncated registry archive: " + path);
            }
            c.exemplars.push_back(std::move(im));
        }
        reg.classes.push_back(std::move(c));
    }
    reg.check_invariants();
    return reg;
}

}  // namespace iclab
