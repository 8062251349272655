#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "iclab/datagen.hpp"
#include "iclab/errors.hpp"
#include "iclab/png_io.hpp"

using namespace iclab;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("datagen");

namespace {

// Tiny fake Omniglot tree: alphabets/characters/pngs, each class a distinct
// diagonal stripe pattern.
fs::path make_fake_omniglot(int alphabets, int chars_per, int exemplars_per, int px = 12) {
    fs::path root = fs::temp_directory_path() /
                    ("iclab_omni_" + std::to_string(alphabets) + "_" + std::to_string(chars_per) +
                     "_" + std::to_string(exemplars_per));
    fs::remove_all(root);
    int cls = 0;
    for (int a = 0; a < alphabets; ++a) {
        for (int c = 0; c < chars_per; ++c) {
            fs::path dir = root / ("alphabet" + std::to_string(a)) / ("char" + std::to_string(c));
            fs::create_directories(dir);
            for (int e = 0; e < exemplars_per; ++e) {
                Image im(px, px);
                for (int y = 0; y < px; ++y) {
                    for (int x = 0; x < px; ++x) {
                        im.at(y, x) = ((x + y * (cls + 1) + e) % 5 == 0) ? 0.0f : 1.0f;
                    }
                }
                write_png_gray((dir / ("img" + std::to_string(e) + ".png")).string(), im);
            }
            ++cls;
        }
    }
    return root;
}

}  // namespace

TEST_CASE("png round trip") {
    Image im(9, 7);
    for (int y = 0; y < 9; ++y) {
        for (int x = 0; x < 7; ++x) {
            im.at(y, x) = static_cast<float>((y * 7 + x) % 256) / 255.0f;
        }
    }
    fs::path p = fs::temp_directory_path() / "iclab_roundtrip.png";
    write_png_gray(p.string(), im);
    Image back = read_png_gray(p.string());
    REQUIRE(back.h == 9);
    REQUIRE(back.w == 7);
    for (size_t i = 0; i < im.pix.size(); ++i) {
        CHECK(std::abs(back.pix[i] - im.pix[i]) < 1.0f / 254.0f);
    }
}

TEST_CASE("omniglot loader builds one class per character directory") {
    fs::path root = make_fake_omniglot(2, 3, 20);
    ClassRegistry reg = load_omniglot(root.string(), {14, 14, 0.2, 1});
    CHECK(reg.size() == 6);
    for (const ClassDef& c : reg.classes) {
        CHECK(c.exemplars.size() == 20);
        CHECK(c.exemplars[0].h == 14);
        CHECK(c.exemplars[0].w == 14);
        for (const Image& im : c.exemplars) {
            for (float p : im.pix) {
                CHECK(p >= 0.0f);
                CHECK(p <= 1.0f);
            }
        }
    }
    CHECK(reg.holdout_ids.size() == 1);  // round(0.2 * 6)
    fs::remove_all(root);
}

TEST_CASE("omniglot loader ordering is deterministic and path-lexicographic") {
    fs::path root = make_fake_omniglot(2, 2, 3);
    ClassRegistry a = load_omniglot(root.string(), {10, 10, 0.0, 0});
    ClassRegistry b = load_omniglot(root.string(), {10, 10, 0.0, 0});
    REQUIRE(a.size() == b.size());
    for (int i = 0; i < a.size(); ++i) {
        CHECK(a.by_id(i).exemplars[0].pix == b.by_id(i).exemplars[0].pix);
    }
    fs::remove_all(root);
}

TEST_CASE("omniglot loader errors") {
    CHECK_THROWS_AS(load_omniglot("/nonexistent/path/omniglot"), LoadError);
    fs::path empty = fs::temp_directory_path() / "iclab_empty_omni";
    fs::create_directories(empty);
    CHECK_THROWS_AS(load_omniglot(empty.string()), LoadError);
    fs::remove_all(empty);

    // corrupt png -> load error naming the path
    fs::path root = make_fake_omniglot(1, 1, 2);
    fs::path bad = root / "alphabet0" / "char0" / "img0.png";
    std::ofstream(bad.string(), std::ios::binary) << "this is not a png";
    try {
        load_omniglot(root.string());
        CHECK(false);
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("img0.png") != std::string::npos);
    }
    fs::remove_all(root);
}

TEST_CASE("synthetic registry is deterministic in the seed") {
    ClassRegistry a = synth_classes(50, 7, 12, 12);
    ClassRegistry b = synth_classes(50, 7, 12, 12);
    ClassRegistry c = synth_classes(50, 8, 12, 12);
    REQUIRE(a.size() == 50);
    bool all_equal = true, any_diff_seed = false;
    for (int i = 0; i < 50; ++i) {
        for (size_t e = 0; e < a.by_id(i).exemplars.size(); ++e) {
            if (a.by_id(i).exemplars[e].pix != b.by_id(i).exemplars[e].pix) all_equal = false;
            if (a.by_id(i).exemplars[e].pix != c.by_id(i).exemplars[e].pix) any_diff_seed = true;
        }
    }
    CHECK(all_equal);
    CHECK(any_diff_seed);
    CHECK(a.holdout_ids == b.holdout_ids);
}

TEST_CASE("synthetic classes have pairwise distinct base patterns") {
    ClassRegistry reg = synth_classes(100, 3, 12, 12);
    for (int i = 0; i < reg.size(); ++i) {
        for (int j = i + 1; j < reg.size(); ++j) {
            CHECK(reg.by_id(i).exemplars[0].pix != reg.by_id(j).exemplars[0].pix);
        }
    }
}

TEST_CASE("synthetic generator edge cases") {
    CHECK(synth_classes(1, 0, 8, 8).size() == 1);
    CHECK_THROWS_AS(synth_classes(0, 0, 8, 8), ConfigError);
    // 2x2 = 4 pixels < log2(100)
    CHECK_THROWS_AS(synth_classes(100, 0, 2, 2), ConfigError);
}

TEST_CASE("augment_x8 multiplies classes by eight and keeps exemplar counts") {
    ClassRegistry base = synth_classes(5, 11, 10, 10, {4, 0.2});
    ClassRegistry aug = augment_x8(base);
    CHECK(aug.size() == 40);
    for (const ClassDef& c : aug.classes) {
        CHECK(c.exemplars.size() == 4);
    }
    // holdout recomputed at orbit level: 1 base holdout -> 8 augmented holdout
    CHECK(base.holdout_ids.size() == 1);
    CHECK(aug.holdout_ids.size() == 8);
    aug.check_invariants();
}

TEST_CASE("identity transform output is pixel-identical to its input") {
    ClassRegistry base = synth_classes(3, 2, 10, 10, {2, 0.0});
    ClassRegistry aug = augment_x8(base);
    for (const ClassDef& c : aug.classes) {
        if (c.rotation == Rotation::r0 && !c.flipped) {
            const ClassDef& src = base.by_id(c.base_id);
            for (size_t e = 0; e < src.exemplars.size(); ++e) {
                CHECK(c.exemplars[e].pix == src.exemplars[e].pix);
            }
        }
    }
}

TEST_CASE("augmented holdout never shares an orbit with training") {
    ClassRegistry aug = augment_x8(synth_classes(20, 5, 8, 8, {2, 0.25}));
    std::set<int> train_bases, holdout_bases;
    for (const ClassDef& c : aug.classes) {
        (aug.is_holdout(c.class_id) ? holdout_bases : train_bases).insert(c.base_id);
    }
    for (int b : holdout_bases) {
        CHECK(train_bases.count(b) == 0);
    }
}

TEST_CASE("single_exemplar policy returns the same image every call") {
    ClassRegistry reg = synth_classes(4, 1, 10, 10);
    Rng rng(5);
    ExemplarPolicy policy;
    Image a = sample_exemplar(reg.by_id(0), policy, rng);
    Image b = sample_exemplar(reg.by_id(0), policy, rng);
    CHECK(a.pix == b.pix);
    CHECK(a.pix == reg.by_id(0).exemplars[0].pix);
}

TEST_CASE("single_plus_noise jitters with the configured sigma and clamps") {
    ClassRegistry reg = synth_classes(2, 9, 20, 20);
    Rng rng(5);
    const double sigma = 0.1;
    ExemplarPolicy policy{ExemplarPolicy::Mode::single_plus_noise, sigma};
    Image a = sample_exemplar(reg.by_id(0), policy, rng);
    Image b = sample_exemplar(reg.by_id(0), policy, rng);
    CHECK(a.pix != b.pix);
    // mean |delta| over unclamped pixels ~ sigma * sqrt(2/pi); estimate over
    // many draws, counting only interior values where clamping cannot bite
    double total = 0.0;
    int64_t n = 0;
    const Image& basei = reg.by_id(0).exemplars[0];
    for (int rep = 0; rep < 30; ++rep) {
        Image s = sample_exemplar(reg.by_id(0), policy, rng);
        for (size_t i = 0; i < s.pix.size(); ++i) {
            if (s.pix[i] > 0.0f && s.pix[i] < 1.0f) {
                total += std::abs(static_cast<double>(s.pix[i]) - static_cast<double>(basei.pix[i]));
                ++n;
            }
            CHECK(s.pix[i] >= 0.0f);
            CHECK(s.pix[i] <= 1.0f);
        }
    }
    const double mean_abs = total / static_cast<double>(n);
    const double expected = sigma * std::sqrt(2.0 / 3.14159265358979);  // half-normal mean
    CHECK(mean_abs == doctest::Approx(expected).epsilon(0.15));
}

TEST_CASE("full_set policy picks exemplars uniformly") {
    ClassRegistry reg = synth_classes(2, 13, 10, 10, {20, 0.0});
    Rng rng(17);
    ExemplarPolicy policy{ExemplarPolicy::Mode::full_set, 0.0};
    const ClassDef& cls = reg.by_id(0);
    std::vector<int> counts(20, 0);
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        Image s = sample_exemplar(cls, policy, rng);
        for (int e = 0; e < 20; ++e) {
            if (s.pix == cls.exemplars[static_cast<size_t>(e)].pix) {
                counts[static_cast<size_t>(e)]++;
                break;
            }
        }
    }
    // each frequency within 3 binomial stds of 1/20
    const double p = 1.0 / 20.0;
    const double sd = std::sqrt(p * (1 - p) * draws);
    for (int e = 0; e < 20; ++e) {
        CHECK(std::abs(counts[static_cast<size_t>(e)] - draws * p) < 3.5 * sd);
    }
}

TEST_CASE("policy validation") {
    ExemplarPolicy bad{ExemplarPolicy::Mode::single_exemplar, 0.2};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_THROWS_AS(ExemplarPolicy::parse("bogus", 0.0), ConfigError);
    CHECK(ExemplarPolicy::parse("noise", 0.05).mode == ExemplarPolicy::Mode::single_plus_noise);
}

TEST_CASE("registry archive round trip") {
    ClassRegistry reg = synth_classes(12, 21, 9, 9, {3, 0.25});
    fs::path p = fs::temp_directory_path() / "iclab_registry.bin";
    save_registry(reg, p.string());
    ClassRegistry back = load_registry(p.string());
    REQUIRE(back.size() == reg.size());
    CHECK(back.holdout_ids == reg.holdout_ids);
    CHECK(back.image_h == reg.image_h);
    for (int i = 0; i < reg.size(); ++i) {
        CHECK(back.by_id(i).base_id == reg.by_id(i).base_id);
        REQUIRE(back.by_id(i).exemplars.size() == reg.by_id(i).exemplars.size());
        for (size_t e = 0; e < reg.by_id(i).exemplars.size(); ++e) {
            CHECK(back.by_id(i).exemplars[e].pix == reg.by_id(i).exemplars[e].pix);
        }
    }
    CHECK_THROWS_AS(load_registry("/nonexistent/registry.bin"), LoadError);
    fs::remove(p);
}

TEST_SUITE_END();
