#include <cmath>

#include "doctest.h"
#include "iclab/errors.hpp"
#include "iclab/optim.hpp"
#include "iclab/rng.hpp"
#include "testutil.hpp"

using namespace iclab;

TEST_SUITE_BEGIN("optim");

TEST_CASE("adam with zero learning rate leaves parameters untouched") {
    Rng rng(1);
    ParamMap params;
    params["w"] = icltest::random_tensor({3, 3}, rng);
    ParamMap before = params;
    GradMap grads;
    grads["w"] = icltest::random_tensor({3, 3}, rng);
    AdamState st;
    adam_step(params, grads, st, 0.0);
    CHECK(params["w"].data == before["w"].data);
    CHECK(st.t == 1);
}

TEST_CASE("first adam step on a unit gradient moves by about -lr") {
    ParamMap params;
    params["w"] = Tensor::from({1}, {0.0});
    GradMap grads;
    grads["w"] = Tensor::from({1}, {1.0});
    AdamState st;
    adam_step(params, grads, st, 0.1);
    // bias-corrected mhat = 1, vhat = 1 -> delta = -0.1 / (1 + eps)
    CHECK(params["w"].data[0] == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("zero gradient from fresh state gives zero update") {
    ParamMap params;
    params["w"] = Tensor::from({2}, {1.5, -0.5});
    GradMap grads;
    grads["w"] = Tensor::from({2}, {0.0, 0.0});
    AdamState st;
    adam_step(params, grads, st, 0.1);
    CHECK(params["w"].data[0] == 1.5);
    CHECK(params["w"].data[1] == -0.5);
}

TEST_CASE("NaN gradient aborts the step before mutating anything") {
    ParamMap params;
    params["a"] = Tensor::from({1}, {1.0});
    params["b"] = Tensor::from({1}, {2.0});
    GradMap grads;
    grads["a"] = Tensor::from({1}, {0.5});
    grads["b"] = Tensor::from({1}, {std::nan("")});
    AdamState st;
    CHECK_THROWS_AS(adam_step(params, grads, st, 0.1), NumericError);
    CHECK(params["a"].data[0] == 1.0);
    CHECK(st.t == 0);
}

TEST_CASE("step counter increases by one per step") {
    ParamMap params;
    params["w"] = Tensor::from({1}, {0.0});
    GradMap grads;
    grads["w"] = Tensor::from({1}, {0.3});
    AdamState st;
    for (int i = 1; i <= 5; ++i) {
        adam_step(params, grads, st, 1e-3);
        CHECK(st.t == i);
    }
}

TEST_CASE("learning rate schedule anchors") {
    LrSchedule sched;  // 3e-4 at 4000
    CHECK(lr_at(0, sched) == 0.0);
    CHECK(lr_at(4000, sched) == doctest::Approx(3e-4).epsilon(1e-12));
    CHECK(lr_at(16000, sched) == doctest::Approx(1.5e-4).epsilon(1e-12));
}

TEST_CASE("learning rate is nonnegative, rises then falls, continuous at warmup") {
    LrSchedule sched;
    double prev = lr_at(0, sched);
    for (int64_t s = 1; s <= 4000; ++s) {
        const double lr = lr_at(s, sched);
        CHECK(lr >= prev);
        prev = lr;
    }
    for (int64_t s = 4001; s <= 20000; s += 7) {
        const double lr = lr_at(s, sched);
        CHECK(lr >= 0.0);
        CHECK(lr <= prev);
        prev = lr;
    }
    // continuity: one step across the boundary moves lr by O(max_lr / warmup)
    const double before = lr_at(3999, sched);
    const double at = lr_at(4000, sched);
    const double after = lr_at(4001, sched);
    CHECK(std::abs(at - before) < 2 * sched.max_lr / 4000.0);
    CHECK(std::abs(after - at) < 2 * sched.max_lr / 4000.0);
}

TEST_CASE("zero warmup means constant then decay") {
    LrSchedule sched{1e-3, 0};
    CHECK(lr_at(0, sched) == 1e-3);
    CHECK(lr_at(1, sched) == 1e-3);
    CHECK(lr_at(4, sched) == doctest::Approx(5e-4));
}

TEST_CASE("identical seeds give bit-identical parameters after many steps") {
    auto run = [](uint64_t seed) {
        Rng rng(seed);
        ParamMap params;
        params["w"] = icltest::random_tensor({4, 4}, rng);
        AdamState st;
        LrSchedule sched{1e-2, 10};
        for (int64_t s = 1; s <= 50; ++s) {
            GradMap grads;
            grads["w"] = icltest::random_tensor({4, 4}, rng);
            adam_step(params, grads, st, lr_at(s, sched));
        }
        return params["w"].data;
    };
    CHECK(run(42) == run(42));
    CHECK(run(42) != run(43));
}

TEST_SUITE_END();
