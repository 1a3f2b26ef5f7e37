// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mtr/tensor.hpp"

using namespace mtr;

namespace {

TensorPtr random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    auto n = static_cast<std::size_t>(shape_size(shape));
    std::vector<double> v(n);
    for (auto& x : v) x = uniform_real(rng, lo, hi);
    return Tensor::make(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("sigmoid of zero is one half") {
    auto y = ops::sigmoid(nullptr, Tensor::make({1}, {0.0}));
    CHECK(y->values[0] == doctest::Approx(0.5));
}

TEST_CASE("relu clamps negatives") {
    auto y = ops::relu(nullptr, Tensor::make({2}, {-1.0, 2.0}));
    CHECK(y->values[0] == 0.0);
    CHECK(y->values[1] == 2.0);
}

TEST_CASE("conv2d_full_depth of all-ones input and filter sums the window") {
    auto x = Tensor::full({3, 3, 2}, 1.0);
    auto w = Tensor::full({1, 3, 3, 2}, 1.0);
    auto y = ops::conv2d_full_depth(nullptr, x, w, nullptr, Padding::valid);
    REQUIRE(y->shape == std::vector<int>{1, 1, 1});
    CHECK(y->values[0] == doctest::Approx(18.0));
}

TEST_CASE("conv2d_full_depth same padding preserves spatial extents") {
    Rng rng(11);
    auto x = random_tensor({4, 6, 3}, rng);
    auto w = random_tensor({5, 3, 4, 3}, rng);
    auto y = ops::conv2d_full_depth(nullptr, x, w, nullptr, Padding::same);
    CHECK(y->shape == std::vector<int>{4, 6, 5});
}

TEST_CASE("backward of x*x at x=3 gives 6") {
    auto x = Tensor::make({1, 1}, {3.0}, true);
    Tape tape;
    auto loss = ops::mul(&tape, x, x);
    tape.backward(loss);
    CHECK(x->grad[0] == doctest::Approx(6.0));
}

TEST_CASE("backward of sigmoid at 0 gives 0.25") {
    auto x = Tensor::make({1, 1}, {0.0}, true);
    Tape tape;
    auto loss = ops::sigmoid(&tape, x);
    tape.backward(loss);
    CHECK(x->grad[0] == doctest::Approx(0.25));
}

TEST_CASE("backward twice accumulates exactly twice the leaf gradient") {
    auto x = Tensor::make({1, 1}, {0.7}, true);
    Tape tape;
    auto loss = ops::tanh(&tape, ops::mul(&tape, x, x));
    tape.backward(loss);
    const double once = x->grad[0];
    tape.backward(loss);
    CHECK(x->grad[0] == doctest::Approx(2.0 * once).epsilon(1e-15));
}

TEST_CASE("backward rejects losses that are not scalar or not on the tape") {
    auto x = Tensor::make({1, 2}, {1.0, 2.0}, true);
    Tape tape;
    auto y = ops::relu(&tape, x);
    CHECK_THROWS_AS(tape.backward(y), ShapeError);
    auto stranger = Tensor::make({1, 1}, {1.0}, true);
    CHECK_THROWS_AS(tape.backward(stranger), ValueError);
}

TEST_CASE("shape errors name the op and extents") {
    auto a = Tensor::zeros({2, 3});
    auto b = Tensor::zeros({4, 5});
    try {
        ops::matmul(nullptr, a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string what = e.what();
        CHECK(what.find("matmul") != std::string::npos);
        CHECK(what.find("{2, 3}") != std::string::npos);
        CHECK(what.find("{4, 5}") != std::string::npos);
    }
}

TEST_CASE("non-finite inputs are rejected") {
    auto a = Tensor::make({1, 2}, {1.0, std::nan("")});
    CHECK_THROWS_AS(ops::relu(nullptr, a), ValueError);
    auto b = Tensor::make({1, 1}, {std::numeric_limits<double>::infinity()});
    CHECK_THROWS_AS(ops::sigmoid(nullptr, b), ValueError);
}

TEST_CASE("global_maxpool_2d matches brute force") {
    Rng rng(5);
    auto x = random_tensor({7, 9, 4}, rng);
    auto y = ops::global_maxpool_2d(nullptr, x);
    for (int c = 0; c < 4; ++c) {
        double best = -1e300;
        for (int i = 0; i < 7; ++i) {
            for (int j = 0; j < 9; ++j) best = std::max(best, x->at3(i, j, c));
        }
        CHECK(y->values[static_cast<std::size_t>(c)] == doctest::Approx(best));
    }
}

TEST_CASE("masked maxpool ignores masked rows and rejects an all-masked sequence") {
    auto x = Tensor::make({3, 2}, {9.0, 9.0, 1.0, 2.0, 3.0, 4.0});
    std::vector<double> mask{0.0, 1.0, 1.0};
    auto y = ops::masked_maxpool_over_sequence(nullptr, x, mask);
    CHECK(y->values[0] == doctest::Approx(3.0));
    CHECK(y->values[1] == doctest::Approx(4.0));
    std::vector<double> none{0.0, 0.0, 0.0};
    CHECK_THROWS_AS(ops::masked_maxpool_over_sequence(nullptr, x, none), ValueError);
}

TEST_CASE("softmax is invariant to constant shifts and respects masks") {
    auto x = Tensor::make({4}, {0.1, 0.9, -0.4, 0.3});
    auto shifted = Tensor::make({4}, {100.1, 100.9, 99.6, 100.3});
    auto a = ops::softmax(nullptr, x);
    auto b = ops::softmax(nullptr, shifted);
    for (int i = 0; i < 4; ++i) {
        CHECK(a->values[static_cast<std::size_t>(i)] ==
              doctest::Approx(b->values[static_cast<std::size_t>(i)]).epsilon(1e-12));
    }
    std::vector<double> mask{1.0, 0.0, 1.0, 1.0};
    auto m = ops::softmax(nullptr, x, &mask);
    CHECK(m->values[1] == 0.0);
    CHECK(m->values[0] + m->values[2] + m->values[3] == doctest::Approx(1.0));
}

TEST_CASE("dropout is identity in inference mode and rescales kept values in training") {
    Rng rng(42);
    auto x = Tensor::full({10, 10}, 1.0);
    auto same = ops::dropout(nullptr, x, 0.5, EvalMode::infer, nullptr);
    CHECK(same.get() == x.get());
    auto dropped = ops::dropout(nullptr, x, 0.5, EvalMode::train, &rng);
    int kept = 0;
    for (double v : dropped->values) {
        CHECK((v == 0.0 || v == doctest::Approx(2.0)));
        kept += v != 0.0 ? 1 : 0;
    }
    CHECK(kept > 20);
    CHECK(kept < 80);
    // Same seed, same mask.
    Rng rng2(42);
    auto again = ops::dropout(nullptr, x, 0.5, EvalMode::train, &rng2);
    CHECK(again->values == dropped->values);
}

TEST_CASE("concat and slice are inverse block operations") {
    Rng rng(7);
    for (int axis = 0; axis < 2; ++axis) {
        auto a = random_tensor({3, 4}, rng);
        auto b = random_tensor({3, 4}, rng);
        auto joined = ops::concat(nullptr, {a, b}, axis);
        auto a_back = ops::slice(nullptr, joined, axis, 0, axis == 0 ? 3 : 4);
        auto b_back = ops::slice(nullptr, joined, axis, axis == 0 ? 3 : 4, axis == 0 ? 3 : 4);
        CHECK(a_back->values == a->values);
        CHECK(b_back->values == b->values);
    }
}

// ---------------------------------------------------------------------------
// Finite-difference sweeps
// ---------------------------------------------------------------------------

namespace {

/// Checks d(sum(op(x, ...)))/dx against central differences.
void check_grad(const ScalarFn& f, const TensorPtr& point, double tolerance = 1e-4) {
    auto report = finite_difference_check(f, point, 1e-5, tolerance);
    CAPTURE(report.max_rel_error);
    CHECK(report.pass);
}

}  // namespace

TEST_CASE("finite differences: sum of squares has tight agreement") {
    auto point = Tensor::make({3}, {1.0, 2.0, 3.0});
    auto f = [](const TensorPtr& x, Tape* tape) {
        return ops::sum_all(tape, ops::mul(tape, x, x));
    };
    auto report = finite_difference_check(f, point, 1e-5, 1e-8);
    CHECK(report.pass);
    CHECK(report.max_rel_error < 1e-8);
    CHECK(report.kink_coords.empty());
}

TEST_CASE("finite differences: depth-5 tanh chain passes at 1e-4") {
    Rng rng(3);
    auto point = random_tensor({4}, rng);
    auto f = [](const TensorPtr& x, Tape* tape) {
        auto y = x;
        for (int i = 0; i < 5; ++i) y = ops::tanh(tape, y);
        return ops::sum_all(tape, y);
    };
    check_grad(f, point);
}

TEST_CASE("finite differences: relu evaluated exactly at its kink is flagged, not failed") {
    auto point = Tensor::make({3}, {0.0, 1.0, -1.0});
    auto f = [](const TensorPtr& x, Tape* tape) { return ops::sum_all(tape, ops::relu(tape, x)); };
    auto report = finite_difference_check(f, point, 1e-5, 1e-4);
    CHECK(report.pass);
    REQUIRE(report.kink_coords.size() == 1);
    CHECK(report.kink_coords[0] == 0);
}

TEST_CASE("finite differences: every primitive") {
    Rng rng(1234);

    SUBCASE("matmul, both operands") {
        auto a = random_tensor({3, 4}, rng);
        auto b = random_tensor({4, 2}, rng);
        check_grad(
            [&b](const TensorPtr& x, Tape* tape) {
                return ops::sum_all(tape, ops::matmul(tape, x, b));
            },
            a);
        check_grad(
            [&a](const TensorPtr& x, Tape* tape) {
                return ops::sum_all(tape, ops::matmul(tape, a, x));
            },
            b);
    }
    SUBCASE("add, including the row-broadcast rule") {
        auto a = random_tensor({3, 4}, rng);
        auto bias = random_tensor({1, 4}, rng);
        check_grad(
            [&bias](const TensorPtr& x, Tape* tape) {
                return ops::sum_all(tape, ops::sigmoid(tape, ops::add(tape, x, bias)));
            },
            a);
        check_grad(
            [&a](const TensorPtr& x, Tape* tape) {
                return ops::sum_all(tape, ops::sigmoid(tape, ops::add(tape, a, x)));
            },
            bias);
    }
    SUBCASE("mul_elementwise") {
        auto a = random_tensor({2, 5}, rng);
        auto b = random_tensor({2, 5}, rng);
        check_grad(
            [&b](const TensorPtr& x, Tape* tape) { return ops::sum_all(tape, ops::mul(tape, x, b)); },
            a);
    }
    SUBCASE("concat and slice") {
        auto a = random_tensor({2, 3}, rng);
        auto b = random_tensor({2, 3}, rng);
        check_grad(
            [&b](const TensorPtr& x, Tape* tape) {
                auto joined = ops::concat(tape, {x, b}, 0);
                auto cut = ops::slice(tape, joined, 0, 1, 2);
                return ops::sum_all(tape, ops::tanh(tape, cut));
            },
            a);
    }
    SUBCASE("sigmoid tanh relu chain away from kinks") {
        auto a = random_tensor({6}, rng, 0.25, 1.5);
        check_grad(
            [](const TensorPtr& x, Tape* tape) {
                return ops::sum_all(tape, ops::relu(tape, ops::tanh(tape, ops::sigmoid(tape, x))));
            },
            a);
    }
    SUBCASE("softmax with mask") {
        auto a = random_tensor({5}, rng);
        std::vector<double> mask{1.0, 1.0, 0.0, 1.0, 1.0};
        check_grad(
            [&mask](const TensorPtr& x, Tape* tape) {
                auto w = ops::softmax(tape, x, &mask);
                return ops::sum_all(tape, ops::mul(tape, w, w));
            },
            a);
    }
    SUBCASE("dropout with a fixed seed is differentiable through its mask") {
        auto a = random_tensor({4, 4}, rng);
        check_grad(
            [](const TensorPtr& x, Tape* tape) {
                Rng local(99);
                return ops::sum_all(tape, ops::dropout(tape, x, 0.25, EvalMode::train, &local));
            },
            a);
    }
    SUBCASE("conv2d_full_depth: input, filters, bias; both paddings") {
        auto x = random_tensor({4, 5, 2}, rng);
        auto w = random_tensor({3, 3, 4, 2}, rng, -0.5, 0.5);
        auto bias = random_tensor({3}, rng);
        for (auto padding : {Padding::same, Padding::valid}) {
            check_grad(
                [&w, &bias, padding](const TensorPtr& t, Tape* tape) {
                    return ops::sum_all(tape,
                                        ops::conv2d_full_depth(tape, t, w, bias, padding));
                },
                x);
            check_grad(
                [&x, &bias, padding](const TensorPtr& t, Tape* tape) {
                    return ops::sum_all(tape,
                                        ops::conv2d_full_depth(tape, x, t, bias, padding));
                },
                w);
            check_grad(
                [&x, &w, padding](const TensorPtr& t, Tape* tape) {
                    return ops::sum_all(tape, ops::conv2d_full_depth(tape, x, w, t, padding));
                },
                bias);
        }
    }
    SUBCASE("global_maxpool_2d") {
        auto x = random_tensor({3, 4, 2}, rng);
        check_grad(
            [](const TensorPtr& t, Tape* tape) {
                auto pooled = ops::global_maxpool_2d(tape, t);
                return ops::sum_all(tape, ops::mul(tape, pooled, pooled));
            },
            x);
    }
    SUBCASE("masked_maxpool_over_sequence") {
        auto x = random_tensor({5, 3}, rng);
        std::vector<double> mask{1.0, 1.0, 1.0, 0.0, 0.0};
        check_grad(
            [&mask](const TensorPtr& t, Tape* tape) {
                return ops::sum_all(tape, ops::masked_maxpool_over_sequence(tape, t, mask));
            },
            x);
    }
    SUBCASE("scalar_scale, both operands") {
        auto x = random_tensor({2, 3}, rng);
        auto s = Tensor::make({1}, {0.7});
        check_grad(
            [&s](const TensorPtr& t, Tape* tape) {
                return ops::sum_all(tape, ops::scalar_scale(tape, t, s));
            },
            x);
        check_grad(
            [&x](const TensorPtr& t, Tape* tape) {
                return ops::sum_all(tape, ops::scalar_scale(tape, x, t));
            },
            s);
    }
    SUBCASE("reshape and sum_all auxiliaries") {
        auto x = random_tensor({2, 6}, rng);
        check_grad(
            [](const TensorPtr& t, Tape* tape) {
                auto r = ops::reshape(tape, t, {3, 4});
                return ops::sum_all(tape, ops::mul(tape, r, r));
            },
            x);
    }
}

TEST_CASE("primitive_forward dispatches every op kind") {
    Rng rng(8);
    OpAttrs attrs;
    auto a = random_tensor({2, 2}, rng);
    auto b = random_tensor({2, 2}, rng);
    CHECK(primitive_forward(nullptr, OpKind::matmul, {a, b}, attrs)->shape ==
          std::vector<int>{2, 2});
    CHECK(primitive_forward(nullptr, OpKind::add, {a, b}, attrs)->values[0] ==
          doctest::Approx(a->values[0] + b->values[0]));
    CHECK(primitive_forward(nullptr, OpKind::mul_elementwise, {a, b}, attrs)->values[0] ==
          doctest::Approx(a->values[0] * b->values[0]));
    attrs.axis = 0;
    CHECK(primitive_forward(nullptr, OpKind::concat, {a, b}, attrs)->shape ==
          std::vector<int>{4, 2});
    attrs.start = 0;
    attrs.length = 1;
    CHECK(primitive_forward(nullptr, OpKind::slice, {a}, attrs)->shape == std::vector<int>{1, 2});
    CHECK(primitive_forward(nullptr, OpKind::sigmoid, {a}, attrs)->size() == 4);
    CHECK(primitive_forward(nullptr, OpKind::tanh, {a}, attrs)->size() == 4);
    CHECK(primitive_forward(nullptr, OpKind::relu, {a}, attrs)->size() == 4);
    auto vec = random_tensor({4}, rng);
    CHECK(primitive_forward(nullptr, OpKind::softmax, {vec}, attrs)->size() == 4);
    attrs.rate = 0.5;
    attrs.mode = EvalMode::infer;
    CHECK(primitive_forward(nullptr, OpKind::dropout, {a}, attrs).get() == a.get());
    auto x3 = random_tensor({3, 3, 2}, rng);
    auto w = random_tensor({1, 3, 3, 2}, rng);
    attrs.padding = Padding::valid;
    CHECK(primitive_forward(nullptr, OpKind::conv2d_full_depth, {x3, w}, attrs)->size() == 1);
    CHECK(primitive_forward(nullptr, OpKind::global_maxpool_2d, {x3}, attrs)->shape ==
          std::vector<int>{1, 2});
    auto seq = random_tensor({3, 2}, rng);
    std::vector<double> mask{1.0, 1.0, 0.0};
    attrs.mask = &mask;
    CHECK(primitive_forward(nullptr, OpKind::masked_maxpool_over_sequence, {seq}, attrs)->shape ==
          std::vector<int>{1, 2});
    auto s = Tensor::make({1}, {2.0});
    CHECK(primitive_forward(nullptr, OpKind::scalar_scale, {a, s}, attrs)->values[0] ==
          doctest::Approx(2.0 * a->values[0]));
}

TEST_CASE("forward results are deterministic for identical inputs") {
    auto make_value = []() {
        Rng rng(21);
        auto a = random_tensor({4, 4}, rng);
        auto b = random_tensor({4, 4}, rng);
        Rng drop(9);
        auto y = ops::dropout(nullptr, ops::sigmoid(nullptr, ops::matmul(nullptr, a, b)), 0.3,
                              EvalMode::train, &drop);
        return y->values;
    };
    CHECK(make_value() == make_value());
}
