#include <doctest.h>

#include <random>
#include <vector>

#include "delayformer/adam.hpp"
#include "delayformer/autodiff.hpp"
#include "delayformer/errors.hpp"
#include "delayformer/gradcheck.hpp"
#include "delayformer/tensor.hpp"

using namespace delayformer;

namespace {

// Reduces a node to a scalar with fixed random weights so the check is not
// blind to sign or permutation errors. Takes a plain seed so rebuilding the
// graph inside finite_diff_gradcheck reproduces the exact same weights.
Var weighted_sum(Tape& tape, Var v, std::uint64_t seed) {
    std::mt19937_64 local(seed);
    const Tensor w = uniform(v.value().shape(), 0.5, 1.5, local);
    return sum(hadamard(v, tape.leaf(w)));
}

double checked(const LossBuilder& build, const std::vector<Tensor>& point) {
    std::mt19937_64 rng(99);
    const GradCheckReport r = finite_diff_gradcheck(build, point, 1e-5, 0, rng);
    return r.max_rel_err;
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("matmul gradients") {
    std::mt19937_64 rng(1);
    const std::uint64_t wseed = 41;
    const std::vector<Tensor> point = {uniform({3, 4}, -1, 1, rng), uniform({4, 2}, -1, 1, rng)};
    const double err = checked(
        [&](Tape& t, const std::vector<Var>& v) {
            return weighted_sum(t, matmul(v[0], v[1]), wseed);
        },
        point);
    CHECK(err < 1e-6);
}

TEST_CASE("bmm gradients, both layouts") {
    std::mt19937_64 rng(2);
    const std::uint64_t wseed = 42;
    const std::vector<Tensor> plain = {uniform({2, 3, 4}, -1, 1, rng),
                                       uniform({2, 4, 2}, -1, 1, rng)};
    CHECK(checked(
              [&](Tape& t, const std::vector<Var>& v) {
                  return weighted_sum(t, bmm(v[0], v[1]), wseed);
              },
              plain) < 1e-6);

    const std::vector<Tensor> trans = {uniform({2, 3, 4}, -1, 1, rng),
                                       uniform({2, 5, 4}, -1, 1, rng)};
    CHECK(checked(
              [&](Tape& t, const std::vector<Var>& v) {
                  return weighted_sum(t, bmm(v[0], v[1], true, 0.7), wseed);
              },
              trans) < 1e-6);
}

TEST_CASE("elementwise op gradients") {
    std::mt19937_64 rng(3);
    const std::uint64_t wseed = 43;
    const std::vector<Tensor> point = {uniform({4, 3}, -1, 1, rng), uniform({4, 3}, -1, 1, rng)};
    const auto ops = std::vector<std::function<Var(Var, Var)>>{
        [](Var a, Var b) { return add(a, b); },
        [](Var a, Var b) { return sub(a, b); },
        [](Var a, Var b) { return hadamard(a, b); },
        [](Var a, Var b) { return add(scale(a, -1.7), b); },
    };
    for (const auto& op : ops)
        CHECK(checked(
                  [&](Tape& t, const std::vector<Var>& v) {
                      return weighted_sum(t, op(v[0], v[1]), wseed);
                  },
                  point) < 1e-6);
}

TEST_CASE("add_rowvec gradients") {
    std::mt19937_64 rng(4);
    const std::uint64_t wseed = 44;
    const std::vector<Tensor> point = {uniform({5, 3}, -1, 1, rng), uniform({3}, -1, 1, rng)};
    CHECK(checked(
              [&](Tape& t, const std::vector<Var>& v) {
                  return weighted_sum(t, add_rowvec(v[0], v[1]), wseed);
              },
              point) < 1e-6);
}

TEST_CASE("gelu gradients across the kink region") {
    const std::uint64_t wseed = 45;
    const std::vector<Tensor> point = {Tensor::vec({-2.0, -0.6, -0.1, 0.2, 0.9, 2.5})};
    CHECK(checked(
              [&](Tape& t, const std::vector<Var>& v) {
                  return weighted_sum(t, gelu(v[0]), wseed);
              },
              point) < 1e-6);
}

TEST_CASE("softmax gradients") {
    std::mt19937_64 rng(5);
    const std::uint64_t wseed = 46;
    const std::vector<Tensor> point = {uniform({2, 5}, -2, 2, rng)};
    CHECK(checked(
              [&](Tape& t, const std::vector<Var>& v) {
                  return weighted_sum(t, softmax_lastdim(v[0]), wseed);
              },
              point) < 1e-6);
}

TEST_CASE("layer_norm gradients for input, gain and bias") {
    std::mt19937_64 rng(6);
    const std::uint64_t wseed = 47;
    const std::vector<Tensor> point = {uniform({3, 6}, -1, 1, rng), uniform({6}, 0.5, 1.5, rng),
                                       uniform({6}, -0.5, 0.5, rng)};
    CHECK(checked(
              [&](Tape& t, const std::vector<Var>& v) {
                  return weighted_sum(t, layer_norm(v[0], v[1], v[2], 1e-5), wseed);
              },
              point) < 1e-6);
}

TEST_CASE("reshape passes gradients through") {
    std::mt19937_64 rng(7);
    const std::uint64_t wseed = 48;
    const std::vector<Tensor> point = {uniform({2, 6}, -1, 1, rng)};
    CHECK(checked(
              [&](Tape& t, const std::vector<Var>& v) {
                  return weighted_sum(t, reshape(v[0], {3, 4}), wseed);
              },
              point) < 1e-6);
}

TEST_CASE("split and merge heads round trip with exact gradients") {
    std::mt19937_64 rng(8);
    const Tensor x = uniform({6, 8}, -1, 1, rng);  // 2 sequences of 3 tokens, D=8

    Tape tape;
    Var leaf = tape.leaf(x, true);
    Var heads = split_heads(leaf, 2, 3, 2);
    CHECK(heads.value().shape() == std::vector<std::size_t>{4, 3, 4});
    Var back = merge_heads(heads, 2, 3, 2);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(back.value()[i] == x[i]);

    const std::uint64_t wseed = 49;
    Var loss = weighted_sum(tape, back, wseed);
    tape.backward(loss);
    // identity mapping: gradient equals the weights used in weighted_sum
    std::mt19937_64 local(wseed);
    const Tensor w = uniform({6, 8}, 0.5, 1.5, local);
    const Tensor& g = tape.grad(leaf.id);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(g[i] == doctest::Approx(w[i]).epsilon(1e-15));
}

TEST_CASE("attention-shaped composite gradcheck") {
    std::mt19937_64 rng(9);
    const std::uint64_t wseed = 50;
    const std::vector<Tensor> point = {uniform({6, 8}, -1, 1, rng), uniform({8, 8}, -0.5, 0.5, rng),
                                       uniform({8, 8}, -0.5, 0.5, rng),
                                       uniform({8, 8}, -0.5, 0.5, rng)};
    const double err = checked(
        [&](Tape& t, const std::vector<Var>& v) {
            Var q = split_heads(matmul(v[0], v[1]), 2, 3, 2);
            Var k = split_heads(matmul(v[0], v[2]), 2, 3, 2);
            Var val = split_heads(matmul(v[0], v[3]), 2, 3, 2);
            Var att = softmax_lastdim(bmm(q, k, true, 0.5));
            Var ctx = merge_heads(bmm(att, val), 2, 3, 2);
            return weighted_sum(t, ctx, wseed);
        },
        point);
    CHECK(err < 1e-6);
}

TEST_CASE("row_block gradients scatter into the right rows") {
    std::mt19937_64 rng(10);
    const Tensor x = uniform({5, 3}, -1, 1, rng);
    Tape tape;
    Var leaf = tape.leaf(x, true);
    Var block = row_block(leaf, 1, 2);
    CHECK(block.value().rows() == 2);
    CHECK(block.value()(0, 0) == x(1, 0));
    tape.backward(sum(block));
    const Tensor& g = tape.grad(leaf.id);
    for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(g(r, c) == (r == 1 || r == 2 ? 1.0 : 0.0));
    CHECK_THROWS_AS(row_block(leaf, 4, 2), DimensionError);
}

TEST_CASE("concat_rows gradients split back to parents") {
    std::mt19937_64 rng(11);
    const std::uint64_t wseed = 51;
    const std::vector<Tensor> point = {uniform({2, 3}, -1, 1, rng), uniform({1, 3}, -1, 1, rng),
                                       uniform({3, 3}, -1, 1, rng)};
    CHECK(checked(
              [&](Tape& t, const std::vector<Var>& v) {
                  Var cat = concat_rows({v[0], v[1], v[2]});
                  return weighted_sum(t, cat, wseed);
              },
              point) < 1e-6);
}

TEST_CASE("mse_loss gradient is 2(pred - target)/n") {
    const Tensor pred = Tensor::matrix({{1, 2}, {3, 5}});
    const Tensor target = Tensor::matrix({{1, 2}, {3, 4}});
    Tape tape;
    Var p = tape.leaf(pred, true);
    Var loss = mse_loss(p, target);
    CHECK(loss.value()[0] == doctest::Approx(0.25).epsilon(1e-15));
    tape.backward(loss);
    const Tensor& g = tape.grad(p.id);
    CHECK(g(0, 0) == 0.0);
    CHECK(g(1, 1) == doctest::Approx(2.0 * 1.0 / 4.0).epsilon(1e-15));
}

TEST_CASE("fan-out accumulates additively") {
    Tape tape;
    Var x = tape.leaf(Tensor::vec({1.0, 2.0}), true);
    Var y = add(x, x);
    tape.backward(sum(y));
    const Tensor& g = tape.grad(x.id);
    CHECK(g[0] == 2.0);
    CHECK(g[1] == 2.0);
}

TEST_CASE("backward requires a scalar loss") {
    Tape tape;
    Var x = tape.leaf(Tensor::vec({1.0, 2.0}), true);
    Var y = scale(x, 2.0);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
}

TEST_CASE("untouched leaves report zero gradients") {
    Tape tape;
    Var used = tape.leaf(Tensor::vec({3.0}), true);
    Var unused = tape.leaf(Tensor::vec({1.0, 1.0}), true);
    tape.backward(sum(used));
    const Tensor& g = tape.grad(unused.id);
    CHECK(g.size() == 2);
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);
}

TEST_CASE("values survive backward on leaves") {
    Tape tape;
    Var x = tape.leaf(Tensor::vec({2.0}), true);
    Var loss = sum(hadamard(x, x));
    tape.backward(loss);
    CHECK(x.value()[0] == 2.0);
    CHECK(tape.grad(x.id)[0] == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("gradcheck module contracts") {
    const std::vector<Tensor> point = {Tensor::vec({1.0, 2.0, 3.0})};
    const LossBuilder build = [](Tape&, const std::vector<Var>& v) {
        return sum(hadamard(v[0], v[0]));
    };
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(finite_diff_gradcheck(build, point, 0.0, 0, rng), ContractError);

    const GradCheckReport all = finite_diff_gradcheck(build, point, 1e-5, 0, rng);
    CHECK(all.coords_checked == 3);
    CHECK(all.max_rel_err < 1e-9);

    const GradCheckReport two = finite_diff_gradcheck(build, point, 1e-5, 2, rng);
    CHECK(two.coords_checked == 2);
}

TEST_CASE("adam first step oracle") {
    // g = 3, lr = 0.1: m_hat = 3, v_hat = 9, step = -0.1 * 3 / (3 + 1e-8)
    Tensor p = Tensor::vec({0.5});
    AdamState state;
    AdamConfig cfg;
    cfg.lr = 0.1;
    adam_step(p, Tensor::vec({3.0}), state, cfg);
    CHECK(p[0] == doctest::Approx(0.40000000033333333).epsilon(1e-15));
    CHECK(state.step == 1);

    adam_step(p, Tensor::vec({-1.0}), state, cfg);
    CHECK(p[0] == doctest::Approx(0.35997814331690986).epsilon(1e-14));
    CHECK(state.step == 2);
}

TEST_CASE("adam zero gradient is the identity for any state") {
    Tensor p = Tensor::vec({0.5, -0.25});
    AdamState state;
    AdamConfig cfg;
    adam_step(p, Tensor::vec({3.0, -2.0}), state, cfg);  // build up nonzero moments
    const Tensor p_before = p;
    const Tensor m_before = state.m;
    const Tensor v_before = state.v;
    const std::size_t step_before = state.step;

    adam_step(p, Tensor::vec({0.0, 0.0}), state, cfg);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(p[i] == p_before[i]);
        CHECK(state.m[i] == m_before[i]);
        CHECK(state.v[i] == v_before[i]);
    }
    CHECK(state.step == step_before);
}

TEST_CASE("adam converges on a quadratic") {
    Tensor p = Tensor::vec({4.0});
    AdamState state;
    AdamConfig cfg;
    cfg.lr = 0.05;
    for (int i = 0; i < 2000; ++i) adam_step(p, Tensor::vec({2.0 * p[0]}), state, cfg);
    CHECK(std::abs(p[0]) < 1e-3);
}

TEST_CASE("adam rejects mismatched gradient shape") {
    Tensor p = Tensor::vec({1.0, 2.0});
    AdamState state;
    CHECK_THROWS_AS(adam_step(p, Tensor::vec({1.0}), state, AdamConfig{}), DimensionError);
}

}  // TEST_SUITE
