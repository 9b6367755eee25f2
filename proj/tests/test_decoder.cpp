#include <cstring>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "xpolicy/decoder.hpp"

using namespace xpolicy;

namespace {

ModelDims tiny_dims(long depth, long embed = 8, long heads = 2) {
    ModelDims d;
    d.embed = embed;
    d.heads = heads;
    d.mlp_ratio = 2;
    d.dec_depth = depth;
    return d;
}

Tensor<double> random_tensor(Shape shape, Rng& rng) {
    Tensor<double> t = Tensor<double>::zeros(std::move(shape));
    for (auto& v : t.data()) v = rng.uniform(-1.5, 1.5);
    return t;
}

bool bit_identical(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::vector<double> token_row(const Tensor<double>& x, long i) {
    const long E = x.dim(2);
    return {x.data().begin() + i * E, x.data().begin() + (i + 1) * E};
}

}  // namespace

TEST_CASE("decoder block is exactly the identity at initialization") {
    Rng rng(51, "dec-identity");
    ParamSet<double> ps;
    DecoderBlock<double> blk(tiny_dims(1), rng, ps, "b");

    auto x = random_tensor({2, 4, 8}, rng);
    auto obs = random_tensor({2, 6, 8}, rng);
    auto temb = random_tensor({2, 8}, rng);
    auto mask = full_mask(4, 6);

    auto out = blk(x, obs, temb, mask);
    REQUIRE(out.shape() == x.shape());
    CHECK(bit_identical(out.data(), x.data()));
}

TEST_CASE("predict_noise at init ignores obs and k and matches the bare head") {
    Rng rng(52, "dec-init");
    ParamSet<double> ps;
    ModelDims d = tiny_dims(3);
    DitDecoder<double> dec(d, 5, rng, ps);

    const long B = 2, n = 4, h = 2, S = 3;
    auto actions = random_tensor({B, n, 5}, rng);
    auto obs_a = random_tensor({B, h * S, 8}, rng);
    auto obs_b = random_tensor({B, h * S, 8}, rng);

    auto out_a = dec.predict_noise(actions, {3, 900}, obs_a, h, S);
    auto out_b = dec.predict_noise(actions, {512, 7}, obs_b, h, S);
    CHECK(bit_identical(out_a.data(), out_b.data()));

    auto x = add(dec.in_proj(actions), tile_const(sinusoid_table<double>(n, 8), B));
    auto expected = dec.head_out(gelu(dec.head_in(dec.final_norm(x))));
    CHECK(bit_identical(out_a.data(), expected.data()));
}

TEST_CASE("predict_noise output shape is (16, 60) at default dims") {
    Rng rng(53, "dec-shape");
    ParamSet<double> ps;
    ModelDims d;  // defaults: E=64, depth 4, heads 4
    DitDecoder<double> dec(d, 60, rng, ps);

    auto actions = random_tensor({1, 16, 60}, rng);
    auto obs = random_tensor({1, 2 * 10, 64}, rng);
    auto out = dec.predict_noise(actions, {123}, obs, 2, 10);
    REQUIRE(out.rank() == 3);
    CHECK(out.dim(0) == 1);
    CHECK(out.dim(1) == 16);
    CHECK(out.dim(2) == 60);
    CHECK(out.all_finite());

    SUBCASE("n=1 trajectory works") {
        auto one = dec.predict_noise(random_tensor({1, 1, 60}, rng), {5}, obs, 2, 10);
        CHECK(one.dim(1) == 1);
    }
}

TEST_CASE("aligned cross mask: clamped timestep map and entry counts") {
    SUBCASE("entry count is n*S; token 0 sees step 0, the rest see the last step") {
        const long n = 16, h = 2, S = 10;
        auto m = aligned_cross_mask(n, h, S);
        CHECK(m.count_allowed() == n * S);
        for (long s = 0; s < S; ++s) {
            CHECK(m.at(0, s) == 1);
            CHECK(m.at(0, S + s) == 0);
            CHECK(m.at(1, s) == 0);
            CHECK(m.at(1, S + s) == 1);
            CHECK(m.at(n - 1, S + s) == 1);
        }
    }
    SUBCASE("h=1: every token sees the single state") {
        auto m = aligned_cross_mask(4, 1, 7);
        CHECK(m.count_allowed() == 4 * 7);
    }
    SUBCASE("degenerate sizes are rejected") {
        CHECK_THROWS_AS(aligned_cross_mask(0, 2, 3), alignment_error);
        CHECK_THROWS_AS(aligned_cross_mask(4, 0, 3), alignment_error);
    }
    SUBCASE("full scope sees everything") {
        Rng rng(54, "dec-full");
        ParamSet<double> ps;
        DitDecoder<double> dec(tiny_dims(1), 5, rng, ps, CrossScope::Full);
        CHECK(dec.cross_entry_count(16, 2, 10) == 16 * 20);
        ParamSet<double> ps2;
        DitDecoder<double> aligned(tiny_dims(1), 5, rng, ps2, CrossScope::Aligned);
        CHECK(aligned.cross_entry_count(16, 2, 10) == 16 * 10);
    }
}

TEST_CASE("with the cross gate opened, obs timestep 0 only reaches action token 0") {
    Rng rng(55, "dec-aligned");
    ParamSet<double> ps;
    DitDecoder<double> dec(tiny_dims(1), 5, rng, ps, CrossScope::Aligned);
    for (auto& v : ps.find("dec.b0.gate_x.b").data()) v = 1.0;

    const long n = 6, h = 2, S = 3, E = 8;
    auto actions = random_tensor({1, n, 5}, rng);
    auto obs = random_tensor({1, h * S, E}, rng);
    auto moved_obs = obs.detached_copy();
    for (long i = 0; i < S * E; ++i) moved_obs.data()[i] += 0.43;  // obs timestep 0

    auto base = dec.predict_noise(actions, {11}, obs, h, S);
    auto moved = dec.predict_noise(actions, {11}, moved_obs, h, S);
    CHECK_FALSE(bit_identical(token_row(base, 0), token_row(moved, 0)));
    for (long i = 1; i < n; ++i) CHECK(bit_identical(token_row(base, i), token_row(moved, i)));

    SUBCASE("full scope spreads the perturbation to every token") {
        ParamSet<double> ps2;
        Rng rng2(55, "dec-aligned");
        DitDecoder<double> full(tiny_dims(1), 5, rng2, ps2, CrossScope::Full);
        for (auto& v : ps2.find("dec.b0.gate_x.b").data()) v = 1.0;
        auto fbase = full.predict_noise(actions, {11}, obs, h, S);
        auto fmoved = full.predict_noise(actions, {11}, moved_obs, h, S);
        for (long i = 0; i < n; ++i) CHECK_FALSE(bit_identical(token_row(fbase, i), token_row(fmoved, i)));
    }
}

TEST_CASE("diffusion step k changes outputs once modulators are nonzero") {
    Rng rng(56, "dec-k");
    ParamSet<double> ps;
    DitDecoder<double> dec(tiny_dims(2), 5, rng, ps);
    Rng poke(77, "dec-k-poke");
    for (long b = 0; b < 2; ++b) {
        auto id = "dec.b" + std::to_string(b);
        for (auto& v : ps.find(id + ".mod.w").data()) v = poke.normal() * 0.2;
        for (auto& v : ps.find(id + ".gate_x.w").data()) v = poke.normal() * 0.2;
    }

    auto actions = random_tensor({1, 4, 5}, rng);
    auto obs = random_tensor({1, 4, 8}, rng);
    auto out_a = dec.predict_noise(actions, {3}, obs, 2, 2);
    auto out_b = dec.predict_noise(actions, {700}, obs, 2, 2);
    CHECK(out_a.shape() == out_b.shape());
    CHECK_FALSE(bit_identical(out_a.data(), out_b.data()));

    // same k twice in a batch: rows must agree bit-for-bit with each other
    auto both = dec.predict_noise(concat(std::vector{actions, actions}, 0), {3, 3},
                                  concat(std::vector{obs, obs}, 0), 2, 2);
    std::vector<double> row0(both.data().begin(), both.data().begin() + 20);
    std::vector<double> row1(both.data().begin() + 20, both.data().end());
    CHECK(bit_identical(row0, row1));
    CHECK(bit_identical(row0, out_a.data()));
}

TEST_CASE("action self-attention is bidirectional once its gate opens") {
    Rng rng(57, "dec-bidir");
    ParamSet<double> ps;
    DitDecoder<double> dec(tiny_dims(1), 5, rng, ps);
    const long E = 8;
    auto& mod_b = ps.find("dec.b0.mod.b").data();
    for (long e = 0; e < E; ++e) mod_b[2 * E + e] = 1.0;  // gate1 slice

    const long n = 5;
    auto actions = random_tensor({1, n, 5}, rng);
    auto obs = random_tensor({1, 4, E}, rng);
    auto moved_actions = actions.detached_copy();
    for (long d = 0; d < 5; ++d) moved_actions.data()[3 * 5 + d] += 0.71;  // token 3

    auto base = dec.predict_noise(actions, {9}, obs, 2, 2);
    auto moved = dec.predict_noise(moved_actions, {9}, obs, 2, 2);
    for (long i = 0; i < n; ++i) CHECK_FALSE(bit_identical(token_row(base, i), token_row(moved, i)));
}

TEST_CASE("shape and alignment errors") {
    Rng rng(58, "dec-errors");
    ParamSet<double> ps;
    DitDecoder<double> dec(tiny_dims(1), 5, rng, ps);
    auto actions = random_tensor({1, 4, 5}, rng);
    auto obs = random_tensor({1, 4, 8}, rng);

    CHECK_THROWS_AS(dec.predict_noise(random_tensor({1, 4, 6}, rng), {1}, obs, 2, 2), shape_error);
    CHECK_THROWS_AS(dec.predict_noise(actions, {1, 2}, obs, 2, 2), alignment_error);
    CHECK_THROWS_AS(dec.predict_noise(actions, {1}, obs, 2, 3), alignment_error);
    CHECK_THROWS_AS(dec.predict_noise(actions, {1}, random_tensor({1, 4, 6}, rng), 2, 2),
                    alignment_error);
}

TEST_CASE("two opened blocks match finite differences end to end") {
    Rng rng(59, "dec-fd");
    auto build = [](const auto& xs) {
        using U = std::decay_t<decltype(xs[0].data()[0])>;
        Rng wrng(901, "dec-fd-weights");
        ParamSet<U> ps;
        ModelDims d;
        d.embed = 8;
        d.heads = 2;
        d.mlp_ratio = 2;
        d.dec_depth = 2;
        DitDecoder<U> dec(d, 5, wrng, ps);
        Rng poke(902, "dec-fd-poke");
        for (long b = 0; b < 2; ++b) {
            auto id = "dec.b" + std::to_string(b);
            for (auto* nm : {".mod.w", ".mod.b", ".gate_x.w", ".gate_x.b"})
                for (auto& v : ps.find(id + nm).data()) v = static_cast<U>(poke.normal() * 0.2);
        }
        auto out = dec.predict_noise(xs[0], {7}, xs[1], 2, 2);
        return sum_all(mul(out, out));
    };
    auto rep = gradcheck::check<double>(build, {{1, 3, 5}, {1, 4, 8}}, rng);
    CHECK(rep.checked == 15 + 32);
    CHECK(rep.max_rel_err < 1e-5);
}
