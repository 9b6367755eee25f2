#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>

#include "doctest.h"
#include "xpolicy/canonical.hpp"
#include "xpolicy/config.hpp"
#include "xpolicy/prompts.hpp"
#include "xpolicy/rng.hpp"
#include "xpolicy/scaling.hpp"

using namespace xpolicy;

namespace {

std::filesystem::path temp_file(const char* stem) {
    return std::filesystem::temp_directory_path() / (std::string(stem) + "-" + std::to_string(::getpid()));
}

EmbodimentDescriptor uni3() {
    EmbodimentDescriptor e;
    e.id = "uni3";
    e.active_slots.assign(canon::kDim, 0);
    e.action_active_slots.assign(canon::kDim, 0);
    for (long i = 0; i < 3; ++i) e.active_slots[canon::kLJointPos + i] = 1;
    e.active_slots[canon::kLGripper] = 1;
    for (long i = 0; i < 3; ++i) e.action_active_slots[canon::kLJointPos + i] = 1;
    e.action_active_slots[canon::kLGripper] = 1;
    e.camera_count = 1;
    return e;
}

EmbodimentDescriptor duo22() {
    EmbodimentDescriptor e;
    e.id = "duo22";
    e.active_slots.assign(canon::kDim, 0);
    e.action_active_slots.assign(canon::kDim, 0);
    for (long i = 0; i < 2; ++i) {
        e.active_slots[canon::kLJointPos + i] = 1;
        e.active_slots[canon::kRJointPos + i] = 1;
        e.active_slots[canon::kLJointVel + i] = 1;
        e.active_slots[canon::kRJointVel + i] = 1;
        e.action_active_slots[canon::kLJointPos + i] = 1;
        e.action_active_slots[canon::kRJointPos + i] = 1;
    }
    e.camera_count = 2;
    return e;
}

EmbodimentDescriptor wide() {
    EmbodimentDescriptor e;
    e.id = "wide";
    e.active_slots.assign(canon::kDim, 1);
    e.action_active_slots.assign(canon::kDim, 0);
    for (long i = 0; i < 7; ++i) e.action_active_slots[canon::kLJointPos + i] = 1;
    e.camera_count = 4;
    return e;
}

}  // namespace

TEST_CASE("canonical slot names are a bijection onto 0..59") {
    const auto& names = canon::slot_names();
    std::set<std::string_view> uniq(names.begin(), names.end());
    CHECK(names.size() == canon::kDim);
    CHECK(uniq.size() == canon::kDim);
    for (long i = 0; i < canon::kDim; ++i) CHECK(canon::slot_index(names[static_cast<size_t>(i)]) == i);
    CHECK_THROWS_AS(canon::slot_index("no.such.slot"), layout_error);
}

TEST_CASE("descriptor validation") {
    auto e = uni3();
    CHECK_NOTHROW(e.validate());
    CHECK(e.state_dim() == 4);
    CHECK(e.action_dim() == 4);

    auto bad = e;
    bad.camera_count = 5;
    CHECK_THROWS_AS(bad.validate(), layout_error);
    bad = e;
    bad.active_slots.assign(canon::kDim, 0);
    CHECK_THROWS_AS(bad.validate(), layout_error);
    bad = e;
    bad.id = "two words";
    CHECK_THROWS_AS(bad.validate(), layout_error);
}

TEST_CASE("fit captures exact bounds, degenerates flagged, per-embodiment independence") {
    ScalingStore store;
    auto e = uni3();
    fit_rows(store, e.id, e.active_slots, {{2, 0, 0, 4}, {5, 0, 0, 4}, {3, 0, 0, 4}});
    CHECK(store.at("uni3", canon::kLJointPos) == Bounds{2, 5});
    CHECK(store.at("uni3", canon::kLGripper) == Bounds{4, 4});
    CHECK(store.at("uni3", canon::kLGripper).degenerate());

    // same slot, different embodiment: independent bounds, brute-force compare
    Rng rng(21);
    std::vector<std::vector<double>> a_rows, b_rows;
    for (int i = 0; i < 50; ++i) {
        a_rows.push_back({rng.uniform(-3, 1), 0, 0, rng.uniform(0, 1)});
        b_rows.push_back({rng.uniform(5, 9), 0, 0, rng.uniform(0, 1)});
    }
    ScalingStore s2;
    fit_rows(s2, "a", e.active_slots, a_rows);
    fit_rows(s2, "b", e.active_slots, b_rows);
    double alo = a_rows[0][0], ahi = a_rows[0][0], blo = b_rows[0][0], bhi = b_rows[0][0];
    for (int i = 0; i < 50; ++i) {
        alo = std::min(alo, a_rows[static_cast<size_t>(i)][0]);
        ahi = std::max(ahi, a_rows[static_cast<size_t>(i)][0]);
        blo = std::min(blo, b_rows[static_cast<size_t>(i)][0]);
        bhi = std::max(bhi, b_rows[static_cast<size_t>(i)][0]);
    }
    CHECK(s2.at("a", canon::kLJointPos) == Bounds{alo, ahi});
    CHECK(s2.at("b", canon::kLJointPos) == Bounds{blo, bhi});

    CHECK_THROWS_AS(fit_rows(store, e.id, e.active_slots, {}), fit_error);
    CHECK_THROWS_AS(fit_rows(store, e.id, e.active_slots, {{1, 2}}), layout_error);
}

TEST_CASE("normalize endpoints, midpoint, and errors") {
    ScalingStore store;
    auto e = uni3();
    fit_rows(store, e.id, e.active_slots, {{0, 0, -1, 4}, {10, 2, 1, 4}});

    auto mid = normalize({5, 1, 0, 4}, e, store);
    CHECK(mid.values[canon::kLJointPos] == 0.0);
    CHECK(mid.mask[canon::kLJointPos] == 1);
    CHECK(mid.values[canon::kLGripper] == 0.0);  // degenerate slot maps to 0

    auto lo = normalize({0, 0, -1, 4}, e, store);
    auto hi = normalize({10, 2, 1, 4}, e, store);
    CHECK(lo.values[canon::kLJointPos] == -1.0);
    CHECK(hi.values[canon::kLJointPos] == 1.0);

    auto x = normalize({7.3, 1, 0, 4}, e, store);
    CHECK(x.values[canon::kLJointPos] == doctest::Approx(0.46).epsilon(1e-12));
    auto back = denormalize(x, e, store);
    CHECK(back[0] == doctest::Approx(7.3).epsilon(1e-9));
    CHECK(back[3] == 4.0);  // degenerate returns stored constant

    // -1 maps to the min bound exactly
    CanonicalState floor{};
    for (long i : active_indices(e.active_slots)) {
        floor.values[static_cast<size_t>(i)] = -1.0;
        floor.mask[static_cast<size_t>(i)] = 1;
    }
    auto mins = denormalize(floor, e, store);
    CHECK(mins[0] == 0.0);
    CHECK(mins[2] == -1.0);

    CHECK_THROWS_AS(normalize({1, 2, 3}, e, store), layout_error);
    ScalingStore empty;
    CHECK_THROWS_AS(normalize({0, 0, 0, 4}, e, empty), store_miss_error);
}

TEST_CASE("canonical vector is constant-size with zeros off-mask") {
    ScalingStore store;
    for (auto e : {uni3(), duo22(), wide()}) {
        Rng rng(fnv1a(e.id));
        std::vector<std::vector<double>> rows;
        for (int i = 0; i < 20; ++i) {
            std::vector<double> r(static_cast<size_t>(e.state_dim()));
            for (auto& v : r) v = rng.uniform(-2, 2);
            rows.push_back(std::move(r));
        }
        fit_rows(store, e.id, e.active_slots, rows);
        auto st = normalize(rows[3], e, store);
        CHECK(static_cast<long>(st.values.size()) == canon::kDim);
        for (long i = 0; i < canon::kDim; ++i) {
            if (!e.active_slots[static_cast<size_t>(i)]) {
                CHECK(st.values[static_cast<size_t>(i)] == 0.0);
                CHECK(st.mask[static_cast<size_t>(i)] == 0);
            } else {
                CHECK(std::fabs(st.values[static_cast<size_t>(i)]) <= 1.0 + 1e-9);
            }
        }
    }
}

TEST_CASE("round-trip is identity to 1e-9 over 1000 random vectors and 3 embodiments") {
    ScalingStore store;
    std::vector<EmbodimentDescriptor> embs = {uni3(), duo22(), wide()};
    Rng rng(99);
    std::vector<std::vector<std::vector<double>>> all_rows;
    for (const auto& e : embs) {
        std::vector<std::vector<double>> rows;
        for (int i = 0; i < 40; ++i) {
            std::vector<double> r(static_cast<size_t>(e.state_dim()));
            for (auto& v : r) v = rng.uniform(-7, 7);
            rows.push_back(std::move(r));
        }
        fit_rows(store, e.id, e.active_slots, rows);
        all_rows.push_back(std::move(rows));
    }
    long trips = 0;
    for (size_t k = 0; k < embs.size(); ++k) {
        for (int trial = 0; trial < 334; ++trial) {
            // draw within the fitted box so the invariant |v|<=1 also holds
            std::vector<double> raw(static_cast<size_t>(embs[k].state_dim()));
            const auto idx = active_indices(embs[k].active_slots);
            for (size_t j = 0; j < raw.size(); ++j) {
                const Bounds& b = store.at(embs[k].id, idx[j]);
                raw[j] = rng.uniform(b.lo, b.hi);
            }
            auto back = denormalize(normalize(raw, embs[k], store), embs[k], store);
            REQUIRE(back.size() == raw.size());
            for (size_t j = 0; j < raw.size(); ++j) CHECK(std::fabs(back[j] - raw[j]) < 1e-9);
            ++trips;
        }
    }
    CHECK(trips >= 1000);
}

TEST_CASE("out-of-range data passes through unclipped and counts a warning") {
    ScalingStore store;
    auto e = uni3();
    fit_rows(store, e.id, e.active_slots, {{0, 0, 0, 4}, {10, 1, 1, 4}});
    reset_out_of_range_count();
    auto st = normalize({15, 0.5, 0.5, 4}, e, store);
    CHECK(st.values[canon::kLJointPos] == 2.0);  // not clipped
    CHECK(out_of_range_count() == 1);
    auto back = denormalize(st, e, store);
    CHECK(back[0] == doctest::Approx(15.0).epsilon(1e-12));
    reset_out_of_range_count();
}

TEST_CASE("store persistence round-trips bit-exactly") {
    auto path = temp_file("xp-store");

    ScalingStore empty;
    empty.save(path);
    CHECK(ScalingStore::load(path) == empty);

    ScalingStore s;
    Rng rng(7);
    for (const char* id : {"uni3", "duo22", "wide"})
        for (long slot = 0; slot < 10; ++slot) {
            const double lo = rng.uniform(-5, 5);
            s.set(id, slot, Bounds{lo, lo + rng.uniform(0, 3)});
        }
    s.save(path);
    auto loaded = ScalingStore::load(path);
    CHECK(loaded == s);

    // byte-identical re-serialization
    auto path2 = temp_file("xp-store2");
    loaded.save(path2);
    std::ifstream f1(path), f2(path2);
    std::string b1((std::istreambuf_iterator<char>(f1)), {});
    std::string b2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(b1 == b2);

    CHECK_THROWS_AS(loaded.at("uni3", 59), store_miss_error);  // unknown key still errors after load

    std::ofstream bad(path);
    bad << "bogus header\n0\n";
    bad.close();
    CHECK_THROWS_AS(ScalingStore::load(path), io_error);

    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("rng streams are deterministic and state restores exactly") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    auto snap = a.state();
    std::vector<double> first;
    for (int i = 0; i < 32; ++i) first.push_back(a.normal());
    a.set_state(snap);
    for (int i = 0; i < 32; ++i) CHECK(a.normal() == first[static_cast<size_t>(i)]);

    Rng s1(42, "train"), s2(42, "eval"), s3(42, "train");
    CHECK(s1.next_u64() != s2.next_u64());
    Rng s4(42, "train");
    CHECK(s4.next_u64() == Rng(42, "train").next_u64());
    (void)s3;
}

TEST_CASE("rng normal moments are sane") {
    Rng rng(1234);
    const int n = 200000;
    double m = 0, m2 = 0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        m += x;
        m2 += x * x;
    }
    m /= n;
    m2 /= n;
    CHECK(std::fabs(m) < 0.01);
    CHECK(std::fabs(m2 - 1.0) < 0.02);
}

TEST_CASE("config defaults, parsing, round-trip, and hash") {
    auto c = Config::defaults();
    // hyperparameter table keys exist verbatim
    for (const char* key : {"Learning rate", "Batch size", "Global batch size", "Warmup steps", "Dropout",
                            "Weight decay", "Gradient clipping", "Precision", "Optimizer", "EMA"})
        CHECK(c.has(key));
    CHECK(c.real("Learning rate") == 1e-4);
    CHECK(c.integer("Batch size") == 32);
    CHECK(c.integer("Warmup steps") == 500);
    CHECK(c.real("Weight decay") == 0.0);
    CHECK(c.str("Gradient clipping") == "none");
    CHECK(c.flag("EMA"));
    CHECK(c.real("ema decay") == 0.9999);
    CHECK(c.real("optimizer beta1") == 0.9);
    CHECK(c.real("optimizer beta2") == 0.999);
    CHECK(c.real("optimizer eps") == 1e-8);

    auto parsed = Config::parse("a key = 3  # trailing comment\n\n# full comment\nsecond = hello world\n");
    CHECK(parsed.integer("a key") == 3);
    CHECK(parsed.str("second") == "hello world");
    CHECK_THROWS_AS(parsed.str("missing"), io_error);
    CHECK_THROWS_AS(Config::parse("no equals sign\n"), io_error);

    auto path = temp_file("xp-config");
    c.save(path);
    auto loaded = Config::load(path);
    CHECK(loaded == c);
    CHECK(loaded.hash() == c.hash());
    loaded.set_integer("train steps", 123);
    CHECK(loaded.hash() != c.hash());
    std::filesystem::remove(path);
}

TEST_CASE("task prompts tokenize within budget") {
    for (Task t : all_tasks()) {
        auto ids = tokenize_prompt(task_prompt(t));
        CHECK(!ids.empty());
        CHECK(static_cast<long>(ids.size()) <= kPromptMaxTokens);
        for (long id : ids) CHECK(id < static_cast<long>(prompt_vocabulary().size()));
        CHECK(task_from_name(task_name(t)) == t);
    }
    // distinct tasks produce distinct token sequences
    CHECK(tokenize_prompt(task_prompt(Task::Reach)) != tokenize_prompt(task_prompt(Task::Hold)));
    CHECK_THROWS_AS(tokenize_prompt("gibberish word"), io_error);
    CHECK_THROWS_AS(task_from_name("fly"), io_error);
}
