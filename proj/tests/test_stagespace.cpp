#include "stylestage/stagespace.hpp"

#include <doctest.h>

#include <algorithm>
#include <limits>
#include <map>
#include <random>

using namespace stylestage;

namespace {

// Stage boundaries built by walking chunk starts ceil(k * T_max / T); no
// division of t is involved.
std::vector<int> boundary_oracle(int T, int T_max) {
    std::vector<int> stage(static_cast<std::size_t>(T_max), -1);
    for (int k = 0; k < T; ++k) {
        int begin = 0;
        while (static_cast<long>(begin) * T < static_cast<long>(k) * T_max) ++begin;
        int end = begin;
        while (end < T_max && static_cast<long>(end) * T < static_cast<long>(k + 1) * T_max) ++end;
        for (int t = begin; t < end; ++t) stage[static_cast<std::size_t>(t)] = k;
    }
    return stage;
}

}  // namespace

TEST_CASE("stage_of documented values") {
    CHECK(StageSchedule(6, 1000).stage_of(0) == 0);
    CHECK(StageSchedule(6, 1000).stage_of(999) == 5);
    CHECK(StageSchedule(1, 50).stage_of(37) == 0);
    CHECK(stage_of(StageSchedule(6, 1000), 100) == 0);
    CHECK(stage_of(StageSchedule(6, 1000), 500) == 3);
}

TEST_CASE("stage_of rejects out-of-range timesteps and names them") {
    const StageSchedule s(6, 1000);
    CHECK_THROWS_AS(s.stage_of(-1), RangeError);
    try {
        s.stage_of(1000);
        FAIL("expected RangeError");
    } catch (const RangeError& e) {
        CHECK(std::string(e.what()).find("1000") != std::string::npos);
    }
}

TEST_CASE("schedule construction validates 1 <= T <= T_max") {
    CHECK_THROWS_AS(StageSchedule(0, 50), ValidationError);
    CHECK_THROWS_AS(StageSchedule(51, 50), ValidationError);
    CHECK_THROWS_AS(StageSchedule(3, 0), ValidationError);
    CHECK_NOTHROW(StageSchedule(50, 50));
}

TEST_CASE("partition property holds exhaustively") {
    for (int T_max : {1, 2, 7, 50, 999, 1000}) {
        for (int T = 1; T <= std::min(T_max, 12); ++T) {
            const StageSchedule s(T, T_max);
            const auto oracle = boundary_oracle(T, T_max);
            std::map<int, int> sizes;
            int previous = 0;
            for (int t = 0; t < T_max; ++t) {
                const int k = s.stage_of(t);
                REQUIRE(k == oracle[static_cast<std::size_t>(t)]);
                CHECK(k >= previous);
                CHECK(k - previous <= 1);
                previous = k;
                ++sizes[k];
            }
            CHECK(static_cast<int>(sizes.size()) == T);
            const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end(),
                                                      [](auto a, auto b) { return a.second < b.second; });
            CHECK(hi->second - lo->second <= 1);
            CHECK(s.stage_of(T_max - 1) == T - 1);
            for (int k = 0; k < T; ++k) {
                const auto [first, last] = s.timestep_range(k);
                CHECK(last - first == sizes[k]);
                CHECK(s.stage_of(first) == k);
                CHECK(s.stage_of(last - 1) == k);
            }
        }
    }
}

TEST_CASE("token set derivation") {
    const auto tokens = MultiStageTokenSet::derive("<style>", 3);
    CHECK(tokens.base_token == "<style>");
    CHECK(tokens.stage_tokens == std::vector<std::string>{"<style_0>", "<style_1>", "<style_2>"});
    CHECK(tokens.index_of("<style_2>") == 2);
    CHECK(tokens.index_of("<style>") == -1);
    CHECK(tokens.names_placeholder("<style>"));
    CHECK_NOTHROW(tokens.validate());

    MultiStageTokenSet dup{"<s>", {"<a>", "<a>"}};
    CHECK_THROWS_AS(dup.validate(), ValidationError);
}

TEST_CASE("init_table copies the seed into independent stage vectors") {
    Eigen::Vector2f seed(1.0f, 0.0f);
    auto table = init_table(StageSchedule(3, 50), seed);
    REQUIRE(table.num_stages() == 3);
    for (int k = 0; k < 3; ++k) CHECK(table[k] == seed);
    table[0].array() += 1.0f;
    CHECK(table[1] == seed);
    CHECK(table[2] == seed);
    CHECK(table[0] == Eigen::Vector2f(2.0f, 1.0f));

    Eigen::VectorXd v(4);
    v << 0.5, -1.0, 2.0, 3.0;
    const auto single = init_table(StageSchedule(1, 10), v);
    CHECK(single.num_stages() == 1);
    CHECK(single[0] == v);

    Eigen::VectorXd bad = v;
    bad(2) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(init_table(StageSchedule(2, 10), bad), ValidationError);
}

TEST_CASE("table validates count, dimension and finiteness") {
    using V = StageEmbeddingTable::VectorType;
    CHECK_THROWS_AS(StageEmbeddingTable(StageSchedule(2, 10), {V::Zero(3)}), ValidationError);
    CHECK_THROWS_AS(StageEmbeddingTable(StageSchedule(2, 10), {V::Zero(3), V::Zero(4)}), ValidationError);
    V inf = V::Zero(3);
    inf(1) = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(StageEmbeddingTable(StageSchedule(2, 10), {V::Zero(3), inf}), ValidationError);
}

TEST_CASE("embedding_for agrees with stage_of for every timestep") {
    const StageSchedule s(6, 1000);
    std::vector<StageEmbeddingTable::VectorType> vectors;
    for (int k = 0; k < 6; ++k) vectors.push_back(StageEmbeddingTable::VectorType::Constant(4, static_cast<float>(k)));
    const StageEmbeddingTable table(s, vectors);
    for (int t = 0; t < 1000; ++t) REQUIRE(embedding_for(table, t) == table.vectors()[static_cast<std::size_t>(s.stage_of(t))]);
    CHECK(embedding_for(table, 100) == vectors[0]);
    CHECK(embedding_for(table, 500) == vectors[3]);
    CHECK_THROWS_AS(embedding_for(table, 1000), RangeError);

    const StageEmbeddingTable two(StageSchedule(2, 2), {vectors[0], vectors[1]});
    CHECK(embedding_for(two, 1) == vectors[1]);
}

TEST_CASE("mix_styles selects per-stage sources") {
    using V = StageEmbeddingTable::VectorType;
    const StageSchedule s2(2, 10);
    const StageEmbeddingTable a(s2, {V::Constant(3, 1.0f), V::Constant(3, 2.0f)});
    const StageEmbeddingTable b(s2, {V::Constant(3, -1.0f), V::Constant(3, -2.0f)});
    const std::vector<NamedTable<float>> sources{{"A", a}, {"B", b}};

    const auto mixed = mix_styles(sources, {{0, "A"}, {1, "B"}});
    CHECK(mixed[0] == a[0]);
    CHECK(mixed[1] == b[1]);
    CHECK(mix_styles(sources, {{0, "A"}, {1, "A"}}) == a);

    // Three sources over six stages, coarse from one style and fine from another.
    const StageSchedule s6(6, 50);
    std::mt19937 rng(3);
    std::normal_distribution<float> normal;
    auto random_table = [&] {
        std::vector<V> v;
        for (int k = 0; k < 6; ++k) v.push_back(V::NullaryExpr(5, [&](Eigen::Index) { return normal(rng); }));
        return StageEmbeddingTable(s6, v);
    };
    const auto x = random_table();
    const auto y = random_table();
    const auto z = random_table();
    const std::map<int, std::string> assignment{{0, "X"}, {1, "X"}, {2, "Z"}, {3, "Y"}, {4, "Y"}, {5, "Y"}};
    const auto three = mix_styles<float>({{"X", x}, {"Y", y}, {"Z", z}}, assignment);
    for (int k = 0; k < 6; ++k) {
        const auto& src = assignment.at(k) == "X" ? x : assignment.at(k) == "Y" ? y : z;
        for (Eigen::Index i = 0; i < 5; ++i) CHECK(three[k](i) == src[k](i));
    }
}

TEST_CASE("mix_styles reports distinct failure reasons") {
    using V = StageEmbeddingTable::VectorType;
    const StageEmbeddingTable a(StageSchedule(2, 10), {V::Zero(3), V::Zero(3)});
    const StageEmbeddingTable other_schedule(StageSchedule(2, 20), {V::Zero(3), V::Zero(3)});
    const StageEmbeddingTable other_dim(StageSchedule(2, 10), {V::Zero(4), V::Zero(4)});

    auto reason = [](auto&& fn) {
        try {
            fn();
        } catch (const MixError& e) {
            return e.reason();
        }
        FAIL("expected MixError");
        return MixError::Reason::UnknownName;
    };
    CHECK(reason([&] { mix_styles<float>({{"A", a}, {"B", other_schedule}}, {{0, "A"}, {1, "B"}}); }) ==
          MixError::Reason::ScheduleMismatch);
    CHECK(reason([&] { mix_styles<float>({{"A", a}, {"B", other_dim}}, {{0, "A"}, {1, "B"}}); }) ==
          MixError::Reason::DimensionMismatch);
    CHECK(reason([&] { mix_styles<float>({{"A", a}}, {{0, "A"}, {1, "Q"}}); }) == MixError::Reason::UnknownName);
    CHECK(reason([&] { mix_styles<float>({{"A", a}}, {{0, "A"}}); }) == MixError::Reason::IncompleteAssignment);
}
