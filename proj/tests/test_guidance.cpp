#include "stylestage/guidance.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace stylestage;

namespace {

// Elementwise six-term sum written out per coefficient.
double six_terms(double e0, double ev, double evs, double evc, double ln, double ls, double lc) {
    double out = e0;
    out += ln * (ev - e0);
    out += lc * (evc - e0);
    out += ls * (ev - evc);
    out += ls * (evs - e0);
    out += lc * (ev - evs);
    return out;
}

NoiseTensor scalar(double v) { return {{1, 1, 1}, Vector::Constant(1, v)}; }

GuidanceInputs random_inputs(std::mt19937_64& rng, TensorShape shape) {
    auto draw = [&] { return NoiseTensor(shape, testing::random_vector(rng, shape.size())); };
    return {draw(), draw(), draw(), draw()};
}

double max_abs(const Vector& a, const Vector& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("documented scalar cases") {
    const GuidanceInputs in{scalar(0.0), scalar(1.0), scalar(0.8), scalar(0.5)};
    CHECK(compose_guidance(in, {1.0, 2.0, 1.0}).values(0) == doctest::Approx(4.3).epsilon(1e-12));
    CHECK(compose_guidance_v1(in, 2.0, 1.0).values(0) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(compose_guidance_v2(in, 2.0, 1.0).values(0) == doctest::Approx(1.8).epsilon(1e-12));
    CHECK(six_terms(0.0, 1.0, 0.8, 0.5, 1.0, 2.0, 1.0) == doctest::Approx(4.3));
}

TEST_CASE("combined form matches the term-by-term oracle") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> scale(0.0, 10.0);
    for (int trial = 0; trial < 100; ++trial) {
        const auto in = random_inputs(rng, {4, 8, 8});
        const GuidanceScales s{scale(rng), scale(rng), scale(rng)};
        const auto out = compose_guidance(in, s);
        for (Eigen::Index i = 0; i < out.values.size(); ++i) {
            const double expected = six_terms(in.null.values(i), in.full.values(i), in.style.values(i),
                                              in.context.values(i), s.lambda_n, s.lambda_s, s.lambda_c);
            REQUIRE(std::abs(out.values(i) - expected) <= 1e-9 * (1.0 + std::abs(expected)));
        }
    }
}

TEST_CASE("algebraic identities on random tensors") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> scale(0.0, 10.0);
    for (int trial = 0; trial < 100; ++trial) {
        const auto in = random_inputs(rng, {4, 8, 8});

        // unit classifier-free scale reproduces eps(v)
        CHECK(max_abs(compose_guidance(in, {1.0, 0.0, 0.0}).values, in.full.values) <= 1e-12);

        // all-equal inputs are a fixed point
        const GuidanceInputs same{in.full, in.full, in.full, in.full};
        const GuidanceScales any{scale(rng), scale(rng), scale(rng)};
        CHECK(max_abs(compose_guidance(same, any).values, in.full.values) <= 1e-12);

        // balanced style/context scales double classifier-free guidance
        const double lam = scale(rng);
        const Vector doubled = in.null.values + 2.0 * lam * (in.full.values - in.null.values);
        CHECK(max_abs(compose_guidance(in, {0.0, lam, lam}).values, doubled) <= 1e-9);

        // combined = v1 + v2 - eps(null) when lambda_n = 0
        const double ls = scale(rng);
        const double lc = scale(rng);
        const Vector sum = compose_guidance_v1(in, ls, lc).values + compose_guidance_v2(in, ls, lc).values - in.null.values;
        CHECK(max_abs(compose_guidance(in, {0.0, ls, lc}).values, sum) <= 1e-9);

        // telescoping forms
        CHECK(max_abs(compose_guidance_v1(in, 1.0, 1.0).values, in.full.values) <= 1e-12);
        CHECK(max_abs(compose_guidance_v2(in, 1.0, 1.0).values, in.full.values) <= 1e-12);
        CHECK(max_abs(compose_guidance_v1(in, 0.0, lc).values,
                      in.null.values + lc * (in.context.values - in.null.values)) <= 1e-12);
        CHECK(max_abs(compose_guidance_v2(in, ls, 0.0).values,
                      in.null.values + ls * (in.style.values - in.null.values)) <= 1e-12);
    }
}

TEST_CASE("guidance is affine in each scale") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> scale(0.0, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        const auto in = random_inputs(rng, {2, 4, 4});
        const GuidanceScales base{scale(rng), scale(rng), scale(rng)};
        for (int which = 0; which < 3; ++which) {
            GuidanceScales a = base;
            GuidanceScales b = base;
            GuidanceScales mid = base;
            double* fields_a[] = {&a.lambda_n, &a.lambda_s, &a.lambda_c};
            double* fields_b[] = {&b.lambda_n, &b.lambda_s, &b.lambda_c};
            double* fields_m[] = {&mid.lambda_n, &mid.lambda_s, &mid.lambda_c};
            *fields_a[which] = 1.0;
            *fields_b[which] = 3.0;
            *fields_m[which] = 2.0;
            const Vector interpolated = 0.5 * (compose_guidance(in, a).values + compose_guidance(in, b).values);
            CHECK(max_abs(compose_guidance(in, mid).values, interpolated) <= 1e-9);
        }
    }
}

TEST_CASE("shape mismatches are rejected") {
    GuidanceInputs in{NoiseTensor({4, 8, 8}), NoiseTensor({4, 8, 8}), NoiseTensor({4, 8, 8}), NoiseTensor({4, 4, 4})};
    CHECK_THROWS_AS(compose_guidance(in, GuidanceScales{}), ValidationError);
    CHECK_THROWS_AS(compose_guidance_v1(in, 1.0, 1.0), ValidationError);
    CHECK_THROWS_AS(compose_guidance_v2(in, 1.0, 1.0), ValidationError);
}

TEST_CASE("scale validation") {
    CHECK_NOTHROW(GuidanceScales{}.validate());
    CHECK_THROWS_AS((GuidanceScales{-1.0, 0.0, 0.0}.validate()), ValidationError);
    CHECK_THROWS_AS((GuidanceScales{1.0, std::nan(""), 0.0}.validate()), ValidationError);
}

TEST_CASE("pass economy follows the nonzero terms") {
    CHECK(required_passes({7.5, 0.0, 0.0}).count() == 2);
    CHECK(required_passes({0.0, 0.0, 0.0}).count() == 1);
    const auto style = required_passes({0.0, 2.0, 0.0});
    CHECK(style.full);
    CHECK(style.style);
    CHECK(style.context);
    CHECK(style.count() == 4);
    CHECK(required_passes({1.0, 0.0, 3.0}).count() == 4);
}
