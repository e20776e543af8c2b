// Copyright 2026 The proxeval Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "proxeval/preprocess.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace proxeval;
using namespace proxeval::testing;

namespace {

using oracle::interpolant;

std::vector<double> values(const ScalarSeries& s) { return s.values; }

} // namespace

TEST(Magnitude, Examples) {
    EXPECT_EQ(magnitude(0, 0, 0), 0.0);
    EXPECT_EQ(magnitude(3, 4, 0), 5.0);
    EXPECT_NEAR(magnitude(1, 1, 1), 1.7320508075688772, 1e-15);
}

TEST(Magnitude, InvariantUnderSignFlipsAndAxisPermutations) {
    Rng r(1);
    for (int k = 0; k < 200; ++k) {
        const double x = r.uniform(-50, 50), y = r.uniform(-50, 50), z = r.uniform(-50, 50);
        const double m = magnitude(x, y, z);
        EXPECT_GE(m, 0.0);
        EXPECT_DOUBLE_EQ(magnitude(-x, y, -z), m);
        EXPECT_DOUBLE_EQ(magnitude(z, x, y), m);
        EXPECT_DOUBLE_EQ(magnitude(y, -z, -x), m);
    }
}

TEST(Scalarize, LightPassesThrough) {
    const auto t = light_trace(id_from(1), DeviceRole::TT, {{0, 12.5}, {7, 300.0}, {9, -1.0}});
    const auto s = scalarize(t);
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(s[0], (ScalarSample{0, 12.5}));
    EXPECT_EQ(s[1], (ScalarSample{7, 300.0}));
    EXPECT_EQ(s[2], (ScalarSample{9, -1.0}));
}

TEST(Scalarize, VectorSensorsBecomeMagnitudes) {
    const auto mag = vector_trace(id_from(1), DeviceRole::TT, SensorKind::MagneticField,
                                  {{0, {3, 4, 0}}, {10, {0, 0, 0}}});
    const auto s = scalarize(mag);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0].value, 5.0);
    EXPECT_EQ(s[1].value, 0.0);

    const auto grav = vector_trace(id_from(2), DeviceRole::TI, SensorKind::Gravity,
                                   {{0, {0, 0, 9.81}}, {10, {0, 0, 9.81}}, {25, {0, 0, 9.81}}});
    for (const auto& x : scalarize(grav)) EXPECT_EQ(x.value, 9.81);
}

TEST(TruncateWindow, Boundary) {
    const std::vector<ScalarSample> s{{100, 1}, {499, 2}, {501, 3}};
    const auto out = truncate_window(s);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[1].t_ms, 499);
    const std::vector<ScalarSample> edge{{500, 1}};
    EXPECT_EQ(truncate_window(edge).size(), 1u);  // t <= limit kept
}

TEST(TruncateWindow, AllInsideUnchangedAllOutsideEmpty) {
    const std::vector<ScalarSample> in{{0, 1}, {250, 2}, {400, 3}};
    EXPECT_EQ(truncate_window(in), in);
    const std::vector<ScalarSample> out{{600, 1}, {700, 2}};
    EXPECT_TRUE(truncate_window(out).empty());
    EXPECT_THROW(resample(truncate_window(out)), TooFewSamples);
}

TEST(CrossTruncate, ShorterSideBoundsTheLonger) {
    const std::vector<ScalarSample> a{{0, 1}, {100, 1}, {300, 1}, {480, 1}};
    const std::vector<ScalarSample> b{{5, 2}, {150, 2}, {300, 2}};
    const auto [a2, b2] = cross_truncate(a, b);
    ASSERT_EQ(a2.size(), 3u);
    EXPECT_EQ(a2.back().t_ms, 300);
    EXPECT_EQ(b2, b);
}

TEST(CrossTruncate, EqualSpansUnchanged) {
    const std::vector<ScalarSample> a{{0, 1}, {200, 1}};
    const std::vector<ScalarSample> b{{50, 2}, {200, 2}};
    const auto [a2, b2] = cross_truncate(a, b);
    EXPECT_EQ(a2, a);
    EXPECT_EQ(b2, b);
}

TEST(CrossTruncate, EmptySideEmptiesBoth) {
    const std::vector<ScalarSample> a{{0, 1}, {200, 1}};
    const auto [a2, b2] = cross_truncate(a, {});
    EXPECT_TRUE(a2.empty());
    EXPECT_TRUE(b2.empty());
}

TEST(CrossTruncate, SymmetricAndBoundedOnRandomTraces) {
    Rng r(21);
    for (int k = 0; k < 100; ++k) {
        const auto a = random_samples(r, r.index(1, 60), 500);
        const auto b = random_samples(r, r.index(1, 60), 500);
        const auto [a1, b1] = cross_truncate(a, b);
        const auto [b3, a3] = cross_truncate(b, a);
        EXPECT_EQ(a3, a1);
        EXPECT_EQ(b3, b1);
        for (const auto& x : a1) EXPECT_LE(x.t_ms, b.back().t_ms);
        for (const auto& x : b1) EXPECT_LE(x.t_ms, a.back().t_ms);
        // The side with the later last sample loses only its tail.
        EXPECT_TRUE(a1.size() == a.size() || b1.size() == b.size());
    }
}

TEST(CrossTruncate, FixedPointWhenLastTimesCoincide) {
    const std::vector<ScalarSample> a{{0, 1}, {120, 1}, {300, 1}, {480, 1}};
    const std::vector<ScalarSample> b{{10, 2}, {300, 2}};
    const auto [a1, b1] = cross_truncate(a, b);
    const auto [a2, b2] = cross_truncate(a1, b1);
    EXPECT_EQ(a2, a1);
    EXPECT_EQ(b2, b1);
}

// Each side is cut at the other side's original last time, so a second pass
// cuts again unless the retained last times coincide.
TEST(CrossTruncate, SecondPassCutsAgainWhenLastTimesDiffer) {
    const std::vector<ScalarSample> a{{0, 1}, {100, 1}, {300, 1}};
    const std::vector<ScalarSample> b{{0, 2}, {200, 2}, {400, 2}};
    const auto [a1, b1] = cross_truncate(a, b);
    EXPECT_EQ(a1, a);
    ASSERT_EQ(b1.size(), 2u);
    const auto [a2, b2] = cross_truncate(a1, b1);
    EXPECT_EQ(a2.size(), 2u);
    EXPECT_EQ(b2, b1);
}

TEST(Resample, LinearMidpoint) {
    const std::vector<ScalarSample> s{{0, 0.0}, {20, 2.0}};
    EXPECT_EQ(values(resample(s)), (std::vector<double>{0.0, 1.0, 2.0}));
}

TEST(Resample, ConstantFunctionWithLeadingHold) {
    const std::vector<ScalarSample> s{{5, 1.0}, {25, 1.0}};
    const auto out = resample(s);
    EXPECT_EQ(values(out), (std::vector<double>{1.0, 1.0, 1.0}));
}

TEST(Resample, PiecewiseLinearOracleExample) {
    const std::vector<ScalarSample> s{{0, 0}, {10, 1}, {40, 4}};
    EXPECT_EQ(values(resample(s)), (std::vector<double>{0, 1, 2, 3, 4}));
}

TEST(Resample, GridEndsAtLargestMultipleOfTenNotAfterLastSample) {
    const std::vector<ScalarSample> s{{3, 1}, {39.9, 2}};
    EXPECT_EQ(resample(s).size(), 4u);  // 0, 10, 20, 30
    const std::vector<ScalarSample> exact{{3, 1}, {40, 2}};
    EXPECT_EQ(resample(exact).size(), 5u);
}

TEST(Resample, TooFewSamples) {
    EXPECT_THROW(resample(std::vector<ScalarSample>{}), TooFewSamples);
    EXPECT_THROW(resample(std::vector<ScalarSample>{{0, 1}}), TooFewSamples);
    EXPECT_THROW(resample(std::vector<ScalarSample>{{0, 1}, {9.5, 2}}), TooFewSamples);
}

TEST(Resample, MatchesInterpolantOracleOnRandomTraces) {
    Rng r(99);
    for (int k = 0; k < 100; ++k) {
        auto s = random_samples(r, r.index(2, 80), 500);
        if (s.size() < 2 || s.back().t_ms < 10) continue;
        const auto out = resample(s);
        ASSERT_EQ(out.size(), static_cast<std::size_t>(std::floor(s.back().t_ms / 10)) + 1);
        for (std::size_t i = 0; i < out.size(); ++i)
            EXPECT_NEAR(out.values[i], interpolant(s, 10.0 * static_cast<double>(i)), 1e-12);
    }
}

TEST(Resample, ReproducesSampleValuesOnGridTimes) {
    Rng r(4);
    for (int k = 0; k < 50; ++k) {
        std::vector<ScalarSample> s;
        double t = 0;
        while (t <= 500) {
            s.push_back({t, r.uniform(-3, 3)});
            t += 10.0 * static_cast<double>(r.index(1, 4));
        }
        if (s.size() < 2) continue;
        const auto out = resample(s);
        for (const auto& x : s) EXPECT_EQ(out.values[static_cast<std::size_t>(x.t_ms / 10)], x.value);
    }
}

TEST(PreprocessPair, IdenticalTracesGiveIdenticalSeries) {
    Rng r(8);
    const auto t = random_light_trace(r, id_from(1), DeviceRole::TT, 40, 500);
    const auto [a, b] = preprocess_pair(t, t);
    EXPECT_EQ(a.values, b.values);
    EXPECT_EQ(a.origin.role, DeviceRole::TT);
}

TEST(PreprocessPair, SpansOf500And300GiveLength31) {
    const auto a = light_trace(id_from(1), DeviceRole::TT, {{0, 1}, {150, 2}, {300, 3}, {500, 4}});
    const auto b = light_trace(id_from(1), DeviceRole::TI, {{0, 1}, {300, 2}});
    const auto [sa, sb] = preprocess_pair(a, b);
    EXPECT_EQ(sa.size(), 31u);
    EXPECT_EQ(sb.size(), 31u);
}

TEST(PreprocessPair, SensorMismatch) {
    const auto a = light_trace(id_from(1), DeviceRole::TT, {{0, 1}, {20, 2}});
    const auto b = vector_trace(id_from(1), DeviceRole::TI, SensorKind::Gravity, {{0, {0, 0, 1}}, {20, {0, 0, 1}}});
    EXPECT_THROW(preprocess_pair(a, b), SensorMismatch);
}

TEST(PreprocessPair, ShortSideThrows) {
    const auto a = light_trace(id_from(1), DeviceRole::TT, {{0, 1}, {300, 2}});
    const auto b = light_trace(id_from(1), DeviceRole::TI, {{0, 1}});
    EXPECT_THROW(preprocess_pair(a, b), TooFewSamples);
    const auto late = light_trace(id_from(1), DeviceRole::TI, {{510, 1}, {520, 2}});
    EXPECT_THROW(preprocess_pair(a, late), TooFewSamples);
}

TEST(PreprocessPair, EqualLengthsOverSynthesizedPairs) {
    auto s = small_scenario(40, {SensorKind::Accelerometer, SensorKind::Light, SensorKind::Gyroscope});
    for (const auto& t : generate_dataset(s)) {
        for (const auto* other : {&t.ti(), &t.dti()}) {
            const auto [a, b] = preprocess_pair(*other, t.tt());
            EXPECT_EQ(a.size(), b.size());
            EXPECT_GE(a.size(), 2u);
            for (double v : a.values) EXPECT_TRUE(std::isfinite(v));
        }
    }
}

TEST(PreprocessPair, IdentityOnItsOwnOutput) {
    Rng r(17);
    for (int k = 0; k < 50; ++k) {
        const auto a = random_light_trace(r, id_from(k), DeviceRole::TT, r.index(2, 60), 600);
        const auto b = random_light_trace(r, id_from(k), DeviceRole::TI, r.index(2, 60), 600);
        std::pair<ScalarSeries, ScalarSeries> first;
        try {
            first = preprocess_pair(a, b);
        } catch (const TooFewSamples&) {
            continue;
        }
        auto as_trace = [](const ScalarSeries& s, DeviceRole role) {
            std::vector<std::pair<double, double>> tv;
            for (std::size_t i = 0; i < s.size(); ++i) tv.push_back({10.0 * static_cast<double>(i), s.values[i]});
            return light_trace(id_from(0), role, tv);
        };
        const auto second = preprocess_pair(as_trace(first.first, DeviceRole::TT),
                                            as_trace(first.second, DeviceRole::TI));
        EXPECT_EQ(second.first.values, first.first.values);
        EXPECT_EQ(second.second.values, first.second.values);
    }
}

TEST(PairPreprocessor, MatchesPreprocessPair) {
    Rng r(23);
    PairPreprocessor pre;
    for (int k = 0; k < 200; ++k) {
        const auto a = random_light_trace(r, id_from(k), DeviceRole::TI, r.index(0, 50), 600);
        const auto b = random_light_trace(r, id_from(k), DeviceRole::TT, r.index(0, 50), 600);
        const auto pa = truncate_window(scalarize(a));
        const auto pb = truncate_window(scalarize(b));
        bool ok = true;
        std::pair<ScalarSeries, ScalarSeries> ref;
        try {
            ref = preprocess_pair(a, b);
        } catch (const TooFewSamples&) {
            ok = false;
        }
        ASSERT_EQ(pre.run(pa, pb), ok);
        if (!ok) continue;
        EXPECT_TRUE(std::equal(ref.first.values.begin(), ref.first.values.end(), pre.first().begin(),
                               pre.first().end()));
        EXPECT_TRUE(std::equal(ref.second.values.begin(), ref.second.values.end(),
                               pre.second().begin(), pre.second().end()));
    }
}
